"""Shape functions used by the unified adaptive constructors and t-test weights.

Two families live here:

* unit shapes psi: [0,1] -> [0,1], non-decreasing, with nominal mean
  nu = integral of psi over [0,1] (used by the DM-style constructors);
* nonnegative shapes psi: [0,inf) -> [0,inf), non-decreasing (used for
  variance-based weighting of simultaneous t-tests).

Both are addressable by string identifiers so the CLI and the simulation
configs can name them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ValidationError

__all__ = [
    "ShapeFunction",
    "shape_function",
    "indicator_shape",
    "power_shape",
    "unit_shape_from_id",
    "nonneg_shape_from_id",
    "NONNEG_SHAPE_IDS",
]

_PSI_CLAMP = 1e300  # psi is evaluated at this point instead of +inf


def _safe_eval(psi: Callable, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    u = np.where(np.isinf(u), _PSI_CLAMP, u)
    out = np.asarray(psi(u), dtype=float)
    return np.minimum(out, _PSI_CLAMP)


@dataclass(frozen=True)
class ShapeFunction:
    """Non-decreasing map of [0,1] into [0,1] with its mean under Uniform(0,1)."""

    psi: Callable
    nu: float
    name: str = ""

    def __post_init__(self):
        if not (self.nu > 0):
            raise ValidationError(f"shape mean nu must be positive; got {self.nu!r}")

    def __call__(self, u) -> np.ndarray:
        return _safe_eval(self.psi, u)


def shape_function(psi: Callable, nu: float | None = None, name: str = "") -> ShapeFunction:
    """Wrap a callable as a ShapeFunction.

    When ``nu`` is omitted it is computed as the integral of psi over [0,1]
    by adaptive quadrature (absolute tolerance 1e-10).  A user-supplied nu
    is accepted unchecked, which covers discrete-null generalizations where
    nu is the mean of psi under a dominated null distribution.
    """
    if nu is None:
        nu, err = integrate.quad(psi, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10)
        if not np.isfinite(nu) or err > 1e-8:
            raise ValidationError("could not integrate shape function to tolerance")
    return ShapeFunction(psi=psi, nu=float(nu), name=name)


def indicator_shape(tau: float) -> ShapeFunction:
    """psi(u) = 1{u > tau} with exact mean nu = 1 - tau."""
    if not (0.0 < tau < 1.0):
        raise ValidationError(f"tau must lie in (0, 1); got {tau!r}")
    return ShapeFunction(
        psi=lambda u, _t=tau: (np.asarray(u, dtype=float) > _t).astype(float),
        nu=1.0 - tau,
        name=f"step:{tau:g}",
    )


def power_shape(exponent: float) -> ShapeFunction:
    """psi(u) = u**m with exact mean nu = 1/(m+1)."""
    if exponent <= 0:
        raise ValidationError("power shape exponent must be positive")
    return ShapeFunction(
        psi=lambda u, _m=exponent: np.asarray(u, dtype=float) ** _m,
        nu=1.0 / (exponent + 1.0),
        name=f"u{exponent:g}",
    )


def unit_shape_from_id(spec: str) -> ShapeFunction:
    """Resolve a [0,1]-shape identifier: ``u``, ``u<m>`` or ``step:<tau>``."""
    spec = spec.strip().lower()
    if spec == "u":
        return power_shape(1.0)
    if spec.startswith("step:"):
        return indicator_shape(float(spec.split(":", 1)[1]))
    if spec.startswith("u"):
        try:
            return power_shape(float(spec[1:]))
        except ValueError:
            pass
    raise ValidationError(f"unknown shape identifier {spec!r}")


def _u2ind(threshold: float) -> Callable:
    def psi(u, _c=threshold):
        u = np.asarray(u, dtype=float)
        return np.where(u >= _c, u * u, 0.0)

    return psi


NONNEG_SHAPE_IDS = ("u", "u2", "u4", "u2ind", "ind:<c>", "u2ind:<c>")


def nonneg_shape_from_id(spec: str) -> Callable:
    """Resolve a nonnegative-shape identifier for variance-based weighting.

    Supported: ``u`` (identity), ``u<m>`` (power), ``ind:<c>`` (threshold
    indicator), ``u2ind`` / ``u2ind:<c>`` (u^2 above a threshold, default 1).
    Returns a vectorized callable; evaluation clamps +inf inputs.
    """
    spec = spec.strip().lower()
    if spec == "u":
        raw = lambda u: np.asarray(u, dtype=float)
    elif spec.startswith("ind:"):
        c = float(spec.split(":", 1)[1])
        raw = lambda u, _c=c: (np.asarray(u, dtype=float) > _c).astype(float)
    elif spec == "u2ind" or spec.startswith("u2ind:"):
        c = 1.0 if spec == "u2ind" else float(spec.split(":", 1)[1])
        raw = _u2ind(c)
    elif spec.startswith("u"):
        try:
            m = float(spec[1:])
        except ValueError:
            raise ValidationError(f"unknown shape identifier {spec!r}") from None
        raw = lambda u, _m=m: np.asarray(u, dtype=float) ** _m
    else:
        raise ValidationError(f"unknown shape identifier {spec!r}")
    return lambda u, _raw=raw: _safe_eval(_raw, u)
