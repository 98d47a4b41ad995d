"""Weighted null-proportion adaptive compound e-values.

Hypotheses carry deterministic priority weights w_k in [0, K] summing to K;
larger weight means the hypothesis is easier to reject.  The constructors
here fold the weights into Storey-type exceedance counts (and their
shape-function generalization) while preserving the compound e-value
property, so the ep-BH engine keeps finite-sample FDR control.

Weights may be stacked (..., K) alongside the p-values; all operations
reduce over the last axis.
"""

from __future__ import annotations

import csv

import numpy as np

from .core import censor_evalues, validate_pvalues, validate_weights
from .errors import ValidationError
from .estimators import _check_tau, _resolve_shapes, _shape_values

__all__ = [
    "w_max_storey",
    "w_loo_storey_plus",
    "w_dm_plus",
    "load_weights_csv",
]


def w_max_storey(p, w, tau: float) -> np.ndarray:
    """Weighted Storey with a max regularizer:

        E_k = K w_k (1 - tau) / (max_l w_l + sum_l w_l 1{P_l > tau}).

    Unit weights recover Storey's construction.  A zero weight yields a
    zero e-value (the hypothesis is effectively dropped).
    """
    tau = _check_tau(tau)
    p = validate_pvalues(p)
    K = p.shape[-1]
    w = validate_weights(w, K)
    above = (p > tau).astype(float)
    denom = w.max(axis=-1, keepdims=True) + (w * above).sum(axis=-1, keepdims=True)
    return K * w * (1.0 - tau) / denom


def w_loo_storey_plus(p, w, tau: float, censor: bool = False) -> np.ndarray:
    """Leave-one-out weighted Storey:

        E_k = K w_k (1 - tau) / (w_k + sum_{l != k} w_l 1{P_l > tau}).

    Dominates w_max_storey componentwise.  With ``censor=True`` the e-value
    is additionally zeroed whenever P_k > tau, reproducing the censored
    weighted procedure; the uncensored default can reject beyond tau, which
    matters when a large weight makes P_k / w_k small despite P_k > tau.
    """
    tau = _check_tau(tau)
    p = validate_pvalues(p)
    K = p.shape[-1]
    w = validate_weights(w, K)
    above = (p > tau).astype(float)
    weighted_above = w * above
    loo = weighted_above.sum(axis=-1, keepdims=True) - weighted_above
    num = K * w * (1.0 - tau)
    denom = w + loo
    with np.errstate(invalid="ignore", divide="ignore"):
        e = num / denom
    e = np.where(np.broadcast_to(w, e.shape) == 0, 0.0, e)
    if censor:
        e = censor_evalues(p, np.broadcast_to(e, p.shape), tau)
    return e


def w_dm_plus(p, w, shapes) -> np.ndarray:
    """Weighted shape-based leave-one-out e-values:

        E_k = K w_k / (w_k / nu_k + sum_{l != k} psi_l(P_l) w_l / nu_l).

    Specializes to w_loo_storey_plus for psi(u) = 1{u > tau}, nu = 1 - tau,
    and to the unweighted dm_plus for unit weights.
    """
    p = validate_pvalues(p)
    K = p.shape[-1]
    w = validate_weights(w, K)
    shp = _resolve_shapes(shapes, K)
    vals, nu = _shape_values(shp, p)
    ratios = vals * (w / nu)
    loo = ratios.sum(axis=-1, keepdims=True) - ratios
    with np.errstate(invalid="ignore", divide="ignore"):
        e = K * w / (w / nu + loo)
    return np.where(np.broadcast_to(w, e.shape) == 0, 0.0, e)


def load_weights_csv(path, n_hypotheses: int, renormalize: bool = False) -> np.ndarray:
    """Read a weight vector from a CSV file with a ``weight`` column.

    Validates nonnegativity and the sum-to-K constraint; with
    ``renormalize=True`` the raw column is rescaled to sum to K first.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "weight" not in reader.fieldnames:
            raise ValidationError(f"{path}: expected a 'weight' column")
        values = []
        for lineno, row in enumerate(reader, start=2):
            raw = (row.get("weight") or "").strip()
            try:
                values.append(float(raw))
            except ValueError:
                raise ValidationError(
                    f"{path}:{lineno}: invalid weight {raw!r}"
                ) from None
    if len(values) != n_hypotheses:
        raise ValidationError(
            f"{path}: {len(values)} weights for {n_hypotheses} hypotheses"
        )
    return validate_weights(np.array(values), n_hypotheses, renormalize=renormalize)
