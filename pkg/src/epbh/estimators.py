"""Null-proportion adaptive compound e-value constructors.

Every constructor maps a p-value vector to a vector of compound e-values
E = (E_1, ..., E_K): under any configuration of true nulls N, the sum over
k in N of E[E_k] is at most K.  Feeding E into the ep-BH engine reproduces
the corresponding classical adaptive BH procedure; the "+" variants are
the uniform leave-one-out improvements that never reject less.

All constructors accept stacked inputs of shape (..., K) and operate along
the last axis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import RejectionSet, _check_alpha, _step_up_mask, p_bh, validate_pvalues
from .errors import ValidationError
from .shapes import ShapeFunction

__all__ = [
    "NullPropEstimator",
    "storey",
    "storey_epsilon",
    "storey_plus",
    "mpc",
    "dm",
    "dm_plus",
    "quant",
    "ibhlog",
    "min_storey",
    "mabh",
    "tst",
    "loo_lift",
    "adaptive_bh",
    "combine_pi0",
    "combine_evalues",
    "storey_pi0",
    "mpc_pi0",
    "dm_pi0",
    "quant_pi0",
    "ibhlog_pi0",
    "min_storey_pi0",
]


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not (0.0 < tau < 1.0):
        raise ValidationError(f"tau must lie in (0, 1); got {tau!r}")
    return tau


# ---------------------------------------------------------------------------
# null proportion estimators as first-class objects


@dataclass(frozen=True)
class NullPropEstimator:
    """A null-proportion estimate pi0_hat(P) > 0 with a monotonicity flag.

    ``fn`` maps a p-value vector to the estimate.  ``monotone`` declares the
    estimate coordinate-wise non-decreasing in P; the leave-one-out lift
    requires it.  Built-in estimators set ``vectorized`` and reduce stacked
    (..., K) inputs along the last axis; user estimators may work on single
    vectors only.
    """

    fn: Callable
    monotone: bool
    name: str = ""
    vectorized: bool = field(default=False, compare=False)

    def __call__(self, p) -> float:
        return float(self.evaluate(validate_pvalues(np.atleast_1d(np.asarray(p, float)))))

    def evaluate(self, p: np.ndarray) -> np.ndarray:
        if self.vectorized or p.ndim == 1:
            return np.asarray(self.fn(p), dtype=float)
        return np.apply_along_axis(self.fn, -1, p)


def storey_pi0(tau: float, c: float = 1.0) -> NullPropEstimator:
    """pi0_hat = (c + #{P_l > tau}) / (K (1 - tau))."""
    tau = _check_tau(tau)
    if not (0.0 < c <= 1.0):
        raise ValidationError(f"c must lie in (0, 1]; got {c!r}")

    def fn(p):
        K = p.shape[-1]
        return (c + (p > tau).sum(axis=-1)) / (K * (1.0 - tau))

    return NullPropEstimator(fn, monotone=True, name=f"storey(tau={tau:g})", vectorized=True)


def mpc_pi0() -> NullPropEstimator:
    """pi0_hat = (2 + 2 sum P_l) / K."""

    def fn(p):
        return (2.0 + 2.0 * p.sum(axis=-1)) / p.shape[-1]

    return NullPropEstimator(fn, monotone=True, name="mpc", vectorized=True)


def _resolve_shapes(shapes, K: int) -> list[ShapeFunction]:
    if isinstance(shapes, ShapeFunction):
        return [shapes] * K
    shapes = list(shapes)
    if len(shapes) != K:
        raise ValidationError(f"expected {K} shape functions, got {len(shapes)}")
    return shapes


def _shape_values(shapes: list[ShapeFunction], p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-hypothesis psi_l(P_l) and the vector of means nu_l."""
    nu = np.array([s.nu for s in shapes], dtype=float)
    if all(s is shapes[0] for s in shapes):
        vals = shapes[0](p)
    else:
        cols = [shapes[k](p[..., k]) for k in range(len(shapes))]
        vals = np.stack(cols, axis=-1)
    return vals, nu


def dm_pi0(shapes) -> NullPropEstimator:
    """pi0_hat = (max_l 1/nu_l + sum_l psi_l(P_l)/nu_l) / K."""

    def fn(p):
        K = p.shape[-1]
        shp = _resolve_shapes(shapes, K)
        vals, nu = _shape_values(shp, p)
        return ((1.0 / nu).max() + (vals / nu).sum(axis=-1)) / K

    return NullPropEstimator(fn, monotone=True, name="dm", vectorized=True)


def quant_pi0(L: int) -> NullPropEstimator:
    """pi0_hat = (K - L + 1) / (K (1 - P_(L))), P_(L) the L-th order statistic."""
    L = int(L)

    def fn(p):
        K = p.shape[-1]
        if not (1 <= L <= K):
            raise ValidationError(f"L must lie in 1..{K}; got {L}")
        pL = np.sort(p, axis=-1)[..., L - 1]
        with np.errstate(divide="ignore"):
            return (K - L + 1.0) / (K * (1.0 - pL))

    return NullPropEstimator(fn, monotone=True, name=f"quant(L={L})", vectorized=True)


def ibhlog_pi0() -> NullPropEstimator:
    """pi0_hat = (2 - sum log(1 - P_l)) / K; infinite at any P_l = 1."""

    def fn(p):
        with np.errstate(divide="ignore"):
            s = np.log1p(-p).sum(axis=-1)
        return (2.0 - s) / p.shape[-1]

    return NullPropEstimator(fn, monotone=True, name="ibhlog", vectorized=True)


def min_storey_pi0(eps: float, pi_lower: float, C: float) -> NullPropEstimator:
    """pi0_hat = max{pi_lower, C inf_tau max{1, #{P_l > tau}} / (K (1 - tau))}.

    The infimum over tau in [0, 1 - eps] is attained on the breakpoint grid
    {0} union {P_(i) <= 1 - eps} union {1 - eps} because the objective is
    increasing in tau between order statistics.  The calibration constant C
    is deliberately a required argument: it depends on (K, eps, pi_lower)
    through external analysis and has no safe default.
    """
    eps = float(eps)
    pi_lower = float(pi_lower)
    C = float(C)
    if not (0.0 < eps < 1.0):
        raise ValidationError(f"eps must lie in (0, 1); got {eps!r}")
    if not (0.0 < pi_lower < 1.0):
        raise ValidationError(f"pi_lower must lie in (0, 1); got {pi_lower!r}")
    if not C > 0:
        raise ValidationError(f"C must be positive; got {C!r}")

    def fn(p):
        K = p.shape[-1]
        hi = 1.0 - eps
        cand = np.concatenate(
            [
                np.zeros(p.shape[:-1] + (1,)),
                np.minimum(np.sort(p, axis=-1), hi),
                np.full(p.shape[:-1] + (1,), hi),
            ],
            axis=-1,
        )
        counts = (p[..., :, None] > cand[..., None, :]).sum(axis=-2)
        obj = np.maximum(1.0, counts) / (K * (1.0 - cand))
        return np.maximum(pi_lower, C * obj.min(axis=-1))

    return NullPropEstimator(
        fn, monotone=True, name=f"min-storey(eps={eps:g})", vectorized=True
    )


# ---------------------------------------------------------------------------
# compound e-value constructors (Table-style catalog)


def storey(p, tau: float, c: float = 1.0) -> np.ndarray:
    """Storey e-values E_k = K (1 - tau) / (c + #{P_l > tau}), flat across k.

    The regularizer c = 1 gives genuine compound e-values; any c in (0, 1)
    gives epsilon-approximate ones with the bound from storey_epsilon.
    """
    tau = _check_tau(tau)
    if not (0.0 < c <= 1.0):
        raise ValidationError(f"c must lie in (0, 1]; got {c!r}")
    p = validate_pvalues(p)
    K = p.shape[-1]
    exceed = (p > tau).sum(axis=-1)
    e = K * (1.0 - tau) / (c + exceed)
    return np.broadcast_to(e[..., None], p.shape).copy()


def storey_epsilon(c: float, tau: float, n_nulls: int) -> float:
    """Approximation slack for Storey with regularizer c < 1.

    epsilon = 2 (1 - c) / (c (K0 + 1) (1 - tau)) for K0 true nulls; the
    resulting e-values sum to at most K (1 + epsilon) in expectation and
    ep-BH with them controls FDR at alpha (1 + epsilon).
    """
    tau = _check_tau(tau)
    if not (0.0 < c < 1.0):
        raise ValidationError(f"epsilon bound requires c in (0, 1); got {c!r}")
    if n_nulls < 0:
        raise ValidationError("n_nulls must be nonnegative")
    return 2.0 * (1.0 - c) / (c * (n_nulls + 1.0) * (1.0 - tau))


def storey_plus(p, tau: float) -> np.ndarray:
    """Leave-one-out Storey: E_k = K (1 - tau) / (1 + #{l != k : P_l > tau}).

    Componentwise at least as large as plain Storey, hence ep-BH with these
    e-values never makes fewer discoveries.
    """
    tau = _check_tau(tau)
    p = validate_pvalues(p)
    K = p.shape[-1]
    above = p > tau
    loo = above.sum(axis=-1, keepdims=True) - above
    return K * (1.0 - tau) / (1.0 + loo)


def mpc(p) -> np.ndarray:
    """Modified Pounds-Cheng e-values E_k = K / (2 + 2 sum_l P_l), flat."""
    p = validate_pvalues(p)
    K = p.shape[-1]
    e = K / (2.0 + 2.0 * p.sum(axis=-1))
    return np.broadcast_to(e[..., None], p.shape).copy()


def dm(p, shapes) -> np.ndarray:
    """Unified shape-based e-values, flat across k:

        E_k = K / (max_l (1/nu_l) + sum_l psi_l(P_l) / nu_l).

    ``shapes`` is a single ShapeFunction or one per hypothesis.  The choice
    psi(u)=1{u>tau} recovers Storey; psi(u)=u recovers Pounds-Cheng.
    """
    p = validate_pvalues(p)
    K = p.shape[-1]
    shp = _resolve_shapes(shapes, K)
    vals, nu = _shape_values(shp, p)
    denom = (1.0 / nu).max() + (vals / nu).sum(axis=-1)
    e = K / denom
    return np.broadcast_to(e[..., None], p.shape).copy()


def dm_plus(p, shapes) -> np.ndarray:
    """Strengthened unified e-values:

        E_k = K / (1/nu_k + sum_{l != k} psi_l(P_l) / nu_l).

    Dominates both ``dm`` and its generic leave-one-out lift; with
    heterogeneous nu_k the gain over the lift can be strict.
    """
    p = validate_pvalues(p)
    K = p.shape[-1]
    shp = _resolve_shapes(shapes, K)
    vals, nu = _shape_values(shp, p)
    ratios = vals / nu
    loo_sum = ratios.sum(axis=-1, keepdims=True) - ratios
    return K / (1.0 / nu + loo_sum)


def quant(p, L: int) -> np.ndarray:
    """Quantile-based e-values E_k = K (1 - P_(L)) / (K - L + 1), flat."""
    p = validate_pvalues(p)
    K = p.shape[-1]
    L = int(L)
    if not (1 <= L <= K):
        raise ValidationError(f"L must lie in 1..{K}; got {L}")
    pL = np.sort(p, axis=-1)[..., L - 1]
    e = K * (1.0 - pL) / (K - L + 1.0)
    return np.broadcast_to(e[..., None], p.shape).copy()


def ibhlog(p) -> np.ndarray:
    """Log-based e-values E_k = K / (2 - sum_l log(1 - P_l)), flat.

    Any P_l = 1 drives the denominator to +inf and every e-value to 0.
    """
    p = validate_pvalues(p)
    K = p.shape[-1]
    with np.errstate(divide="ignore"):
        s = np.log1p(-p).sum(axis=-1)
    e = K / (2.0 - s)
    return np.broadcast_to(e[..., None], p.shape).copy()


def min_storey(p, eps: float, pi_lower: float, C: float) -> np.ndarray:
    """Minimax-flavored Storey variant, flat across k:

        E_k = 1 / max{pi_lower, C inf_{tau in [0, 1-eps]}
                       max{1, #{P_l > tau}} / (K (1 - tau))}.
    """
    p = validate_pvalues(p)
    pi0 = min_storey_pi0(eps, pi_lower, C).evaluate(p)
    e = 1.0 / pi0
    return np.broadcast_to(e[..., None], p.shape).copy()


def mabh(p, alpha: float) -> np.ndarray:
    """Minimally adaptive e-values E_k = K/(K-1) * 1{BH at alpha rejects}.

    Requires K >= 2 and alpha <= (K-1)/K (the compound property is only
    established in that range).  ep-BH with these e-values rejects nothing
    when BH rejects nothing, and otherwise equals BH at level alpha*K/(K-1).
    """
    alpha = _check_alpha(alpha)
    p = validate_pvalues(p)
    K = p.shape[-1]
    if K < 2:
        raise ValidationError("mabh requires at least two hypotheses")
    if alpha > (K - 1) / K:
        raise ValidationError(
            f"mabh requires alpha <= (K-1)/K = {(K - 1) / K:g}; got {alpha:g}"
        )
    counts = _step_up_mask(p, alpha).sum(axis=-1)
    e = (K / (K - 1.0)) * (counts > 0)
    return np.broadcast_to(e[..., None], p.shape).copy()


def tst(p, alpha: float, plus: bool = False) -> np.ndarray:
    """Two-stage step-up e-values with alpha' = alpha / (1 + alpha):

        E_k = 1/(1+alpha) * K / (K - R_{BH,alpha'}(P with P_k set to 1)).

    With ``plus=True`` every entry is scaled by (K + alpha)/K, which remains
    a valid compound e-value vector and strictly dominates the plain one.
    """
    alpha = _check_alpha(alpha)
    p = validate_pvalues(p)
    K = p.shape[-1]
    alpha_prime = alpha / (1.0 + alpha)
    counts = np.empty(p.shape, dtype=float)
    for k in range(K):
        p_mod = p.copy()
        p_mod[..., k] = 1.0
        counts[..., k] = _step_up_mask(p_mod, alpha_prime).sum(axis=-1)
    e = (1.0 / (1.0 + alpha)) * K / (K - counts)
    if plus:
        e = e * ((K + alpha) / K)
    return e


# ---------------------------------------------------------------------------
# generic improvements and combinations


def loo_lift(estimator: NullPropEstimator, p) -> np.ndarray:
    """Leave-one-out lift: E_k = 1 / pi0_hat(P with P_k set to 0).

    Valid (and accepted) only for coordinate-wise monotone estimators; the
    lifted e-values dominate the flat 1/pi0_hat(P) componentwise, so the
    lifted procedure never discovers less than the plain adaptive one.
    """
    if not estimator.monotone:
        raise ValidationError(
            f"leave-one-out lift requires a monotone estimator; "
            f"{estimator.name or 'estimator'} is not flagged monotone"
        )
    p = validate_pvalues(p)
    K = p.shape[-1]
    e = np.empty(p.shape, dtype=float)
    for k in range(K):
        p_mod = p.copy()
        p_mod[..., k] = 0.0
        e[..., k] = 1.0 / estimator.evaluate(p_mod)
    return e


def adaptive_bh(p, estimator: NullPropEstimator, alpha: float) -> RejectionSet:
    """Classical adaptive BH: run p-BH at level alpha / pi0_hat(P).

    If the inflated level reaches 1 it is clamped to 1 - 1e-12 with a
    warning; the downstream step-up rule stays well defined.
    """
    alpha = _check_alpha(alpha)
    p = validate_pvalues(np.atleast_1d(np.asarray(p, dtype=float)))
    pi0 = float(estimator.evaluate(p))
    if not pi0 > 0:
        raise ValidationError(f"estimated null proportion must be positive; got {pi0!r}")
    level = alpha / pi0
    if level >= 1.0:
        warnings.warn(
            f"adaptive level alpha/pi0 = {level:g} >= 1; clamping to 1 - 1e-12",
            RuntimeWarning,
            stacklevel=2,
        )
        level = 1.0 - 1e-12
    return p_bh(p, level)


def combine_pi0(
    est_a: NullPropEstimator, est_b: NullPropEstimator, lam: float
) -> NullPropEstimator:
    """Convex combination lam * pi0_A + (1 - lam) * pi0_B as an estimator.

    Monotone exactly when both inputs are.  The implied e-values 1/pi0 are
    the harmonic average of the constituents' implied e-values and are
    therefore dominated by their arithmetic average (see combine_evalues).
    """
    lam = float(lam)
    if not (0.0 < lam < 1.0):
        raise ValidationError(f"lambda must lie in (0, 1); got {lam!r}")

    def fn(p):
        return lam * est_a.evaluate(p) + (1.0 - lam) * est_b.evaluate(p)

    return NullPropEstimator(
        fn,
        monotone=est_a.monotone and est_b.monotone,
        name=f"combine({est_a.name},{est_b.name},lam={lam:g})",
        vectorized=True,
    )


def combine_evalues(e_a, e_b, lam: float) -> np.ndarray:
    """Arithmetic average lam * E_A + (1 - lam) * E_B of two compound e-value
    vectors; remains compound and dominates the harmonic (combined-pi0) route."""
    lam = float(lam)
    if not (0.0 < lam < 1.0):
        raise ValidationError(f"lambda must lie in (0, 1); got {lam!r}")
    e_a = np.asarray(e_a, dtype=float)
    e_b = np.asarray(e_b, dtype=float)
    if e_a.shape != e_b.shape:
        raise ValidationError(
            f"e-value shapes do not match: {e_a.shape} vs {e_b.shape}"
        )
    return lam * e_a + (1.0 - lam) * e_b
