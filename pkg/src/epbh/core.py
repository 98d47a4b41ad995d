"""Rejection engines: p-BH, weighted p-BH, ep-BH, and tau-censored ep-BH.

All procedures are step-up rules on the weighted statistics Q_k = P_k / E_k.
With e-values E identically 1 this is the classical Benjamini-Hochberg
procedure; with data-driven compound e-values it is the e-weighted BH
(ep-BH) procedure.  Everything here is a pure function of its inputs.

Indices are 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "RejectionSet",
    "q_transform",
    "ep_bh",
    "ep_bh_mask",
    "p_bh",
    "bh_count",
    "weighted_p_bh",
    "tau_censored_ep_bh",
    "validate_pvalues",
    "validate_evalues",
    "validate_weights",
]


@dataclass(frozen=True)
class RejectionSet:
    """Outcome of a step-up procedure.

    rejected holds the 0-based indices of discovered hypotheses; k_star is
    the crossing index of the step-up scan.  k_star == len(rejected) except
    in the (measure-zero) event of exact ties at the crossing threshold, in
    which case every index tied with the threshold is rejected and k_star
    is re-set to the inflated count.
    """

    rejected: frozenset[int]
    k_star: int

    def mask(self, n_hypotheses: int) -> np.ndarray:
        """Boolean rejection indicator of length ``n_hypotheses``."""
        out = np.zeros(n_hypotheses, dtype=bool)
        if self.rejected:
            out[list(self.rejected)] = True
        return out


def validate_pvalues(p) -> np.ndarray:
    """Coerce to a float array of p-values in [0, 1], last axis = hypotheses."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] == 0:
        raise ValidationError("p-value vector must contain at least one entry")
    if np.isnan(arr).any():
        raise ValidationError("p-values must not contain NaN")
    if (arr < 0).any() or (arr > 1).any():
        bad = arr[(arr < 0) | (arr > 1)].flat[0]
        raise ValidationError(f"p-values must lie in [0, 1]; got {bad!r}")
    return arr


def validate_evalues(e, n_hypotheses: int) -> np.ndarray:
    """Coerce to a nonnegative float array (+inf allowed) of matching width."""
    arr = np.asarray(e, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != n_hypotheses:
        raise ValidationError(
            f"e-value vector has width {arr.shape[-1] if arr.ndim else 0}, "
            f"expected {n_hypotheses}"
        )
    if np.isnan(arr).any():
        raise ValidationError("e-values must not contain NaN")
    if (arr < 0).any():
        raise ValidationError("e-values must be nonnegative")
    return arr


def validate_weights(w, n_hypotheses: int, renormalize: bool = False) -> np.ndarray:
    """Validate a weight vector: w_k in [0, K], sum w = K within 1e-9 * K.

    With ``renormalize=True`` any nonnegative, not-all-zero vector is
    rescaled to sum to K before validation.
    """
    arr = np.asarray(w, dtype=float)
    K = n_hypotheses
    if arr.ndim == 0 or arr.shape[-1] != K:
        raise ValidationError(f"weight vector must have width {K}")
    if np.isnan(arr).any() or np.isinf(arr).any():
        raise ValidationError("weights must be finite")
    if (arr < 0).any():
        raise ValidationError("weights must be nonnegative")
    if renormalize:
        total = arr.sum(axis=-1, keepdims=True)
        if (total <= 0).any():
            raise ValidationError("cannot renormalize an all-zero weight vector")
        arr = arr * (K / total)
    total = arr.sum(axis=-1)
    if np.abs(total - K).max() > 1e-9 * K:
        raise ValidationError(
            f"weights must sum to K={K} (got {np.asarray(total).flat[0]!r}); "
            "pass renormalize=True to rescale"
        )
    if (arr > K).any():
        raise ValidationError(f"individual weights must not exceed K={K}")
    return arr


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must lie in (0, 1); got {alpha!r}")
    return alpha


def q_transform(p, e) -> np.ndarray:
    """Componentwise Q_k = P_k / E_k with 0/0 = 0, p/0 = +inf (p > 0), p/inf = 0.

    Accepts arrays of shape (..., K); the conventions are the continuity
    limits of the quotient and make a zero e-value unrejectable (for p > 0)
    and an infinite e-value always rejectable.
    """
    p = validate_pvalues(p)
    e = validate_evalues(e, p.shape[-1])
    if p.shape != e.shape:
        try:
            p, e = np.broadcast_arrays(p, e)
        except ValueError:
            raise ValidationError(
                f"p and e shapes do not match: {p.shape} vs {e.shape}"
            ) from None
    with np.errstate(divide="ignore", invalid="ignore"):
        q = p / e
    q = np.where((p == 0) & (e == 0), 0.0, q)
    q = np.where(np.isinf(e), 0.0, q)
    return q


def _step_up_mask(q: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized step-up scan on rows of Q.

    For each row, k* = max{k : K * Q_(k) / k <= alpha} (0 if none) and all
    entries with Q_k <= Q_(k*) are flagged.  The comparison is an exact <=
    on doubles with the expression written as ``K * Q / k``; no epsilon
    slack is applied, so identical inputs reproduce bit-for-bit.
    """
    K = q.shape[-1]
    qs = np.sort(q, axis=-1)
    ks = np.arange(1, K + 1, dtype=float)
    ok = K * qs / ks <= alpha
    any_ok = ok.any(axis=-1)
    # last True position + 1 == k*
    k_star = np.where(any_ok, K - np.argmax(ok[..., ::-1], axis=-1), 0)
    idx = np.maximum(k_star - 1, 0)
    thresh = np.take_along_axis(qs, idx[..., None], axis=-1)[..., 0]
    thresh = np.where(any_ok, thresh, -np.inf)
    return q <= thresh[..., None]


def ep_bh_mask(p, e, alpha: float) -> np.ndarray:
    """Rejection indicators of ep-BH for stacked instances of shape (..., K)."""
    alpha = _check_alpha(alpha)
    return _step_up_mask(q_transform(p, e), alpha)


def ep_bh(p, e, alpha: float) -> RejectionSet:
    """Run the ep-BH procedure on one instance.

    Computes Q_k = P_k / E_k, finds the largest k with K * Q_(k) / k <= alpha,
    and rejects the hypotheses attaining the k smallest Q values.  Raising
    any E_k never shrinks the rejection set; lowering any P_k never does
    either.
    """
    p = validate_pvalues(np.atleast_1d(np.asarray(p, dtype=float)))
    if p.ndim != 1:
        raise ValidationError("ep_bh expects a single p-value vector; "
                              "use ep_bh_mask for stacked instances")
    mask = ep_bh_mask(p, e, alpha)
    idx = frozenset(int(i) for i in np.flatnonzero(mask))
    return RejectionSet(rejected=idx, k_star=len(idx))


def p_bh(p, alpha: float) -> RejectionSet:
    """Classical BH step-up procedure (ep-BH with E identically 1)."""
    p = validate_pvalues(np.atleast_1d(np.asarray(p, dtype=float)))
    return ep_bh(p, np.ones_like(p), alpha)


def bh_count(p, alpha: float) -> np.ndarray | int:
    """Number of BH rejections R_{BH,alpha}(P); vectorized over leading axes."""
    alpha = _check_alpha(alpha)
    p = validate_pvalues(p)
    counts = _step_up_mask(p, alpha).sum(axis=-1)
    return int(counts) if np.ndim(counts) == 0 else counts


def weighted_p_bh(p, w, alpha: float) -> RejectionSet:
    """Weighted BH: ep-BH with the (deterministic) weights as e-values.

    Weights must be nonnegative and sum to K; a zero weight makes the
    hypothesis unrejectable unless its p-value is exactly zero.
    """
    p = validate_pvalues(np.atleast_1d(np.asarray(p, dtype=float)))
    w = validate_weights(w, p.shape[-1])
    return ep_bh(p, w, alpha)


def censor_evalues(p, e, tau: float) -> np.ndarray:
    """Mask e-values to zero wherever the paired p-value exceeds tau.

    Uses the convention inf * 0 = 0, so an infinite e-value is also masked.
    """
    tau = float(tau)
    if not (0.0 < tau < 1.0):
        raise ValidationError(f"tau must lie in (0, 1); got {tau!r}")
    p = validate_pvalues(p)
    e = validate_evalues(e, p.shape[-1])
    return np.where(p <= tau, e, 0.0)


def tau_censored_ep_bh(p, e, alpha: float, tau: float) -> RejectionSet:
    """ep-BH restricted so that no hypothesis with P_k > tau can be rejected.

    Equivalent to ep-BH on the masked e-values E_k * 1{P_k <= tau}.
    """
    p = validate_pvalues(np.atleast_1d(np.asarray(p, dtype=float)))
    return ep_bh(p, censor_evalues(p, e, tau), alpha)
