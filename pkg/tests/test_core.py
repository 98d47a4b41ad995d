"""Rejection-engine tests: worked examples, brute-force oracles, invariants."""

import itertools

import numpy as np
import numpy.testing as npt
import pytest

from epbh import (
    ValidationError,
    bh_count,
    ep_bh,
    ep_bh_mask,
    p_bh,
    q_transform,
    tau_censored_ep_bh,
    weighted_p_bh,
)

rng = np.random.default_rng(20240901)


# ---------------------------------------------------------------------------
# independent oracles


def ep_bh_brute_force(p, e, alpha):
    """Self-consistency oracle: largest subset size s such that some subset S
    with |S| = s has Q_k <= alpha * s / K for every k in S."""
    q = q_transform(p, e)
    K = len(q)
    best = set()
    for r in range(1, K + 1):
        for subset in itertools.combinations(range(K), r):
            if all(q[k] <= alpha * r / K for k in subset):
                if r > len(best):
                    best = set(subset)
                    # extend to all indices under the same threshold
                    best = {k for k in range(K) if q[k] <= alpha * r / K}
    return best


def tau_censored_literal(p, e, alpha, tau):
    """Literal fixed-point definition of the tau-censored procedure."""
    p = np.asarray(p, dtype=float)
    e = np.asarray(e, dtype=float)
    K = len(p)

    def cutoff(ek, k):
        lim = ek * alpha * k / K  # inf * positive stays inf
        return min(tau, lim)

    k_star = 0
    for k in range(1, K + 1):
        n_below = sum(p[j] <= cutoff(e[j], k) for j in range(K))
        if n_below >= k:
            k_star = k
    return {j for j in range(K) if k_star > 0 and p[j] <= cutoff(e[j], k_star)}


# ---------------------------------------------------------------------------
# q_transform


def test_q_transform_direct_quotient():
    npt.assert_allclose(q_transform([0.2, 0.4], [2.0, 0.5]), [0.1, 0.8])


def test_q_transform_zero_over_zero_and_pos_over_zero():
    q = q_transform([0.0, 0.3], [0.0, 0.0])
    assert q[0] == 0.0
    assert np.isinf(q[1])


def test_q_transform_p_over_inf():
    npt.assert_array_equal(q_transform([0.5], [np.inf]), [0.0])


def test_q_transform_length_mismatch():
    with pytest.raises(ValidationError):
        q_transform([0.1, 0.2], [1.0])


def test_q_transform_negative_inputs():
    with pytest.raises(ValidationError):
        q_transform([-0.1, 0.2], [1.0, 1.0])
    with pytest.raises(ValidationError):
        q_transform([0.1, 0.2], [-1.0, 1.0])


# ---------------------------------------------------------------------------
# ep_bh


def test_ep_bh_worked_example():
    # exhaustive scan: thresholds 4*Q_(k)/k = .4, .4, .8, .9 -> k*=2
    res = ep_bh([0.1, 0.2, 0.6, 0.9], np.ones(4), alpha=0.5)
    assert res.k_star == 2
    assert res.rejected == {0, 1}


def test_ep_bh_all_ones_rejects_nothing():
    res = ep_bh(np.ones(4), np.ones(4), alpha=0.5)
    assert res.k_star == 0
    assert res.rejected == frozenset()


def test_ep_bh_two_hypotheses_example():
    # Q = (0.15, 1.2); 2*0.15/1 = 0.3 <= 0.4, 2*1.2/2 = 1.2 > 0.4
    res = ep_bh([0.3, 0.6], [2.0, 0.5], alpha=0.4)
    assert res.k_star == 1
    assert res.rejected == {0}


def test_ep_bh_alpha_domain():
    for alpha in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValidationError):
            ep_bh([0.5], [1.0], alpha)


def test_ep_bh_k0_rejected_k1_supported():
    with pytest.raises(ValidationError):
        ep_bh([], [], 0.1)
    assert ep_bh([0.01], [1.0], 0.1).rejected == {0}


def test_ep_bh_matches_brute_force_small_k():
    for _ in range(300):
        K = rng.integers(1, 6)
        p = rng.uniform(size=K)
        e = rng.choice([0.0, 0.3, 1.0, 2.5, np.inf], size=K, p=[0.1, 0.3, 0.3, 0.2, 0.1])
        alpha = rng.uniform(0.05, 0.9)
        got = ep_bh(p, e, alpha).rejected
        want = ep_bh_brute_force(p, e, alpha)
        assert got == want, (p, e, alpha)


def test_ep_bh_threshold_characterization():
    for _ in range(200):
        K = rng.integers(2, 30)
        p = rng.uniform(size=K)
        e = rng.exponential(size=K)
        alpha = rng.uniform(0.05, 0.5)
        res = ep_bh(p, e, alpha)
        q = q_transform(p, e)
        if res.k_star == 0:
            assert not res.rejected
        else:
            thr = alpha * res.k_star / K
            assert res.rejected == set(np.flatnonzero(q <= thr))


def test_ep_bh_order_invariance():
    for _ in range(50):
        K = rng.integers(2, 12)
        p = rng.uniform(size=K)
        e = rng.exponential(size=K)
        perm = rng.permutation(K)
        base = ep_bh(p, e, 0.3).rejected
        permuted = ep_bh(p[perm], e[perm], 0.3).rejected
        assert permuted == {int(np.flatnonzero(perm == i)[0]) for i in base}


def test_ep_bh_monotone_in_e_and_antitone_in_p():
    for _ in range(100):
        K = rng.integers(2, 15)
        p = rng.uniform(size=K)
        e = rng.exponential(size=K)
        alpha = 0.25
        base = ep_bh(p, e, alpha).rejected
        e_up = e + rng.exponential(size=K) * (rng.uniform(size=K) < 0.5)
        assert base <= ep_bh(p, e_up, alpha).rejected
        p_down = p * rng.uniform(0.2, 1.0, size=K)
        assert base <= ep_bh(p_down, e, alpha).rejected


def test_ep_bh_mask_matches_single_instance():
    P = rng.uniform(size=(500, 8))
    E = rng.exponential(size=(500, 8))
    E[rng.uniform(size=E.shape) < 0.05] = 0.0
    E[rng.uniform(size=E.shape) < 0.05] = np.inf
    masks = ep_bh_mask(P, E, 0.2)
    for i in range(0, 500, 17):
        assert set(np.flatnonzero(masks[i])) == ep_bh(P[i], E[i], 0.2).rejected


# ---------------------------------------------------------------------------
# p_bh


def test_p_bh_examples():
    assert p_bh([0.01, 0.9], 0.1).rejected == {0}
    assert p_bh(np.ones(6), 0.5).rejected == frozenset()


def test_p_bh_equals_ep_bh_with_unit_evalues():
    for _ in range(1000):
        K = rng.integers(1, 20)
        p = rng.uniform(size=K)
        alpha = rng.uniform(0.02, 0.8)
        assert p_bh(p, alpha).rejected == ep_bh(p, np.ones(K), alpha).rejected


def test_bh_count_scalar_and_batch():
    p = [0.001, 0.011, 0.5, 0.9]
    assert bh_count(p, 0.05) == len(p_bh(p, 0.05).rejected)
    P = rng.uniform(size=(200, 10))
    counts = bh_count(P, 0.2)
    for i in range(0, 200, 11):
        assert counts[i] == len(p_bh(P[i], 0.2).rejected)


# ---------------------------------------------------------------------------
# weighted_p_bh


def test_weighted_reduces_to_bh_with_unit_weights():
    p = rng.uniform(size=7)
    assert weighted_p_bh(p, np.ones(7), 0.2).rejected == p_bh(p, 0.2).rejected


def test_weighted_worked_example():
    res = weighted_p_bh([0.3, 0.6], [1.6, 0.4], alpha=0.4)
    assert res.rejected == {0}


def test_weighted_zero_weight_never_rejected():
    res = weighted_p_bh([1e-9, 0.01], [0.0, 2.0], alpha=0.5)
    assert 0 not in res.rejected


def test_weighted_sum_validation():
    with pytest.raises(ValidationError):
        weighted_p_bh([0.1, 0.2], [1.0, 0.5], 0.1)


# ---------------------------------------------------------------------------
# tau-censored ep-BH


def test_tau_censoring_masks_large_pvalues():
    # E_1 masked because P_1 = 0.3 > tau = 0.25
    res = tau_censored_ep_bh([0.3, 0.6], [2.0, 0.5], alpha=0.4, tau=0.25)
    assert res.rejected == frozenset()


def test_tau_censoring_inert_when_tau_large():
    res = tau_censored_ep_bh([0.3, 0.6], [2.0, 0.5], alpha=0.4, tau=0.99)
    assert res.rejected == {0}


def test_tau_censoring_never_rejects_above_tau():
    for _ in range(200):
        K = rng.integers(1, 12)
        p = rng.uniform(size=K)
        e = rng.exponential(size=K) * 2
        tau = rng.uniform(0.1, 0.9)
        res = tau_censored_ep_bh(p, e, 0.3, tau)
        assert all(p[k] <= tau for k in res.rejected)


def test_tau_censoring_matches_literal_definition():
    for _ in range(1000):
        K = rng.integers(1, 10)
        p = rng.uniform(size=K)
        e = rng.choice([0.0, 0.5, 1.0, 3.0, np.inf], size=K, p=[0.1, 0.3, 0.3, 0.2, 0.1])
        alpha = rng.uniform(0.05, 0.8)
        tau = rng.uniform(0.1, 0.9)
        got = tau_censored_ep_bh(p, e, alpha, tau).rejected
        want = tau_censored_literal(p, e, alpha, tau)
        assert got == want, (p, e, alpha, tau)


def test_tau_domain_error():
    with pytest.raises(ValidationError):
        tau_censored_ep_bh([0.1], [1.0], 0.1, tau=1.0)


# ---------------------------------------------------------------------------
# validation of p inputs


def test_pvalue_range_validation():
    with pytest.raises(ValidationError):
        p_bh([0.1, 1.2], 0.1)
    with pytest.raises(ValidationError):
        p_bh([0.1, np.nan], 0.1)
