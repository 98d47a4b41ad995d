"""Constructor tests: formula values, dominance, equivalence oracles."""

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from epbh import ValidationError, ep_bh, ep_bh_mask, p_bh
from epbh.estimators import (
    adaptive_bh,
    combine_evalues,
    combine_pi0,
    dm,
    dm_pi0,
    dm_plus,
    ibhlog,
    ibhlog_pi0,
    loo_lift,
    mabh,
    min_storey,
    min_storey_pi0,
    mpc,
    mpc_pi0,
    quant,
    quant_pi0,
    storey,
    storey_epsilon,
    storey_pi0,
    storey_plus,
    tst,
)
from epbh.shapes import ShapeFunction, indicator_shape, power_shape, shape_function

rng = np.random.default_rng(424242)

P4 = np.array([0.01, 0.2, 0.6, 0.9])


# ---------------------------------------------------------------------------
# oracles


def bh_raw(p, level):
    """Plain step-up scan at an arbitrary positive level (oracle only)."""
    p = np.asarray(p, dtype=float)
    K = len(p)
    s = np.sort(p)
    ks = np.arange(1, K + 1)
    ok = s <= level * ks / K
    if not ok.any():
        return set()
    k_star = ks[ok].max()
    return set(np.flatnonzero(p <= level * k_star / K))


def mabh_two_stage(p, alpha):
    """Literal two-stage description of the minimally adaptive procedure."""
    K = len(p)
    if not bh_raw(p, alpha):
        return set()
    return bh_raw(p, alpha * K / (K - 1))


def tst_two_stage(p, alpha):
    """Literal two-stage step-up procedure with alpha' = alpha/(1+alpha)."""
    K = len(p)
    ap = alpha / (1.0 + alpha)
    r1 = len(bh_raw(p, ap))
    if r1 == 0:
        return set()
    if r1 == K:
        return set(range(K))
    return bh_raw(p, ap * K / (K - r1))


# ---------------------------------------------------------------------------
# Storey family


def test_storey_worked_example():
    npt.assert_allclose(storey(P4, tau=0.5), np.full(4, 4 * 0.5 / 3))


def test_storey_all_below_tau_is_maximal():
    npt.assert_allclose(storey([0.1, 0.2], tau=0.5, c=0.5), np.full(2, 2 * 0.5 / 0.5))


def test_storey_epsilon_formula():
    assert storey_epsilon(c=0.5, tau=0.5, n_nulls=3) == pytest.approx(1.0)


def test_storey_epsilon_binomial_bound():
    # E[1/((X+1)(X+2))] <= 1/((n+1)(n+2)q^2) for X ~ Binom(n, q), by exact
    # enumeration over the pmf; this is the inequality behind the bound.
    for n, q in [(3, 0.5), (10, 0.25), (25, 0.7), (40, 0.05)]:
        x = np.arange(n + 1)
        lhs = (stats.binom.pmf(x, n, q) / ((x + 1.0) * (x + 2.0))).sum()
        assert lhs <= 1.0 / ((n + 1) * (n + 2) * q * q) + 1e-15


def test_storey_domain_errors():
    with pytest.raises(ValidationError):
        storey(P4, tau=0.0)
    with pytest.raises(ValidationError):
        storey(P4, tau=0.5, c=0.0)


def test_storey_plus_worked_example():
    npt.assert_allclose(storey_plus(P4, tau=0.5), [2 / 3, 2 / 3, 1.0, 1.0])


def test_storey_plus_dominates_storey():
    for _ in range(200):
        p = rng.uniform(size=rng.integers(1, 25))
        tau = rng.uniform(0.1, 0.9)
        assert (storey_plus(p, tau) >= storey(p, tau) - 1e-15).all()


def test_storey_plus_all_above_tau():
    npt.assert_allclose(storey_plus([0.8, 0.9], tau=0.5), [0.5, 0.5])


def test_storey_plus_can_out_discover_storey():
    p = [0.05, 0.35]
    alpha, tau = 0.4, 0.3
    assert ep_bh(p, storey(p, tau), alpha).rejected == {0}
    assert ep_bh(p, storey_plus(p, tau), alpha).rejected == {0, 1}


# ---------------------------------------------------------------------------
# MPC / DM family


def test_mpc_worked_example():
    npt.assert_allclose(mpc(P4), np.full(4, 4 / 5.42), rtol=1e-12)


def test_mpc_zero_pvalues():
    npt.assert_allclose(mpc(np.zeros(6)), np.full(6, 3.0))


def test_mpc_equals_dm_with_identity_shape():
    shape = power_shape(1.0)  # psi(u) = u, nu = 1/2
    for _ in range(100):
        p = rng.uniform(size=rng.integers(1, 15))
        npt.assert_allclose(mpc(p), dm(p, shape), rtol=1e-12)


def test_dm_worked_example():
    npt.assert_allclose(dm(P4, power_shape(1.0)), np.full(4, 4 / 5.42), rtol=1e-12)


def test_dm_indicator_reduces_to_storey():
    for _ in range(100):
        tau = rng.uniform(0.1, 0.9)
        p = rng.uniform(size=rng.integers(1, 15))
        npt.assert_allclose(dm(p, indicator_shape(tau)), storey(p, tau), rtol=1e-12)


def test_dm_homogeneous_identity():
    shape = power_shape(4.0)
    p = rng.uniform(size=8)
    expected = 8 * shape.nu / (1.0 + shape(p).sum())
    npt.assert_allclose(dm(p, shape), np.full(8, expected), rtol=1e-12)


def test_dm_auto_nu_quadrature():
    auto = shape_function(lambda u: u**4)
    assert auto.nu == pytest.approx(0.2, abs=1e-10)


def test_dm_rejects_nonpositive_nu():
    with pytest.raises(ValidationError):
        ShapeFunction(psi=lambda u: u, nu=0.0)


def test_dm_plus_worked_example():
    e = dm_plus(P4, power_shape(1.0))
    assert e[0] == pytest.approx(4 / 5.4, rel=1e-12)
    assert (e >= dm(P4, power_shape(1.0)) - 1e-15).all()


def test_dm_plus_single_hypothesis():
    shape = power_shape(2.0)  # nu = 1/3
    npt.assert_allclose(dm_plus([0.4], shape), [shape.nu])


def test_dm_plus_dominates_loo_lift_heterogeneous():
    for _ in range(100):
        K = rng.integers(2, 10)
        shapes = [power_shape(float(m)) for m in rng.integers(1, 6, size=K)]
        p = rng.uniform(size=K)
        lifted = loo_lift(dm_pi0(shapes), p)
        assert (dm_plus(p, shapes) >= lifted - 1e-12).all()


# ---------------------------------------------------------------------------
# Quant / IBHlog / Min-Storey


def test_quant_worked_example():
    npt.assert_allclose(quant(P4, L=2), np.full(4, 4 * 0.8 / 3), rtol=1e-12)


def test_quant_degenerate_cases():
    npt.assert_allclose(quant([0.2, 1.0], L=2), [0.0, 0.0])
    npt.assert_allclose(quant(np.zeros(3), L=3), np.full(3, 3.0))


def test_quant_range_validation():
    with pytest.raises(ValidationError):
        quant(P4, L=0)
    with pytest.raises(ValidationError):
        quant(P4, L=5)


def test_ibhlog_worked_example():
    expected = 4 / (2 - np.log1p(-P4).sum())
    assert expected == pytest.approx(0.73367, abs=5e-6)
    npt.assert_allclose(ibhlog(P4), np.full(4, expected))


def test_ibhlog_edge_cases():
    npt.assert_allclose(ibhlog(np.zeros(4)), np.full(4, 2.0))
    npt.assert_allclose(ibhlog([0.2, 1.0]), [0.0, 0.0])


def test_min_storey_worked_example():
    e = min_storey(P4, eps=0.5, pi_lower=0.1, C=1.0)
    npt.assert_allclose(e, np.full(4, 1.6), rtol=1e-12)


def test_min_storey_dense_scan_oracle():
    for _ in range(50):
        K = rng.integers(1, 12)
        p = rng.uniform(size=K)
        eps = rng.uniform(0.2, 0.8)
        taus = np.linspace(0.0, 1.0 - eps, 100_001)
        counts = (p[:, None] > taus[None, :]).sum(axis=0)
        dense = (np.maximum(1, counts) / (K * (1.0 - taus))).min()
        exact = 1.0 / min_storey(p, eps=eps, pi_lower=1e-9, C=1.0)[0]
        assert exact <= dense + 1e-12
        assert dense - exact <= 1e-3


def test_min_storey_pi_lower_clamp():
    e = min_storey([0.001, 0.002], eps=0.5, pi_lower=0.9, C=1.0)
    npt.assert_allclose(e, np.full(2, 1 / 0.9))


def test_min_storey_all_ones():
    e = min_storey(np.ones(4), eps=0.3, pi_lower=0.1, C=1.0)
    npt.assert_allclose(e, np.full(4, 1.0))


def test_min_storey_parameter_validation():
    with pytest.raises(ValidationError):
        min_storey(P4, eps=0.0, pi_lower=0.1, C=1.0)
    with pytest.raises(ValidationError):
        min_storey(P4, eps=0.5, pi_lower=0.0, C=1.0)
    with pytest.raises(ValidationError):
        min_storey(P4, eps=0.5, pi_lower=0.1, C=0.0)


# ---------------------------------------------------------------------------
# MABH / TST


def test_mabh_worked_example():
    p = [0.05, 0.9]
    e = mabh(p, alpha=0.4)
    npt.assert_allclose(e, [2.0, 2.0])
    assert ep_bh(p, e, 0.4).rejected == bh_raw(p, 0.8) == {0}


def test_mabh_no_stage_one_rejections():
    p = [0.6, 0.9]
    npt.assert_allclose(mabh(p, alpha=0.4), [0.0, 0.0])
    assert ep_bh(p, mabh(p, 0.4), 0.4).rejected == set()


def test_mabh_matches_two_stage_description():
    for _ in range(1000):
        K = rng.integers(2, 12)
        p = rng.uniform(size=K) ** rng.uniform(1, 3)
        alpha = rng.uniform(0.05, (K - 1) / K)
        got = ep_bh(p, mabh(p, alpha), alpha).rejected
        assert got == mabh_two_stage(p, alpha), (p, alpha)


def test_mabh_alpha_validation():
    with pytest.raises(ValidationError):
        mabh([0.1, 0.2], alpha=0.6)
    with pytest.raises(ValidationError):
        mabh([0.1], alpha=0.1)


def test_tst_worked_example():
    p = [0.001, 0.8, 0.9, 0.95]
    e = tst(p, alpha=0.1)
    assert e[0] == pytest.approx((1 / 1.1) * 4 / 4, rel=1e-12)
    assert e[1] == pytest.approx((1 / 1.1) * 4 / 3, rel=1e-12)
    e_plus = tst(p, alpha=0.1, plus=True)
    npt.assert_array_equal(e_plus, e * (4.1 / 4))  # exact scalar multiple
    assert e_plus[0] == pytest.approx(0.93182, abs=5e-6)


def test_tst_matches_two_stage_procedure():
    for _ in range(1000):
        K = rng.integers(2, 12)
        p = rng.uniform(size=K) ** rng.uniform(1, 4)
        alpha = rng.uniform(0.05, 0.4)
        got = ep_bh(p, tst(p, alpha), alpha).rejected
        assert got == tst_two_stage(p, alpha), (p, alpha)


# ---------------------------------------------------------------------------
# leave-one-out lift and adaptive BH


def test_loo_lift_quant_example():
    e = loo_lift(quant_pi0(L=2), P4)
    assert e[0] == pytest.approx(4 * 0.8 / 3, rel=1e-12)
    assert e[2] == pytest.approx(4 * 0.99 / 3, rel=1e-12)


def test_loo_lift_storey_reproduces_storey_plus():
    for _ in range(200):
        K = rng.integers(1, 20)
        p = rng.uniform(size=K)
        tau = rng.uniform(0.1, 0.9)
        lifted = loo_lift(storey_pi0(tau), p)
        npt.assert_allclose(lifted, storey_plus(p, tau), rtol=1e-14)
        assert (
            ep_bh(p, lifted, 0.2).rejected
            == ep_bh(p, storey_plus(p, tau), 0.2).rejected
        )


def test_loo_lift_flat_at_zero_pvalues():
    e = loo_lift(storey_pi0(0.5), np.zeros(5))
    npt.assert_allclose(e, np.full(5, 1.0 / storey_pi0(0.5)(np.zeros(5))))


def test_loo_lift_refuses_non_monotone():
    from epbh.estimators import NullPropEstimator

    bad = NullPropEstimator(fn=lambda p: 0.5, monotone=False, name="bad")
    with pytest.raises(ValidationError):
        loo_lift(bad, P4)


def test_loo_lift_dominates_flat(subtests=None):
    for maker in (
        lambda: storey_pi0(0.5),
        lambda: quant_pi0(3),
        ibhlog_pi0,
        lambda: dm_pi0(power_shape(4.0)),
        lambda: min_storey_pi0(0.5, 0.05, 1.0),
    ):
        est = maker()
        for _ in range(50):
            p = rng.uniform(size=6)
            flat = 1.0 / est.evaluate(p)
            assert (loo_lift(est, p) >= flat - 1e-12).all()


def test_adaptive_bh_matches_flat_evalue_route():
    for _ in range(300):
        K = rng.integers(2, 20)
        p = rng.uniform(size=K) ** rng.uniform(1, 3)
        tau = rng.uniform(0.2, 0.8)
        est = storey_pi0(tau)
        alpha = rng.uniform(0.05, 0.3)
        if alpha / est(p) >= 1.0:  # clamped regime: equality not claimed
            continue
        flat = np.full(K, 1.0 / est(p))
        assert adaptive_bh(p, est, alpha).rejected == ep_bh(p, flat, alpha).rejected


def test_adaptive_bh_unit_pi0_is_plain_bh():
    from epbh.estimators import NullPropEstimator

    one = NullPropEstimator(fn=lambda p: np.ones(p.shape[:-1]), monotone=True,
                            name="unit", vectorized=True)
    p = rng.uniform(size=10)
    assert adaptive_bh(p, one, 0.2).rejected == p_bh(p, 0.2).rejected


def test_adaptive_bh_clamps_level_with_warning():
    from epbh.estimators import NullPropEstimator

    tiny = NullPropEstimator(fn=lambda p: np.full(p.shape[:-1], 0.01),
                             monotone=True, name="tiny", vectorized=True)
    with pytest.warns(RuntimeWarning):
        res = adaptive_bh([0.2, 0.99], tiny, 0.5)
    assert res.rejected == {0, 1}


def test_adaptive_dominated_by_loo_lift():
    for _ in range(500):
        K = rng.integers(2, 15)
        p = rng.uniform(size=K) ** rng.uniform(1, 3)
        est = storey_pi0(0.5)
        alpha = 0.1
        a1 = adaptive_bh(p, est, alpha).rejected
        a2 = ep_bh(p, loo_lift(est, p), alpha).rejected
        assert a1 <= a2


# ---------------------------------------------------------------------------
# combinations


def test_combine_pi0_arithmetic():
    from epbh.estimators import NullPropEstimator

    a = NullPropEstimator(lambda p: np.full(p.shape[:-1], 0.4), True, "a", vectorized=True)
    b = NullPropEstimator(lambda p: np.full(p.shape[:-1], 0.8), True, "b", vectorized=True)
    combo = combine_pi0(a, b, lam=0.5)
    assert combo(np.array([0.5])) == pytest.approx(0.6)
    assert combo.monotone


def test_combine_lambda_endpoints_rejected():
    a = storey_pi0(0.5)
    with pytest.raises(ValidationError):
        combine_pi0(a, a, lam=0.0)
    with pytest.raises(ValidationError):
        combine_evalues(np.ones(3), np.ones(3), lam=1.0)


def test_combined_pi0_harmonic_below_arithmetic():
    a, b = storey_pi0(0.3), quant_pi0(2)
    for _ in range(200):
        p = rng.uniform(size=6)
        lam = rng.uniform(0.1, 0.9)
        implied = 1.0 / combine_pi0(a, b, lam)(p)
        arith = lam / a(p) + (1 - lam) / b(p)
        assert implied <= arith + 1e-12


def test_combine_evalues_arithmetic():
    npt.assert_allclose(
        combine_evalues([2.0, 2.0], [0.5, 1.0], lam=0.5), [1.25, 1.5]
    )
    e = rng.exponential(size=5)
    npt.assert_allclose(combine_evalues(e, e, 0.3), e)


def test_combine_evalues_shape_mismatch():
    with pytest.raises(ValidationError):
        combine_evalues(np.ones(3), np.ones(4), 0.5)


def test_algorithm4_dominates_algorithm3():
    a_est, b_est = storey_pi0(0.5), quant_pi0(5)
    for _ in range(300):
        p = rng.uniform(size=10) ** rng.uniform(1, 3)
        lam = 0.5
        alg3 = adaptive_bh(p, combine_pi0(a_est, b_est, lam), 0.1).rejected
        e_combo = combine_evalues(loo_lift(a_est, p), loo_lift(b_est, p), lam)
        alg4 = ep_bh(p, e_combo, 0.1).rejected
        assert alg3 <= alg4


# ---------------------------------------------------------------------------
# monotonicity property (condition for FDR control of the lifted engines)


@st.composite
def pvec_and_bump(draw):
    K = draw(st.integers(min_value=2, max_value=8))
    p = draw(
        st.lists(
            st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
            min_size=K, max_size=K,
        )
    )
    idx = draw(st.integers(min_value=0, max_value=K - 1))
    bumped = draw(st.floats(min_value=p[idx], max_value=1.0, allow_nan=False))
    return np.array(p), idx, bumped


@settings(max_examples=200, deadline=None)
@given(pvec_and_bump())
def test_constructors_non_increasing_in_pvalues(case):
    p, idx, bumped = case
    p_up = p.copy()
    p_up[idx] = bumped
    constructors = [
        lambda q: storey(q, 0.5),
        lambda q: storey_plus(q, 0.5),
        mpc,
        lambda q: dm(q, power_shape(4.0)),
        lambda q: dm_plus(q, power_shape(4.0)),
        lambda q: quant(q, max(1, len(q) // 2)),
        ibhlog,
        lambda q: min_storey(q, 0.5, 0.05, 1.0),
        lambda q: tst(q, 0.1),
        lambda q: tst(q, 0.1, plus=True),
    ]
    for build in constructors:
        before, after = build(p), build(p_up)
        assert (after <= before + 1e-12).all()


@settings(max_examples=100, deadline=None)
@given(
    st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
    st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
)
def test_shape_functions_non_decreasing(u, v):
    lo, hi = min(u, v), max(u, v)
    for shape in (power_shape(1.0), power_shape(4.0), indicator_shape(0.3)):
        assert shape(lo) <= shape(hi) + 1e-15


def test_plus_variants_ignore_own_pvalue():
    # "+" constructors may depend on P_k only through the leave-one-out sums
    p = rng.uniform(size=6)
    for k in range(6):
        p2 = p.copy()
        p2[k] = rng.uniform()
        assert storey_plus(p, 0.4)[k] == storey_plus(p2, 0.4)[k]
        npt.assert_allclose(
            dm_plus(p, power_shape(2.0))[k], dm_plus(p2, power_shape(2.0))[k]
        )


def test_batched_constructors_match_per_row():
    P = rng.uniform(size=(40, 7))
    batched = {
        "storey": storey(P, 0.5),
        "storey+": storey_plus(P, 0.5),
        "mpc": mpc(P),
        "dm+": dm_plus(P, power_shape(4.0)),
        "quant": quant(P, 3),
        "ibhlog": ibhlog(P),
        "tst": tst(P, 0.1),
        "mabh": mabh(P, 0.1),
        "min-storey": min_storey(P, 0.5, 0.05, 1.0),
    }
    builders = {
        "storey": lambda p: storey(p, 0.5),
        "storey+": lambda p: storey_plus(p, 0.5),
        "mpc": mpc,
        "dm+": lambda p: dm_plus(p, power_shape(4.0)),
        "quant": lambda p: quant(p, 3),
        "ibhlog": ibhlog,
        "tst": lambda p: tst(p, 0.1),
        "mabh": lambda p: mabh(p, 0.1),
        "min-storey": lambda p: min_storey(p, 0.5, 0.05, 1.0),
    }
    for name, mat in batched.items():
        for i in range(0, 40, 7):
            npt.assert_allclose(mat[i], builders[name](P[i]), rtol=1e-12,
                                err_msg=name)
