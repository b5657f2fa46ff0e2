import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fires.channel import GaussianJitter, Quantized, phase_attenuation
from fires.coverage import (LinkBudget, QosTargets, coverage_result, noma_threshold, oma_threshold, radius_es,
                            radius_noma, radius_oma, snr_at_distance, unit_snr)


def dbm(x):
    return 10 ** (x / 10) * 1e-3


@pytest.fixture
def table3():
    return LinkBudget(P=dbm(30), sigma2=dbm(-114), rho0=dbm(-13.3), alpha=2.1, d_f=50.0, M=36)


def bisect_root(f, lo=1e-3, hi=1e6, iters=200):
    """Root of a decreasing function in log-distance."""
    a, b = math.log(lo), math.log(hi)
    for _ in range(iters):
        m = 0.5 * (a + b)
        if f(math.exp(m)) > 0:
            a = m
        else:
            b = m
    return math.exp(0.5 * (a + b))


def test_snr_unit_case():
    b = LinkBudget(P=1.0, sigma2=1.0, rho0=1.0, alpha=2.0, d_f=1.0, M=1)
    assert snr_at_distance(b, 1.0, 1.0, 1.0) == 1.0
    assert snr_at_distance(b, 1.0, 1.0, 2.0) == pytest.approx(1 / 2 ** 2)


def test_snr_rejects_nonpositive_distance(table3):
    with pytest.raises(ValueError):
        snr_at_distance(table3, 1.0, 1.0, 0.0)


def test_snr_table3_high_precision(table3):
    mpmath.mp.dps = 50
    P = mpmath.mpf(10) ** (mpmath.mpf(30) / 10) / 1000
    s2 = mpmath.mpf(10) ** (mpmath.mpf(-114) / 10) / 1000
    rho0 = mpmath.mpf(10) ** (mpmath.mpf("-13.3") / 10) / 1000
    a = mpmath.mpf("2.1")
    want = P / s2 * 36 ** 2 * rho0 ** 2 * mpmath.mpf(50) ** (-a) * mpmath.mpf(10) ** (-a)
    assert snr_at_distance(table3, 1.0, 1.0, 10.0) == pytest.approx(float(want), rel=1e-12)


@given(st.floats(0.1, 100), st.floats(0.5, 50), st.floats(1.5, 4.0))
def test_snr_doubling_distance(D, P, alpha):
    b = LinkBudget(P=P, sigma2=1e-9, rho0=1e-3, alpha=alpha, d_f=20.0, M=16)
    assert snr_at_distance(b, 1, 1, 2 * D) == pytest.approx(snr_at_distance(b, 1, 1, D) / 2 ** alpha, rel=1e-12)


def test_budget_validation():
    with pytest.raises(ValueError):
        LinkBudget(P=1.0, sigma2=0.0, rho0=1.0, alpha=2.0, d_f=1.0, M=1)
    with pytest.raises(ValueError):
        LinkBudget(P=1.0, sigma2=1.0, rho0=1.0, alpha=2.0, d_f=1.0, M=1, chi_r=0.0)
    with pytest.raises(ValueError):
        QosTargets(0.0, 1.0)


def test_thresholds():
    assert oma_threshold(1.0, 0.5) == pytest.approx(3.0)
    assert oma_threshold(1.0, 1.0) == pytest.approx(1.0)
    assert noma_threshold(1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        oma_threshold(1.0, 0.0)


def test_radius_es_unit_argument():
    b = LinkBudget(P=1.0, sigma2=1.0, rho0=1.0, alpha=2.3, d_f=1.0, M=1)
    assert radius_es(b, 1.0, 1.0, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        radius_es(b, 1.0, 1.0, 0.0)


def test_radius_es_bisection(table3):
    D = radius_es(table3, 0.5, 0.9, 1.0)
    root = bisect_root(lambda d: snr_at_distance(table3, 0.5, 0.9, d) - 1.0)
    assert D == pytest.approx(root, rel=1e-9)
    assert snr_at_distance(table3, 0.5, 0.9, D) == pytest.approx(1.0, rel=1e-12)


def test_radius_es_power_scaling(table3):
    from dataclasses import replace
    ratio = radius_es(replace(table3, P=4 * table3.P), 1, 1, 1) / radius_es(table3, 1, 1, 1)
    assert ratio == pytest.approx(4 ** (1 / table3.alpha), rel=1e-12)


def test_radius_oma_reductions(table3):
    assert radius_oma(table3, 1.0, 1.0, 1.0) == pytest.approx(radius_es(table3, 1.0, 1.0, 1.0), rel=1e-15)
    D = radius_oma(table3, 1.0, 0.5, 1.0)
    root = bisect_root(lambda d: snr_at_distance(table3, 1.0, 1.0, d) - (2 ** (1 / 0.5) - 1))
    assert D == pytest.approx(root, rel=1e-9)
    with pytest.raises(ValueError):
        radius_oma(table3, 1.0, 0.0, 1.0)


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_radius_oma_increasing_in_tau(a, b):
    budget = LinkBudget(P=1.0, sigma2=dbm(-114), rho0=dbm(-13.3), alpha=2.1, d_f=50.0, M=36)
    lo, hi = sorted((a, b))
    if hi - lo > 1e-6:
        assert radius_oma(budget, 1, lo, 1.0) < radius_oma(budget, 1, hi, 1.0)


def test_radius_noma_single_user_reduction(table3):
    D_r, D_t, feas = radius_noma(table3, 0.6, 0.4, 1.0, 0.0, 1, 1, 1.0, 1.0)
    assert D_t == 0.0 and not feas
    assert D_r == pytest.approx(radius_es(table3, 0.6, 1.0, 1.0), rel=1e-15)


def test_radius_noma_sic_boundary(table3):
    g_t = 3.0
    p_r = 1 / (1 + g_t)  # p_t == p_r * g_t exactly
    D_r, D_t, feas = radius_noma(table3, 0.5, 0.5, p_r, 1 - p_r, 1, 1, 1.0, g_t)
    assert D_t == 0.0 and not feas and D_r > 0


def test_radius_noma_sinr_bisection(table3):
    beta_r, p_r, g = 0.5, 0.25, 1.0
    D_r, D_t, feas = radius_noma(table3, beta_r, 1 - beta_r, p_r, 1 - p_r, 1, 1, g, g)
    assert feas
    s = unit_snr(table3, 1.0)

    def weak(d):
        S = (1 - beta_r) * s * d ** -table3.alpha
        return (1 - p_r) * S / (p_r * S + 1) - g

    def strong(d):
        return beta_r * p_r * s * d ** -table3.alpha - g

    assert D_t == pytest.approx(bisect_root(weak), rel=1e-9)
    assert D_r == pytest.approx(bisect_root(strong), rel=1e-9)


def test_radius_noma_contract(table3):
    with pytest.raises(ValueError):
        radius_noma(table3, 0.5, 0.5, 0.7, 0.7, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        radius_noma(table3, 0.5, 0.6, 0.5, 0.5, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        radius_noma(table3, 0.5, 0.5, 0.5, 0.5, 1, 1, 1, 1, strong="x")


@settings(max_examples=50)
@given(st.floats(0.01, 0.99), st.floats(0.001, 0.999), st.floats(0.1, 3), st.floats(0.1, 3))
def test_weak_radius_zero_exactly_without_power_margin(beta_r, p_r, R_r, R_t):
    b = LinkBudget(P=1.0, sigma2=dbm(-114), rho0=dbm(-13.3), alpha=2.1, d_f=50.0, M=36)
    g_r, g_t = noma_threshold(R_r), noma_threshold(R_t)
    _, D_t, _ = radius_noma(b, beta_r, 1 - beta_r, p_r, 1 - p_r, 1, 1, g_r, g_t)
    assert (D_t == 0.0) == ((1 - p_r) <= p_r * g_t)


@settings(max_examples=100)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.integers(4, 100), st.integers(4, 100),
       st.floats(0.2, 1.0), st.floats(0.2, 1.0), st.floats(10, 100), st.floats(10, 100), st.floats(1.8, 4.0))
def test_closed_form_scalings(P1, P2, M1, M2, c1, c2, d1, d2, alpha):
    base = dict(sigma2=1e-14, rho0=1e-4, alpha=alpha)
    r = lambda P, M, chi, d, g=1.0: radius_es(LinkBudget(P=P, M=M, d_f=d, **base), 1.0, chi, g)
    ref = r(P1, M1, c1, d1)
    assert r(P2, M1, c1, d1) / ref == pytest.approx((P2 / P1) ** (1 / alpha), rel=1e-10)
    assert r(P1, M2, c1, d1) / ref == pytest.approx((M2 / M1) ** (2 / alpha), rel=1e-10)
    assert r(P1, M1, c2, d1) / ref == pytest.approx((c2 / c1) ** (2 / alpha), rel=1e-10)
    assert r(P1, M1, c1, d2) / ref == pytest.approx(d1 / d2, rel=1e-10)
    assert r(P1, M1, c1, d1, 3.0) / ref == pytest.approx(3.0 ** (-1 / alpha), rel=1e-10)


def test_jitter_law(table3):
    from dataclasses import replace
    chi = phase_attenuation(GaussianJitter(0.5))
    ratio = radius_es(replace(table3, chi_r=chi), 1, chi, 1) / radius_es(table3, 1, 1, 1)
    assert ratio == pytest.approx(math.exp(-0.5 / 2.1), abs=1e-12)
    assert ratio == pytest.approx(0.788, abs=1e-3)


def test_quantization_shrinks_radius(table3):
    chi = phase_attenuation(Quantized(2))
    ratio = radius_oma(table3, chi, 0.5, 1.0) / radius_oma(table3, 1.0, 0.5, 1.0)
    assert ratio == pytest.approx((2 / math.pi) ** (2 / 2.1), rel=1e-12)


def test_zero_power_gives_zero_radius():
    b = LinkBudget(P=0.0, sigma2=1e-14, rho0=1e-4, alpha=2.1, d_f=50.0, M=36)
    assert radius_oma(b, 1.0, 0.5, 1.0) == 0.0


def test_coverage_result_flags():
    res = coverage_result(30.0, 10.0, rayleigh=23.3)
    assert res.D_tot == 40.0 and res.feasible and res.rayleigh_warning
    res = coverage_result(30.0, 0.0, rayleigh=23.3)
    assert not res.feasible and not res.feasible_t and res.feasible_r
    assert not coverage_result(30.0, 40.0, rayleigh=23.3).rayleigh_warning


def test_vectorized_radii_match_scalar(table3):
    taus = np.linspace(0.1, 0.9, 7)
    vec = radius_oma(table3, 1.0, taus, 1.0)
    assert np.allclose(vec, [radius_oma(table3, 1.0, t, 1.0) for t in taus], rtol=1e-15)
