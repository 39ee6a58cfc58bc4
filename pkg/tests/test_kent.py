import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from kentmix.kent import (
    KentParams,
    NormConstError,
    bessel_i_half_orders,
    bvn_approx_variances,
    condition_number,
    log_bessel_i_half,
    log_density,
    log_norm_const,
    norm_const,
    sample_kent,
    sample_uniform_sphere,
)
from kentmix.sphere import euler_to_matrix

# log c(kappa, beta) from adaptive 2-d quadrature of the unnormalized density
# (scipy dblquad, epsrel 1e-13); independent of the series implementation
QUAD_LOG_C = {
    (5, 2): 5.40023391373112,
    (10, 4): 9.797186614726025,
    (20, 9): 19.29847638231578,
    (20, 2): 18.859510151408315,
    (50, 10): 48.006581130994135,
    (1, 0.2): 2.697332321724055,
    (100, 40): 97.68736536538438,
    (264.34, 98.07): 260.9862013861709,
}


def quad_mass(kappa, beta, gamma=np.eye(3)):
    """Integral of the normalized density over the sphere by quadrature in (psi, chi)."""
    params = KentParams(kappa, beta, gamma)

    def f(chi, psi):
        x = np.array([np.sin(psi) * np.sin(chi), np.sin(psi) * np.cos(chi), np.cos(psi)])
        return np.exp(log_density(x, params)) * np.sin(psi)

    val, _ = integrate.dblquad(f, 0, np.pi, 0, 2 * np.pi, epsabs=1e-12, epsrel=1e-10)
    return val


# ---------------------------------------------------------------------------
# Bessel functions of half-integer order


def test_bessel_seed():
    assert bessel_i_half_orders(1.0, 0)[0] == pytest.approx(0.937674888245488, rel=1e-14)


@pytest.mark.parametrize("x", [0.3, 1.0, 5.0, 20.0, 100.0])
def test_bessel_five_halves_closed_form(x):
    closed = math.sqrt(2 / (math.pi * x)) * ((3 / x**2 + 1) * math.sinh(x) - 3 / x * math.cosh(x))
    assert bessel_i_half_orders(x, 1)[1] == pytest.approx(closed, rel=1e-12)


@pytest.mark.parametrize("x", [0.01, 0.5, 3.0, 40.0, 300.0, 700.0])
def test_log_bessel_against_scipy(x):
    logs = np.array(log_bessel_i_half(x, 60))
    ref = np.log(special.ive(np.arange(61) + 0.5, x)) + x
    np.testing.assert_allclose(logs, ref, rtol=1e-12, atol=1e-12)


def test_log_bessel_large_argument_stays_finite():
    logs = log_bessel_i_half(5000.0, 20)
    assert np.all(np.isfinite(logs))
    np.testing.assert_allclose(logs, np.log(special.ive(np.arange(21) + 0.5, 5000.0)) + 5000.0, rtol=1e-11)


@pytest.mark.parametrize("x", [0.5, 10.0, 200.0])
def test_bessel_ratios_decrease(x):
    logs = np.array(log_bessel_i_half(x, 40))
    assert np.all(np.diff(np.diff(logs)) < 0)


def test_bessel_rejects_nonpositive():
    with pytest.raises(ValueError):
        log_bessel_i_half(0.0, 3)


# ---------------------------------------------------------------------------
# Normalizing constant


@pytest.mark.parametrize("kappa", [0.5, 1, 5, 20, 100, 500, 700])
def test_fisher_limit(kappa):
    exact = math.log(4 * math.pi) + kappa + math.log1p(-math.exp(-2 * kappa)) - math.log(2 * kappa)
    res = norm_const(kappa, 0.0)
    assert res.log_value == pytest.approx(exact, rel=1e-12)
    coth = 1 / math.tanh(kappa)
    assert res.dlog_dkappa == pytest.approx(coth - 1 / kappa, rel=1e-13)


@pytest.mark.parametrize("kb", sorted(QUAD_LOG_C))
def test_norm_const_matches_quadrature_oracle(kb):
    assert log_norm_const(*kb) == pytest.approx(QUAD_LOG_C[kb], rel=1e-12)


@pytest.mark.parametrize("kappa", [1, 5, 20, 100])
@pytest.mark.parametrize("ecc", [0.0, 0.4, 0.8])
def test_density_integrates_to_one(kappa, ecc):
    assert quad_mass(kappa, ecc * kappa / 2) == pytest.approx(1.0, abs=1e-6)


def test_density_integrates_to_one_rotated():
    g = euler_to_matrix(0.7, 1.9, -0.4)
    assert quad_mass(20, 9, g) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("kb", [(5, 2), (20, 9), (50, 10), (100, 40), (700, 250), (3, 1.49)])
def test_norm_const_derivatives_fd(kb):
    kappa, beta = kb
    res = norm_const(kappa, beta)
    h = 1e-6 * max(1.0, kappa)
    dk = (log_norm_const(kappa + h, beta) - log_norm_const(kappa - h, beta)) / (2 * h)
    db = (log_norm_const(kappa, beta + h) - log_norm_const(kappa, beta - h)) / (2 * h)
    assert res.dlog_dkappa == pytest.approx(dk, rel=1e-6)
    assert res.dlog_dbeta == pytest.approx(db, rel=1e-6)
    if kappa < 700:
        assert res.d_dkappa == pytest.approx(res.value * dk, rel=1e-6)


def test_norm_const_large_kappa_finite():
    res = norm_const(700.0, 280.0)
    assert math.isfinite(res.log_value) and res.terms_used >= 1


def test_norm_const_domain():
    with pytest.raises(ValueError):
        norm_const(10, 5)
    with pytest.raises(ValueError):
        norm_const(-1, 0)
    with pytest.raises(ValueError):
        norm_const(1e-10, 1e-12)
    assert norm_const(0.0, 0.0).log_value == pytest.approx(math.log(4 * math.pi))


def test_norm_const_reports_truncation_failure():
    with pytest.raises(NormConstError) as info:
        norm_const(100.0, 49.0, max_terms=3)
    assert info.value.last_term > 0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 600), st.floats(0, 0.95))
def test_norm_const_positive_and_beta_monotone(kappa, ecc):
    beta = ecc * kappa / 2
    try:
        res = norm_const(kappa, beta)
    except NormConstError:
        # 64 terms only run out for very concentrated, very oval shapes
        assert kappa > 250 and ecc > 0.8
        return
    assert res.value > 0 and res.terms_used >= 1
    # c increases with beta for fixed kappa
    assert res.dlog_dbeta >= 0


# ---------------------------------------------------------------------------
# Density


def test_uniform_limit_density():
    p = KentParams(0.0, 0.0, np.eye(3))
    x = np.array([[0, 0, 1.0], [1.0, 0, 0]])
    np.testing.assert_allclose(log_density(x, p), -math.log(4 * math.pi))


def test_pole_antipode_difference():
    p = KentParams.from_pole(13.0, 4.0, [0.6, 0.0, 0.8])
    g3 = p.pole
    assert log_density(g3, p) - log_density(-g3, p) == pytest.approx(26.0, abs=1e-12)


def test_major_axis_is_gamma1():
    p = KentParams(20.0, 9.0, np.eye(3))
    psi = 0.4
    along_x1 = np.array([np.sin(psi), 0.0, np.cos(psi)])
    along_x2 = np.array([0.0, np.sin(psi), np.cos(psi)])
    assert log_density(along_x1, p) > log_density(along_x2, p)


def test_axis_pair_sign_symmetry():
    g = euler_to_matrix(0.3, 1.0, 2.0)
    flipped = g * np.array([-1.0, -1.0, 1.0])
    x = sample_uniform_sphere(50, seed=2)
    np.testing.assert_allclose(log_density(x, KentParams(20, 9, g)), log_density(x, KentParams(20, 9, flipped)),
                               atol=1e-12)


# ---------------------------------------------------------------------------
# Approximations


def test_bvn_variances():
    assert bvn_approx_variances(10, 0) == (1.0, 1.0)
    v1, v2 = bvn_approx_variances(8, 2)
    assert v1 == pytest.approx(2.0) and v2 == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        bvn_approx_variances(10, 5)


def test_bvn_against_samples():
    kappa, beta = 200.0, 20.0
    y = sample_kent(KentParams(kappa, beta, np.eye(3)), 100_000, seed=8)
    z = np.sqrt(kappa) * y[:, :2]
    v_exp = bvn_approx_variances(kappa, beta)
    for k in range(2):
        var = z[:, k].var()
        se = var * math.sqrt(2 / len(z))
        # the approximation carries an O(1/kappa) bias on top of sampling noise
        assert abs(var - v_exp[k]) < 3 * se + 3 * v_exp[k] / kappa


def test_condition_number():
    assert condition_number(50, 0) == 1.0
    # (35.46 + 27.78) / (35.46 - 27.78)
    assert condition_number(35.46, 13.89) == pytest.approx(8.234375, rel=1e-12)
    assert condition_number(264.34, 98.07) == pytest.approx(6.7, rel=0.01)
    with pytest.raises(ValueError):
        condition_number(10, 5)


@given(st.floats(1, 1000), st.floats(0, 0.49), st.floats(0.001, 0.009))
def test_condition_number_increasing(kappa, d, step):
    assert condition_number(kappa, (d + step) * kappa) > condition_number(kappa, d * kappa)


# ---------------------------------------------------------------------------
# Sampling


def test_sampler_deterministic():
    p = KentParams.from_pole(30, 10, [0, 1, 0])
    np.testing.assert_array_equal(sample_kent(p, 100, seed=4), sample_kent(p, 100, seed=4))
    assert not np.array_equal(sample_kent(p, 100, seed=4), sample_kent(p, 100, seed=5))


@pytest.mark.parametrize("kb", [(50, 10), (5, 2), (264.34, 98.07), (20, 0.5)])
def test_sampler_moment_identities(kb):
    kappa, beta = kb
    g = euler_to_matrix(0.5, 2.0, 1.0)
    x = sample_kent(KentParams(kappa, beta, g), 100_000, seed=11)
    y = x @ g
    res = norm_const(kappa, beta)
    t3 = y[:, 2]
    q = y[:, 0] ** 2 - y[:, 1] ** 2
    assert abs(t3.mean() - res.dlog_dkappa) < 3 * t3.std() / math.sqrt(len(x))
    assert abs(q.mean() - res.dlog_dbeta) < 3 * q.std() / math.sqrt(len(x))
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)


def test_sampler_mean_direction():
    x = sample_kent(KentParams(50, 10, np.eye(3)), 100_000, seed=3)
    m = x.mean(axis=0)
    assert math.acos(m[2] / np.linalg.norm(m)) < 0.01


def test_sampler_fisher_mean():
    kappa = 7.0
    x = sample_kent(KentParams(kappa, 0.0, np.eye(3)), 100_000, seed=1)
    expected = 1 / math.tanh(kappa) - 1 / kappa
    assert abs(x[:, 2].mean() - expected) < 3 * x[:, 2].std() / math.sqrt(len(x))


def test_sampler_matches_importance_weighted_uniform():
    # compare the distribution of gamma1^T x between direct draws and
    # uniform draws reweighted by the density
    p = KentParams(8.0, 3.0, euler_to_matrix(1.0, 0.5, 0.2))
    direct = sample_kent(p, 20_000, seed=6) @ p.gamma
    u = sample_uniform_sphere(400_000, seed=7)
    w = np.exp(log_density(u, p))
    w /= w.sum()
    idx = np.random.default_rng(9).choice(len(u), size=20_000, p=w)
    resampled = u[idx] @ p.gamma
    for k in range(3):
        assert stats.ks_2samp(direct[:, k], resampled[:, k]).pvalue > 0.001


def test_uniform_sampler():
    x = sample_uniform_sphere(100_000, seed=0)
    assert np.linalg.norm(x.mean(axis=0)) < 0.01
    for k in range(3):
        assert stats.kstest(x[:, k], stats.uniform(-1, 2).cdf).pvalue > 0.01
    frac = np.mean(x[:, 2] > 0.5)
    assert abs(frac - 0.25) < 3 * math.sqrt(0.25 * 0.75 / len(x))


# ---------------------------------------------------------------------------
# Parameter object


def test_params_validation():
    with pytest.raises(ValueError):
        KentParams(10, 6, np.eye(3))
    with pytest.raises(ValueError):
        KentParams(10, 1, np.diag([1.0, 1.0, -1.0]))
    p = KentParams.from_euler(10, 2, 0.1, 0.2, 0.3)
    np.testing.assert_allclose(p.gamma, euler_to_matrix(0.1, 0.2, 0.3))
    assert p == KentParams(10, 2, euler_to_matrix(0.1, 0.2, 0.3))
