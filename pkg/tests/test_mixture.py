import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy.special import roots_legendre

from kentmix.fit import compute_stats, fit_exact_mle
from kentmix.kent import KentParams, log_density, sample_kent, sample_uniform_sphere
from kentmix.mixture import (
    DROP_AFTER,
    EMError,
    MixtureModel,
    component_log_densities,
    degenerate_components,
    e_step,
    harden,
    m_step,
    mixture_log_density,
    mixture_loglik,
    run_em,
)
from kentmix.sphere import euler_to_matrix

E1, E2, E3 = np.eye(3)


def two_groups(seed=0, n=150):
    a = sample_kent(KentParams.from_pole(30.0, 8.0, E3), n, seed=seed)
    b = sample_kent(KentParams.from_pole(15.0, 3.0, E1), n, seed=seed + 1000)
    return np.vstack([a, b]), np.repeat([1, 2], n)


def sphere_grid(n_psi=120, n_chi=240):
    # Gauss-Legendre in cos(psi), midpoint rule in chi
    u, wu = roots_legendre(n_psi)
    chi = (np.arange(n_chi) + 0.5) * 2 * np.pi / n_chi
    s = np.sqrt(1 - u**2)
    x = np.stack([np.outer(s, np.cos(chi)), np.outer(s, np.sin(chi)), np.outer(u, np.ones(n_chi))], -1)
    w = np.outer(wu, np.full(n_chi, 2 * np.pi / n_chi))
    return x.reshape(-1, 3), w.reshape(-1)


@pytest.fixture
def model3():
    k1 = KentParams.from_pole(10.0, 3.0, E3)
    k2 = KentParams(25.0, 10.0, euler_to_matrix(0.3, 1.9, -0.4))
    return MixtureModel((k1, k2), [0.1, 0.5, 0.4], uniform=True)


def test_model_validation():
    k = KentParams.from_pole(5.0, 1.0, E3)
    with pytest.raises(ValueError):
        MixtureModel((k,), [0.5, 0.5])
    with pytest.raises(ValueError):
        MixtureModel((k,), [0.6, 0.6], uniform=True)
    with pytest.raises(ValueError):
        MixtureModel((k,), [1.2, -0.2], uniform=True)
    with pytest.raises(TypeError):
        MixtureModel(("kent",), [1.0])
    with pytest.raises(ValueError):
        MixtureModel((), [])


def test_build_defaults():
    k = KentParams.from_pole(5.0, 1.0, E3)
    m = MixtureModel.build([k, k], uniform=True, uniform_weight=0.1)
    np.testing.assert_allclose(m.weights, [0.1, 0.45, 0.45])
    assert (m.g_kent, m.n_components, m.offset) == (2, 3, 1)
    assert MixtureModel.build([], uniform=True).n_components == 1


def test_permuted_keeps_uniform_first(model3):
    p = model3.permuted([1, 0])
    assert p.kents == (model3.kents[1], model3.kents[0])
    np.testing.assert_allclose(p.weights, [0.1, 0.4, 0.5])
    assert p.permuted([1, 0]) == model3


def test_component_columns(model3):
    x = sample_uniform_sphere(20, seed=1)
    lp = component_log_densities(x, model3)
    np.testing.assert_allclose(lp[:, 0], np.log(0.1) - np.log(4 * np.pi))
    np.testing.assert_allclose(lp[:, 2], np.log(0.4) + log_density(x, model3.kents[1]), rtol=1e-12)


def test_mixture_density_integrates_to_one(model3):
    x, w = sphere_grid()
    assert np.sum(np.exp(mixture_log_density(x, model3)) * w) == pytest.approx(1.0, abs=1e-8)


def test_mixture_log_density_no_overflow():
    k = KentParams.from_pole(600.0, 200.0, E3)
    m = MixtureModel((k,), [0.5, 0.5], uniform=True)
    vals = mixture_log_density(np.array([E3, -E3]), m)
    assert np.all(np.isfinite(vals))
    assert vals[1] == pytest.approx(np.log(0.5) - np.log(4 * np.pi), rel=1e-12)


def test_single_point_density_is_scalar(model3):
    assert isinstance(mixture_log_density(E3, model3), float)


def test_e_step_rows_sum_to_one(model3):
    x, _ = two_groups()
    tau = e_step(x, model3)
    assert tau.shape == (len(x), 3)
    np.testing.assert_allclose(tau.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(tau >= 0)


def test_e_step_uniform_only():
    m = MixtureModel((), [1.0], uniform=True)
    x = sample_uniform_sphere(10, seed=2)
    np.testing.assert_array_equal(e_step(x, m), np.ones((10, 1)))
    assert mixture_loglik(x, m) == pytest.approx(-10 * np.log(4 * np.pi))


def test_m_step_with_hard_labels_matches_separate_fits():
    x, lab = two_groups(seed=3)
    tau = np.column_stack([lab == 1, lab == 2]).astype(float)
    init = MixtureModel.build([KentParams.from_pole(10.0, 0.0, E3), KentParams.from_pole(10.0, 0.0, E1)])
    m = m_step(x, tau, init)
    np.testing.assert_allclose(m.weights, [0.5, 0.5])
    for i in range(2):
        ref = fit_exact_mle(compute_stats(x[lab == i + 1]), init=init.kents[i])
        assert m.kents[i].kappa == pytest.approx(ref.params.kappa, rel=1e-8)
        assert m.kents[i].beta == pytest.approx(ref.params.beta, rel=1e-6)


def test_m_step_rejects_shape_mismatch(model3):
    with pytest.raises(ValueError):
        m_step(sample_uniform_sphere(5, seed=0), np.ones((5, 2)) / 2, model3)


def test_m_step_keeps_frozen(model3):
    x, _ = two_groups()
    tau = e_step(x, model3)
    m = m_step(x, tau, model3, frozen=[1])
    assert m.kents[1] == model3.kents[1]
    assert m.kents[0] != model3.kents[0]


def test_em_recovers_two_groups():
    x, lab = two_groups(seed=5)
    init = MixtureModel.build([KentParams.from_pole(5.0, 0.0, [0.3, 0, 1]),
                               KentParams.from_pole(5.0, 0.0, [1, 0.2, 0])], uniform=True)
    model, tau, trace = run_em(x, init)
    assert trace.converged
    assert trace.monotonicity_violation_max <= 1e-9
    assert np.mean(harden(tau) == lab) > 0.97
    assert model.kents[0].kappa == pytest.approx(30, rel=0.25)
    assert trace.final_loglik == pytest.approx(mixture_loglik(x, model), rel=1e-12)


def test_em_fixed_point():
    # a converged fit barely moves when EM is restarted from it
    x, _ = two_groups(seed=6)
    init = MixtureModel.build([KentParams.from_pole(5.0, 0.0, E3), KentParams.from_pole(5.0, 0.0, E1)])
    model, _, trace = run_em(x, init, tol=1e-12)
    again, _, trace2 = run_em(x, model, tol=1e-12, max_iter=5)
    assert trace2.final_loglik - trace.final_loglik < 1e-6 * abs(trace.final_loglik)
    np.testing.assert_allclose(again.weights, model.weights, atol=1e-4)


def test_em_trace_dict():
    x, _ = two_groups(seed=7, n=40)
    init = MixtureModel.build([KentParams.from_pole(5.0, 0.0, E3)], uniform=True)
    _, _, trace = run_em(x, init, max_iter=3)
    d = trace.to_dict()
    assert d["iterations"] == trace.iterations <= 3
    assert len(d["loglik"]) == trace.iterations + 1
    assert d["final_loglik"] == d["loglik"][-1]


def test_em_rejects_bad_max_iter(model3):
    with pytest.raises(ValueError):
        run_em(sample_uniform_sphere(5, seed=0), model3, max_iter=0)


def test_degenerate_component_is_frozen_then_dropped():
    x, _ = two_groups(seed=8, n=100)
    # a spike on an empty patch of sphere attracts no points
    empty = KentParams.from_pole(400.0, 0.0, -E2)
    init = MixtureModel.build([KentParams.from_pole(10.0, 0.0, E3), KentParams.from_pole(10.0, 0.0, E1), empty],
                              uniform=True)
    assert degenerate_components(e_step(x, init), init) == [2]
    model, tau, trace = run_em(x, init)
    assert model.g_kent == 2
    kinds = [e["event"] for e in trace.events]
    assert kinds.count("frozen") == DROP_AFTER - 1
    assert kinds[-1] == "drop"
    assert trace.resets == [DROP_AFTER]
    assert tau.shape == (len(x), 3)
    assert trace.monotonicity_violation_max <= 1e-9


def test_harden_ties_go_low():
    tau = np.array([[0.5, 0.5], [0.2, 0.8], [1 / 3, 1 / 3]])
    np.testing.assert_array_equal(harden(tau), [0, 1, 0])


def test_em_error_is_runtime_error():
    assert issubclass(EMError, RuntimeError)


@settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10_000), st.integers(1, 3), st.booleans())
def test_em_monotone_random(seed, g, uniform):
    rng = np.random.default_rng(seed)
    poles = rng.standard_normal((3, 3))
    parts = [sample_kent(KentParams.from_pole(float(rng.uniform(3, 60)), 0.0, p), int(rng.integers(20, 80)), rng)
             for p in poles]
    x = np.vstack(parts + [sample_uniform_sphere(10, rng)])
    init_poles = rng.standard_normal((g, 3))
    init = MixtureModel.build([KentParams.from_pole(float(rng.uniform(1, 30)), 0.0, p) for p in init_poles],
                              uniform=uniform)
    _, tau, trace = run_em(x, init, max_iter=200)
    assert trace.monotonicity_violation_max <= 1e-9
    np.testing.assert_allclose(tau.sum(axis=1), 1.0, atol=1e-12)
