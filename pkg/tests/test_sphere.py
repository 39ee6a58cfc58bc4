import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kentmix.sphere import (
    angles_to_vector,
    angular_separation,
    check_rotation,
    euler_derivatives,
    euler_to_matrix,
    matrix_to_euler,
    orientation_from_pole,
    schmidt_project,
    vector_to_angles,
)

angle = st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False)


def unit_vectors(n, seed=0):
    v = np.random.default_rng(seed).standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_angles_to_vector_axes():
    np.testing.assert_allclose(angles_to_vector(0.0, 0.0), [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(angles_to_vector(np.pi / 2, 0.0), [0, 1, 0], atol=1e-15)


def test_angles_to_vector_substitution():
    # sin(pi/3) sin(pi/4), sin(pi/3) cos(pi/4), cos(pi/3)
    expected = [0.6123724356957945, 0.6123724356957946, 0.5]
    np.testing.assert_allclose(angles_to_vector(np.pi / 3, np.pi / 4), expected, rtol=1e-14)


def test_vector_to_angles_conventions():
    psi, chi = vector_to_angles(np.array([0.0, 0.0, 1.0]))
    assert psi == 0.0 and chi == 0.0
    psi, chi = vector_to_angles(np.array([0.0, -1.0, 0.0]))
    assert psi == pytest.approx(np.pi / 2) and chi == pytest.approx(np.pi)
    psi, chi = vector_to_angles(np.array([0.0, 0.0, -1.0]))
    assert psi == pytest.approx(np.pi) and chi == 0.0


def test_vector_to_angles_rejects_non_unit():
    with pytest.raises(ValueError):
        vector_to_angles(np.array([1.0, 1.0, 0.0]))


def test_angle_round_trip_1000():
    v = unit_vectors(1000)
    psi, chi = vector_to_angles(v)
    assert np.all((psi >= 0) & (psi <= np.pi))
    assert np.all((chi >= 0) & (chi < 2 * np.pi))
    np.testing.assert_allclose(angles_to_vector(psi, chi), v, atol=1e-10)


def test_euler_simple_cases():
    np.testing.assert_allclose(euler_to_matrix(0, 0, 0), np.eye(3), atol=1e-15)
    rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(euler_to_matrix(np.pi / 2, 0, 0), rz, atol=1e-15)


def test_euler_rotation_property_10k():
    rng = np.random.default_rng(1)
    for phi, eta, omega in rng.uniform(-np.pi, np.pi, (10_000, 3)):
        g = euler_to_matrix(phi, eta, omega)
        assert np.abs(g.T @ g - np.eye(3)).max() < 1e-12
        assert abs(np.linalg.det(g) - 1) < 1e-12


@given(angle, angle, angle)
def test_third_column_is_pole_formula(phi, eta, omega):
    # the pole of R_z(phi) R_y(eta) R_z(omega), written out directly
    g = euler_to_matrix(phi, eta, omega)
    pole = [np.sin(eta) * np.cos(phi), np.sin(eta) * np.sin(phi), np.cos(eta)]
    np.testing.assert_allclose(g[:, 2], pole, atol=1e-12)


def test_derivative_at_zero():
    d_phi, _, _ = euler_derivatives(0, 0, 0)
    expected = np.zeros((3, 3))
    expected[0, 1], expected[1, 0] = -1.0, 1.0
    np.testing.assert_allclose(d_phi, expected, atol=1e-15)


@pytest.mark.parametrize("point", [(0.3, 1.1, -0.7), (2.0, 0.4, 0.0), (-1.2, 2.5, 3.0)])
def test_derivatives_match_finite_differences(point):
    h = 1e-6
    analytic = euler_derivatives(*point)
    for k in range(3):
        up, dn = list(point), list(point)
        up[k] += h
        dn[k] -= h
        fd = (euler_to_matrix(*up) - euler_to_matrix(*dn)) / (2 * h)
        np.testing.assert_allclose(analytic[k], fd, atol=1e-8)


@given(angle, st.floats(0.01, np.pi - 0.01), angle)
def test_matrix_to_euler_round_trip(phi, eta, omega):
    g = euler_to_matrix(phi, eta, omega)
    np.testing.assert_allclose(euler_to_matrix(*matrix_to_euler(g)), g, atol=1e-10)


@pytest.mark.parametrize("eta", [0.0, np.pi])
def test_matrix_to_euler_gimbal(eta):
    g = euler_to_matrix(0.4, eta, 1.3)
    np.testing.assert_allclose(euler_to_matrix(*matrix_to_euler(g)), g, atol=1e-12)


def test_orientation_from_pole_is_rotation():
    for p in unit_vectors(50, seed=3):
        g = orientation_from_pole(p)
        check_rotation(g)
        np.testing.assert_allclose(g[:, 2], p, atol=1e-14)


def test_schmidt_examples():
    np.testing.assert_allclose(schmidt_project(np.array([0.0, 0.0, 1.0])), [0, 0], atol=1e-15)
    assert np.linalg.norm(schmidt_project(np.array([0.0, 0.0, -1.0]))) == pytest.approx(2.0)
    np.testing.assert_allclose(schmidt_project(angles_to_vector(np.pi / 2, 0.0)), [np.sqrt(2), 0], atol=1e-14)


def test_schmidt_equal_area():
    v = unit_vectors(200_000, seed=5)
    r = np.linalg.norm(schmidt_project(v), axis=1)
    assert r.max() <= 2 + 1e-12
    for radius in (0.5, 1.0, 1.5):
        frac = np.mean(r < radius)
        se = np.sqrt(frac * (1 - frac) / len(v))
        assert abs(frac - radius**2 / 4) < 4 * se


def test_angular_separation_examples():
    e1, e2 = np.eye(3)[:2]
    assert angular_separation(e1, e1) == 0.0
    assert angular_separation(e1, -e1) == pytest.approx(np.pi)
    assert angular_separation(e1, e2) == pytest.approx(np.pi / 2)
    # rounding can push the dot product past 1
    v = np.array([1.0, 1e-17, 0.0])
    assert angular_separation(v, v) == 0.0


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1))
def test_angular_separation_symmetric(seed):
    a, b = unit_vectors(2, seed)
    assert angular_separation(a, b) == angular_separation(b, a)
    assert 0.0 <= angular_separation(a, b) <= np.pi
