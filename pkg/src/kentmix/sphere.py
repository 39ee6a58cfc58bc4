"""Coordinates, rotations and projections on the unit sphere S^2.

Points are stored as numpy arrays with a trailing axis of length 3.  The
polar coordinates follow the convention used throughout the package::

    x1 = sin(psi) sin(chi),  x2 = sin(psi) cos(chi),  x3 = cos(psi)

so ``psi`` is the colatitude and ``chi`` the longitude measured from the
x2 axis towards the x1 axis.
"""

from __future__ import annotations

import numpy as np

UNIT_TOL = 1e-10
_POLE_EPS = 1e-12


def _as_vectors(v):
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {v.shape}")
    return v


def check_unit(v, tol=UNIT_TOL):
    """Raise ``ValueError`` unless every row of `v` has unit norm within `tol`."""
    v = _as_vectors(v)
    norms = np.linalg.norm(v, axis=-1)
    if not np.all(np.abs(norms - 1.0) <= tol):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ValueError(f"input is not on the unit sphere (max |norm - 1| = {worst:.3g})")
    return v


def normalize(v):
    v = _as_vectors(v)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def angles_to_vector(psi, chi):
    """Map colatitude/longitude (radians) to unit vectors.

    Broadcasts over array inputs; the result has shape ``broadcast + (3,)``.
    """
    psi = np.asarray(psi, dtype=float)
    chi = np.asarray(chi, dtype=float)
    s = np.sin(psi)
    return np.stack([s * np.sin(chi), s * np.cos(chi), np.cos(psi) * np.ones_like(chi)], axis=-1)


def vector_to_angles(v):
    """Inverse of :func:`angles_to_vector`.

    Returns ``(psi, chi)`` with ``psi`` in [0, pi] and ``chi`` in [0, 2 pi).
    The longitude is set to 0 at the poles.
    """
    v = check_unit(v)
    x1, x2, x3 = v[..., 0], v[..., 1], v[..., 2]
    rho = np.hypot(x1, x2)
    psi = np.arctan2(rho, x3)
    chi = np.mod(np.arctan2(x1, x2), 2.0 * np.pi)
    chi = np.where(rho < _POLE_EPS, 0.0, chi)
    # mod can return exactly 2 pi for tiny negative angles
    chi = np.where(chi >= 2.0 * np.pi, 0.0, chi)
    return psi, chi


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _drz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def _dry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def euler_to_matrix(phi, eta, omega):
    """Orientation matrix ``R_phi @ R_eta @ R_omega``.

    ``R_phi`` and ``R_omega`` rotate about x3, ``R_eta`` about x2.  The third
    column (the pole) is ``(sin eta cos phi, sin eta sin phi, cos eta)``.
    """
    return _rz(phi) @ _ry(eta) @ _rz(omega)


def euler_derivatives(phi, eta, omega):
    """Partial derivatives of :func:`euler_to_matrix` w.r.t. phi, eta and omega."""
    rp, re, ro = _rz(phi), _ry(eta), _rz(omega)
    return (
        _drz(phi) @ re @ ro,
        rp @ _dry(eta) @ ro,
        rp @ re @ _drz(omega),
    )


def matrix_to_euler(gamma):
    """Recover ``(phi, eta, omega)`` from a rotation matrix.

    At the gimbal points (pole along +-x3) ``phi`` is set to 0 and the whole
    rotation about x3 is carried by ``omega``.
    """
    g = np.asarray(gamma, dtype=float)
    eta = float(np.arccos(np.clip(g[2, 2], -1.0, 1.0)))
    if np.hypot(g[0, 2], g[1, 2]) < _POLE_EPS:
        phi = 0.0
        if g[2, 2] > 0:
            omega = float(np.arctan2(g[1, 0], g[0, 0]))
        else:
            omega = float(np.arctan2(g[1, 0], -g[0, 0]))
    else:
        phi = float(np.arctan2(g[1, 2], g[0, 2]))
        omega = float(np.arctan2(g[2, 1], -g[2, 0]))
    return phi, eta, omega


def check_rotation(gamma, tol=1e-10):
    g = np.asarray(gamma, dtype=float)
    if g.shape != (3, 3):
        raise ValueError(f"orientation must be 3x3, got {g.shape}")
    if not np.allclose(g.T @ g, np.eye(3), atol=tol, rtol=0):
        raise ValueError("orientation matrix is not orthogonal")
    if abs(np.linalg.det(g) - 1.0) > tol:
        raise ValueError("orientation matrix must have determinant +1")
    return g


def orientation_from_pole(pole, major=None):
    """Right-handed orientation matrix with third column `pole`.

    `major` gives the preferred direction of the first column; it is
    projected onto the tangent plane at the pole.  Without it a fixed
    reference axis is used so the result is deterministic.
    """
    g3 = normalize(pole)
    if major is None:
        ref = np.array([0.0, 0.0, 1.0]) if abs(g3[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    else:
        ref = np.asarray(major, dtype=float)
    g1 = ref - (ref @ g3) * g3
    n1 = np.linalg.norm(g1)
    if n1 < 1e-8:
        raise ValueError("major axis is parallel to the pole")
    g1 = g1 / n1
    g2 = np.cross(g3, g1)
    return np.column_stack([g1, g2, g3])


def schmidt_project(v):
    """Equal-area (Schmidt net) projection onto the disc of radius 2.

    ``(y1, y2) = 2 sin(psi / 2) (cos chi, sin chi)``; returns an array with a
    trailing axis of length 2.
    """
    psi, chi = vector_to_angles(v)
    r = 2.0 * np.sin(psi / 2.0)
    return np.stack([r * np.cos(chi), r * np.sin(chi)], axis=-1)


def angular_separation(l1, l2):
    """Great-circle angle between unit vectors in radians, broadcasting over rows."""
    l1 = _as_vectors(l1)
    l2 = _as_vectors(l2)
    dot = np.sum(l1 * l2, axis=-1)
    # atan2 keeps full precision for nearly parallel or antipodal pairs
    cross = np.linalg.norm(np.cross(l1, l2), axis=-1)
    out = np.arctan2(cross, dot)
    return float(out) if np.ndim(out) == 0 else out
