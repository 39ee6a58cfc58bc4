"""Exact maximum-likelihood fitting of a single Kent component."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .kent import MAX_TERMS, KentParams, NormConstError, norm_const
from .sphere import _ry, euler_derivatives, euler_to_matrix, matrix_to_euler, orientation_from_pole

log = logging.getLogger(__name__)

ECC_MAX = 1.0 - 1e-6
KAPPA_GRID = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0)
ECC_GRID = (0.0, 0.2, 0.4, 0.6, 0.8)
ECC_FLOOR = 0.01
# keeps exp(a) finite and the Bessel recursion short
LOG_KAPPA_MAX = math.log(1e6)
LOG_KAPPA_MIN = math.log(1e-6)


class DegenerateStatsError(ValueError):
    """The weighted mean vector vanishes, so no pole is defined."""


@dataclass(frozen=True)
class SufficientStats:
    """Weighted mean vector and second-moment matrix of unit vectors."""

    n_eff: float
    mean: np.ndarray
    second_moment: np.ndarray


def compute_stats(data, weights=None):
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[1] != 3 or len(x) == 0:
        raise ValueError("data must be a non-empty (n, 3) array")
    if weights is None:
        w = np.ones(len(x))
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(x),):
            raise ValueError("weights must have one entry per observation")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
    total = float(w.sum())
    if not total > 0:
        raise ValueError("total weight must be positive")
    mean = (w @ x) / total
    s = (x.T * w) @ x / total
    s = 0.5 * (s + s.T)
    return SufficientStats(total, mean, s)


def moment_orientation(stats):
    """Orientation with pole along the mean and axes diagonalising S.

    The first column carries the larger of the two tangent-plane second
    moments.
    """
    r = np.linalg.norm(stats.mean)
    if r < 1e-10:
        raise DegenerateStatsError("mean resultant is zero; pole undefined")
    return _orient_about(stats.mean / r, stats.second_moment)


def _orient_about(pole, s):
    h = orientation_from_pole(pole)
    b = h[:, :2].T @ s @ h[:, :2]
    vals, vecs = np.linalg.eigh(b)
    g1 = h[:, :2] @ vecs[:, 1]
    g1 /= np.linalg.norm(g1)
    g3 = h[:, 2]
    g2 = np.cross(g3, g1)
    return np.column_stack([g1, g2, g3])


def _initial_orientation(stats):
    try:
        return moment_orientation(stats)
    except DegenerateStatsError:
        vals, vecs = np.linalg.eigh(stats.second_moment)
        return _orient_about(vecs[:, -1], stats.second_moment)


def _moments(gamma, stats):
    g1, g2, g3 = gamma[:, 0], gamma[:, 1], gamma[:, 2]
    s = stats.second_moment
    return g3 @ stats.mean, g1 @ s @ g1 - g2 @ s @ g2


def kent_loglik(params, stats, max_terms=MAX_TERMS):
    """Log-likelihood of `params` given sufficient statistics."""
    m3, q = _moments(params.gamma, stats)
    logc = norm_const(params.kappa, params.beta, max_terms=max_terms).log_value
    return stats.n_eff * (params.kappa * m3 + params.beta * q - logc)


def loglik_and_grad(psi, stats, max_terms=MAX_TERMS):
    """Log-likelihood and its gradient in ``psi = (kappa, beta, eta, phi, omega)``."""
    kappa, beta, eta, phi, omega = (float(p) for p in psi)
    gamma = euler_to_matrix(phi, eta, omega)
    return _loglik_grad_gamma(kappa, beta, gamma, euler_derivatives(phi, eta, omega), stats, max_terms)


def _loglik_grad_gamma(kappa, beta, gamma, dgammas, stats, max_terms):
    n = stats.n_eff
    s, xbar = stats.second_moment, stats.mean
    nc = norm_const(kappa, beta, max_terms=max_terms)
    g1, g2, g3 = gamma[:, 0], gamma[:, 1], gamma[:, 2]
    s1, s2 = s @ g1, s @ g2
    m3 = g3 @ xbar
    q = g1 @ s1 - g2 @ s2
    ll = n * (kappa * m3 + beta * q - nc.log_value)
    d_kappa = n * (m3 - nc.dlog_dkappa)
    d_beta = n * (q - nc.dlog_dbeta)
    d_ang = [
        n * (kappa * (dg[:, 2] @ xbar) + 2.0 * beta * (dg[:, 0] @ s1 - dg[:, 1] @ s2))
        for dg in dgammas
    ]
    # order (kappa, beta, eta, phi, omega); dgammas come as (phi, eta, omega)
    return ll, np.array([d_kappa, d_beta, d_ang[1], d_ang[0], d_ang[2]])


@dataclass(frozen=True)
class FitResult:
    params: KentParams
    euler: tuple
    loglik: float
    iterations: int
    converged: bool
    grad_norm: float
    # optimizer state in the local coordinates, reusable as a warm start
    inv_hessian: np.ndarray = field(default=None, repr=False, compare=False)


class _Objective:
    """Negative mean log-likelihood in unconstrained coordinates.

    Coordinates are ``(a, b, phi, eta, omega)`` with ``kappa = exp(a)``,
    ``2 beta / kappa = ECC_MAX * sigmoid(b)`` and orientation
    ``base @ R(phi, eta, omega)``; `base` is chosen so the starting point
    sits at ``eta = pi/2``, away from the gimbal singularities.
    """

    def __init__(self, stats, base, max_terms):
        self.stats = stats
        self.base = base
        self.max_terms = max_terms

    def params(self, theta):
        a, b, phi, eta, omega = theta
        kappa = math.exp(a)
        sig = _sigmoid(b)
        beta = 0.5 * ECC_MAX * sig * kappa
        gamma = self.base @ euler_to_matrix(phi, eta, omega)
        return kappa, beta, gamma, sig

    def __call__(self, theta):
        if not LOG_KAPPA_MIN <= theta[0] <= LOG_KAPPA_MAX:
            return math.inf, None
        kappa, beta, gamma, sig = self.params(theta)
        dgs = [self.base @ d for d in euler_derivatives(*theta[2:])]
        try:
            ll, g = _loglik_grad_gamma(kappa, beta, gamma, dgs, self.stats, self.max_terms)
        except (NormConstError, ValueError):
            return math.inf, None
        n = self.stats.n_eff
        d_a = kappa * g[0] + beta * g[1]
        d_b = g[1] * beta * (1.0 - sig)
        grad = np.array([d_a, d_b, g[3], g[2], g[4]]) / n
        return -ll / n, -grad


def _sigmoid(b):
    if b >= 0:
        return 1.0 / (1.0 + math.exp(-b))
    e = math.exp(b)
    return e / (1.0 + e)


def _logit(p):
    return math.log(p) - math.log1p(-p)


def _bfgs(fun, x0, gtol, ftol, max_iter, h0=None):
    """Minimise with BFGS and backtracking; never returns a worse point than `x0`.

    Infinite objective values are treated as infeasible and shrink the step;
    three consecutive negligible steps that run into the infeasible region
    end the search unconverged.  `h0` is an optional starting inverse Hessian.  Returns
    ``(x, f, g, iterations, converged, inverse_hessian)``.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    if not math.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    scaled = h0 is not None
    h = np.eye(len(x)) if h0 is None else np.array(h0, dtype=float)
    it = 0
    stalled = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) < gtol:
            return x, f, g, it - 1, True, h
        p = -h @ g
        slope = p @ g
        if slope >= 0:
            h = np.eye(len(x))
            p = -g
            slope = p @ g
        step = 1.0
        accepted = walled = False
        for _ in range(60):
            xn = x + step * p
            fn, gn = fun(xn)
            if math.isfinite(fn) and fn <= f + 1e-4 * step * slope:
                accepted = True
                break
            walled = walled or not math.isfinite(fn)
            step *= 0.5
        if not accepted:
            return x, f, g, it, np.linalg.norm(g) < gtol, h
        s = xn - x
        y = gn - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                h = np.eye(len(x)) * (sy / (y @ y))
                scaled = True
            rho = 1.0 / sy
            v = np.eye(len(x)) - rho * np.outer(s, y)
            h = v @ h @ v.T + rho * np.outer(s, s)
        df = f - fn
        x, f, g = xn, fn, gn
        small = df <= ftol * max(abs(f), 1.0)
        if small and np.linalg.norm(g) < gtol:
            return x, f, g, it, True, h
        stalled = stalled + 1 if small and walled else 0
        if stalled >= 3:
            return x, f, g, it, False, h
    return x, f, g, it, np.linalg.norm(g) < gtol, h


def _grid_init(stats, gamma, max_terms):
    m3, q = _moments(gamma, stats)

    def mean_ll(kappa, beta):
        try:
            return kappa * m3 + beta * q - norm_const(kappa, beta, max_terms=max_terms).log_value
        except NormConstError:
            return -math.inf

    kappa = max(KAPPA_GRID, key=lambda k: mean_ll(k, 0.0))
    ecc = max(ECC_GRID, key=lambda e: mean_ll(kappa, 0.5 * e * kappa))
    return kappa, 0.5 * ecc * kappa


def fit_exact_mle(stats, init=None, tol=1e-10, gtol=1e-6, max_iter=500, max_terms=MAX_TERMS,
                  inv_hessian=None):
    """Maximise the exact Kent log-likelihood for the given statistics.

    Without `init`, the orientation comes from :func:`moment_orientation`
    and ``(kappa, beta)`` from a coarse grid search.  The returned
    log-likelihood is never below the one at the starting point.
    ``gtol`` applies to the gradient per unit of effective sample size.
    """
    if init is None:
        gamma0 = _initial_orientation(stats)
        kappa0, beta0 = _grid_init(stats, gamma0, max_terms)
    else:
        gamma0, kappa0, beta0 = init.gamma, init.kappa, init.beta
    kappa0 = min(max(kappa0, 1e-6), math.exp(LOG_KAPPA_MAX))
    if 2.0 * beta0 / kappa0 > ECC_MAX:
        beta0 = 0.5 * ECC_MAX * kappa0
    start = KentParams(kappa0, beta0, gamma0)
    # a saturated sigmoid would pin beta at its start, so the optimizer
    # begins slightly inside; the result is still compared with `start`
    ecc0 = min(max(2.0 * beta0 / kappa0 / ECC_MAX, ECC_FLOOR), 1.0 - 1e-9)
    ll0 = kent_loglik(start, stats, max_terms=max_terms)

    base = gamma0 @ _ry(math.pi / 2).T
    obj = _Objective(stats, base, max_terms)
    theta0 = np.array([math.log(kappa0), _logit(ecc0), 0.0, math.pi / 2, 0.0])
    try:
        theta, f, g, iters, converged, h = _bfgs(obj, theta0, gtol, tol, max_iter, inv_hessian)
    except ValueError:
        # the start sits on the edge of the region where the series converges
        log.debug("Kent fit could not move from the starting point")
        return FitResult(start, matrix_to_euler(start.gamma), ll0, 0, False, math.inf, None)

    kappa, beta, gamma, _ = obj.params(theta)
    gamma = _reorthonormalize(gamma)
    best = KentParams(kappa, beta, gamma)
    best_ll = kent_loglik(best, stats, max_terms=max_terms)
    if not best_ll >= ll0:
        best, best_ll = start, ll0

    if best.beta > 0 and best.beta < 0.5e-6 * best.kappa:
        # beta at the boundary: try the exact Fisher solution with canonical omega
        phi, eta, _ = matrix_to_euler(best.gamma)
        snapped = KentParams(best.kappa, 0.0, euler_to_matrix(phi, eta, 0.0))
        snapped_ll = kent_loglik(snapped, stats, max_terms=max_terms)
        if snapped_ll >= best_ll:
            best, best_ll = snapped, snapped_ll

    if not converged:
        log.debug("Kent fit stopped after %d iterations (grad %.3g)", iters, np.linalg.norm(g))
    euler = matrix_to_euler(best.gamma)
    if best.beta == 0.0:
        euler = (euler[0], euler[1], 0.0)
    return FitResult(best, euler, best_ll, iters, bool(converged), float(np.linalg.norm(g)), h)


def _reorthonormalize(gamma):
    u, _, vt = np.linalg.svd(gamma)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


def fit_kent(data, weights=None, **kwargs):
    """Convenience wrapper: statistics plus :func:`fit_exact_mle`."""
    return fit_exact_mle(compute_stats(data, weights), **kwargs)
