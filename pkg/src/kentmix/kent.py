"""Kent (FB5) distribution: normalizing constant, density and sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .sphere import check_rotation, euler_to_matrix, matrix_to_euler, orientation_from_pole

LOG_4PI = math.log(4.0 * math.pi)
SERIES_TOL = 1e-14
MAX_TERMS = 64
KAPPA_UNIFORM = 1e-8


class NormConstError(ArithmeticError):
    """The series for c(kappa, beta) did not reach tolerance within the term cap."""

    def __init__(self, kappa, beta, terms, last_term):
        self.kappa = kappa
        self.beta = beta
        self.terms = terms
        self.last_term = last_term
        super().__init__(
            f"c({kappa:g}, {beta:g}) series not converged after {terms} terms "
            f"(last relative term {last_term:.3g})"
        )


@dataclass(frozen=True)
class KentParams:
    """Parameters of one Kent component.

    ``gamma`` holds the major axis, minor axis and pole as columns.
    """

    kappa: float
    beta: float
    gamma: np.ndarray = field(repr=False)

    def __post_init__(self):
        kappa, beta = float(self.kappa), float(self.beta)
        if not (kappa >= 0 and beta >= 0):
            raise ValueError(f"need kappa >= 0 and beta >= 0, got ({kappa}, {beta})")
        if beta > 0 and not 2.0 * beta < kappa:
            raise ValueError(f"need 2*beta < kappa, got kappa={kappa}, beta={beta}")
        g = check_rotation(self.gamma)
        g = np.array(g, dtype=float)
        g.setflags(write=False)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", g)

    @classmethod
    def from_euler(cls, kappa, beta, phi, eta, omega):
        return cls(kappa, beta, euler_to_matrix(phi, eta, omega))

    @classmethod
    def from_pole(cls, kappa, beta, pole, major=None):
        return cls(kappa, beta, orientation_from_pole(pole, major))

    @property
    def pole(self):
        return self.gamma[:, 2]

    @property
    def major_axis(self):
        return self.gamma[:, 0]

    @property
    def minor_axis(self):
        return self.gamma[:, 1]

    @property
    def euler(self):
        return matrix_to_euler(self.gamma)

    def __eq__(self, other):
        if not isinstance(other, KentParams):
            return NotImplemented
        return (
            self.kappa == other.kappa
            and self.beta == other.beta
            and np.array_equal(self.gamma, other.gamma)
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# Modified Bessel functions of half-integer order


def _log_sinh(x):
    if x < 20.0:
        return math.log(math.sinh(x))
    return x - math.log(2.0) + math.log1p(-math.exp(-2.0 * x))


def _ratio_start(nu, x):
    # midpoint of the Amos bounds on I_{nu+1}(x) / I_nu(x)
    lo = x / (nu + 1.0 + math.sqrt((nu + 1.0) ** 2 + x * x))
    hi = x / (nu + 0.5 + math.sqrt((nu + 1.5) ** 2 + x * x))
    return 0.5 * (lo + hi)


def log_bessel_i_half(x, kmax):
    """``log I_{k + 1/2}(x)`` for ``k = 0 .. kmax``.

    The ratios ``r_nu = I_{nu+1} / I_nu`` are obtained by backward
    recursion ``r_{nu-1} = 1 / (2 nu / x + r_nu)`` and chained onto the
    closed form ``I_{1/2}(x) = sqrt(2 / (pi x)) sinh(x)``.
    """
    if not x > 0:
        raise ValueError(f"Bessel argument must be positive, got {x}")
    if kmax < 0:
        raise ValueError("kmax must be >= 0")
    start = kmax + 30 + int(4.0 * math.sqrt(x))
    r = _ratio_start(start + 0.5, x)
    ratios = np.empty(kmax)
    for k in range(start - 1, -1, -1):
        # r currently holds r_{k + 3/2}; step down to r_{k + 1/2}
        r = 1.0 / ((2.0 * k + 3.0) / x + r)
        if k < kmax:
            ratios[k] = r
    out = np.empty(kmax + 1)
    out[0] = 0.5 * math.log(2.0 / (math.pi * x)) + _log_sinh(x)
    out[1:] = out[0] + np.cumsum(np.log(ratios))
    return out


def bessel_i_half_orders(kappa, max_j):
    """Values ``I_{2j + 1/2}(kappa)`` for ``j = 0 .. max_j``.

    Overflows to ``inf`` past kappa ~ 700; use :func:`log_bessel_i_half`
    for the log-scaled values.
    """
    logs = log_bessel_i_half(kappa, 2 * max_j)
    return np.exp(np.array(logs[::2]))


# ---------------------------------------------------------------------------
# Normalizing constant


@dataclass(frozen=True)
class NormConstResult:
    log_value: float
    dlog_dkappa: float
    dlog_dbeta: float
    terms_used: int

    @property
    def value(self):
        return math.exp(self.log_value) if self.log_value < 709.0 else math.inf

    @property
    def d_dkappa(self):
        return self.value * self.dlog_dkappa

    @property
    def d_dbeta(self):
        return self.value * self.dlog_dbeta


def _lgamma_ratios(n):
    j = np.arange(n)
    return gammaln(j + 0.5) - gammaln(j + 1.0)


_LGAMMA_RATIO = _lgamma_ratios(MAX_TERMS)


def _check_domain(kappa, beta):
    if not (kappa >= 0 and beta >= 0):
        raise ValueError(f"need kappa >= 0 and beta >= 0, got ({kappa}, {beta})")
    if beta > 0 and not 2.0 * beta < kappa:
        raise ValueError(f"need 2*beta < kappa, got kappa={kappa}, beta={beta}")


def norm_const(kappa, beta, tol=SERIES_TOL, max_terms=MAX_TERMS):
    """Normalizing constant c(kappa, beta) and its first derivatives.

    The series

        c = 2 pi sum_j G(j+1/2)/G(j+1) beta^{2j} (kappa/2)^{-2j-1/2} I_{2j+1/2}(kappa)

    is summed in log-scaled form until a term's relative contribution drops
    below `tol`.  The kappa-derivative uses
    ``d/dk [(k/2)^{-nu} I_nu(k)] = (k/2)^{-nu} I_{nu+1}(k)`` term by term.
    """
    kappa = float(kappa)
    beta = float(beta)
    _check_domain(kappa, beta)
    if kappa < KAPPA_UNIFORM:
        if beta > 0:
            raise ValueError("beta > 0 requires kappa above the uniform limit")
        # c(k, 0) = 4 pi sinh(k)/k = 4 pi (1 + k^2/6 + ...)
        return NormConstResult(LOG_4PI, kappa / 3.0, 0.0, 1)

    if beta == 0.0:
        logi = log_bessel_i_half(kappa, 1)
        log_t0 = math.log(2.0 * math.pi) + math.lgamma(0.5) - 0.5 * math.log(kappa / 2.0)
        return NormConstResult(
            log_value=log_t0 + logi[0],
            dlog_dkappa=math.exp(logi[1] - logi[0]),
            dlog_dbeta=0.0,
            terms_used=1,
        )

    log_ratio = 2.0 * math.log(2.0 * beta / kappa)
    full = 2 * max_terms - 1
    for kmax in sorted({min(full, 23), full}):
        logi = log_bessel_i_half(kappa, kmax)
        nterms = (kmax + 1) // 2
        j = np.arange(nterms)
        # log of G(j+1/2)/G(j+1) (2 beta / kappa)^{2j}, common to all three series
        lw = (_LGAMMA_RATIO[:nterms] if nterms <= MAX_TERMS else _lgamma_ratios(nterms)) + j * log_ratio
        lt = lw + logi[0::2]
        base = lt[0]
        t = np.exp(lt - base)
        u = np.exp(lw + logi[1::2] - base)
        v = np.zeros(nterms)
        v[1:] = np.exp(np.log(2.0 * j[1:]) - math.log(beta) + lt[1:] - base)
        s_c, s_k, s_b = np.cumsum(t), np.cumsum(u), np.cumsum(v)
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.maximum(np.maximum(t / s_c, u / s_k), np.where(s_b > 0, v / s_b, 0.0))
        done = np.flatnonzero(rel[1:] < tol)
        if done.size:
            n = int(done[0]) + 2
            break
    else:
        raise NormConstError(kappa, beta, nterms, float(rel[-1]))
    log_scale = math.log(2.0 * math.pi) - 0.5 * math.log(kappa / 2.0) + base
    return NormConstResult(
        log_value=log_scale + math.log(s_c[n - 1]),
        dlog_dkappa=float(s_k[n - 1] / s_c[n - 1]),
        dlog_dbeta=float(s_b[n - 1] / s_c[n - 1]),
        terms_used=n,
    )


def log_norm_const(kappa, beta, **kwargs):
    return norm_const(kappa, beta, **kwargs).log_value


# ---------------------------------------------------------------------------
# Density


def log_density(x, params, max_terms=MAX_TERMS):
    """Log Kent density at unit vector(s) `x` (trailing axis of length 3)."""
    x = np.asarray(x, dtype=float)
    if params.kappa < KAPPA_UNIFORM and params.beta == 0.0:
        return np.full(x.shape[:-1], -LOG_4PI) if x.ndim > 1 else -LOG_4PI
    y = x @ params.gamma
    expo = params.kappa * y[..., 2] + params.beta * (y[..., 0] ** 2 - y[..., 1] ** 2)
    return expo - norm_const(params.kappa, params.beta, max_terms=max_terms).log_value


def bvn_approx_variances(kappa, beta):
    """Variances of ``sqrt(kappa) * (Gamma^T x)_{1,2}`` under the high-concentration limit."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    d = beta / kappa
    if not 0.0 <= d < 0.5:
        raise ValueError(f"need 0 <= beta/kappa < 1/2, got {d}")
    return 1.0 / (1.0 - 2.0 * d), 1.0 / (1.0 + 2.0 * d)


def condition_number(kappa, beta):
    """Anisotropy ``(kappa + 2 beta) / (kappa - 2 beta)`` of the normal approximation."""
    if not (beta >= 0 and 2.0 * beta < kappa):
        raise ValueError(f"need 0 <= 2*beta < kappa, got kappa={kappa}, beta={beta}")
    return (kappa + 2.0 * beta) / (kappa - 2.0 * beta)


# ---------------------------------------------------------------------------
# Sampling


def make_rng(seed=None, stream=0):
    """Generator for ``(seed, stream)``; independent streams never overlap."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def sample_uniform_sphere(n, seed=None):
    rng = make_rng(seed)
    if n < 0:
        raise ValueError("n must be non-negative")
    z = rng.standard_normal((n, 3))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _fisher_canonical(kappa, n, rng):
    """Fisher(kappa) draws about +x3 by inverting the CDF of x3."""
    u = rng.random(n)
    if kappa < KAPPA_UNIFORM:
        w = 1.0 - 2.0 * u
    else:
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    w = np.clip(w, -1.0, 1.0)
    theta = 2.0 * np.pi * rng.random(n)
    s = np.sqrt(1.0 - w * w)
    return np.column_stack([s * np.cos(theta), s * np.sin(theta), w])


def _kent_canonical_fisher(kappa, beta, n, rng):
    out = np.empty((0, 3))
    while len(out) < n:
        m = max(16, int(1.2 * (n - len(out)) * math.exp(2.0 * beta)))
        y = _fisher_canonical(kappa, m, rng)
        log_acc = beta * (y[:, 0] ** 2 - y[:, 1] ** 2) - beta
        keep = np.log(rng.random(m)) < log_acc
        out = np.vstack([out, y[keep]])
    return out[:n]


def _kent_canonical_tangent(kappa, beta, n, rng):
    # In equal-area coordinates z (|z| <= 2) the log density is
    #   -(k-2b)/2 z1^2 - b/4 z1^4 - (k+2b)/2 z2^2 + b/4 z2^4
    # bounded by independent Gaussians in z1 and z2.
    a = kappa - 2.0 * beta
    c = (-a + math.sqrt(a * a + 4.0 * beta)) / (2.0 * beta)
    sd1 = 1.0 / math.sqrt(a + beta * c)
    sd2 = 1.0 / math.sqrt(kappa)
    out = np.empty((0, 3))
    while len(out) < n:
        m = max(16, 2 * (n - len(out)))
        z1 = sd1 * rng.standard_normal(m)
        z2 = sd2 * rng.standard_normal(m)
        u = rng.random(m)
        r2 = z1 * z1 + z2 * z2
        inside = r2 <= 4.0
        q1, q2 = z1 * z1, z2 * z2
        log_acc = -0.25 * beta * (q1 - c) ** 2 + 0.25 * beta * q2 * (q2 - 4.0)
        keep = inside & (np.log(u) < log_acc)
        z1, z2, r2 = z1[keep], z2[keep], r2[keep]
        scale = np.sqrt(1.0 - r2 / 4.0)
        y = np.column_stack([z1 * scale, z2 * scale, 1.0 - r2 / 2.0])
        out = np.vstack([out, y])
    return out[:n]


def sample_kent(params, n, seed=None):
    """Draw `n` i.i.d. unit vectors from ``Kent(kappa, beta, Gamma)`` by rejection."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = make_rng(seed)
    if n == 0:
        return np.empty((0, 3))
    if params.beta <= 1.0:
        y = _kent_canonical_fisher(params.kappa, params.beta, n, rng)
    else:
        y = _kent_canonical_tangent(params.kappa, params.beta, n, rng)
    x = y @ params.gamma.T
    return x / np.linalg.norm(x, axis=1, keepdims=True)
