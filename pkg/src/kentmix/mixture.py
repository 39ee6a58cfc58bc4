"""Mixtures of Kent components with an optional uniform component, fitted by EM."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .fit import DegenerateStatsError, compute_stats, fit_exact_mle
from .kent import LOG_4PI, MAX_TERMS, KentParams, norm_const

log = logging.getLogger(__name__)

MIN_NEFF = 3.0
MIN_WEIGHT = 1e-4
DROP_AFTER = 10


class EMError(RuntimeError):
    pass


@dataclass(frozen=True)
class MixtureModel:
    """Weighted Kent components, optionally preceded by a uniform component.

    Column order everywhere (weights, responsibilities, labels) is the
    uniform component first when present, then the Kent components.
    """

    kents: tuple
    weights: np.ndarray
    uniform: bool = False

    def __post_init__(self):
        kents = tuple(self.kents)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if not all(isinstance(k, KentParams) for k in kents):
            raise TypeError("components must be KentParams")
        if len(w) != len(kents) + int(self.uniform):
            raise ValueError("need one weight per component")
        if len(w) == 0:
            raise ValueError("mixture has no components")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError(f"weights must be non-negative and sum to 1, got {w}")
        w = w / w.sum()
        w.setflags(write=False)
        object.__setattr__(self, "kents", kents)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "uniform", bool(self.uniform))

    @classmethod
    def build(cls, kents, weights=None, uniform=False, uniform_weight=0.05):
        """Mixture with given Kent weights, or equal ones; the uniform gets `uniform_weight`."""
        kents = tuple(kents)
        if weights is None:
            kw = np.full(len(kents), 1.0 / max(len(kents), 1))
            if uniform:
                if not kents:
                    return cls((), [1.0], True)
                kw = np.concatenate([[uniform_weight], (1.0 - uniform_weight) * kw])
            return cls(kents, kw, uniform)
        return cls(kents, weights, uniform)

    @property
    def g_kent(self):
        return len(self.kents)

    @property
    def n_components(self):
        return len(self.weights)

    @property
    def offset(self):
        return int(self.uniform)

    def kent_weights(self):
        return self.weights[self.offset:]

    def permuted(self, order):
        """Reorder the Kent components (the uniform stays first)."""
        order = list(order)
        kents = tuple(self.kents[i] for i in order)
        kw = self.kent_weights()[order]
        w = np.concatenate([self.weights[: self.offset], kw])
        return MixtureModel(kents, w, self.uniform)

    def __eq__(self, other):
        if not isinstance(other, MixtureModel):
            return NotImplemented
        return (
            self.uniform == other.uniform
            and self.kents == other.kents
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


def _as_data(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != 3:
        raise ValueError("data must have shape (n, 3)")
    return x


def component_log_densities(data, model, max_terms=MAX_TERMS):
    """``(n, G)`` matrix of ``log pi_i + log f_i(x_j)``."""
    x = _as_data(data)
    cols = []
    with np.errstate(divide="ignore"):
        logw = np.log(model.weights)
    if model.uniform:
        cols.append(np.full(len(x), -LOG_4PI))
    for k in model.kents:
        y = x @ k.gamma
        logc = norm_const(k.kappa, k.beta, max_terms=max_terms).log_value
        cols.append(k.kappa * y[:, 2] + k.beta * (y[:, 0] ** 2 - y[:, 1] ** 2) - logc)
    return np.column_stack(cols) + logw


def mixture_log_density(data, model, max_terms=MAX_TERMS):
    """Log mixture density at each row of `data` (log-sum-exp over components)."""
    out = logsumexp(component_log_densities(data, model, max_terms), axis=1)
    return out if np.ndim(data) > 1 else float(out[0])


def mixture_loglik(data, model, max_terms=MAX_TERMS):
    return float(np.sum(mixture_log_density(_as_data(data), model, max_terms)))


def _responsibilities(logp):
    lse = logsumexp(logp, axis=1, keepdims=True)
    tau = np.exp(logp - lse)
    tau /= tau.sum(axis=1, keepdims=True)
    return tau, float(lse.sum())


def e_step(data, model, max_terms=MAX_TERMS):
    """Posterior membership probabilities, rows summing to one."""
    tau, _ = _responsibilities(component_log_densities(data, model, max_terms))
    return tau


def degenerate_components(tau, model):
    """Indices of Kent components (0-based among Kents) too small to refit."""
    n = tau.shape[0]
    neff = tau[:, model.offset:].sum(axis=0)
    return [i for i in range(model.g_kent) if neff[i] < MIN_NEFF or neff[i] / n < MIN_WEIGHT]


def m_step(data, tau, model, frozen=(), max_terms=MAX_TERMS, fit_options=None, cache=None):
    """Weighted exact-MLE refit of every Kent component plus the proportion update.

    Components listed in `frozen` or found degenerate keep their parameters.
    Each refit is warm-started at the current parameters and never lowers
    that component's weighted log-likelihood.  `cache`, if given, is a dict
    keeping each component's optimizer curvature between calls.
    """
    x = _as_data(data)
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (len(x), model.n_components):
        raise ValueError("responsibilities do not match data and model")
    fit_options = dict(fit_options or {})
    skip = set(frozen) | set(degenerate_components(tau, model))
    kents = []
    for i, k in enumerate(model.kents):
        if i in skip:
            kents.append(k)
            continue
        w = tau[:, model.offset + i]
        try:
            stats = compute_stats(x, w)
            h0 = cache.get(i) if cache is not None else None
            res = fit_exact_mle(stats, init=k, max_terms=max_terms, inv_hessian=h0, **fit_options)
            if cache is not None:
                cache[i] = res.inv_hessian
            kents.append(res.params)
        except DegenerateStatsError:
            kents.append(k)
    weights = tau.sum(axis=0) / len(x)
    return MixtureModel(tuple(kents), weights / weights.sum(), model.uniform)


@dataclass
class EMTrace:
    loglik: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    monotonicity_violation_max: float = 0.0
    events: list = field(default_factory=list)
    # indices into `loglik` where the model structure changed (component dropped)
    resets: list = field(default_factory=list)

    @property
    def final_loglik(self):
        return self.loglik[-1]

    def to_dict(self):
        return {
            "loglik": [float(v) for v in self.loglik],
            "final_loglik": float(self.final_loglik),
            "iterations": self.iterations,
            "converged": self.converged,
            "monotonicity_violation_max": self.monotonicity_violation_max,
            "events": list(self.events),
        }


def _violation(trace):
    worst = 0.0
    for t in range(1, len(trace.loglik)):
        if t in trace.resets:
            continue
        prev, cur = trace.loglik[t - 1], trace.loglik[t]
        drop = (prev - cur) / max(abs(prev), 1.0)
        worst = max(worst, drop)
    return worst


def _drop(model, i):
    kents = model.kents[:i] + model.kents[i + 1:]
    w = np.delete(model.weights, model.offset + i)
    if w.sum() <= 0:
        raise EMError("all components degenerate")
    return MixtureModel(kents, w / w.sum(), model.uniform)


def run_em(data, init, tol=1e-8, max_iter=1000, max_terms=MAX_TERMS, fit_options=None):
    """Alternate E and M steps from `init` until the relative log-likelihood change is below `tol`.

    Returns ``(model, responsibilities, trace)``.  Components that stay
    degenerate for ``DROP_AFTER`` consecutive iterations are removed; the
    log-likelihood drop caused by a removal is recorded as a reset, not as
    an EM step.
    """
    x = _as_data(data)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    model = init
    trace = EMTrace()
    tau, ll = _responsibilities(component_log_densities(x, model, max_terms))
    trace.loglik.append(ll)
    streak = {}
    cache = {}
    for it in range(1, max_iter + 1):
        bad = degenerate_components(tau, model)
        for i in list(streak):
            if i not in bad:
                del streak[i]
        for i in bad:
            streak[i] = streak.get(i, 0) + 1
        doomed = sorted((i for i, c in streak.items() if c >= DROP_AFTER), reverse=True)
        if doomed and model.g_kent - len(doomed) + model.offset >= 1:
            for i in doomed:
                trace.events.append({"iteration": it, "event": "drop", "component": i})
                log.info("dropping degenerate component %d at iteration %d", i, it)
                model = _drop(model, i)
            streak = {}
            cache = {}
            tau, ll = _responsibilities(component_log_densities(x, model, max_terms))
            trace.resets.append(len(trace.loglik))
            trace.loglik.append(ll)
        elif bad:
            trace.events.append({"iteration": it, "event": "frozen", "components": list(bad)})

        model = m_step(x, tau, model, frozen=bad, max_terms=max_terms, fit_options=fit_options,
                       cache=cache)
        prev = ll
        tau, ll = _responsibilities(component_log_densities(x, model, max_terms))
        if not math.isfinite(ll):
            raise EMError(f"log-likelihood became {ll} at iteration {it}")
        trace.loglik.append(ll)
        trace.iterations = it
        if abs(ll - prev) <= tol * abs(prev):
            trace.converged = True
            break
    trace.monotonicity_violation_max = _violation(trace)
    return model, tau, trace


def harden(tau):
    """Row-wise argmax; ties go to the lowest index."""
    return np.argmax(np.asarray(tau), axis=1)

