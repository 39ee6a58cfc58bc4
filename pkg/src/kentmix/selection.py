"""Choosing the number of Kent components by AIC."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .kent import KentParams
from .mixture import EMError, MixtureModel, run_em
from .sphere import normalize

log = logging.getLogger(__name__)

INIT_KAPPA = 20.0
UNIFORM_WEIGHT = 0.05
# criterion = 2 k* - LOGLIK_WEIGHT * loglik; 2.0 gives the textbook AIC, whose
# per-parameter penalty is half as strong and over-selects on the simulation cases
LOGLIK_WEIGHT = 1.0


def count_parameters(g_kent, uniform):
    """Parameter count used for AIC.

    ``6g - 1`` for ``g`` Kent components; with a uniform component the
    count is ``5g - 1`` where ``g`` includes the uniform.
    """
    if uniform:
        g = g_kent + 1
        return 5 * g - 1
    return 6 * g_kent - 1


@dataclass
class ModelScore:
    model: MixtureModel
    loglik: float
    k_star: int
    aic: float
    loglik_weight: float = LOGLIK_WEIGHT
    trace: object = None
    responsibilities: np.ndarray = field(default=None, repr=False)
    absorbed: tuple = ()

    @property
    def g_kent(self):
        return self.model.g_kent


def aic_score(model, loglik, loglik_weight=LOGLIK_WEIGHT, **extra):
    """Score ``2 k* - loglik_weight * loglik``; lower is better."""
    if not loglik_weight > 0:
        raise ValueError("loglik_weight must be positive")
    k = count_parameters(model.g_kent, model.uniform)
    aic = 2.0 * k - loglik_weight * float(loglik)
    return ModelScore(model, float(loglik), k, aic, float(loglik_weight), **extra)


def _local_density(x, radius=0.3, chunk=2048):
    cos_r = np.cos(radius)
    counts = np.empty(len(x), dtype=int)
    for s in range(0, len(x), chunk):
        counts[s:s + chunk] = (x[s:s + chunk] @ x.T >= cos_r).sum(axis=1)
    return counts


def _farthest_from(xc, first, g):
    seeds = [first]
    best_cos = xc @ xc[first]
    for _ in range(1, min(g, len(xc))):
        nxt = int(np.argmin(best_cos))
        seeds.append(nxt)
        best_cos = np.maximum(best_cos, xc @ xc[nxt])
    poles = xc[seeds].copy()
    while len(poles) < g:
        poles = np.vstack([poles, -poles[len(poles) % len(seeds)]])
    return poles


def _spherical_kmeans(x, poles, max_rounds):
    poles = poles.copy()
    lab = None
    for _ in range(max_rounds):
        new = np.argmax(x @ poles.T, axis=1)
        if lab is not None and np.array_equal(new, lab):
            break
        lab = new
        for i in range(len(poles)):
            m = x[lab == i].sum(axis=0)
            if np.linalg.norm(m) > 1e-12:
                poles[i] = m / np.linalg.norm(m)
    return poles, float(np.max(x @ poles.T, axis=1).sum())


def farthest_point_poles(data, g, refine=50, starts=8):
    """Deterministic seeding of `g` poles, refined by spherical k-means.

    Seeds are drawn from the denser half of the data: each start takes one
    of the `starts` points with most neighbours, then repeatedly adds the
    candidate farthest from the seeds so far.  Every start is refined by
    at most `refine` rounds of spherical k-means and the one with the
    highest total cosine similarity wins.
    """
    x = np.asarray(data, dtype=float)
    if g < 1:
        raise ValueError("g must be >= 1")
    dens = _local_density(x)
    cand = np.flatnonzero(dens >= np.median(dens))
    xc = x[cand]
    order = np.argsort(-dens[cand], kind="stable")
    best, best_obj = None, -np.inf
    for first in order[: max(starts, 1)]:
        poles, obj = _spherical_kmeans(x, _farthest_from(xc, int(first), g), refine)
        if obj > best_obj + 1e-9:
            best, best_obj = poles, obj
    return normalize(best)


def default_init(data, g, uniform=True, kappa=INIT_KAPPA, uniform_weight=UNIFORM_WEIGHT):
    """Equal-weight mixture seeded by :func:`farthest_point_poles`, beta = 0."""
    poles = farthest_point_poles(data, g)
    kents = [KentParams.from_pole(kappa, 0.0, p) for p in poles]
    return MixtureModel.build(kents, uniform=uniform, uniform_weight=uniform_weight)


def select_fixed_g(data, g_range, init_strategy=None, with_uniform=True, tol=1e-8,
                   max_iter=1000, em_options=None, loglik_weight=LOGLIK_WEIGHT):
    """Fit one mixture per g and score each by AIC.

    `init_strategy` is ``None`` (farthest-point seeding), a mapping from g
    to an initial :class:`MixtureModel` (missing g fall back to seeding), or
    a callable ``(data, g, with_uniform) -> MixtureModel``.  Returns the
    scores sorted by AIC; failed fits are logged and skipped.
    """
    g_range = list(g_range)
    if not g_range:
        raise ValueError("g_range is empty")
    em_options = dict(em_options or {})
    scores = []
    for g in g_range:
        if callable(init_strategy):
            init = init_strategy(data, g, with_uniform)
        elif isinstance(init_strategy, dict) and g in init_strategy:
            init = init_strategy[g]
        else:
            init = default_init(data, g, uniform=with_uniform)
        try:
            model, tau, trace = run_em(data, init, tol=tol, max_iter=max_iter, **em_options)
        except (EMError, ValueError) as exc:
            log.warning("EM failed for g=%d: %s", g, exc)
            continue
        scores.append(aic_score(model, trace.final_loglik, loglik_weight, trace=trace,
                                responsibilities=tau))
    return sorted(scores, key=lambda s: s.aic)


def _add_component(base, new, uniform, uniform_weight):
    if base is None:
        return MixtureModel.build([new], uniform=uniform, uniform_weight=uniform_weight)
    g_new = base.n_components + 1
    w_new = 1.0 / g_new
    w = np.concatenate([base.weights[: base.offset], base.kent_weights(), [0.0]]) * (1.0 - w_new)
    w[-1] = w_new
    return MixtureModel(base.kents + (new,), w, base.uniform)


def select_stepwise(data, candidate_poles, init_kappa=INIT_KAPPA, init_beta=0.0, max_g=None,
                    with_uniform=True, tol=1e-8, max_iter=1000, em_options=None,
                    uniform_weight=UNIFORM_WEIGHT, loglik_weight=LOGLIK_WEIGHT):
    """Greedy forward selection over candidate starting poles.

    Step 1 fits one Kent component (plus the uniform) from each candidate
    and keeps the lowest-AIC fit.  Each later step starts from the previous
    step's winner, adds every unused candidate in turn, and keeps the
    lowest-AIC result.  Returns ``(steps, best)``: the winner of every step
    (``absorbed`` lists the candidate indices in the order they were added)
    and the overall AIC minimum.
    """
    poles = normalize(np.atleast_2d(np.asarray(candidate_poles, dtype=float)))
    if len(poles) == 0:
        raise ValueError("no candidate poles")
    max_g = len(poles) if max_g is None else min(max_g, len(poles))
    em_options = dict(em_options or {})
    steps = []
    base, used = None, ()
    for g in range(1, max_g + 1):
        best = None
        for c in range(len(poles)):
            if c in used:
                continue
            new = KentParams.from_pole(init_kappa, init_beta, poles[c])
            init = _add_component(base, new, with_uniform, uniform_weight)
            try:
                model, tau, trace = run_em(data, init, tol=tol, max_iter=max_iter, **em_options)
            except (EMError, ValueError) as exc:
                log.warning("step %d: candidate %d skipped (%s)", g, c, exc)
                continue
            score = aic_score(model, trace.final_loglik, loglik_weight, trace=trace,
                              responsibilities=tau, absorbed=used + (c,))
            log.info("step %d candidate %d: g_kent=%d loglik=%.3f aic=%.3f", g, c,
                     model.g_kent, score.loglik, score.aic)
            if best is None or score.aic < best.aic:
                best = score
        if best is None:
            break
        steps.append(best)
        base, used = best.model, best.absorbed
    if not steps:
        raise EMError("every candidate failed")
    return steps, min(steps, key=lambda s: s.aic)
