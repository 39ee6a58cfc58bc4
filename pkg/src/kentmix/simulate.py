"""Labelled samples from Kent mixtures, including the simulation set-ups used for validation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kent import KentParams, make_rng, sample_kent, sample_uniform_sphere
from .mixture import MixtureModel

E1, E2, E3 = np.eye(3)


@dataclass(frozen=True)
class ComponentSpec:
    """One simulated group: a Kent component, or ``params=None`` for uniform.

    `stream` pins the group's random stream; by default group ``i`` uses
    stream ``i + 1``.
    """

    size: int
    params: KentParams = None
    stream: int = None

    @property
    def is_uniform(self):
        return self.params is None


def simulate(components, seed=None):
    """Draw each group in turn; labels are the 1-based group index.

    Group ``i`` uses its own random stream, so adding or resizing one group
    leaves the draws of the others unchanged.
    """
    components = list(components)
    if not components:
        raise ValueError("no components to simulate")
    for c in components:
        if c.size < 1:
            raise ValueError("every component needs size >= 1")
    xs, labels = [], []
    for i, c in enumerate(components):
        rng = make_rng(seed, stream=i + 1 if c.stream is None else c.stream)
        if c.is_uniform:
            xs.append(sample_uniform_sphere(c.size, rng))
        else:
            xs.append(sample_kent(c.params, c.size, rng))
        labels.append(np.full(c.size, i + 1))
    return np.vstack(xs), np.concatenate(labels)


def true_model(components):
    """The generating mixture, proportions from group sizes."""
    sizes = np.array([c.size for c in components], dtype=float)
    uniform = [c for c in components if c.is_uniform]
    if len(uniform) > 1:
        raise ValueError("at most one uniform group")
    kent_idx = [i for i, c in enumerate(components) if not c.is_uniform]
    w = [sizes[i] for i in kent_idx]
    if uniform:
        w = [sizes[[c.is_uniform for c in components].index(True)]] + w
    w = np.array(w) / sizes.sum()
    return MixtureModel(tuple(components[i].params for i in kent_idx), w, bool(uniform))


def case1():
    """Four equal groups of 200 with increasing concentration."""
    setup = [(5, 2, E3), (10, 4, E2), (20, 9, -E2), (20, 2, -E3)]
    return [ComponentSpec(200, KentParams.from_pole(k, b, p)) for k, b, p in setup]


CASE2_SIZES = (200, 200, 500, 250, 200)


def case2():
    """Five groups of unequal size centred on the coordinate axes."""
    setup = [(50, 2, E3), (25, 2, E2), (30, 5, E1), (70, 10, -E2), (50, 2, -E1)]
    return [ComponentSpec(n, KentParams.from_pole(k, b, p), stream=i + 1)
            for i, (n, (k, b, p)) in enumerate(zip(CASE2_SIZES, setup))]


def case3():
    """Case 2 plus 100 uniform points; the uniform group comes first (label 1).

    The Kent groups keep their Case 2 streams, so for a given seed the
    Kent points are exactly the Case 2 sample.
    """
    return [ComponentSpec(100, stream=100)] + case2()


def angular_separation_setup(separation, kappa=50.0, beta=10.0, size=200):
    """Two polar and two equatorial groups, the second equatorial one rotated by `separation`.

    Equatorial major axes lie along the equator, so rotating about x3 moves
    the whole component.
    """
    c, s = np.cos(separation), np.sin(separation)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    g_e1 = np.column_stack([E2, E3, E1])
    comps = [
        KentParams.from_pole(kappa, beta, E3),
        KentParams.from_pole(kappa, beta, -E3),
        KentParams(kappa, beta, g_e1),
        KentParams(kappa, beta, rot @ g_e1),
    ]
    return [ComponentSpec(size, k) for k in comps]


# reference helix-helix fit: kappa, beta, mean direction
HELIX_COMPONENTS = {
    "h": (63.93, 1.74, (-0.23, 0.97, 0.01)),
    "d": (35.46, 13.89, (0.33, -0.93, 0.14)),
    "i": (264.34, 98.07, (0.93, -0.37, 0.06)),
}
HELIX_WEIGHTS = {"uniform": 0.03, "h": 0.87, "d": 0.08, "i": 0.03}
HELIX_N = 3627


def helix_surrogate(n=HELIX_N):
    """Uniform + h, d, i groups with sizes proportional to the fitted proportions."""
    names = ["uniform", "h", "d", "i"]
    w = np.array([HELIX_WEIGHTS[k] for k in names])
    w = w / w.sum()
    sizes = np.floor(w * n).astype(int)
    sizes[1] += n - sizes.sum()
    comps = [ComponentSpec(int(sizes[0]))]
    for name, size in zip(names[1:], sizes[1:]):
        k, b, pole = HELIX_COMPONENTS[name]
        comps.append(ComponentSpec(int(size), KentParams.from_pole(k, b, pole)))
    return comps
