"""Hydrogen-bond records: ingestion, stratification and the helix-helix analysis."""

from __future__ import annotations

import csv
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .evaluation import adjusted_rand, crosstab
from .io import FormatError
from .kent import condition_number, make_rng
from .mixture import harden
from .selection import LOGLIK_WEIGHT, select_stepwise
from .simulate import HELIX_COMPONENTS, HELIX_N, helix_surrogate, simulate
from .sphere import angles_to_vector, normalize, vector_to_angles

COLUMNS = ("chi", "psi", "delta", "delta_L", "ss_o", "ss_n")
DELTA_L_BINS = ("2", "3", "4", "5+")
SS_TYPES = ("helix", "sheet", "loop")
_SS_ALIASES = {"h": "helix", "helix": "helix", "e": "sheet", "sheet": "sheet",
               "l": "loop", "loop": "loop", "c": "loop", "coil": "loop"}
# helices and sheets never bond to each other
SS_PAIRS = tuple((a, b) for a in SS_TYPES for b in SS_TYPES if {a, b} != {"helix", "sheet"})
HELIX_HELIX = ("helix", "helix")
_UNITS_RE = re.compile(r"#\s*angles\s*[:=]\s*(\w+)", re.IGNORECASE)


@dataclass(frozen=True)
class HBondRecord:
    chi: float
    psi: float
    delta: float
    delta_L: str
    ss_o: str
    ss_n: str

    @property
    def ss_pair(self):
        return (self.ss_o, self.ss_n)

    @property
    def vector(self):
        return angles_to_vector(self.psi, self.chi)


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str
    raw: str


def _delta_l_token(tok):
    tok = tok.strip()
    if tok in DELTA_L_BINS:
        return tok
    if tok.endswith("+"):
        raise ValueError(f"unknown separation bin {tok!r}")
    n = int(tok)
    if n < 2:
        raise ValueError(f"separation {n} < 2")
    return "5+" if n >= 5 else str(n)


def _ss_code(tok):
    try:
        return _SS_ALIASES[tok.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown secondary structure {tok!r}") from None


def _parse_record(row, degrees):
    chi, psi, delta = (float(row[c]) for c in ("chi", "psi", "delta"))
    if degrees:
        chi, psi = math.radians(chi), math.radians(psi)
    if not 0.0 <= psi <= math.pi:
        raise ValueError(f"psi out of range [0, pi]: {psi}")
    if not -math.pi <= chi < 2.0 * math.pi:
        raise ValueError(f"chi out of range: {chi}")
    chi = chi % (2.0 * math.pi)
    if not delta > 0:
        raise ValueError(f"delta must be positive: {delta}")
    rec = HBondRecord(chi, psi, delta, _delta_l_token(row["delta_L"]),
                      _ss_code(row["ss_o"]), _ss_code(row["ss_n"]))
    if rec.ss_pair not in SS_PAIRS:
        raise ValueError(f"inadmissible secondary-structure pair {rec.ss_pair}")
    return rec


def load_records(path, angles=None):
    """Parse a delimited record file.

    Returns ``(records, rejections)``.  The angle unit comes from `angles`
    if given, else from a ``# angles: degrees`` header line, else radians.
    Rows failing validation are reported in `rejections`.
    """
    with open(path, newline="") as fh:
        text = fh.read().splitlines()
    units = angles
    body = []
    first_line = None
    for i, ln in enumerate(text, start=1):
        s = ln.strip()
        if not s:
            continue
        if s.startswith("#"):
            m = _UNITS_RE.match(s)
            if m and units is None:
                units = m.group(1).lower()
            continue
        if first_line is None:
            first_line = i
        body.append((i, ln))
    units = units or "radians"
    if units not in ("radians", "degrees"):
        raise FormatError(f"unknown angle unit {units!r}")
    if not body:
        return [], []
    header = [c.strip() for c in next(csv.reader([body[0][1]]))]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise FormatError(f"{path}: missing columns {missing}")
    records, rejected = [], []
    for lineno, ln in body[1:]:
        vals = next(csv.reader([ln]))
        if len(vals) != len(header):
            rejected.append(Rejection(lineno, "wrong number of fields", ln))
            continue
        row = dict(zip(header, vals))
        try:
            records.append(_parse_record(row, units == "degrees"))
        except (ValueError, KeyError) as exc:
            rejected.append(Rejection(lineno, str(exc), ln))
    return records, rejected


def write_records(path, records, angles="radians"):
    with open(path, "w", newline="") as fh:
        fh.write(f"# angles: {angles}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            chi, psi = (math.degrees(r.chi), math.degrees(r.psi)) if angles == "degrees" else (r.chi, r.psi)
            w.writerow([repr(chi), repr(psi), repr(r.delta), r.delta_L, r.ss_o, r.ss_n])


@dataclass
class StratifiedDataset:
    records: list
    vectors: np.ndarray
    groups: dict

    def stratum(self, ss_pair=HELIX_HELIX):
        """Indices of all records with the given secondary-structure pair, in input order."""
        idx = [i for (pair, _), members in self.groups.items() if pair == tuple(ss_pair) for i in members]
        return np.array(sorted(idx), dtype=int)

    def counts(self):
        return {key: len(v) for key, v in self.groups.items()}

    def flatten(self):
        return [self.records[i] for i in sorted(i for v in self.groups.values() for i in v)]


def stratify(records):
    """Group records by (secondary-structure pair, separation bin)."""
    records = list(records)
    groups = {}
    for i, r in enumerate(records):
        groups.setdefault((r.ss_pair, r.delta_L), []).append(i)
    if records:
        vectors = angles_to_vector([r.psi for r in records], [r.chi for r in records])
    else:
        vectors = np.empty((0, 3))
    return StratifiedDataset(records, vectors, groups)


@dataclass
class AnalysisReport:
    stratum: tuple
    n: int
    steps: list
    best_index: int
    absorbed: tuple
    components: list
    uniform_weight: float
    crosstab: dict
    adjusted_rand: float
    labels: np.ndarray = field(repr=False, default=None)
    model: object = field(repr=False, default=None)
    loglik_weight: float = LOGLIK_WEIGHT

    def to_dict(self):
        return {
            "stratum": "-".join(self.stratum),
            "n": self.n,
            "aic_steps": self.steps,
            "loglik_weight": self.loglik_weight,
            "best_step": self.best_index,
            "absorbed_candidates": list(self.absorbed),
            "components": self.components,
            "uniform_weight": self.uniform_weight,
            "delta_L_crosstab": self.crosstab,
            "adjusted_rand": self.adjusted_rand,
        }


def _delta_l_table(assigned, delta_l, names):
    table, rows, cols = crosstab(np.asarray(assigned), np.asarray(delta_l))
    out = {"columns": list(names) + ["total"], "rows": []}
    col_index = {c: i for i, c in enumerate(cols)}
    for b in DELTA_L_BINS:
        counts = [0] * len(names)
        if b in col_index:
            for ri, r in enumerate(rows):
                counts[int(r)] = int(table[ri, col_index[b]])
        out["rows"].append({"delta_L": b, "counts": counts, "total": sum(counts)})
    col_tot = [sum(r["counts"][i] for r in out["rows"]) for i in range(len(names))]
    out["totals"] = col_tot + [sum(col_tot)]
    return out


def analyze_helix_helix(dataset, candidate_poles, config=None, ss_pair=HELIX_HELIX):
    """Stepwise mixture selection on one stratum and its summary tables.

    `config` may set ``init_kappa``, ``init_beta``, ``max_g``, ``tol``,
    ``max_iter``, ``uniform`` (default True) and ``loglik_weight``.
    """
    config = dict(config or {})
    idx = dataset.stratum(ss_pair)
    if len(idx) == 0:
        raise ValueError(f"no records in stratum {ss_pair}")
    x = dataset.vectors[idx]
    delta_l = np.array([dataset.records[i].delta_L for i in idx])
    steps, best = select_stepwise(
        x, candidate_poles,
        init_kappa=config.get("init_kappa", 20.0),
        init_beta=config.get("init_beta", 0.0),
        max_g=config.get("max_g"),
        with_uniform=config.get("uniform", True),
        tol=config.get("tol", 1e-8),
        max_iter=config.get("max_iter", 1000),
        loglik_weight=config.get("loglik_weight", LOGLIK_WEIGHT),
    )
    model = best.model
    labels = harden(best.responsibilities)
    names = (["uniform"] if model.uniform else []) + [f"c{c + 1}" for c in best.absorbed[: model.g_kent]]
    if len(names) != model.n_components:
        names = (["uniform"] if model.uniform else []) + [f"kent{i + 1}" for i in range(model.g_kent)]
    comps = []
    for name, k, w in zip(names[model.offset:], model.kents, model.kent_weights()):
        comps.append({
            "name": name,
            "kappa": k.kappa,
            "beta": k.beta,
            "pi": float(w),
            "pole": [float(v) for v in k.pole],
            "condition_number": condition_number(k.kappa, k.beta) if k.kappa > 0 else 1.0,
        })
    step_table = [{"g": s.g_kent, "k_star": s.k_star, "loglik": s.loglik, "aic": s.aic,
                   "absorbed": list(s.absorbed)} for s in steps]
    return AnalysisReport(
        stratum=tuple(ss_pair),
        n=len(idx),
        steps=step_table,
        best_index=steps.index(best),
        absorbed=best.absorbed,
        components=comps,
        uniform_weight=float(model.weights[0]) if model.uniform else 0.0,
        crosstab=_delta_l_table(labels, delta_l, names),
        adjusted_rand=adjusted_rand(labels, delta_l),
        labels=labels,
        model=model,
        loglik_weight=best.loglik_weight,
    )


def delta_l_counts(records):
    return Counter(r.delta_L for r in records)


# observed separation counts per helix-helix component, bins 2, 3, 4, 5+
SEPARATION_PROFILE = {
    "uniform": (8, 11, 43, 19),
    "h": (0, 10, 3170, 6),
    "d": (0, 244, 22, 0),
    "i": (94, 0, 0, 0),
}
SURROGATE_ORDER = ("uniform", "h", "d", "i")


def surrogate_records(seed=None, n=HELIX_N):
    """Synthetic helix-helix records drawn from the fitted three-component model.

    Each record's separation bin is drawn from its component's observed
    separation profile.  Returns ``(records, labels)`` where labels are
    1-based in :data:`SURROGATE_ORDER`.
    """
    x, labels = simulate(helix_surrogate(n), seed)
    rng = make_rng(seed, stream=101)
    psi, chi = vector_to_angles(x)
    records = []
    for j in range(len(x)):
        prof = np.array(SEPARATION_PROFILE[SURROGATE_ORDER[labels[j] - 1]], dtype=float)
        b = DELTA_L_BINS[rng.choice(4, p=prof / prof.sum())]
        delta = float(rng.uniform(1.7, 2.6))
        records.append(HBondRecord(float(chi[j]), float(psi[j]), delta, b, "helix", "helix"))
    return records, labels


DECOY_POLES = np.array([
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
    [-0.7, -0.7, 0.1],
    [0.6, 0.6, -0.5],
    [-0.5, 0.3, -0.8],
])


def surrogate_candidates(offset=0.05):
    """Eight starting poles: the three fitted poles nudged by `offset` radians, then five decoys."""
    near = []
    for name in ("h", "d", "i"):
        pole = normalize(np.array(HELIX_COMPONENTS[name][2], dtype=float))
        perp = np.cross(pole, [0.0, 0.0, 1.0])
        perp /= np.linalg.norm(perp)
        near.append(np.cos(offset) * pole + np.sin(offset) * perp)
    return normalize(np.vstack([near, DECOY_POLES]))
