"""Command-line interface: ``kentmix {simulate,fit,select,classify,project,hbond}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import hbond, io, plotting, simulate as sim
from .evaluation import adjusted_rand, misclassification_rate
from .kent import MAX_TERMS, KentParams
from .mixture import EMError, e_step, harden, run_em
from .selection import LOGLIK_WEIGHT, aic_score, default_init, select_fixed_g, select_stepwise
from .sphere import schmidt_project

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NONCONVERGED = 3
EXIT_IO = 4

DEFAULTS = {
    "seed": 0,
    "tol": 1e-8,
    "max_iter": 1000,
    "max_terms": MAX_TERMS,
    "uniform": True,
    "angles": "vectors",
    "stratum": "helix-helix",
    "init_kappa": 20.0,
    "init_beta": 0.0,
    "loglik_weight": LOGLIK_WEIGHT,
}

log = logging.getLogger("kentmix")


class ValidationError(ValueError):
    pass


class NotConverged(RuntimeError):
    pass


def _g_range(text):
    text = str(text).strip()
    try:
        if "-" in text:
            lo, hi = (int(t) for t in text.split("-", 1))
            out = list(range(lo, hi + 1))
        else:
            out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse g range {text!r}") from None
    if not out or min(out) < 1:
        raise ValidationError(f"g range must be non-empty with g >= 1: {text!r}")
    return out


def _settings(args):
    """Merge DEFAULTS < config file < explicit flags."""
    conf = {}
    if getattr(args, "config", None):
        try:
            conf = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {args.config}: {exc}") from None
        if not isinstance(conf, dict):
            raise ValidationError("config file must hold a JSON object")
        conf = {k.replace("-", "_"): v for k, v in conf.items()}
    out = dict(DEFAULTS)
    out.update(conf)
    for k, v in vars(args).items():
        if v is not None and k not in ("command", "func", "config"):
            out[k] = v
    if not float(out["tol"]) > 0:
        raise ValidationError("tol must be positive")
    if int(out["max_iter"]) < 1:
        raise ValidationError("max_iter must be >= 1")
    if not float(out["loglik_weight"]) > 0:
        raise ValidationError("loglik_weight must be positive")
    if out["angles"] not in io.ANGLE_MODES:
        raise ValidationError(f"angles must be one of {io.ANGLE_MODES}")
    return out


def _require(s, *keys):
    for k in keys:
        if s.get(k) in (None, ""):
            raise ValidationError(f"missing required setting --{k.replace('_', '-')}")


def _em_opts(s):
    return {"max_terms": int(s["max_terms"])}


def _fit_meta(s, score, trace):
    return {
        "loglik": score.loglik,
        "aic": score.aic,
        "k_star": score.k_star,
        "loglik_weight": score.loglik_weight,
        "iterations": trace.iterations,
        "converged": trace.converged,
        "monotonicity_violation_max": trace.monotonicity_violation_max,
        "seed": int(s["seed"]),
        "tol": float(s["tol"]),
        "max_iter": int(s["max_iter"]),
        "max_terms": int(s["max_terms"]),
    }


# simulate ---------------------------------------------------------------------

PRESETS = {"case1": sim.case1, "case2": sim.case2, "case3": sim.case3, "helix": sim.helix_surrogate}


def _components_from_config(items):
    comps = []
    for c in items:
        size = int(c.get("size", 0))
        if size < 1:
            raise ValidationError("every component needs size >= 1")
        if c.get("type", "kent") == "uniform":
            comps.append(sim.ComponentSpec(size))
            continue
        try:
            if "gamma" in c:
                params = KentParams(c["kappa"], c["beta"], np.array(c["gamma"], dtype=float).reshape(3, 3))
            else:
                params = KentParams.from_pole(c["kappa"], c.get("beta", 0.0), c["pole"])
        except (KeyError, ValueError, TypeError) as exc:
            raise ValidationError(f"invalid component {c}: {exc}") from None
        comps.append(sim.ComponentSpec(size, params))
    if not comps:
        raise ValidationError("no components to simulate")
    return comps


def cmd_simulate(s):
    _require(s, "output")
    if s.get("components"):
        comps = _components_from_config(s["components"])
    elif s.get("case"):
        if s["case"] not in PRESETS:
            raise ValidationError(f"unknown case {s['case']!r}; choose from {sorted(PRESETS)}")
        comps = PRESETS[s["case"]]()
    elif s.get("separation") is not None:
        comps = sim.angular_separation_setup(float(s["separation"]))
    else:
        raise ValidationError("give --case, --separation or components in the config file")
    x, labels = sim.simulate(comps, int(s["seed"]))
    io.write_data(s["output"], x, labels)
    print(f"wrote {len(x)} points in {len(comps)} groups to {s['output']}")


# fit / select -----------------------------------------------------------------

def _load_data(s):
    _require(s, "input")
    return io.read_data(s["input"], angles=s["angles"])


def _write_fit_outputs(s, score, tau, trace):
    io.save_model(s["output"], score.model, _fit_meta(s, score, trace))
    if s.get("assignments"):
        io.write_assignments(s["assignments"], tau, harden(tau), io.component_names(score.model))


def _trace_summary(trace):
    ll = trace.loglik
    print(f"iterations: {trace.iterations}  converged: {trace.converged}")
    print(f"loglik: start {ll[0]:.6f}  final {ll[-1]:.6f}")
    print(f"max monotonicity violation (relative): {trace.monotonicity_violation_max:.3e}")


def cmd_fit(s):
    _require(s, "output")
    x, _ = _load_data(s)
    if s.get("init_model"):
        init, _ = io.load_model(s["init_model"])
    else:
        _require(s, "g")
        g = int(s["g"])
        if g < 1:
            raise ValidationError("g must be >= 1")
        init = default_init(x, g, uniform=bool(s["uniform"]), kappa=float(s["init_kappa"]))
    model, tau, trace = run_em(x, init, tol=float(s["tol"]), max_iter=int(s["max_iter"]), **_em_opts(s))
    score = aic_score(model, trace.final_loglik, float(s["loglik_weight"]))
    _write_fit_outputs(s, score, tau, trace)
    _trace_summary(trace)
    print(f"k*: {score.k_star}  aic: {score.aic:.6f}")
    if not trace.converged:
        raise NotConverged(f"EM stopped after {trace.iterations} iterations without converging")


def _aic_table(scores, absorbed=False):
    rows = []
    for sc in scores:
        row = {"g": sc.g_kent, "k_star": sc.k_star, "loglik": sc.loglik, "aic": sc.aic,
               "converged": bool(sc.trace.converged) if sc.trace is not None else None}
        if absorbed:
            row["absorbed"] = list(sc.absorbed)
        rows.append(row)
    return rows


def _print_table(rows):
    print(f"{'g':>3} {'k*':>4} {'loglik':>16} {'aic':>16}")
    for r in rows:
        print(f"{r['g']:>3} {r['k_star']:>4} {r['loglik']:>16.6f} {r['aic']:>16.6f}")


def cmd_select(s):
    _require(s, "output")
    x, _ = _load_data(s)
    uniform = bool(s["uniform"])
    if s.get("stepwise") or (s.get("poles_file") and not s.get("g_range")):
        _require(s, "poles_file")
        poles = io.read_poles(s["poles_file"], angles=s["angles"])
        steps, best = select_stepwise(x, poles, init_kappa=float(s["init_kappa"]),
                                      init_beta=float(s["init_beta"]), max_g=s.get("max_g"),
                                      with_uniform=uniform, tol=float(s["tol"]),
                                      max_iter=int(s["max_iter"]), em_options=_em_opts(s),
                                      loglik_weight=float(s["loglik_weight"]))
        rows = _aic_table(steps, absorbed=True)
        table_order = steps
    else:
        _require(s, "g_range")
        scores = select_fixed_g(x, _g_range(s["g_range"]), with_uniform=uniform, tol=float(s["tol"]),
                                max_iter=int(s["max_iter"]), em_options=_em_opts(s),
                                loglik_weight=float(s["loglik_weight"]))
        if not scores:
            raise EMError("every fit failed")
        best = scores[0]
        table_order = sorted(scores, key=lambda sc: sc.g_kent)
        rows = _aic_table(table_order)
    _print_table(rows)
    print(f"selected g = {best.g_kent}")
    _write_fit_outputs(s, best, best.responsibilities, best.trace)
    if s.get("report"):
        Path(s["report"]).write_text(json.dumps({"models": rows, "selected_g": best.g_kent,
                                                 "loglik_weight": best.loglik_weight}, indent=2) + "\n")
    if s.get("plot"):
        plotting.aic_bars(s["plot"], [r["g"] for r in rows], [r["aic"] for r in rows])
    if not best.trace.converged:
        raise NotConverged("selected model did not converge")


# classify / project -----------------------------------------------------------

def cmd_classify(s):
    _require(s, "model", "output")
    model, _ = io.load_model(s["model"])
    x, truth = _load_data(s)
    tau = e_step(x, model, max_terms=int(s["max_terms"]))
    labels = harden(tau)
    io.write_assignments(s["output"], tau, labels, io.component_names(model), truth)
    print(f"classified {len(x)} points into {model.n_components} components")
    if truth is not None:
        mis = misclassification_rate(labels + 1, truth)
        ari = adjusted_rand(labels, truth)
        names = io.component_names(model)
        print("crosstab (rows: assigned, columns: truth label)")
        print("          " + " ".join(f"{c:>6}" for c in mis.col_labels))
        for r, row in zip(mis.row_labels, mis.crosstab):
            print(f"{names[int(r) - 1]:>9} " + " ".join(f"{int(v):>6}" for v in row))
        print(f"misclassification: {mis.overall:.6f}")
        print(f"adjusted Rand: {ari:.6f}")
        if s.get("report"):
            Path(s["report"]).write_text(json.dumps({
                "misclassification": mis.overall,
                "per_truth_group": {str(k): float(v) for k, v in mis.per_group.items()},
                "adjusted_rand": ari,
                "crosstab": {"rows": [names[int(r) - 1] for r in mis.row_labels],
                             "columns": [int(c) for c in mis.col_labels],
                             "counts": np.asarray(mis.crosstab).astype(int).tolist()},
            }, indent=2) + "\n")


def cmd_project(s):
    _require(s, "output")
    x, labels = _load_data(s)
    names = None
    if s.get("model"):
        model, _ = io.load_model(s["model"])
        labels = harden(e_step(x, model, max_terms=int(s["max_terms"])))
        names = io.component_names(model)
    y = schmidt_project(x).reshape(-1, 2)
    with open(s["output"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y1", "y2"] + (["label"] if labels is not None else []))
        for j in range(len(y)):
            row = [repr(float(y[j, 0])), repr(float(y[j, 1]))]
            if labels is not None:
                row.append(int(labels[j]) + (1 if names is not None else 0))
            w.writerow(row)
    if s.get("plot"):
        plotting.schmidt_scatter(s["plot"], x, labels, names)
    print(f"projected {len(y)} points")


# hbond ------------------------------------------------------------------------

def cmd_hbond(s):
    _require(s, "input", "poles_file", "output")
    # the records header decides the unit unless radians/degrees was set explicitly
    units = s["angles"] if s["angles"] in ("radians", "degrees") else None
    records, rejected = hbond.load_records(s["input"], angles=units)
    ds = hbond.stratify(records)
    pair = tuple(hbond._ss_code(t) for t in str(s["stratum"]).split("-"))
    if len(pair) != 2:
        raise ValidationError(f"stratum must look like helix-helix, got {s['stratum']!r}")
    pole_units = "radians" if s["angles"] == "vectors" else s["angles"]
    poles = io.read_poles(s["poles_file"], angles=pole_units)
    report = hbond.analyze_helix_helix(ds, poles, config={
        "init_kappa": float(s["init_kappa"]), "init_beta": float(s["init_beta"]),
        "max_g": s.get("max_g"), "tol": float(s["tol"]), "max_iter": int(s["max_iter"]),
        "uniform": bool(s["uniform"]), "loglik_weight": float(s["loglik_weight"]),
    }, ss_pair=pair)
    out = Path(s["output"])
    out.mkdir(parents=True, exist_ok=True)
    d = report.to_dict()
    d["rejected_rows"] = [{"line": r.line, "reason": r.reason} for r in rejected]
    (out / "report.json").write_text(json.dumps(d, indent=2) + "\n")
    with open(out / "parameters.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component", "kappa", "beta", "pi", "pole_x1", "pole_x2", "pole_x3", "condition_number"])
        if report.model.uniform:
            w.writerow(["uniform", "", "", repr(report.uniform_weight), "", "", "", ""])
        for c in report.components:
            w.writerow([c["name"], repr(c["kappa"]), repr(c["beta"]), repr(c["pi"])]
                       + [repr(v) for v in c["pole"]] + [repr(c["condition_number"])])
    with open(out / "crosstab.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta_L"] + report.crosstab["columns"])
        for r in report.crosstab["rows"]:
            w.writerow([r["delta_L"]] + r["counts"] + [r["total"]])
        w.writerow(["total"] + report.crosstab["totals"])
    io.save_model(out / "model.json", report.model, {"stratum": "-".join(pair), "seed": int(s["seed"])})
    print(f"stratum {'-'.join(pair)}: n = {report.n}, rejected rows = {len(rejected)}")
    _print_table(report.steps)
    print(f"selected g = {len(report.components)}  "
          f"adjusted Rand vs delta_L = {report.adjusted_rand:.4f}")


# parser -----------------------------------------------------------------------

def _common(p, data=True):
    p.add_argument("--config", help="JSON file with default settings; flags override it")
    p.add_argument("--input", help="input file")
    p.add_argument("--output", help="primary output file (directory for hbond)")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, help="relative log-likelihood change for convergence")
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--max-terms", type=int, dest="max_terms", help="cap on normalizing-constant series terms")
    p.add_argument("--angles", choices=io.ANGLE_MODES, help="coordinate columns of data and pole files")
    if data:
        p.add_argument("--loglik-weight", type=float, dest="loglik_weight",
                       help="model score is 2 k* - w * loglik (default 1; 2 is the textbook AIC)")
        grp = p.add_mutually_exclusive_group()
        grp.add_argument("--uniform", dest="uniform", action="store_true", default=None)
        grp.add_argument("--no-uniform", dest="uniform", action="store_false")


def build_parser():
    ap = argparse.ArgumentParser(prog="kentmix", description="Kent mixture modelling on the sphere.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw labelled data from a Kent mixture")
    _common(p, data=False)
    p.add_argument("--case", help=f"preset: {', '.join(sorted(PRESETS))}")
    p.add_argument("--separation", type=float, help="four-component separation set-up, radians")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fixed-g EM fit")
    _common(p)
    p.add_argument("--g", type=int, help="number of Kent components")
    p.add_argument("--init-model", dest="init_model", help="model file used as starting point")
    p.add_argument("--init-kappa", type=float, dest="init_kappa")
    p.add_argument("--assignments", help="responsibilities CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="choose g by AIC")
    _common(p)
    p.add_argument("--g-range", dest="g_range", help="e.g. 1-7 or 2,3,5")
    p.add_argument("--poles-file", dest="poles_file", help="candidate starting poles")
    p.add_argument("--stepwise", action="store_true", default=None)
    p.add_argument("--max-g", type=int, dest="max_g")
    p.add_argument("--init-kappa", type=float, dest="init_kappa")
    p.add_argument("--init-beta", type=float, dest="init_beta")
    p.add_argument("--assignments", help="responsibilities CSV for the selected model")
    p.add_argument("--report", help="AIC table as JSON")
    p.add_argument("--plot", help="AIC bar chart (SVG)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("classify", help="responsibilities and hard labels under a model")
    _common(p, data=False)
    p.add_argument("--model", help="model file")
    p.add_argument("--report", help="misclassification summary as JSON (needs a label column)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("project", help="Schmidt-net coordinates and scatter")
    _common(p, data=False)
    p.add_argument("--model", help="colour by hardened assignment under this model")
    p.add_argument("--plot", help="scatter plot (SVG)")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("hbond", help="hydrogen-bond stratum analysis")
    _common(p)
    p.add_argument("--poles-file", dest="poles_file", help="candidate starting poles")
    p.add_argument("--stratum", help="secondary-structure pair, default helix-helix")
    p.add_argument("--max-g", type=int, dest="max_g")
    p.add_argument("--init-kappa", type=float, dest="init_kappa")
    p.add_argument("--init-beta", type=float, dest="init_beta")
    p.set_defaults(func=cmd_hbond)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    del args.verbose
    try:
        s = _settings(args)
        args.func(s)
    except NotConverged as exc:
        print(f"kentmix: not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (io.FormatError, ValidationError) as exc:
        print(f"kentmix: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"kentmix: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, EMError) as exc:
        print(f"kentmix: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
