"""Data files, model files and pole lists."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .kent import KentParams
from .mixture import MixtureModel
from .sphere import angles_to_vector, check_unit, vector_to_angles

SCHEMA_VERSION = 1
ANGLE_MODES = ("vectors", "radians", "degrees")


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def _read_rows(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None:
        return [], []
    return [f.strip() for f in reader.fieldnames], list(reader)


def read_data(path, angles="vectors"):
    """Read observations as ``(x, labels)``; `labels` is None without a label column.

    ``angles="vectors"`` expects columns x1,x2,x3; otherwise columns psi,chi
    in radians or degrees.
    """
    if angles not in ANGLE_MODES:
        raise ValueError(f"angles must be one of {ANGLE_MODES}")
    fields, rows = _read_rows(path)
    want = ["x1", "x2", "x3"] if angles == "vectors" else ["psi", "chi"]
    missing = [c for c in want if c not in fields]
    if missing:
        raise FormatError(f"{path}: missing columns {missing}")
    try:
        vals = np.array([[float(r[c]) for c in want] for r in rows], dtype=float).reshape(-1, len(want))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: non-numeric value ({exc})") from None
    if angles == "vectors":
        x = vals
        try:
            check_unit(x, tol=1e-6)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
        x = x / np.linalg.norm(x, axis=1, keepdims=True) if len(x) else x.reshape(0, 3)
    else:
        if angles == "degrees":
            vals = np.radians(vals)
        x = angles_to_vector(vals[:, 0], vals[:, 1]).reshape(-1, 3)
    labels = None
    if "label" in fields:
        labels = np.array([int(r["label"]) for r in rows], dtype=int)
    return x, labels


def write_data(path, x, labels=None):
    x = np.asarray(x, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "x3"] + (["label"] if labels is not None else []))
        for i, row in enumerate(x):
            out = [repr(float(v)) for v in row]
            if labels is not None:
                out.append(int(labels[i]))
            w.writerow(out)


def read_poles(path, angles="radians"):
    """Candidate poles from CSV: x1,x2,x3 columns, or psi,chi in `angles` units."""
    fields, _ = _read_rows(path)
    if {"x1", "x2", "x3"} <= set(fields):
        mode = "vectors"
    else:
        mode = "radians" if angles == "vectors" else angles
    x, _ = read_data(path, angles=mode)
    return x


def write_poles(path, poles):
    psi, chi = vector_to_angles(np.asarray(poles, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["psi", "chi"])
        for p, c in zip(np.atleast_1d(psi), np.atleast_1d(chi)):
            w.writerow([repr(float(p)), repr(float(c))])


def model_to_dict(model, fit=None):
    comps = []
    weights = list(map(float, model.weights))
    if model.uniform:
        comps.append({"type": "uniform", "pi": weights[0]})
    for k, pi in zip(model.kents, weights[model.offset:]):
        comps.append({
            "type": "kent",
            "kappa": float(k.kappa),
            "beta": float(k.beta),
            "gamma": [float(v) for v in k.gamma.reshape(-1)],
            "pi": pi,
        })
    return {"schema_version": SCHEMA_VERSION, "components": comps, "fit": dict(fit or {})}


def model_from_dict(d):
    if d.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {d.get('schema_version')!r}")
    kents, kw, uw = [], [], None
    for c in d.get("components", []):
        kind = c.get("type")
        if kind == "uniform":
            if uw is not None:
                raise FormatError("more than one uniform component")
            uw = float(c["pi"])
        elif kind == "kent":
            gamma = np.array(c["gamma"], dtype=float).reshape(3, 3)
            try:
                kents.append(KentParams(c["kappa"], c["beta"], gamma))
            except ValueError as exc:
                raise FormatError(f"invalid Kent component: {exc}") from None
            kw.append(float(c["pi"]))
        else:
            raise FormatError(f"unknown component type {kind!r}")
    weights = ([uw] if uw is not None else []) + kw
    try:
        return MixtureModel(tuple(kents), weights, uw is not None)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def save_model(path, model, fit=None):
    Path(path).write_text(json.dumps(model_to_dict(model, fit), indent=2) + "\n")


def load_model(path):
    """Returns ``(model, fit_metadata)``."""
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return model_from_dict(d), d.get("fit", {})


def component_names(model):
    """Column headers for responsibilities: ``uniform``, ``kent1``, ``kent2``..."""
    return (["uniform"] if model.uniform else []) + [f"kent{i + 1}" for i in range(model.g_kent)]


def write_assignments(path, tau, labels, names, truth=None):
    """Responsibilities, hard label (1-based component index) and optional truth."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"tau_{n}" for n in names] + ["label"] + (["truth"] if truth is not None else []))
        for j in range(len(tau)):
            row = [repr(float(v)) for v in tau[j]] + [int(labels[j]) + 1]
            if truth is not None:
                row.append(int(truth[j]))
            w.writerow(row)
