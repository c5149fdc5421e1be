"""Flat-file outputs: RFC-4180 CSV with 17 significant digits and JSON sidecars.

CSV files hold exactly their data columns; the schema version and the
config echo live in a ``<name>.meta.json`` sidecar next to each CSV.
"""
from __future__ import annotations

import csv
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

SCHEMA_VERSION = "nlrmt/1"


def fmt(v) -> str:
    """Number to text: integers verbatim, fractions as p/q, floats with 17 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        return str(v)
    return "%.17g" % float(v)


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, Fraction):
        return str(obj) if obj.denominator != 1 else int(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: str | Path, payload: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"schema_version": SCHEMA_VERSION, **_jsonable(payload)}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], meta: Mapping[str, Any] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    write_json(sidecar_path(path), {"columns": list(header), **(meta or {})})
    return path


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_counts(path, table, meta=None) -> Path:
    return write_csv(path, ["q", "I_i", "I_j", "b", "count"], table.rows(), meta)


def write_density(path, law, meta=None) -> Path:
    """x,rho CSV; the sidecar carries support, atom, eta and params."""
    side = {
        "support": list(law.support),
        "atom": law.atom_at_zero,
        "eta": law.eta,
        "params": law.params,
        "mass": law.total_mass_check,
        **(meta or {}),
    }
    return write_csv(path, ["x", "rho"], zip(law.grid, law.rho), side)


def write_eigenvalues(path, spectra, meta=None) -> Path:
    """One row per trial: trial index, then the sorted eigenvalues."""
    n = len(spectra[0].eigenvalues)
    header = ["trial"] + [f"ev{i}" for i in range(n)]
    rows = ([s.trial, *s.eigenvalues] for s in spectra)
    return write_csv(path, header, rows, meta)


def read_eigenvalues(path) -> np.ndarray:
    _, rows = read_csv(path)
    return np.array([[float(v) for v in r[1:]] for r in rows])
