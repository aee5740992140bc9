"""CSV and JSON writers for the tables the CLI produces.

Floats are written with ``repr`` so that equal numbers always give equal
bytes; nothing time- or host-dependent is ever written.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ensemble import Histogram, MomentPoint, PathEnsemble
from .levy import TailFit


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_rows(path: Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_density(path: Path, densities: Sequence[tuple[str, Histogram]]) -> Path:
    rows = ((src, a, b, m) for src, hist in densities for a, b, m in hist.rows())
    return write_rows(path, ("source", "bin_left", "bin_right", "mass"), rows)


def write_moments(path: Path, curves: Sequence[tuple[str, Sequence[MomentPoint]]]) -> Path:
    rows = ((p.t, p.mean_abs, p.se, src) for src, curve in curves for p in curve)
    return write_rows(path, ("t", "mean_abs", "se", "source"), rows)


def write_tail(path: Path, fits: Sequence[tuple[str, TailFit]]) -> Path:
    rows = ((src, f.exponent, f.slope, f.intercept, f.x_min, f.x_max, f.points, f.samples) for src, f in fits)
    return write_rows(path, ("source", "exponent", "slope", "intercept", "x_min", "x_max", "points", "samples"), rows)


def write_paths(path: Path, ens: PathEnsemble, limit: int | None = None) -> Path:
    """Long-format ``(realization_id, t, x)`` rows for stored paths."""
    if ens.values is None:
        raise ValueError("the ensemble did not store paths")
    n = ens.realizations if limit is None else min(int(limit), ens.realizations)
    rows = ((i, float(t), float(ens.values[i, j])) for i in range(n) for j, t in enumerate(ens.times))
    return write_rows(path, ("realization_id", "t", "x"), rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def dumps(payload: dict) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True)
