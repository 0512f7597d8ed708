"""RFC-4180 CSV output with round-trip float formatting."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return "" if value is None else str(value)


def to_csv(header: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for row in rows:
        missing = set(header) - set(row)
        if missing:
            raise KeyError(f"row lacks columns {sorted(missing)}")
        w.writerow([fmt(row[c]) for c in header])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(header, rows))
    return path


def read_csv(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def trajectory_rows(traj):
    """(n, t, j, x, y) rows of a trajectory."""
    t, x = traj.tg.t, traj.grid.x
    for n in range(traj.y.shape[0]):
        for j in range(x.size):
            yield {"n": n, "t": t[n], "j": j, "x": x[j], "y": traj.y[n, j]}


def observation_rows(obs, t):
    flux = [{"n": n, "t": t[n], "flux_dt": obs.flux_dt[n]} for n in range(len(t))]
    tych = [
        {"n": n, "t": t[n], "j": j, "tych": obs.tych[n, j]}
        for n in range(len(t))
        for j in range(obs.tych.shape[1])
    ]
    return flux, tych
