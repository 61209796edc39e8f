"""CSV/JSON writers.  Floats are written with ``repr`` so reruns are byte-identical."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .integrator import TrajectoryRecord
from .moments import ProbabilityStats, StudyTable

TRAJECTORY_COLUMNS = ["time", "h_sq", "v_sq", "a_sq", "dissipation", "level", "seed", "stream"]
STUDY_COLUMNS = ["study", "scenario_hash", "level", "T", "param", "n_samples",
                 "mean", "ci", "min", "max", "excluded"]


def _num(x) -> str:
    return repr(float(x))


def trajectory_csv(record: TrajectoryRecord) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for i in range(len(record)):
        w.writerow([_num(record.times[i]), _num(record.h_sq[i]), _num(record.v_sq[i]),
                    _num(record.a_sq[i]), _num(record.dissipation[i]),
                    record.level, record.seed, record.stream])
    return buf.getvalue()


def write_trajectory(record: TrajectoryRecord, path) -> list[Path]:
    """CSV plus, when coefficients were recorded, a ``.coeffs.npy`` sidecar."""
    path = Path(path)
    path.write_text(trajectory_csv(record))
    written = [path]
    if record.coeffs is not None:
        side = path.with_suffix(".coeffs.npy")
        np.save(side, record.coeffs)
        written.append(side)
    return written


def study_rows(table: StudyTable) -> list[dict]:
    rows = []
    for r in table.rows:
        s = r.stats
        if isinstance(s, ProbabilityStats):
            lo, hi = s.lower, s.upper
        else:
            lo, hi = s.min, s.max
        rows.append({"study": r.study, "scenario_hash": table.scenario_hash, "level": r.level,
                     "T": float(r.T), "param": r.param, "n_samples": s.n_samples,
                     "mean": float(s.mean), "ci": float(s.ci), "min": float(lo), "max": float(hi),
                     "excluded": s.excluded})
    return rows


def study_csv(table: StudyTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STUDY_COLUMNS)
    for row in study_rows(table):
        w.writerow([_num(row[c]) if isinstance(row[c], float) else row[c] for c in STUDY_COLUMNS])
    return buf.getvalue()


def study_json(table: StudyTable) -> str:
    return json.dumps({"study": table.study, "scenario_hash": table.scenario_hash,
                       "extra": table.extra, "rows": study_rows(table)}, indent=2, sort_keys=True) + "\n"


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path
