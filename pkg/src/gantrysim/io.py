"""CSV/JSON output of trajectories and metrics tables."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import CaseResult
from .integrator import Trajectory
from .motion import IdealProfile, ideal_states

METRIC_COLUMNS = (
    ("rms_pos_error", "rms_pos_error_m"),
    ("max_abs_pos_error", "max_abs_pos_error_m"),
    ("rms_vel_error", "rms_vel_error_m_per_s"),
    ("transition_overshoot", "transition_overshoot_m_per_s"),
    ("settle_time", "settle_time_s"),
)


def trajectory_header(with_tmd: bool) -> list[str]:
    cols = ["t", "x1", "v1", "x2", "v2", "x3", "v3", "x4", "v4", "th4", "w4", "th5", "w5"]
    if with_tmd:
        cols += ["x5", "v5"]
    return cols + ["torque", "x_ideal", "v_ideal"]


def _g(v: float) -> str:
    return format(float(v), ".9g")


def write_trajectory(traj: Trajectory, path, prof: IdealProfile | None = None) -> Path:
    """Write one row per output sample; ideal columns are zero without a profile."""
    path = Path(path)
    if prof is None:
        xi = vi = np.zeros_like(traj.t)
    else:
        xi, vi, _ = ideal_states(prof, traj.t)
    data = np.column_stack([traj.t, traj.z, traj.torque, xi, vi])
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(trajectory_header(traj.with_tmd)) + "\n")
            np.savetxt(fh, data, fmt="%.9g", delimiter=",")
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc.strerror}") from exc
    return path


def read_trajectory(path) -> tuple[Trajectory, dict[str, np.ndarray]]:
    """Load a trajectory CSV; returns the trajectory and its ideal-motion columns."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    with_tmd = "x5" in header
    if header != trajectory_header(with_tmd):
        raise ValueError(f"{path}: unexpected trajectory header {header}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = 14 if with_tmd else 12
    traj = Trajectory(t=data[:, 0], z=data[:, 1:1 + n], torque=data[:, 1 + n],
                      metadata={"source": str(path)})
    return traj, {"x_ideal": data[:, 2 + n], "v_ideal": data[:, 3 + n]}


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def write_json(obj, path) -> Path:
    """Deterministic JSON (sorted keys); non-finite floats become null."""
    path = Path(path)
    path.write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_metrics_table(results: Sequence[CaseResult], path) -> Path:
    """Ranked metrics CSV, one row per case, units in the column names."""
    path = Path(path)
    header = ["rank", "label", "m7_kg", "k7_N_per_m", "beta7_Ns_per_m"]
    header += [col for _, col in METRIC_COLUMNS] + ["error"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for rank, r in enumerate(results, 1):
            tmd = ("", "", "") if r.tmd is None else tuple(_g(v) for v in r.tmd.as_tuple())
            if r.ok:
                vals = [_g(getattr(r.metrics, name)) for name, _ in METRIC_COLUMNS]
            else:
                vals = [""] * len(METRIC_COLUMNS)
            w.writerow([rank, r.label, *tmd, *vals, r.error or ""])
    return path


def results_document(results: Sequence[CaseResult]) -> list[dict]:
    return [
        {
            "rank": rank,
            "label": r.label,
            "tmd": None if r.tmd is None else dict(zip(("m7", "k7", "beta7"), r.tmd.as_tuple())),
            "metrics": None if r.metrics is None else r.metrics.as_dict(),
            "error": r.error,
        }
        for rank, r in enumerate(results, 1)
    ]
