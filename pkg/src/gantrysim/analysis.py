"""Tracking-error metrics, the L9 TMD case study, and TMD parameter tuning."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .integrator import SimConfig, SimulationError, Trajectory, simulate
from .motion import IdealProfile, ideal_states, torque_profile
from .params import TABLE_II, GantryParams, TmdParams

SETTLE_BAND = 50e-6
FACTORS = ("m7", "k7", "beta7")


@dataclass(frozen=True)
class CaseMetrics:
    rms_pos_error: float
    max_abs_pos_error: float
    rms_vel_error: float
    transition_overshoot: float
    settle_time: float

    def as_dict(self) -> dict[str, float]:
        return {
            "rms_pos_error": self.rms_pos_error,
            "max_abs_pos_error": self.max_abs_pos_error,
            "rms_vel_error": self.rms_vel_error,
            "transition_overshoot": self.transition_overshoot,
            "settle_time": self.settle_time,
        }


def _rms(signal: np.ndarray, t: np.ndarray) -> float:
    span = t[-1] - t[0]
    if span <= 0:
        return float(np.sqrt(np.mean(signal ** 2)))
    return float(np.sqrt(np.trapezoid(signal ** 2, t) / span))


def tracking_metrics(traj: Trajectory, prof: IdealProfile,
                     settle_band: float = SETTLE_BAND) -> CaseMetrics:
    """Carriage tracking error of ``traj`` against the rigid-machine motion.

    ``transition_overshoot`` is the largest carriage speed in excess of the
    print speed during the constant-velocity stretches that follow each
    acceleration ramp. ``settle_time`` counts from the end of the commanded
    motion until the position error stays inside ``settle_band``; it is
    ``inf`` if that never happens within the simulated horizon.
    """
    t = traj.t
    end = prof.total_duration
    if t[-1] < end - 1e-12:
        raise ValueError(f"trajectory ends at {t[-1]:.6g} s, before the motion ends at {end:.6g} s")
    xi, vi, _ = ideal_states(prof, t)
    ex = traj.x4 - xi
    ev = traj.v4 - vi

    overshoot = 0.0
    for a, b in prof.cruise_windows():
        m = (t >= a) & (t <= b)
        if m.any():
            excess = np.sign(vi[m]) * ev[m]
            overshoot = max(overshoot, float(excess.max()))

    after = t >= end
    outside = np.flatnonzero(after & (np.abs(ex) >= settle_band))
    if outside.size == 0:
        settle = 0.0
    elif outside[-1] == len(t) - 1:
        settle = math.inf
    else:
        settle = float(t[outside[-1] + 1] - end)

    return CaseMetrics(
        rms_pos_error=_rms(ex, t),
        max_abs_pos_error=float(np.max(np.abs(ex))),
        rms_vel_error=_rms(ev, t),
        transition_overshoot=max(overshoot, 0.0),
        settle_time=settle,
    )


@dataclass(frozen=True)
class DoePlan:
    cases: tuple[tuple[str, TmdParams], ...]

    def __post_init__(self):
        labels = [lab for lab, _ in self.cases]
        if len(set(labels)) != len(labels):
            raise ValueError("DOE case labels must be unique")
        if not labels:
            raise ValueError("DOE plan is empty")

    @classmethod
    def table_ii(cls) -> "DoePlan":
        return cls(TABLE_II)

    def __len__(self) -> int:
        return len(self.cases)


@dataclass
class CaseResult:
    label: str
    tmd: TmdParams | None
    metrics: CaseMetrics | None
    error: str | None = None
    trajectory: Trajectory | None = None

    @property
    def ok(self) -> bool:
        return self.metrics is not None


def evaluate(p: GantryParams, tmd: TmdParams | None, prof: IdealProfile, cfg: SimConfig,
             settle_band: float = SETTLE_BAND) -> tuple[CaseMetrics, Trajectory]:
    traj = simulate(p, tmd, torque_profile(prof, p), cfg=cfg)
    return tracking_metrics(traj, prof, settle_band), traj


def _map(fn, items, n_jobs: int):
    if n_jobs <= 1:
        return [fn(x) for x in items]
    # compiled kernels release the GIL, so threads run truly in parallel
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def rank_results(results: Iterable[CaseResult], key: str = "rms_pos_error") -> list[CaseResult]:
    """Order by ``key`` ascending; failed cases last, ties keep plan order."""
    indexed = list(enumerate(results))
    indexed.sort(key=lambda ir: (not ir[1].ok,
                                 getattr(ir[1].metrics, key) if ir[1].ok else 0.0, ir[0]))
    return [r for _, r in indexed]


def run_doe(
    p: GantryParams,
    plan: DoePlan,
    prof: IdealProfile,
    cfg: SimConfig = SimConfig(),
    keep_trajectories: bool = False,
    settle_band: float = SETTLE_BAND,
    n_jobs: int = 1,
) -> list[CaseResult]:
    """Simulate every case of ``plan`` under the same drive; best case first.

    A case whose simulation fails is reported with ``error`` set and sorted
    to the end instead of aborting the study.
    """
    def one(case):
        label, tmd = case
        try:
            m, traj = evaluate(p, tmd, prof, cfg, settle_band)
        except SimulationError as exc:
            return CaseResult(label, tmd, None, error=str(exc))
        return CaseResult(label, tmd, m, trajectory=traj if keep_trajectories else None)

    return rank_results(_map(one, plan.cases, n_jobs))


@dataclass(frozen=True)
class MainEffects:
    metric: str
    levels: dict[str, dict[float, float]]
    best_level: dict[str, float]


def main_effects(results: Sequence[CaseResult], metric: str = "rms_pos_error") -> MainEffects:
    """Per-factor, per-level mean of ``metric`` over a complete L9 design."""
    if len(results) != 9 or not all(r.ok and r.tmd is not None for r in results):
        raise ValueError("main effects need all 9 cases of an L9 plan, each simulated successfully")
    table = np.array([r.tmd.as_tuple() for r in results])
    response = np.array([getattr(r.metrics, metric) for r in results])
    levels: dict[str, dict[float, float]] = {}
    for j, name in enumerate(FACTORS):
        values, counts = np.unique(table[:, j], return_counts=True)
        if len(values) != 3 or not np.all(counts == 3):
            raise ValueError(f"factor {name} is not balanced over three levels: {dict(zip(values, counts))}")
        levels[name] = {float(v): float(response[table[:, j] == v].mean()) for v in values}
    for a, b in itertools.combinations(range(3), 2):
        pairs = {(x, y) for x, y in table[:, [a, b]]}
        if len(pairs) != 9:
            raise ValueError(f"plan is not orthogonal in factors {FACTORS[a]}, {FACTORS[b]}")
    best = {name: min(lv, key=lv.get) for name, lv in levels.items()}
    return MainEffects(metric=metric, levels=levels, best_level=best)


@dataclass
class TuneResult:
    tmd: TmdParams
    metrics: CaseMetrics
    grid_best: TmdParams
    grid_objective: float
    trace: list[tuple[str, float, float, float, float]] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.metrics.rms_pos_error


def _levels(lo: float, hi: float, n: int) -> np.ndarray:
    if lo == hi:
        return np.array([lo])
    return np.geomspace(lo, hi, n)


def tune_tmd(
    p: GantryParams,
    bounds: Mapping[str, tuple[float, float]],
    prof: IdealProfile,
    cfg: SimConfig = SimConfig(),
    grid: int | Mapping[str, Sequence[float]] = 3,
    refine: bool = True,
    max_evals: int = 120,
    settle_band: float = SETTLE_BAND,
    n_jobs: int = 1,
) -> TuneResult:
    """Minimise RMS carriage position error over TMD mass, stiffness and damping.

    A coarse grid (``grid`` log-spaced levels per parameter, or explicit level
    lists) is evaluated exhaustively, then Nelder-Mead refines from the best
    grid point in log-parameter space inside ``bounds``.
    """
    lo = np.empty(3)
    hi = np.empty(3)
    for j, name in enumerate(FACTORS):
        if name not in bounds:
            raise ValueError(f"missing bounds for {name}")
        a, b = (float(v) for v in bounds[name])
        if not (0 < a <= b):
            raise ValueError(f"bounds for {name} must satisfy 0 < low <= high, got ({a}, {b})")
        lo[j], hi[j] = a, b

    if isinstance(grid, Mapping):
        axes = [np.asarray(sorted(grid[name]), dtype=float) for name in FACTORS]
    else:
        axes = [_levels(lo[j], hi[j], int(grid)) for j in range(3)]

    trace: list[tuple[str, float, float, float, float]] = []
    cache: dict[tuple[float, float, float], tuple[float, CaseMetrics | None]] = {}

    def objective(x: tuple[float, float, float]) -> tuple[float, CaseMetrics | None]:
        key = tuple(float(v) for v in x)
        if key not in cache:
            try:
                m, _ = evaluate(p, TmdParams(*key), prof, cfg, settle_band)
                cache[key] = (m.rms_pos_error, m)
            except (SimulationError, ValueError):
                cache[key] = (math.inf, None)
        return cache[key]

    points = list(itertools.product(*axes))
    scores = _map(objective, points, n_jobs)
    for x, (f, _) in zip(points, scores):
        trace.append(("grid", *x, f))
    i_best = int(np.argmin([f for f, _ in scores]))
    if not math.isfinite(scores[i_best][0]):
        raise SimulationError("every grid evaluation failed")
    x_grid = points[i_best]
    f_grid, m_grid = scores[i_best]
    best_x, best_f, best_m = x_grid, f_grid, m_grid

    free = [j for j in range(3) if hi[j] > lo[j]]
    if refine and free:
        log_lo, log_hi = np.log10(lo), np.log10(hi)
        u0 = np.log10(np.array(x_grid))

        def full(u_free: np.ndarray) -> tuple[float, float, float]:
            u = u0.copy()
            u[free] = np.clip(u_free, log_lo[free], log_hi[free])
            return tuple(10.0 ** u)

        def f_nm(u_free: np.ndarray) -> float:
            x = full(u_free)
            f, _ = objective(x)
            trace.append(("nelder-mead", *x, f))
            return f

        # initial simplex edges of a tenth of each log-range, pointing inward
        simplex = [u0[free]]
        for k, j in enumerate(free):
            step = 0.1 * (log_hi[j] - log_lo[j])
            v = u0[free].copy()
            v[k] += step if u0[j] + step <= log_hi[j] else -step
            simplex.append(v)
        res = minimize(
            f_nm, u0[free], method="Nelder-Mead",
            bounds=list(zip(log_lo[free], log_hi[free])),
            options={"initial_simplex": np.array(simplex), "maxfev": max_evals,
                     "xatol": np.inf, "fatol": 1e-4 * f_grid, "adaptive": False},
        )
        x_nm = full(res.x)
        f_nm_val, m_nm = objective(x_nm)
        if f_nm_val < best_f:
            best_x, best_f, best_m = x_nm, f_nm_val, m_nm

    return TuneResult(tmd=TmdParams(*map(float, best_x)), metrics=best_m,
                      grid_best=TmdParams(*map(float, x_grid)),
                      grid_objective=f_grid, trace=trace)
