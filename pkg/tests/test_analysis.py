import itertools
import math

import numpy as np
import pytest

from gantrysim import analysis
from gantrysim.analysis import (CaseMetrics, CaseResult, DoePlan, evaluate, main_effects,
                                rank_results, run_doe, tracking_metrics, tune_tmd)
from gantrysim.integrator import SimConfig, SimulationError, Trajectory
from gantrysim.motion import ideal_states
from gantrysim.params import TABLE_II, TmdParams

FAST = SimConfig(dt=1e-4, output_stride=1)


def manufactured(profile, offset=0.0):
    t = np.linspace(0.0, profile.total_duration + 0.5, 4001)
    xi, vi, _ = ideal_states(profile, t)
    z = np.zeros((t.size, 12))
    z[:, 6] = xi + offset
    z[:, 7] = vi
    return Trajectory(t=t, z=z, torque=np.zeros_like(t), metadata={})


def test_perfect_tracking_gives_zero_metrics(profile):
    m = tracking_metrics(manufactured(profile), profile)
    assert m == CaseMetrics(0.0, 0.0, 0.0, 0.0, 0.0)


def test_constant_offset(profile):
    m = tracking_metrics(manufactured(profile, offset=1e-3), profile)
    assert m.rms_pos_error == pytest.approx(1e-3, rel=1e-12)
    assert m.max_abs_pos_error == pytest.approx(1e-3, rel=1e-12)
    assert m.rms_vel_error == 0.0
    assert math.isinf(m.settle_time)


def test_short_horizon_rejected(profile):
    traj = manufactured(profile)
    cut = traj.t < profile.total_duration - 0.1
    short = Trajectory(traj.t[cut], traj.z[cut], traj.torque[cut], {})
    with pytest.raises(ValueError, match="before the motion ends"):
        tracking_metrics(short, profile)


def test_baseline_metrics_regression(params, profile):
    m, _ = evaluate(params, None, profile, SimConfig())
    assert m.rms_pos_error == pytest.approx(7.672752e-07, rel=1e-5)
    assert m.max_abs_pos_error == pytest.approx(2.454126e-06, rel=1e-5)
    assert m.rms_vel_error > 0 and m.transition_overshoot > 0
    assert m.settle_time == 0.0


@pytest.fixture(scope="module")
def doe_fast(params, profile):
    return run_doe(params, DoePlan.table_ii(), profile, FAST, n_jobs=3)


def test_doe_runs_every_case(doe_fast):
    assert len(doe_fast) == 9
    assert {r.label for r in doe_fast} == {lab for lab, _ in TABLE_II}
    assert all(r.ok for r in doe_fast)
    by_label = {r.label: r for r in doe_fast}
    assert by_label["Passive case 1"].tmd == TmdParams(0.005, 1.0, 0.1)
    f = [r.metrics.rms_pos_error for r in doe_fast]
    assert f == sorted(f)


def test_doe_ranking_extremes(doe_fast):
    assert doe_fast[-1].tmd == TmdParams(0.5, 1.0, 1.0)
    assert doe_fast[0].tmd.k7 == 100.0


def test_duplicate_cases_identical(params, profile):
    tmd = TABLE_II[4][1]
    res = run_doe(params, DoePlan((("a", tmd), ("b", tmd))), profile, FAST)
    assert res[0].metrics == res[1].metrics
    assert [r.label for r in res] == ["a", "b"]


def test_parallel_matches_serial(params, profile, doe_fast):
    serial = run_doe(params, DoePlan.table_ii(), profile, FAST, n_jobs=1)
    assert [(r.label, r.metrics) for r in serial] == [(r.label, r.metrics) for r in doe_fast]


def test_failed_case_is_isolated(params, profile, monkeypatch):
    real = analysis.evaluate

    def flaky(p, tmd, prof, cfg, band):
        if tmd.m7 == 0.05:
            raise SimulationError("carriage left the valid belt range", 0.1)
        return real(p, tmd, prof, cfg, band)

    monkeypatch.setattr(analysis, "evaluate", flaky)
    res = run_doe(params, DoePlan.table_ii(), profile, FAST)
    failed = [r for r in res if not r.ok]
    assert len(failed) == 3 and res[-3:] == failed
    assert all("belt range" in r.error for r in failed)


@pytest.mark.parametrize("scale", [1e-6, 3.0, 1e4])
def test_rank_invariant_under_positive_scaling(scale, rng):
    vals = rng.random(9)
    mk = lambda v: CaseMetrics(v, v, v, v, v)
    base = [CaseResult(f"c{i}", None, mk(v)) for i, v in enumerate(vals)]
    scaled = [CaseResult(f"c{i}", None, mk(v * scale)) for i, v in enumerate(vals)]
    assert [r.label for r in rank_results(base)] == [r.label for r in rank_results(scaled)]


def _synthetic(values):
    return [CaseResult(lab, tmd, CaseMetrics(v, 0, 0, 0, 0)) for (lab, tmd), v in zip(TABLE_II, values)]


def test_main_effects_constant_response():
    eff = main_effects(_synthetic([2.5] * 9))
    for lv in eff.levels.values():
        assert set(lv.values()) == {2.5}


def test_main_effects_index_response():
    eff = main_effects(_synthetic(range(1, 10)))
    assert eff.levels["m7"] == {0.005: 2.0, 0.05: 5.0, 0.5: 8.0}
    assert eff.best_level["m7"] == 0.005


def test_main_effects_needs_complete_plan():
    with pytest.raises(ValueError, match="all 9"):
        main_effects(_synthetic(range(1, 10))[:8])


def test_main_effects_rejects_unbalanced_plan():
    res = _synthetic(range(1, 10))
    res[0] = CaseResult("x", TmdParams(0.5, 1.0, 0.1), res[0].metrics)
    with pytest.raises(ValueError, match="balanced"):
        main_effects(res)


def test_stiffness_level_100_best(doe_fast):
    eff = main_effects(doe_fast)
    assert eff.best_level["k7"] == 100.0


def test_vanishing_tmd_matches_baseline(params, profile):
    base, _ = evaluate(params, None, profile, FAST)
    tiny, _ = evaluate(params, TmdParams(1e-9, 1e-9, 0.0), profile, FAST)
    assert abs(tiny.rms_pos_error - base.rms_pos_error) < 1e-9


def test_tune_degenerate_bounds(params, profile):
    tmd = TmdParams(0.05, 10.0, 0.5)
    bounds = {"m7": (0.05, 0.05), "k7": (10.0, 10.0), "beta7": (0.5, 0.5)}
    res = tune_tmd(params, bounds, profile, FAST)
    expected, _ = evaluate(params, tmd, profile, FAST)
    assert res.tmd == tmd
    assert res.metrics == expected


def test_tune_grid_equals_exhaustive_enumeration(params, profile):
    levels = {"m7": [0.005, 0.05, 0.5], "k7": [1.0, 10.0, 100.0], "beta7": [0.1, 0.5, 1.0]}
    bounds = {k: (min(v), max(v)) for k, v in levels.items()}
    res = tune_tmd(params, bounds, profile, FAST, grid=levels, refine=False, n_jobs=4)
    best = min(itertools.product(*levels.values()),
               key=lambda x: evaluate(params, TmdParams(*x), profile, FAST)[0].rms_pos_error)
    assert res.tmd == TmdParams(*best)
    assert len(res.trace) == 27


def test_tune_refinement_never_worse_than_grid(params, profile):
    bounds = {"m7": (0.005, 0.5), "k7": (1.0, 100.0), "beta7": (0.1, 1.0)}
    res = tune_tmd(params, bounds, profile, FAST, max_evals=30, n_jobs=4)
    assert res.objective <= res.grid_objective
    for j, name in enumerate(("m7", "k7", "beta7")):
        lo, hi = bounds[name]
        assert lo <= res.tmd.as_tuple()[j] <= hi


def test_tune_rejects_bad_bounds(params, profile):
    with pytest.raises(ValueError, match="bounds"):
        tune_tmd(params, {"m7": (1.0, 0.5), "k7": (1, 2), "beta7": (1, 2)}, profile, FAST)
