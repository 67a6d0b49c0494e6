"""End-to-end acceptance checks, one test per criterion.

Each test records its measured quantity before asserting, and the run ends
with a PASS/FAIL line per criterion in the terminal summary.
"""
import time

import numpy as np
import pytest

from gantrysim import (TABLE_II, KinematicLimits, SimConfig, TmdParams, TorqueProfile,
                       assemble_A, build_ideal_profile, deriv, mechanical_energy, run_doe,
                       simulate, spectrum, tune_tmd)
from gantrysim.analysis import DoePlan
from gantrysim.cli import main
from gantrysim.config import DEFAULT_TUNE_BOUNDS


def test_criterion_01_equilibrium(params, verdict):
    simulate(params, TABLE_II[0][1], TorqueProfile.zero(0.01), cfg=SimConfig(t_end=0.01))  # warm-up
    worst = slowest = 0.0
    for _, tmd in TABLE_II:
        t0 = time.perf_counter()
        tr = simulate(params, tmd, TorqueProfile.zero(1.0), cfg=SimConfig(t_end=1.0, output_stride=1))
        slowest = max(slowest, time.perf_counter() - t0)
        worst = max(worst, float(np.abs(tr.z).max()))
    verdict(f"max|state| = {worst:.3g}, slowest run {slowest:.3f} s")
    assert worst < 1e-12
    assert slowest < 1.0


def test_criterion_02_energy_conservation(params, verdict):
    p = params.undamped()
    z0 = np.random.default_rng(0).standard_normal(12)
    z0 *= 1e-3 / np.linalg.norm(z0)
    tr = simulate(p, None, TorqueProfile.zero(1.0), z0,
                  SimConfig(dt=1e-5, t_end=1.0, output_stride=1), freeze_x4=0.0)
    E = np.array([mechanical_energy(p, None, z, 0.0) for z in tr.z])
    drift = float(np.max(np.abs(E - E[0])) / E[0])
    verdict(f"max relative energy drift = {drift:.3g} (bound 1e-6)")
    assert drift < 1e-6


@pytest.mark.parametrize("x4", [0.0, 0.09, 0.18])
def test_criterion_03_stability_spectrum(params, x4, verdict):
    tmd = TABLE_II[8][1]
    damped = [spectrum(params, x4), spectrum(params, x4, tmd)]
    re_max = max(float(ev.real.max()) for ev in damped)
    p0 = params.undamped()
    ratios = []
    for ev in (spectrum(p0, x4), spectrum(p0, x4, TmdParams(tmd.m7, tmd.k7, 0.0))):
        ratios.append(float(np.abs(ev.real).max() / np.abs(ev.imag).max()))
    verdict(f"damped max Re = {re_max:.3g}, undamped max|Re|/max|Im| = {max(ratios):.3g}")
    assert re_max <= 1e-9
    assert max(ratios) < 1e-9


def test_criterion_04_integrator_order(params, drive, verdict):
    dt = 2e-4

    def end(h):
        return simulate(params, None, drive, cfg=SimConfig(dt=h, output_stride=10**9)).z[-1]

    ref = end(dt / 8)
    e1 = np.linalg.norm(end(dt) - ref)
    e2 = np.linalg.norm(end(dt / 2) - ref)
    ratio = float(e1 / e2)
    verdict(f"error ratio {ratio:.3f} at dt={dt:g} -> {dt / 2:g}")
    assert 12 <= ratio <= 20


def test_criterion_05_model_path_equivalence(params, verdict):
    rng = np.random.default_rng(5)
    worst = 0.0
    for i in range(1000):
        tmd = TABLE_II[i % 9][1] if i % 2 else None
        x4 = rng.uniform(-0.07, 0.25)
        n = 14 if tmd else 12
        z = rng.standard_normal(n) * rng.choice([1e-6, 1e-3, 1.0])
        T = rng.standard_normal() * 1e-2
        m = assemble_A(params, x4, tmd)
        lhs = deriv(params, tmd, z, T, freeze_x4=x4)
        rhs = m.A @ z + m.B * T
        scale = np.abs(m.A) @ np.abs(z) + np.abs(m.B) * abs(T)
        worst = max(worst, float(np.max(np.abs(lhs - rhs) / np.where(scale > 0, scale, 1.0))))
    verdict(f"max relative deviation {worst:.3g}")
    assert worst < 1e-12


def test_criterion_06_vanishing_tmd(params, drive, verdict):
    cfg = SimConfig()
    base = simulate(params, None, drive, cfg=cfg)
    tiny = simulate(params, TmdParams(1e-9, 1e-9, 0.0), drive, cfg=cfg)
    scale = np.abs(base.z).max(axis=0)
    dev = float((np.abs(tiny.z[:, :12] - base.z) / scale).max())
    verdict(f"max relative deviation on shared states {dev:.3g}")
    assert dev < 1e-6


def test_criterion_07_doe_ranking(params, profile, verdict):
    t0 = time.perf_counter()
    res = run_doe(params, DoePlan.table_ii(), profile, SimConfig(dt=1e-5, output_stride=10))
    elapsed = time.perf_counter() - t0
    worst, best = res[-1], res[0]
    verdict(f"worst {worst.tmd.as_tuple()}, best {best.tmd.as_tuple()}, {elapsed:.2f} s")
    assert all(r.ok for r in res)
    assert worst.tmd == TmdParams(0.5, 1.0, 1.0)
    assert best.tmd.k7 == 100.0
    assert elapsed < 60.0


def test_criterion_08_tuner_domination(params, profile, verdict):
    cfg = SimConfig()
    table_best = run_doe(params, DoePlan.table_ii(), profile, cfg, n_jobs=4)[0].metrics.rms_pos_error
    res = tune_tmd(params, DEFAULT_TUNE_BOUNDS, profile, cfg, n_jobs=4)
    verdict(f"tuned {res.objective:.6g} m at {res.tmd.as_tuple()} vs table best {table_best:.6g} m")
    assert res.objective <= table_best


def test_criterion_09_profile_arithmetic(verdict):
    lim = KinematicLimits()
    prof = build_ideal_profile(lim)
    v, a, d = lim.v_print, lim.a_print, lim.distance
    t_acc = v / a
    t_cruise = (d - v * t_acc) / v
    one_way = 2 * t_acc + t_cruise
    seg = prof.segments
    got = (seg[0].duration, seg[1].duration, seg[2].end - seg[0].start, prof.total_duration)
    want = (t_acc, t_cruise, one_way, 2 * one_way + lim.z_hop_time)
    dev = max(abs(g - w) for g, w in zip(got, want))
    verdict(f"durations {tuple(round(g, 12) for g in got)}, max deviation {dev:.3g} s")
    assert want == pytest.approx((0.5, 0.7, 1.7, 3.44), abs=1e-12)
    assert dev < 1e-12


def test_criterion_10_byte_determinism(tmp_path, verdict):
    out = tmp_path / "doe"

    def snapshot():
        assert main(["doe", "--out", str(out)]) == 0
        return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}

    first, second = snapshot(), snapshot()
    differing = [name for name in first if first[name] != second.get(name)]
    verdict(f"{len(first)} files compared, {len(differing)} differ")
    assert first.keys() == second.keys()
    assert not differing
