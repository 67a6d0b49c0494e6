"""Command-line entry point: ``gantrysim {simulate,doe,tune,compare}``.

Exit status: 0 success, 1 configuration/validation error, 2 simulation failure.
"""
from __future__ import annotations

import argparse
import csv
import re
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import io
from .analysis import CaseResult, evaluate, main_effects, run_doe, tune_tmd
from .config import Config, dump_config, load_config
from .integrator import SimulationError
from .motion import ConfigError, build_ideal_profile

EXIT_OK, EXIT_CONFIG, EXIT_SIM = 0, 1, 2


def _settings(cfg: Config) -> dict:
    return {
        "limits_mm": asdict(cfg.limits),
        "sim": asdict(cfg.sim),
        "settle_band_m": cfg.settle_band,
        "junction_jerk_used": cfg.limits.jerk > 0,
    }


def _load(args) -> Config:
    cfg = Config()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        cfg = load_config(text)
    if getattr(args, "no_tmd", False):
        cfg = replace(cfg, tmd=None)
    if getattr(args, "dt", None) is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, dt=args.dt))
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=args.out)
    cfg.validate()
    return cfg


def _outdir(cfg: Config) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load(args)
    prof = build_ideal_profile(cfg.limits)
    metrics, traj = evaluate(cfg.gantry, cfg.tmd, prof, cfg.sim, cfg.settle_band)
    out = _outdir(cfg)
    (out / "config.cfg").write_text(dump_config(cfg))
    io.write_trajectory(traj, out / "trajectory.csv", prof)
    result = CaseResult("baseline" if cfg.tmd is None else "tmd", cfg.tmd, metrics)
    io.write_metrics_table([result], out / "metrics.csv")
    io.write_json({"results": io.results_document([result]), "settings": _settings(cfg),
                   "params_digest": traj.metadata["params_digest"]}, out / "metrics.json")
    print(f"rms position error {metrics.rms_pos_error:.6g} m; wrote {out}")
    return EXIT_OK


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", label).strip("_").lower()


def cmd_doe(args) -> int:
    cfg = _load(args)
    prof = build_ideal_profile(cfg.limits)
    plan = cfg.plan
    results = run_doe(cfg.gantry, plan, prof, cfg.sim, keep_trajectories=not args.no_trajectories,
                      settle_band=cfg.settle_band, n_jobs=args.jobs)
    out = _outdir(cfg)
    (out / "config.cfg").write_text(dump_config(cfg))
    io.write_metrics_table(results, out / "doe_metrics.csv")
    doc = {"results": io.results_document(results), "settings": _settings(cfg)}
    try:
        eff = main_effects(results)
        doc["main_effects"] = {"metric": eff.metric, "best_level": eff.best_level,
                               "levels": {k: {repr(lv): m for lv, m in v.items()}
                                          for k, v in eff.levels.items()}}
    except ValueError:
        pass
    io.write_json(doc, out / "doe_metrics.json")
    if not args.no_trajectories:
        tdir = out / "trajectories"
        tdir.mkdir(exist_ok=True)
        order = {lab: i for i, (lab, _) in enumerate(plan.cases, 1)}
        for r in results:
            if r.trajectory is not None:
                io.write_trajectory(r.trajectory, tdir / f"{order[r.label]:02d}_{_slug(r.label)}.csv", prof)
    for rank, r in enumerate(results, 1):
        val = f"{r.metrics.rms_pos_error:.6g} m" if r.ok else f"FAILED: {r.error}"
        print(f"{rank:2d}  {r.label:<16s} {val}")
    failed = [r for r in results if not r.ok]
    return EXIT_SIM if failed else EXIT_OK


def cmd_tune(args) -> int:
    cfg = _load(args)
    prof = build_ideal_profile(cfg.limits)
    t = cfg.tune
    res = tune_tmd(cfg.gantry, t.bounds, prof, cfg.sim, grid=t.grid, refine=t.refine,
                   max_evals=t.max_evals, settle_band=cfg.settle_band, n_jobs=args.jobs)
    out = _outdir(cfg)
    (out / "config.cfg").write_text(dump_config(cfg))
    io.write_json({
        "optimum": dict(zip(("m7", "k7", "beta7"), res.tmd.as_tuple())),
        "metrics": res.metrics.as_dict(),
        "grid_best": dict(zip(("m7", "k7", "beta7"), res.grid_best.as_tuple())),
        "grid_objective": res.grid_objective,
        "bounds": {k: list(v) for k, v in t.bounds.items()},
        "settings": _settings(cfg),
    }, out / "tune_result.json")
    with open(out / "tune_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eval", "stage", "m7_kg", "k7_N_per_m", "beta7_Ns_per_m", "rms_pos_error_m"])
        for i, (stage, m7, k7, b7, f) in enumerate(res.trace, 1):
            w.writerow([i, stage, *(format(v, ".9g") for v in (m7, k7, b7, f))])
    print(f"optimum m7={res.tmd.m7:.6g} kg k7={res.tmd.k7:.6g} N/m beta7={res.tmd.beta7:.6g} N*s/m "
          f"rms={res.objective:.6g} m")
    return EXIT_OK


def compare_trajectories(a, b) -> dict[str, float]:
    """Carriage position/velocity differences of ``a`` relative to ``b`` on ``a``'s time grid."""
    xb = np.interp(a.t, b.t, b.x4)
    vb = np.interp(a.t, b.t, b.v4)
    ex = a.x4 - xb
    ev = a.v4 - vb
    span = a.t[-1] - a.t[0]

    def rms(e):
        return float(np.sqrt(np.trapezoid(e ** 2, a.t) / span)) if span > 0 else float(np.abs(e).max())

    return {"rms_pos_error": rms(ex), "max_abs_pos_error": float(np.abs(ex).max()),
            "rms_vel_error": rms(ev), "max_abs_vel_error": float(np.abs(ev).max())}


def cmd_compare(args) -> int:
    try:
        a, _ = io.read_trajectory(args.a)
        b, _ = io.read_trajectory(args.b)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    metrics = compare_trajectories(a, b)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json({"a": str(args.a), "b": str(args.b), "metrics": metrics}, out / "compare.json")
    for k, v in metrics.items():
        print(f"{k} {v:.9g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gantrysim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tmd_flag=True):
        p.add_argument("--config", metavar="PATH", help="configuration document")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
        p.add_argument("--dt", type=float, metavar="SECONDS", help="integrator step size")
        if tmd_flag:
            p.add_argument("--no-tmd", action="store_true", help="simulate without the damper")

    p = sub.add_parser("simulate", help="one run: trajectory and metrics")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("doe", help="run the TMD case study and rank the cases")
    common(p, tmd_flag=False)
    p.add_argument("--jobs", type=int, default=1, help="cases simulated in parallel")
    p.add_argument("--no-trajectories", action="store_true", help="skip per-case trajectory files")
    p.set_defaults(func=cmd_doe)

    p = sub.add_parser("tune", help="search TMD parameters minimising RMS position error")
    common(p, tmd_flag=False)
    p.add_argument("--jobs", type=int, default=1, help="grid points simulated in parallel")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("compare", help="error metrics between two trajectory files")
    p.add_argument("a", help="trajectory CSV")
    p.add_argument("b", help="reference trajectory CSV")
    p.add_argument("--out", metavar="DIR", help="also write compare.json here")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
