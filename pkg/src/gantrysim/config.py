"""Sectioned key-value configuration documents.

Both spellings are accepted and may be mixed::

    [gantry]
    m6 = 0.611
    L1_mm = 80

    gantry.k3 = 6410

Lengths of the gantry may be given in millimetres with an ``_mm`` suffix.
Kinematic limits are always in millimetres and seconds. Anything not given
takes the measured-machine default; unknown keys are rejected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .analysis import SETTLE_BAND, DoePlan
from .integrator import SimConfig
from .motion import MM, ConfigError, KinematicLimits
from .params import TABLE_II, GantryParams, TmdParams, validate_params

SECTIONS = ("gantry", "tmd", "limits", "sim", "doe", "analysis", "tune", "output")
MM_FIELDS = ("R", "L1", "L2", "L", "L0", "b")
DEFAULT_TMD = TABLE_II[8][1]
DEFAULT_TUNE_BOUNDS = {"m7": (0.005, 0.5), "k7": (1.0, 100.0), "beta7": (0.1, 1.0)}


@dataclass(frozen=True)
class TuneSettings:
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_TUNE_BOUNDS))
    grid: int = 3
    max_evals: int = 120
    refine: bool = True


@dataclass(frozen=True)
class Config:
    gantry: GantryParams = GantryParams()
    tmd: TmdParams | None = DEFAULT_TMD
    limits: KinematicLimits = KinematicLimits()
    sim: SimConfig = SimConfig()
    doe: DoePlan | None = None
    settle_band: float = SETTLE_BAND
    tune: TuneSettings = TuneSettings()
    output_dir: str = "results"

    @property
    def plan(self) -> DoePlan:
        return self.doe if self.doe is not None else DoePlan.table_ii()

    def validate(self) -> None:
        self.limits.validate()
        self.sim.validate()
        validate_params(self.gantry, self.limits.distance * MM).raise_if_failed()
        if not self.settle_band > 0:
            raise ConfigError(f"analysis.settle_band must be positive, got {self.settle_band}")


def _number(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {text!r}") from None


def _numbers(text: str, n: int, where: str) -> tuple[float, ...]:
    parts = [s.strip() for s in text.split(",")]
    if len(parts) != n:
        raise ConfigError(f"{where}: expected {n} comma-separated numbers, got {text!r}")
    return tuple(_number(s, where) for s in parts)


def _bool(text: str, where: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{where}: expected true/false, got {text!r}")


def _entries(text: str):
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        head, dot, rest = key.partition(".")
        if dot and head in SECTIONS:
            sec, key = head, rest.strip()
        elif section is not None:
            sec = section
        else:
            raise ConfigError(f"line {lineno}: key {key!r} outside any section")
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        yield lineno, sec, key, value


def load_config(text: str) -> Config:
    """Parse a configuration document; raises :class:`ConfigError` on any problem."""
    gantry: dict[str, float] = {}
    tmd: dict[str, float] = {}
    tmd_enabled = True
    limits: dict[str, float] = {}
    sim: dict = {}
    doe: list[tuple[str, TmdParams]] = []
    tune: dict = {}
    cfg = Config()
    settle_band = cfg.settle_band
    output_dir = cfg.output_dir
    seen: set[tuple[str, str]] = set()

    gantry_names = {f.name for f in fields(GantryParams)}
    limit_names = {f.name for f in fields(KinematicLimits)}

    for lineno, sec, key, value in _entries(text):
        where = f"line {lineno}: {sec}.{key}"
        if (sec, key) in seen:
            raise ConfigError(f"{where} given twice")
        seen.add((sec, key))
        if sec == "gantry":
            if key in gantry_names:
                name, scale = key, 1.0
            elif key.endswith("_mm") and key[:-3] in MM_FIELDS:
                name, scale = key[:-3], MM
            else:
                raise ConfigError(f"{where}: unknown key {sec}.{key}")
            if name in gantry:
                raise ConfigError(f"{where}: {name} given in both m and mm")
            gantry[name] = _number(value, where) * scale
        elif sec == "tmd":
            if key == "enabled":
                tmd_enabled = _bool(value, where)
            elif key in ("m7", "k7", "beta7"):
                tmd[key] = _number(value, where)
            else:
                raise ConfigError(f"{where}: unknown key {sec}.{key}")
        elif sec == "limits":
            if key not in limit_names:
                raise ConfigError(f"{where}: unknown key {sec}.{key}")
            limits[key] = _number(value, where)
        elif sec == "sim":
            if key in ("dt", "rel_tol", "abs_tol", "settle_tail"):
                sim[key] = _number(value, where)
            elif key == "t_end":
                sim[key] = None if value.lower() == "auto" else _number(value, where)
            elif key == "method":
                sim[key] = value
            elif key == "output_stride":
                stride = _number(value, where)
                if stride != int(stride):
                    raise ConfigError(f"{where}: expected an integer, got {value!r}")
                sim[key] = int(stride)
            else:
                raise ConfigError(f"{where}: unknown key {sec}.{key}")
        elif sec == "doe":
            try:
                doe.append((key, TmdParams(*_numbers(value, 3, where))))
            except ValueError as exc:
                raise ConfigError(f"{where}: {exc}") from None
        elif sec == "analysis":
            if key != "settle_band":
                raise ConfigError(f"{where}: unknown key {sec}.{key}")
            settle_band = _number(value, where)
        elif sec == "tune":
            if key in ("m7", "k7", "beta7"):
                tune.setdefault("bounds", dict(DEFAULT_TUNE_BOUNDS))[key] = _numbers(value, 2, where)
            elif key in ("grid", "max_evals"):
                n = _number(value, where)
                if n != int(n) or n < 1:
                    raise ConfigError(f"{where}: expected a positive integer, got {value!r}")
                tune[key] = int(n)
            elif key == "refine":
                tune[key] = _bool(value, where)
            else:
                raise ConfigError(f"{where}: unknown key {sec}.{key}")
        elif sec == "output":
            if key != "dir":
                raise ConfigError(f"{where}: unknown key {sec}.{key}")
            output_dir = value

    try:
        tmd_params = None
        if tmd_enabled:
            tmd_params = TmdParams(**{**dict(zip(("m7", "k7", "beta7"), DEFAULT_TMD.as_tuple())), **tmd})
        config = Config(
            gantry=replace(GantryParams(), **gantry),
            tmd=tmd_params,
            limits=replace(KinematicLimits(), **limits),
            sim=replace(SimConfig(), **sim),
            doe=DoePlan(tuple(doe)) if doe else None,
            settle_band=settle_band,
            tune=replace(TuneSettings(), **tune),
            output_dir=output_dir,
        )
        config.validate()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else str(v)


def dump_config(cfg: Config) -> str:
    """Serialise ``cfg`` so that ``load_config(dump_config(cfg)) == cfg``."""
    lines = ["[gantry]"]
    lines += [f"{k} = {_fmt(v)}" for k, v in cfg.gantry.as_dict().items()]
    lines += ["", "[tmd]"]
    if cfg.tmd is None:
        lines.append("enabled = false")
    else:
        lines += [f"m7 = {_fmt(cfg.tmd.m7)}", f"k7 = {_fmt(cfg.tmd.k7)}",
                  f"beta7 = {_fmt(cfg.tmd.beta7)}"]
    lines += ["", "[limits]"]
    lines += [f"{f.name} = {_fmt(getattr(cfg.limits, f.name))}" for f in fields(KinematicLimits)]
    s = cfg.sim
    lines += ["", "[sim]", f"dt = {_fmt(s.dt)}",
              f"t_end = {'auto' if s.t_end is None else _fmt(s.t_end)}",
              f"method = {s.method}", f"rel_tol = {_fmt(s.rel_tol)}",
              f"abs_tol = {_fmt(s.abs_tol)}", f"output_stride = {s.output_stride}",
              f"settle_tail = {_fmt(s.settle_tail)}"]
    if cfg.doe is not None:
        lines += ["", "[doe]"]
        lines += [f"{lab} = {tmd.m7!r}, {tmd.k7!r}, {tmd.beta7!r}" for lab, tmd in cfg.doe.cases]
    lines += ["", "[analysis]", f"settle_band = {_fmt(cfg.settle_band)}"]
    t = cfg.tune
    lines += ["", "[tune]"]
    lines += [f"{k} = {_fmt(lo)}, {_fmt(hi)}" for k, (lo, hi) in t.bounds.items()]
    lines += [f"grid = {t.grid}", f"max_evals = {t.max_evals}",
              f"refine = {'true' if t.refine else 'false'}"]
    lines += ["", "[output]", f"dir = {cfg.output_dir}", ""]
    return "\n".join(lines)
