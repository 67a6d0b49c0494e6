"""Explicit time integration of the gantry state equations.

Steps never straddle a torque discontinuity: a fixed step that contains a
breakpoint is split there, and the torque inside each (sub)step is the value
of the segment that (sub)step lies in. This keeps RK4 genuinely fourth order
under the piecewise-constant drive.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .dynamics import deriv_kernel, pack_coefficients, state_names, state_size
from .motion import TorqueProfile
from .params import GantryParams, TmdParams, validate_params

OK, OUT_OF_TRAVEL, NON_FINITE, STEP_UNDERFLOW = 0, 1, 2, 3


class SimulationError(RuntimeError):
    """Integration aborted; ``time`` is where it happened."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-5
    t_end: float | None = None
    method: str = "rk4"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    output_stride: int = 10
    settle_tail: float = 0.5

    def validate(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end is not None and not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.method not in ("rk4", "rkf45"):
            raise ValueError(f"unknown method {self.method!r}; expected 'rk4' or 'rkf45'")
        if self.method == "rkf45" and not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("adaptive integration needs positive rel_tol and abs_tol")
        if int(self.output_stride) != self.output_stride or self.output_stride < 1:
            raise ValueError(f"output_stride must be a positive integer, got {self.output_stride}")
        if not self.settle_tail >= 0:
            raise ValueError(f"settle_tail must be non-negative, got {self.settle_tail}")


@dataclass
class Trajectory:
    t: np.ndarray
    z: np.ndarray
    torque: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def with_tmd(self) -> bool:
        return self.z.shape[1] == 14

    @property
    def names(self) -> tuple[str, ...]:
        return state_names(self.with_tmd)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.z[:, self.names.index(name)]

    @property
    def x4(self) -> np.ndarray:
        return self.z[:, 6]

    @property
    def v4(self) -> np.ndarray:
        return self.z[:, 7]


def rk4_step(f: Callable, t: float, z: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``z' = f(t, z)``."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    k1 = np.asarray(f(t, z), dtype=float)
    k2 = np.asarray(f(t + 0.5 * h, z + 0.5 * h * k1), dtype=float)
    k3 = np.asarray(f(t + 0.5 * h, z + 0.5 * h * k2), dtype=float)
    k4 = np.asarray(f(t + h, z + h * k3), dtype=float)
    for i, k in enumerate((k1, k2, k3, k4), 1):
        if not np.all(np.isfinite(k)):
            raise SimulationError(f"non-finite derivative at RK stage {i} (t={t!r}, h={h!r})", t)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True, nogil=True)
def _torque_on(bp, vals, t):
    if t < bp[0] or t >= bp[-1]:
        return 0.0
    lo = 0
    hi = bp.shape[0] - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bp[mid] <= t:
            lo = mid
        else:
            hi = mid
    return vals[lo]


@njit(cache=True, nogil=True)
def _rk4_sub(c, z, h, u, freeze, x4f, k1, k2, k3, k4, tmp):
    n = z.shape[0]
    if deriv_kernel(c, z, u, freeze, x4f, k1):
        return OUT_OF_TRAVEL
    for i in range(n):
        tmp[i] = z[i] + 0.5 * h * k1[i]
    if deriv_kernel(c, tmp, u, freeze, x4f, k2):
        return OUT_OF_TRAVEL
    for i in range(n):
        tmp[i] = z[i] + 0.5 * h * k2[i]
    if deriv_kernel(c, tmp, u, freeze, x4f, k3):
        return OUT_OF_TRAVEL
    for i in range(n):
        tmp[i] = z[i] + h * k3[i]
    if deriv_kernel(c, tmp, u, freeze, x4f, k4):
        return OUT_OF_TRAVEL
    for i in range(n):
        z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    for i in range(n):
        if not np.isfinite(z[i]):
            return NON_FINITE
    return OK


@njit(cache=True, nogil=True)
def _rk4_run(c, z0, bp, vals, dt, n_steps, t_end, stride, freeze, x4f, out_z):
    n = z0.shape[0]
    z = z0.copy()
    k1 = np.empty(n); k2 = np.empty(n); k3 = np.empty(n); k4 = np.empty(n)
    tmp = np.empty(n)
    out_z[0, :] = z
    rec = 1
    eps = 1e-9 * dt
    nb = bp.shape[0]
    j = 0
    for step in range(n_steps):
        ta = step * dt
        tb = min((step + 1) * dt, t_end)
        s0 = ta
        while True:
            while j < nb and bp[j] <= s0 + eps:
                j += 1
            s1 = tb
            if j < nb and bp[j] < tb - eps:
                s1 = bp[j]
            u = _torque_on(bp, vals, 0.5 * (s0 + s1))
            status = _rk4_sub(c, z, s1 - s0, u, freeze, x4f, k1, k2, k3, k4, tmp)
            if status != OK:
                return status, s0
            if s1 == tb:
                break
            s0 = s1
        if (step + 1) % stride == 0 or step + 1 == n_steps:
            out_z[rec, :] = z
            rec += 1
    return OK, t_end


# Fehlberg 4(5) tableau
_A2 = 1.0 / 4.0
_A3 = (3.0 / 32.0, 9.0 / 32.0)
_A4 = (1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0)
_A5 = (439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0)
_A6 = (-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0)
_B4 = (25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0)
_B5 = (16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0)


@njit(cache=True, nogil=True)
def _rkf45_run(c, z0, bp, vals, stops, is_out, rtol, atol, h0, freeze, x4f, out_z):
    n = z0.shape[0]
    z = z0.copy()
    K = np.empty((6, n))
    tmp = np.empty(n)
    z4 = np.empty(n)
    z5 = np.empty(n)
    out_z[0, :] = z
    rec = 1
    t = 0.0
    h = h0
    n_acc = 0
    for s in range(stops.shape[0]):
        t1 = stops[s]
        u = _torque_on(bp, vals, 0.5 * (t + t1))
        while t1 - t > 1e-15 * max(1.0, t1):
            hh = min(h, t1 - t)
            if hh < 1e-14 * max(1.0, t):
                return STEP_UNDERFLOW, t, n_acc
            if deriv_kernel(c, z, u, freeze, x4f, K[0]):
                return OUT_OF_TRAVEL, t, n_acc
            for i in range(n):
                tmp[i] = z[i] + hh * _A2 * K[0, i]
            if deriv_kernel(c, tmp, u, freeze, x4f, K[1]):
                h = 0.2 * hh
                continue
            for i in range(n):
                tmp[i] = z[i] + hh * (_A3[0] * K[0, i] + _A3[1] * K[1, i])
            if deriv_kernel(c, tmp, u, freeze, x4f, K[2]):
                h = 0.2 * hh
                continue
            for i in range(n):
                tmp[i] = z[i] + hh * (_A4[0] * K[0, i] + _A4[1] * K[1, i] + _A4[2] * K[2, i])
            if deriv_kernel(c, tmp, u, freeze, x4f, K[3]):
                h = 0.2 * hh
                continue
            for i in range(n):
                tmp[i] = z[i] + hh * (_A5[0] * K[0, i] + _A5[1] * K[1, i] + _A5[2] * K[2, i]
                                      + _A5[3] * K[3, i])
            if deriv_kernel(c, tmp, u, freeze, x4f, K[4]):
                h = 0.2 * hh
                continue
            for i in range(n):
                tmp[i] = z[i] + hh * (_A6[0] * K[0, i] + _A6[1] * K[1, i] + _A6[2] * K[2, i]
                                      + _A6[3] * K[3, i] + _A6[4] * K[4, i])
            if deriv_kernel(c, tmp, u, freeze, x4f, K[5]):
                h = 0.2 * hh
                continue
            err = 0.0
            for i in range(n):
                a4 = 0.0
                a5 = 0.0
                for k in range(6):
                    a4 += _B4[k] * K[k, i]
                    a5 += _B5[k] * K[k, i]
                z4[i] = z[i] + hh * a4
                z5[i] = z[i] + hh * a5
                sc = atol + rtol * max(abs(z[i]), abs(z4[i]))
                e = abs(z5[i] - z4[i]) / sc
                if not np.isfinite(e):
                    e = 1e300
                if e > err:
                    err = e
            if err <= 1.0:
                # local extrapolation: advance with the fifth-order solution
                t = t + hh
                for i in range(n):
                    z[i] = z5[i]
                n_acc += 1
            fac = 5.0 if err == 0.0 else 0.9 * err ** -0.2
            h = hh * min(5.0, max(0.2, fac))
        t = t1
        if is_out[s]:
            out_z[rec, :] = z
            rec += 1
    return OK, t, n_acc


def _digest(p: GantryParams, tmd: TmdParams | None) -> str:
    payload = {"gantry": p.as_dict(), "tmd": None if tmd is None else list(tmd.as_tuple())}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def output_times(cfg: SimConfig, t_end: float) -> np.ndarray:
    n_steps = max(1, math.ceil(t_end / cfg.dt - 1e-9))
    idx = np.arange(0, n_steps + 1, cfg.output_stride)
    t = np.minimum(idx * cfg.dt, t_end)
    if idx[-1] != n_steps:
        t = np.append(t, t_end)
    return t


def simulate(
    p: GantryParams,
    tmd: TmdParams | None,
    torque: TorqueProfile,
    z0: np.ndarray | None = None,
    cfg: SimConfig = SimConfig(),
    freeze_x4: float | None = None,
) -> Trajectory:
    """Integrate the gantry from ``z0`` (rest by default) under ``torque``.

    The horizon is ``cfg.t_end`` or, if unset, the torque duration plus
    ``cfg.settle_tail``. ``freeze_x4`` holds the belt stiffness at a fixed
    carriage position (linear model).

    Raises
    ------
    SimulationError
        The carriage left the belt's valid range or the state blew up.
    """
    cfg.validate()
    validate_params(p, 0.0).raise_if_failed()
    n = state_size(tmd)
    z0 = np.zeros(n) if z0 is None else np.asarray(z0, dtype=float).copy()
    if z0.shape != (n,):
        raise ValueError(f"initial state must have shape ({n},), got {z0.shape}")
    t_end = cfg.t_end if cfg.t_end is not None else torque.duration + cfg.settle_tail
    c = pack_coefficients(p, tmd)
    bp = np.ascontiguousarray(torque.breakpoints, dtype=float)
    vals = np.ascontiguousarray(torque.values, dtype=float)
    freeze = freeze_x4 is not None
    x4f = float(freeze_x4) if freeze else 0.0
    t_out = output_times(cfg, t_end)
    out_z = np.empty((len(t_out), n))
    meta = {"params_digest": _digest(p, tmd), "method": cfg.method, "dt": cfg.dt,
            "t_end": t_end, "output_stride": cfg.output_stride}

    if cfg.method == "rk4":
        n_steps = max(1, math.ceil(t_end / cfg.dt - 1e-9))
        status, t_fail = _rk4_run(c, z0, bp, vals, cfg.dt, n_steps, t_end,
                                  int(cfg.output_stride), freeze, x4f, out_z)
    else:
        inner = bp[(bp > 0) & (bp < t_end)]
        stops = np.union1d(t_out[1:], inner)
        is_out = np.isin(stops, t_out)
        status, t_fail, n_acc = _rkf45_run(c, z0, bp, vals, stops, is_out, cfg.rel_tol,
                                           cfg.abs_tol, cfg.dt, freeze, x4f, out_z)
        meta["accepted_steps"] = int(n_acc)
    if status == OUT_OF_TRAVEL:
        raise SimulationError(
            f"carriage left the valid belt range ({-p.L1:g}, {p.L2:g}) m near t={t_fail:.6g} s",
            t_fail)
    if status == NON_FINITE:
        raise SimulationError(f"state became non-finite near t={t_fail:.6g} s", t_fail)
    if status == STEP_UNDERFLOW:
        raise SimulationError(f"adaptive step size underflow at t={t_fail:.6g} s", t_fail)
    return Trajectory(t=t_out, z=out_z, torque=torque.sample(t_out), metadata=meta)
