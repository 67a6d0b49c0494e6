"""Ideal carriage motion for a back-and-forth print pass and its drive torque."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import GantryParams, pulley_inertia

MM = 1e-3


class ConfigError(ValueError):
    """Inconsistent or infeasible configuration."""


@dataclass(frozen=True)
class KinematicLimits:
    """Firmware-style motion limits, in millimetres and seconds.

    ``jerk`` is the junction velocity step (mm/s) allowed when starting or
    stopping, as printer firmware uses the word; zero disables it.
    """

    a_max: float = 1000.0
    a_print: float = 300.0
    v_print: float = 150.0
    jerk: float = 0.0
    distance: float = 180.0
    z_hop_time: float = 0.04

    def validate(self) -> None:
        problems = []
        if not 0 < self.a_print <= self.a_max:
            problems.append(f"need 0 < a_print <= a_max, got a_print={self.a_print}, a_max={self.a_max}")
        if not self.v_print > 0:
            problems.append(f"v_print must be positive, got {self.v_print}")
        if not self.distance > 0:
            problems.append(f"distance must be positive, got {self.distance}")
        if not self.z_hop_time >= 0:
            problems.append(f"z_hop_time must be non-negative, got {self.z_hop_time}")
        if not 0 <= self.jerk < self.v_print:
            problems.append(f"need 0 <= jerk < v_print, got jerk={self.jerk}")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass(frozen=True)
class Segment:
    start: float
    duration: float
    accel: float
    v0: float
    x0: float

    @property
    def end(self) -> float:
        return self.start + self.duration

    def state(self, tau):
        return (self.x0 + self.v0 * tau + 0.5 * self.accel * tau * tau,
                self.v0 + self.accel * tau,
                self.accel)


@dataclass(frozen=True)
class IdealProfile:
    """Piecewise constant-acceleration carriage motion, SI units.

    Velocity may step by at most ``jerk`` at the start and end of each pass.
    """

    segments: tuple[Segment, ...]
    distance: float
    jerk: float
    v_print: float
    a_max: float

    @property
    def total_duration(self) -> float:
        return self.segments[-1].end

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([s.start for s in self.segments] + [self.total_duration])

    @property
    def accelerations(self) -> np.ndarray:
        return np.array([s.accel for s in self.segments])

    def cruise_windows(self) -> list[tuple[float, float]]:
        """(start, end) of every constant-velocity stretch at the print speed."""
        return [(s.start, s.end) for s in self.segments
                if s.accel == 0.0 and abs(s.v0) > 0.0 and s.duration > 0.0]


def _pass_segments(t0: float, x0: float, direction: float, a: float, v: float,
                   vj: float, d: float) -> list[Segment]:
    ramp = (v * v - vj * vj) / (2.0 * a)
    if 2.0 * ramp <= d:
        v_peak = v
        t_ramp = (v - vj) / a
        t_cruise = (d - 2.0 * ramp) / v
    else:
        v_peak = math.sqrt(vj * vj + a * d)
        t_ramp = (v_peak - vj) / a
        t_cruise = 0.0
        ramp = d / 2.0
    s = direction
    segs = [Segment(t0, t_ramp, s * a, s * vj, x0)]
    t = t0 + t_ramp
    if t_cruise > 0:
        segs.append(Segment(t, t_cruise, 0.0, s * v_peak, x0 + s * ramp))
        t += t_cruise
    # closed-form start of deceleration keeps the pass endpoint exact
    segs.append(Segment(t, t_ramp, -s * a, s * v_peak, x0 + s * (d - ramp)))
    return segs


def build_ideal_profile(lim: KinematicLimits) -> IdealProfile:
    """Forward pass, zero-torque Z-hop dwell, then the mirrored return pass."""
    lim.validate()
    a, v, vj, d = lim.a_print * MM, lim.v_print * MM, lim.jerk * MM, lim.distance * MM
    fwd = _pass_segments(0.0, 0.0, 1.0, a, v, vj, d)
    t = fwd[-1].end
    dwell = [Segment(t, lim.z_hop_time, 0.0, 0.0, d)] if lim.z_hop_time > 0 else []
    back = _pass_segments(t + lim.z_hop_time, d, -1.0, a, v, vj, d)
    return IdealProfile(segments=tuple(fwd + dwell + back), distance=d, jerk=vj,
                        v_print=v, a_max=lim.a_max * MM)


def _segment_index(prof: IdealProfile, t: float) -> int:
    # boundaries belong to the later segment
    starts = [s.start for s in prof.segments]
    return max(0, int(np.searchsorted(starts, t, side="right")) - 1)


def ideal_state_at(prof: IdealProfile, t: float) -> tuple[float, float, float]:
    """Closed-form (position, velocity, acceleration) of the ideal carriage at ``t``.

    At the very end of the profile the carriage is at rest at the origin.
    """
    total = prof.total_duration
    if not 0.0 <= t <= total:
        raise ValueError(f"t={t!r} outside profile duration [0, {total!r}]")
    if t == total:
        return 0.0, 0.0, 0.0
    seg = prof.segments[_segment_index(prof, t)]
    x, v, a = seg.state(t - seg.start)
    return float(x), float(v), float(a)


def ideal_states(prof: IdealProfile, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised :func:`ideal_state_at`; times after the profile hold the rest state."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("negative time")
    starts = np.array([s.start for s in prof.segments])
    idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(starts) - 1)
    x0 = np.array([s.x0 for s in prof.segments])[idx]
    v0 = np.array([s.v0 for s in prof.segments])[idx]
    acc = np.array([s.accel for s in prof.segments])[idx]
    tau = t - starts[idx]
    x = x0 + v0 * tau + 0.5 * acc * tau * tau
    v = v0 + acc * tau
    done = t >= prof.total_duration
    x[done] = 0.0
    v[done] = 0.0
    acc = np.where(done, 0.0, acc)
    return x, v, acc


@dataclass(frozen=True)
class TorqueProfile:
    """Piecewise-constant pulley torque; ``values[i]`` holds on ``[breakpoints[i], breakpoints[i+1])``.

    Torque is zero outside the covered interval.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    @property
    def duration(self) -> float:
        return float(self.breakpoints[-1])

    def __call__(self, t: float) -> float:
        bp = self.breakpoints
        if t < bp[0] or t >= bp[-1]:
            return 0.0
        i = int(np.searchsorted(bp, t, side="right")) - 1
        return float(self.values[i])

    def sample(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        bp = self.breakpoints
        idx = np.clip(np.searchsorted(bp, t, side="right") - 1, 0, len(self.values) - 1)
        out = self.values[idx].astype(float)
        out[(t < bp[0]) | (t >= bp[-1])] = 0.0
        return out

    @classmethod
    def zero(cls, duration: float) -> "TorqueProfile":
        return cls(np.array([0.0, float(duration)]), np.array([0.0]))


def drive_gain(p: GantryParams) -> float:
    """Torque per unit carriage acceleration for a rigid drive, m6*R + (J4 + J5)/R."""
    J4 = pulley_inertia(p.m4, p.R)
    J5 = pulley_inertia(p.m5, p.R)
    return p.m6 * p.R + (J4 + J5) / p.R


# Positive pulley rotation in the state equations winds belt section 1 so as to
# pull the carriage toward -x4; forward travel therefore needs negative torque.
DRIVE_SIGN = -1.0


def torque_profile(prof: IdealProfile, p: GantryParams) -> TorqueProfile:
    """Open-loop pulley torque that moves a rigid machine along ``prof``.

    The magnitude is ``drive_gain(p) * |a|``; the sign follows the pulley
    convention of the equations of motion (see ``DRIVE_SIGN``). Junction
    velocity steps are not representable as finite torque and are omitted.
    """
    return TorqueProfile(breakpoints=prof.breakpoints,
                         values=DRIVE_SIGN * drive_gain(p) * prof.accelerations)
