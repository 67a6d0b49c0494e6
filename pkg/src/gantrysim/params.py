"""Physical parameters of the printer gantry and belt-stiffness model.

All values are SI (m, kg, s, N). Defaults are the measured lab machine.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np


class DomainError(ValueError):
    """A belt section length reached zero or went negative."""


@dataclass(frozen=True)
class GantryParams:
    # masses [kg]: mount, frame, gantry, pulley 4, pulley 5, extruder carriage
    m1: float = 500.0
    m2: float = 6.201
    m3: float = 0.721
    m4: float = 0.017
    m5: float = 0.019
    m6: float = 0.611
    # stiffness [N/m]
    k1: float = 1e6
    k2: float = 1e5
    k3: float = 6410.0
    # damping [N*s/m]
    beta1: float = 10_000.0
    beta2: float = 1_000.0
    beta3: float = 1.0
    beta4: float = 5.0
    beta5: float = 5.0
    beta6: float = 5.0
    # geometry [m]
    R: float = 0.008
    L1: float = 0.080
    L2: float = 0.260
    L: float = 0.350
    L0: float = 0.750
    b: float = 0.006
    # belt
    Csp: float = 1.74e6
    Fpl: float = 45.0

    def undamped(self) -> "GantryParams":
        """Copy with every damping coefficient set to zero."""
        return replace(self, **{f"beta{i}": 0.0 for i in range(1, 7)})

    def as_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


@dataclass(frozen=True)
class TmdParams:
    """Passive spring-mass-damper bolted to the extruder carriage."""

    m7: float
    k7: float
    beta7: float

    def __post_init__(self):
        if not (self.m7 > 0 and self.k7 > 0 and self.beta7 >= 0):
            raise ValueError(
                f"TMD needs m7 > 0, k7 > 0, beta7 >= 0; got {self.m7!r}, {self.k7!r}, {self.beta7!r}"
            )

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.m7, self.k7, self.beta7)


@dataclass(frozen=True)
class BeltState:
    k4: float
    k5: float
    k6: float
    x4: float


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def raise_if_failed(self) -> None:
        if self.violations:
            raise ValueError("invalid parameters: " + "; ".join(self.violations))


_MASSES = ("m1", "m2", "m3", "m4", "m5", "m6")
_STIFF = ("k1", "k2", "k3")
_DAMP = tuple(f"beta{i}" for i in range(1, 7))
_POSITIVE_GEOM = ("R", "L1", "L2", "L", "L0", "b", "Csp")


def validate_params(p: GantryParams, travel: float) -> ValidationReport:
    """Check physical sanity of ``p`` for a carriage travelling ``travel`` metres.

    Returns a report listing every violated invariant instead of raising.
    """
    report = ValidationReport()
    bad = report.violations
    for name in _MASSES:
        v = getattr(p, name)
        if not np.isfinite(v) or v <= 0:
            bad.append(f"non-positive mass {name}={v!r}")
    for name in _STIFF:
        v = getattr(p, name)
        if not np.isfinite(v) or v <= 0:
            bad.append(f"non-positive stiffness {name}={v!r}")
    for name in _DAMP:
        v = getattr(p, name)
        if not np.isfinite(v) or v < 0:
            bad.append(f"negative damping {name}={v!r}")
    for name in _POSITIVE_GEOM:
        v = getattr(p, name)
        if not np.isfinite(v) or v <= 0:
            bad.append(f"non-positive {name}={v!r}")
    if not np.isfinite(p.Fpl) or p.Fpl < 0:
        bad.append(f"negative belt preload Fpl={p.Fpl!r}")
    if not np.isfinite(travel) or travel < 0:
        bad.append(f"negative travel {travel!r}")
    elif p.L2 - travel <= 0:
        bad.append(f"belt-section singularity: L2 - travel = {p.L2 - travel:.6g} m <= 0")
    if p.L1 > 0 and p.L1 + travel >= p.L0:
        bad.append(f"L1 + travel = {p.L1 + travel:.6g} m exceeds total belt length L0={p.L0}")
    return report


def belt_stiffness_fixed(p: GantryParams) -> float:
    """Stiffness of the constant-length belt section between the pulleys."""
    return p.Csp * p.b / p.L + p.Fpl / p.L0


def belt_stiffness_moving(p: GantryParams, x4: float) -> tuple[float, float]:
    """Stiffness of the two belt sections whose lengths follow the carriage.

    Raises
    ------
    DomainError
        If either section length ``L1 + x4`` or ``L2 - x4`` is not positive.
    """
    l4 = p.L1 + x4
    l5 = p.L2 - x4
    if not (l4 > 0 and l5 > 0):
        raise DomainError(
            f"belt section length non-positive at x4={x4!r} m "
            f"(L1+x4={l4:.6g}, L2-x4={l5:.6g})"
        )
    preload = p.Fpl / p.L0
    return p.Csp * p.b / l4 + preload, p.Csp * p.b / l5 + preload


def belt_state(p: GantryParams, x4: float) -> BeltState:
    k4, k5 = belt_stiffness_moving(p, x4)
    return BeltState(k4=k4, k5=k5, k6=belt_stiffness_fixed(p), x4=x4)


def pulley_inertia(mass: float, radius: float) -> float:
    """Solid-disc moment of inertia, m*R^2/2."""
    if not (mass > 0 and radius > 0):
        raise ValueError(f"pulley mass and radius must be positive, got {mass!r}, {radius!r}")
    return 0.5 * mass * radius * radius


TABLE_II: tuple[tuple[str, TmdParams], ...] = (
    ("Passive case 1", TmdParams(0.005, 1.0, 0.1)),
    ("Passive case 2", TmdParams(0.005, 50.0, 0.5)),
    ("Passive case 3", TmdParams(0.005, 100.0, 1.0)),
    ("Passive case 4", TmdParams(0.05, 1.0, 0.5)),
    ("Passive case 5", TmdParams(0.05, 50.0, 1.0)),
    ("Passive case 6", TmdParams(0.05, 100.0, 0.1)),
    ("Passive case 7", TmdParams(0.5, 1.0, 1.0)),
    ("Passive case 8", TmdParams(0.5, 50.0, 0.1)),
    ("Passive case 9", TmdParams(0.5, 100.0, 0.5)),
)
