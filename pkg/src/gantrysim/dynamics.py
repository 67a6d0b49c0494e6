"""Equations of motion and state-space matrices of the gantry.

State ordering (1-indexed in the docs, 0-indexed in arrays)::

    z1=x1  z2=x1'  z3=x2  z4=x2'  z5=x3  z6=x3'
    z7=x4  z8=x4'  z9=th4 z10=th4' z11=th5 z12=th5'  [z13=x5 z14=x5']

The carriage stiffnesses k4, k5 depend on x4, so the model is nonlinear; the
matrices below are the frozen-x4 linearisation used both for analysis and as
the second derivative path.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import mpmath
import numpy as np
from numba import njit

from .params import (
    DomainError,
    GantryParams,
    TmdParams,
    belt_stiffness_fixed,
    belt_stiffness_moving,
    pulley_inertia,
)

STATE_NAMES = ("x1", "v1", "x2", "v2", "x3", "v3", "x4", "v4", "th4", "w4", "th5", "w5")
TMD_STATE_NAMES = ("x5", "v5")

# Offsets into the packed coefficient vector consumed by the compiled kernels.
_M1, _M2, _M3, _M4, _M5, _M6 = range(6)
_K1, _K2, _K3 = 6, 7, 8
_B1, _B2, _B3, _B4, _B5, _B6 = range(9, 15)
_R, _L1, _L2, _K6, _CSPB, _PRE = range(15, 21)
_M7, _K7, _B7 = 21, 22, 23
N_COEF = 24


def state_names(with_tmd: bool) -> tuple[str, ...]:
    return STATE_NAMES + TMD_STATE_NAMES if with_tmd else STATE_NAMES


def state_size(tmd: TmdParams | None) -> int:
    return 12 if tmd is None else 14


def pack_coefficients(p: GantryParams, tmd: TmdParams | None = None) -> np.ndarray:
    c = np.zeros(N_COEF)
    c[_M1:_M6 + 1] = (p.m1, p.m2, p.m3, p.m4, p.m5, p.m6)
    c[_K1:_K3 + 1] = (p.k1, p.k2, p.k3)
    c[_B1:_B6 + 1] = (p.beta1, p.beta2, p.beta3, p.beta4, p.beta5, p.beta6)
    c[_R] = p.R
    c[_L1] = p.L1
    c[_L2] = p.L2
    c[_K6] = belt_stiffness_fixed(p)
    c[_CSPB] = p.Csp * p.b
    c[_PRE] = p.Fpl / p.L0
    if tmd is not None:
        c[_M7], c[_K7], c[_B7] = tmd.m7, tmd.k7, tmd.beta7
    return c


@njit(cache=True, nogil=True)
def deriv_kernel(c, z, torque, freeze, x4_frozen, out):
    """Hand-coded equations of motion; writes dz/dt into ``out``.

    Returns 0 on success, 1 when a moving belt section has non-positive
    length at the evaluation point (``out`` is then undefined).
    """
    m1 = c[0]; m2 = c[1]; m3 = c[2]; m4 = c[3]; m5 = c[4]; m6 = c[5]
    k1 = c[6]; k2 = c[7]; k3 = c[8]
    b1 = c[9]; b2 = c[10]; b3 = c[11]; b4 = c[12]; b5 = c[13]; b6 = c[14]
    R = c[15]; k6 = c[18]

    x1 = z[0]; v1 = z[1]; x2 = z[2]; v2 = z[3]; x3 = z[4]; v3 = z[5]
    x4 = z[6]; v4 = z[7]; th4 = z[8]; w4 = z[9]; th5 = z[10]; w5 = z[11]

    xs = x4_frozen if freeze else x4
    l4 = c[16] + xs
    l5 = c[17] - xs
    if not (l4 > 0.0 and l5 > 0.0):
        return 1
    k4 = c[19] / l4 + c[20]
    k5 = c[19] / l5 + c[20]

    out[0] = v1
    out[1] = (-(k1 + k2) * x1 + k2 * x2 - (b1 + b2) * v1 + b2 * v2) / m1
    out[2] = v2
    out[3] = (k2 * x1 - (k2 + k3) * x2 + k3 * x3
              + b2 * v1 - (b2 + b3) * v2 + b3 * v3) / m2
    out[4] = v3
    out[5] = (k3 * x2 - (k3 + k4 + k5) * x3 + (k4 + k5) * x4
              + k4 * R * th4 + k5 * R * th5
              + b3 * v2 - (b3 + b4 + b5) * v3 + (b4 + b5) * v4
              + b4 * R * w4 + b5 * R * w5) / m3
    out[6] = v4
    f4 = ((k4 + k5) * x3 - (k4 + k5) * x4 - k4 * R * th4 - k5 * R * th5
          + (b4 + b5) * v3 - (b4 + b5) * v4 - b4 * R * w4 - b5 * R * w5)
    out[8] = w4
    out[9] = (2.0 * (k4 * x3 - k4 * x4 + b4 * v3 - b4 * v4) / (m4 * R)
              - 2.0 * ((k4 + k6) * th4 - k6 * th5 + (b4 + b6) * w4 - b6 * w5) / m4
              + 2.0 * torque / (m4 * R * R))
    out[10] = w5
    out[11] = (2.0 * (k5 * x3 - k5 * x4 + b5 * v3 - b5 * v4) / (m5 * R)
               + 2.0 * (k6 * th4 - (k5 + k6) * th5 + b6 * w4 - (b5 + b6) * w5) / m5)
    if z.shape[0] == 14:
        m7 = c[21]; k7 = c[22]; b7 = c[23]
        x5 = z[12]; v5 = z[13]
        # TMD spring/damper act on the carriage relative coordinate x5 - x4
        f4 += k7 * (x5 - x4) + b7 * (v5 - v4)
        out[12] = v5
        out[13] = (k7 * (x4 - x5) + b7 * (v4 - v5)) / m7
    out[7] = f4 / m6
    return 0


def _check_state(z: np.ndarray, tmd: TmdParams | None) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    n = state_size(tmd)
    if z.shape != (n,):
        raise ValueError(f"state must have shape ({n},), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("state contains non-finite entries")
    return z


def deriv(
    p: GantryParams,
    tmd: TmdParams | None,
    z: np.ndarray,
    torque: float,
    freeze_x4: float | None = None,
) -> np.ndarray:
    """Time derivative of the state with belt stiffness taken at the current x4.

    ``freeze_x4`` evaluates k4, k5 at a fixed carriage position instead, which
    turns the model into the linear time-invariant system of
    :func:`assemble_A`.
    """
    z = _check_state(z, tmd)
    out = np.empty_like(z)
    freeze = freeze_x4 is not None
    status = deriv_kernel(pack_coefficients(p, tmd), z, float(torque), freeze,
                          float(freeze_x4) if freeze else 0.0, out)
    if status:
        xs = freeze_x4 if freeze else z[6]
        raise DomainError(f"carriage position x4={xs!r} m is outside the belt's valid range "
                          f"({-p.L1!r}, {p.L2!r})")
    return out


def deriv_three_mass(x: np.ndarray, p: GantryParams, d: float) -> np.ndarray:
    """Conservative mount/frame/gantry chain driven by an external force ``d`` on the gantry."""
    x1, v1, x2, v2, x3, v3 = np.asarray(x, dtype=float)
    return np.array([
        v1,
        -(p.k1 + p.k2) / p.m1 * x1 + p.k2 / p.m1 * x2,
        v2,
        p.k2 / p.m2 * x1 - (p.k2 + p.k3) / p.m2 * x2 + p.k3 / p.m2 * x3,
        v3,
        p.k3 / p.m3 * x2 - p.k3 / p.m3 * x3 + d / p.m3,
    ])


@dataclass(frozen=True)
class SystemMatrices:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    evaluated_at_x4: float

    @property
    def n(self) -> int:
        return self.A.shape[0]


def _entries(p: GantryParams, x4, tmd: TmdParams | None, num: Callable):
    """Yield ``(row, col, value)`` of the nonzero A entries in scalar type ``num``."""
    m1, m2, m3, m4, m5, m6 = (num(v) for v in (p.m1, p.m2, p.m3, p.m4, p.m5, p.m6))
    k1, k2, k3 = num(p.k1), num(p.k2), num(p.k3)
    b1, b2, b3, b4, b5, b6 = (num(getattr(p, f"beta{i}")) for i in range(1, 7))
    R = num(p.R)
    x4 = num(x4)
    l4 = num(p.L1) + x4
    l5 = num(p.L2) - x4
    if not (l4 > 0 and l5 > 0):
        raise DomainError(f"belt section length non-positive at x4={x4}")
    cspb = num(p.Csp) * num(p.b)
    pre = num(p.Fpl) / num(p.L0)
    k4 = cspb / l4 + pre
    k5 = cspb / l5 + pre
    k6 = cspb / num(p.L) + pre

    n = state_size(tmd)
    for i in range(0, n, 2):
        yield i, i + 1, num(1)

    yield from zip([1] * 4, range(4), (-(k1 + k2) / m1, -(b1 + b2) / m1, k2 / m1, b2 / m1))
    yield from zip([3] * 6, range(6), (k2 / m2, b2 / m2, -(k2 + k3) / m2, -(b2 + b3) / m2,
                                       k3 / m2, b3 / m2))
    yield from zip([5] * 10, range(2, 12), (
        k3 / m3, b3 / m3, -(k3 + k4 + k5) / m3, -(b3 + b4 + b5) / m3,
        (k4 + k5) / m3, (b4 + b5) / m3, k4 * R / m3, b4 * R / m3, k5 * R / m3, b5 * R / m3))
    if tmd is None:
        k7 = b7 = num(0)
    else:
        m7, k7, b7 = num(tmd.m7), num(tmd.k7), num(tmd.beta7)
    yield from zip([7] * 8, range(4, 12), (
        (k4 + k5) / m6, (b4 + b5) / m6, -(k4 + k5 + k7) / m6, -(b4 + b5 + b7) / m6,
        -k4 * R / m6, -b4 * R / m6, -k5 * R / m6, -b5 * R / m6))
    yield from zip([9] * 8, range(4, 12), (
        2 * k4 / (m4 * R), 2 * b4 / (m4 * R), -2 * k4 / (m4 * R), -2 * b4 / (m4 * R),
        -2 * (k4 + k6) / m4, -2 * (b4 + b6) / m4, 2 * k6 / m4, 2 * b6 / m4))
    yield from zip([11] * 8, range(4, 12), (
        2 * k5 / (m5 * R), 2 * b5 / (m5 * R), -2 * k5 / (m5 * R), -2 * b5 / (m5 * R),
        2 * k6 / m5, 2 * b6 / m5, -2 * (k5 + k6) / m5, -2 * (b5 + b6) / m5))
    if tmd is not None:
        yield 7, 12, k7 / m6
        yield 7, 13, b7 / m6
        yield from zip([13] * 4, (6, 7, 12, 13), (k7 / m7, b7 / m7, -k7 / m7, -b7 / m7))


def assemble_A(p: GantryParams, x4: float, tmd: TmdParams | None = None) -> SystemMatrices:
    """State-space matrices with the belt stiffness frozen at carriage position ``x4``."""
    n = state_size(tmd)
    A = np.zeros((n, n))
    for i, j, v in _entries(p, x4, tmd, float):
        A[i, j] = v
    B = np.zeros(n)
    B[9] = 2.0 / (p.m4 * p.R ** 2)
    C = np.zeros(n)
    C[6] = C[7] = 1.0
    return SystemMatrices(A=A, B=B, C=C, evaluated_at_x4=float(x4))


def spectrum(p: GantryParams, x4: float, tmd: TmdParams | None = None, dps: int = 50) -> np.ndarray:
    """Eigenvalues of A assembled and solved in ``dps``-digit arithmetic.

    The belt drive has a free rigid-body mode (carriage and pulleys rolling
    together), which makes zero a defective double eigenvalue of A. In double
    precision that pair splits by roughly sqrt(eps*|A|) ~ 1e-5 into spurious
    real parts; working at high precision keeps the split far below any
    practical stability threshold.
    """
    n = state_size(tmd)
    with mpmath.workdps(dps):
        A = mpmath.zeros(n, n)
        for i, j, v in _entries(p, x4, tmd, mpmath.mpf):
            A[i, j] = v
        ev = mpmath.eig(A, left=False, right=False)
        return np.array([complex(e) for e in ev])


def observe(m: SystemMatrices, z: np.ndarray) -> float:
    """Output functional ``C z`` (carriage position plus carriage velocity)."""
    z = np.asarray(z, dtype=float)
    if z.shape != (m.n,):
        raise ValueError(f"state of shape {z.shape} does not match {m.n}-state system")
    return float(m.C @ z)


def mechanical_energy(
    p: GantryParams, tmd: TmdParams | None, z: np.ndarray, freeze_x4: float
) -> float:
    """Kinetic plus elastic energy with belt stiffness held at ``freeze_x4``."""
    z = _check_state(z, tmd)
    x1, v1, x2, v2, x3, v3, x4, v4, th4, w4, th5, w5 = z[:12]
    k4, k5 = belt_stiffness_moving(p, freeze_x4)
    k6 = belt_stiffness_fixed(p)
    J4 = pulley_inertia(p.m4, p.R)
    J5 = pulley_inertia(p.m5, p.R)
    e4 = x4 - x3 + p.R * th4
    e5 = x4 - x3 + p.R * th5
    e6 = p.R * (th4 - th5)
    kinetic = 0.5 * (p.m1 * v1**2 + p.m2 * v2**2 + p.m3 * v3**2 + p.m6 * v4**2
                     + J4 * w4**2 + J5 * w5**2)
    elastic = 0.5 * (p.k1 * x1**2 + p.k2 * (x2 - x1)**2 + p.k3 * (x3 - x2)**2
                     + k4 * e4**2 + k5 * e5**2 + k6 * e6**2)
    if tmd is not None:
        x5, v5 = z[12:]
        kinetic += 0.5 * tmd.m7 * v5**2
        elastic += 0.5 * tmd.k7 * (x5 - x4)**2
    return float(kinetic + elastic)


def mass_vector(p: GantryParams, tmd: TmdParams | None = None) -> np.ndarray:
    """Generalised inertia of each coordinate (x1, x2, x3, x4, th4, th5[, x5])."""
    m = [p.m1, p.m2, p.m3, p.m6, pulley_inertia(p.m4, p.R), pulley_inertia(p.m5, p.R)]
    if tmd is not None:
        m.append(tmd.m7)
    return np.array(m)
