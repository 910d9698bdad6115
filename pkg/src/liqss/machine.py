"""Synchronous machine on an infinite bus, in the synchronous dq frame.

Seven states: stator fluxes ``psi_dr``/``psi_q``, field flux ``psi_F``,
damper fluxes ``psi_D``/``psi_Q``, electrical rotor speed ``omega_r`` and rotor
angle ``theta`` relative to the synchronous frame.  Winding currents are not
states; they follow from the fluxes through two constant linear systems
(d axis 3x3, q axis 2x2).

Every derivative, in both the LIQSS atoms and the Euler reference, goes
through the jitted scalar kernels below so the two solvers integrate exactly
the same equations.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numba
import numpy as np

from .qss_core import DependencyGraph, QssModel

__all__ = [
    "STATE_NAMES",
    "PSI_DR", "PSI_Q", "PSI_F", "PSI_D", "PSI_Q_DAMPER", "OMEGA_R", "THETA",
    "MachineParams",
    "FluxState",
    "MechState",
    "CurrentSolution",
    "GridSpec",
    "TorqueProfile",
    "MachineSystem",
    "d_axis_matrix",
    "q_axis_matrix",
    "solve_d_currents",
    "solve_q_currents",
    "flux_derivatives",
    "speed_derivative",
    "angle_derivative",
    "bus_voltage_dq",
    "torque_at",
    "init_steady_state",
    "power_output",
    "build_atoms",
    "READS",
    "ANGLE_DQ_RATIO",
]

STATE_NAMES = ("psi_dr", "psi_q", "psi_F", "psi_D", "psi_Q", "omega_r", "theta")
PSI_DR, PSI_Q, PSI_F, PSI_D, PSI_Q_DAMPER, OMEGA_R, THETA = range(7)
# The angle quantum is tied to the flux quantum: at rated flux the stator
# flux derivatives move by roughly 50 Wb/s per radian of angle, so an angle
# step as large as the flux step would swamp the flux atoms.
ANGLE_DQ_RATIO = 0.02

# which states each derivative reads (row j: inputs of f_j)
READS = (
    (PSI_DR, PSI_Q, PSI_F, PSI_D, OMEGA_R, THETA),
    (PSI_DR, PSI_Q, PSI_Q_DAMPER, OMEGA_R, THETA),
    (PSI_DR, PSI_F, PSI_D),
    (PSI_DR, PSI_F, PSI_D),
    (PSI_Q, PSI_Q_DAMPER),
    (PSI_DR, PSI_Q, PSI_F, PSI_D, PSI_Q_DAMPER),
    (OMEGA_R,),
)


@dataclass(frozen=True)
class MachineParams:
    """Electrical and mechanical machine constants (SI units).

    Inductances ``L_F``, ``L_D`` and ``L_Q`` are leakages; the winding self
    inductances add the magnetizing inductance of their axis.  `e_fd` is
    filled in by `init_steady_state`.
    """

    R_s: float = 0.6
    R_F: float = 1e-2
    R_D: float = 0.05
    R_Q: float = 0.02
    L_md: float = 6.6659e-3
    L_mq: float = 4.7704e-3
    L_L: float = 2.5067e-3
    L_F: float = 0.7176e-3
    L_D: float = 2.076e-3
    L_Q: float = 0.5e-3
    J: float = 2.812e4
    n: int = 1
    omega_b: float = 2.0 * math.pi * 50.0
    T_rated: float = 4.0 * 83e6 / (1.5 * 2.0 * math.pi * 50.0)
    e_fd: float = 0.0

    def __post_init__(self) -> None:
        for name in ("R_s", "R_F", "R_D", "R_Q"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("L_L", "L_F", "L_D", "L_Q"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        # zero magnetizing inductance decouples the windings; the axis
        # matrices stay positive definite
        for name in ("L_md", "L_mq"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.J > 0:
            raise ValueError("J must be > 0")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if not self.omega_b > 0:
            raise ValueError("omega_b must be > 0")

    def replace(self, **changes) -> "MachineParams":
        d = asdict(self)
        d.update(changes)
        return MachineParams(**d)

    @classmethod
    def from_dict(cls, d: dict) -> "MachineParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown machine parameters: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class FluxState:
    psi_dr: float
    psi_q: float
    psi_F: float
    psi_D: float
    psi_Q: float


@dataclass(frozen=True)
class MechState:
    omega_r: float
    theta: float


@dataclass(frozen=True)
class CurrentSolution:
    i_dr: float
    i_qr: float
    i_F: float
    i_D: float
    i_Q: float


@dataclass(frozen=True)
class GridSpec:
    """Infinite bus: line-to-line RMS voltage and frequency."""

    v_ll_rms: float = 20_000.0
    f: float = 50.0

    def __post_init__(self) -> None:
        if not (self.v_ll_rms > 0 and self.f > 0):
            raise ValueError("grid voltage and frequency must be > 0")

    @property
    def v_peak(self) -> float:
        """Peak phase voltage."""
        return self.v_ll_rms * math.sqrt(2.0) / math.sqrt(3.0)


@dataclass(frozen=True)
class TorqueProfile:
    """Prime-mover torque: zero, then a linear ramp to ``fraction * T_rated``."""

    t_start: float = 15.0
    t_end: float = 20.0
    fraction: float = 0.25

    def __post_init__(self) -> None:
        if not (self.t_end > self.t_start >= 0):
            raise ValueError("torque ramp needs t_end > t_start >= 0")
        if self.fraction < 0:
            raise ValueError("torque fraction must be >= 0")


def d_axis_matrix(p: MachineParams) -> np.ndarray:
    m = p.L_md
    return np.array([
        [m + p.L_L, m, m],
        [m, p.L_F + m, m],
        [m, m, p.L_D + m],
    ])


def q_axis_matrix(p: MachineParams) -> np.ndarray:
    m = p.L_mq
    return np.array([[m + p.L_L, m], [m, p.L_Q + m]])


def _inverse_3x3(M: np.ndarray) -> np.ndarray:
    # closed-form adjugate inverse
    a, b, c = M[0]
    d, e, f = M[1]
    g, h, i = M[2]
    A = e * i - f * h
    B = -(d * i - f * g)
    C = d * h - e * g
    det = a * A + b * B + c * C
    if not abs(det) > 1e-18 * np.abs(M).max() ** 3:
        raise ValueError("d-axis inductance matrix is singular")
    adj = np.array([
        [A, -(b * i - c * h), b * f - c * e],
        [B, a * i - c * g, -(a * f - c * d)],
        [C, -(a * h - b * g), a * e - b * d],
    ])
    return adj / det


def _inverse_2x2(M: np.ndarray) -> np.ndarray:
    (a, b), (c, d) = M
    det = a * d - b * c
    if not abs(det) > 1e-18 * np.abs(M).max() ** 2:
        raise ValueError("q-axis inductance matrix is singular")
    return np.array([[d, -b], [-c, a]]) / det


# --------------------------------------------------------------------------
# packed parameter vector for jitted code
# --------------------------------------------------------------------------

_RS, _RF, _RD, _RQ, _EFD, _NJ, _WB, _VM, _TFIN, _T0, _T1 = range(11)
_MDI = 11   # 9 entries, row-major
_MQI = 20   # 4 entries
_TDQ = 24   # torque quantum for input resampling
_NPARAMS = 25


def pack_params(p: MachineParams, grid: GridSpec, profile: TorqueProfile,
                torque_dq: float | None = None) -> np.ndarray:
    """Flatten everything the derivative kernels need into one array."""
    mdi = _inverse_3x3(d_axis_matrix(p))
    mqi = _inverse_2x2(q_axis_matrix(p))
    t_final = profile.fraction * p.T_rated
    if torque_dq is None:
        torque_dq = max(t_final * 1e-4, 1e-12)
    v = np.zeros(_NPARAMS)
    v[_RS], v[_RF], v[_RD], v[_RQ] = p.R_s, p.R_F, p.R_D, p.R_Q
    v[_EFD] = p.e_fd
    v[_NJ] = p.n / p.J
    v[_WB] = p.omega_b
    v[_VM] = grid.v_peak
    v[_TFIN] = t_final
    v[_T0], v[_T1] = profile.t_start, profile.t_end
    v[_MDI:_MDI + 9] = mdi.ravel()
    v[_MQI:_MQI + 4] = mqi.ravel()
    v[_TDQ] = torque_dq
    return v


@numba.njit(cache=True)
def _d_currents(psi_dr, psi_F, psi_D, v):
    m = _MDI
    i_dr = v[m] * psi_dr + v[m + 1] * psi_F + v[m + 2] * psi_D
    i_F = v[m + 3] * psi_dr + v[m + 4] * psi_F + v[m + 5] * psi_D
    i_D = v[m + 6] * psi_dr + v[m + 7] * psi_F + v[m + 8] * psi_D
    return i_dr, i_F, i_D


@numba.njit(cache=True)
def _q_currents(psi_q, psi_Q, v):
    m = _MQI
    return v[m] * psi_q + v[m + 1] * psi_Q, v[m + 2] * psi_q + v[m + 3] * psi_Q


@numba.njit(cache=True)
def _torque(t, v):
    t0 = v[_T0]
    t1 = v[_T1]
    if t < t0:
        return 0.0
    if t >= t1:
        return v[_TFIN]
    return v[_TFIN] * (t - t0) / (t1 - t0)


@numba.njit(cache=True)
def _torque_next_time(t, v):
    """Next time the ramp crosses a torque quantum level (or a breakpoint)."""
    t0 = v[_T0]
    t1 = v[_T1]
    if t < t0:
        return t0
    if t >= t1 or v[_TFIN] == 0.0:
        return math.inf
    slope = v[_TFIN] / (t1 - t0)
    step = v[_TDQ] / slope
    k = math.floor((t - t0) / step + 1e-9) + 1.0
    tn = t0 + k * step
    if tn <= t:
        tn = t + step
    if tn > t1:
        tn = t1
    return tn


@numba.njit(cache=True)
def _machine_deriv(i, q, t, v):
    """Derivative of state `i` at state vector `q` and time `t`."""
    if i == 6:
        return q[5] - v[_WB]
    if i == 1 or i == 4:
        i_qr, i_Q = _q_currents(q[1], q[4], v)
        if i == 4:
            return -i_Q * v[_RQ]
        return v[_VM] * math.cos(q[6]) - v[_RS] * i_qr - q[5] * q[0]
    i_dr, i_F, i_D = _d_currents(q[0], q[2], q[3], v)
    if i == 0:
        return -v[_VM] * math.sin(q[6]) - v[_RS] * i_dr + q[5] * q[1]
    if i == 2:
        return v[_EFD] - i_F * v[_RF]
    if i == 3:
        return -i_D * v[_RD]
    i_qr, i_Q = _q_currents(q[1], q[4], v)
    t_e = i_qr * q[0] - i_dr * q[1]
    return v[_NJ] * (_torque(t, v) - t_e)


@numba.njit(cache=True)
def machine_rhs(x, t, v, out):
    """All seven derivatives into `out`."""
    for i in range(7):
        out[i] = _machine_deriv(i, x, t, v)


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------


def solve_d_currents(psi_dr: float, psi_F: float, psi_D: float,
                     params: MachineParams) -> tuple[float, float, float]:
    """d-axis winding currents ``(i_dr, i_F, i_D)`` from the fluxes."""
    v = np.zeros(_NPARAMS)
    v[_MDI:_MDI + 9] = _inverse_3x3(d_axis_matrix(params)).ravel()
    return tuple(float(c) for c in _d_currents(psi_dr, psi_F, psi_D, v))


def solve_q_currents(psi_q: float, psi_Q: float,
                     params: MachineParams) -> tuple[float, float]:
    """q-axis winding currents ``(i_qr, i_Q)`` from the fluxes."""
    v = np.zeros(_NPARAMS)
    v[_MQI:_MQI + 4] = _inverse_2x2(q_axis_matrix(params)).ravel()
    return tuple(float(c) for c in _q_currents(psi_q, psi_Q, v))


def currents(flux: FluxState, params: MachineParams) -> CurrentSolution:
    i_dr, i_F, i_D = solve_d_currents(flux.psi_dr, flux.psi_F, flux.psi_D, params)
    i_qr, i_Q = solve_q_currents(flux.psi_q, flux.psi_Q, params)
    return CurrentSolution(i_dr, i_qr, i_F, i_D, i_Q)


def flux_derivatives(flux: FluxState, mech: MechState, v_d: float, v_q: float,
                     cur: CurrentSolution, params: MachineParams) -> tuple[float, ...]:
    """Time derivatives of the five flux linkages (Wb/s)."""
    return (
        v_d - params.R_s * cur.i_dr + mech.omega_r * flux.psi_q,
        v_q - params.R_s * cur.i_qr - mech.omega_r * flux.psi_dr,
        params.e_fd - cur.i_F * params.R_F,
        -cur.i_D * params.R_D,
        -cur.i_Q * params.R_Q,
    )


def speed_derivative(flux: FluxState, cur: CurrentSolution, t_m: float,
                     params: MachineParams) -> float:
    """Rotor acceleration; positive prime-mover torque accelerates."""
    t_e = cur.i_qr * flux.psi_dr - cur.i_dr * flux.psi_q
    return params.n / params.J * (t_m - t_e)


def angle_derivative(omega_r: float, omega_b: float) -> float:
    return omega_r - omega_b


def bus_voltage_dq(theta: float, grid: GridSpec) -> tuple[float, float]:
    """Bus voltage in the rotor frame; at ``theta = 0`` it lies on the q axis."""
    vm = grid.v_peak
    return -vm * math.sin(theta), vm * math.cos(theta)


def torque_at(t: float, profile: TorqueProfile, params: MachineParams) -> float:
    v = np.zeros(_NPARAMS)
    v[_TFIN] = profile.fraction * params.T_rated
    v[_T0], v[_T1] = profile.t_start, profile.t_end
    return float(_torque(t, v))


def init_steady_state(params: MachineParams, grid: GridSpec
                      ) -> tuple[FluxState, MechState, float]:
    """Open-circuit synchronous equilibrium with the bus.

    Returns the fluxes, mechanical state and the field voltage that holds the
    field current constant.  Stator and damper currents are zero.
    """
    if not params.L_md > 0:
        raise ValueError("open-circuit initialization needs L_md > 0")
    psi_dr = grid.v_peak / params.omega_b
    i_F = psi_dr / params.L_md
    e_fd = params.R_F * i_F
    psi_F = (params.L_F + params.L_md) * i_F
    # psi_D = L_md * i_F keeps i_D = 0 and equals psi_dr
    flux = FluxState(psi_dr, 0.0, psi_F, psi_dr, 0.0)
    return flux, MechState(params.omega_b, 0.0), e_fd


def power_output(v_d: float, v_q: float, i_dr: float, i_qr: float
                 ) -> tuple[float, float]:
    """Active and reactive power ``(P, Q)``; positive P flows to the grid."""
    return 1.5 * (v_d * i_dr + v_q * i_qr), 1.5 * (v_q * i_dr - v_d * i_qr)


# --------------------------------------------------------------------------
# assembled system
# --------------------------------------------------------------------------


@dataclass
class MachineSystem:
    """Machine, bus and scenario with a consistent initial state."""

    params: MachineParams
    grid: GridSpec
    profile: TorqueProfile
    x0: np.ndarray
    packed: np.ndarray

    @classmethod
    def create(cls, params: MachineParams | None = None, grid: GridSpec | None = None,
               profile: TorqueProfile | None = None, torque_dq: float | None = None
               ) -> "MachineSystem":
        params = params or MachineParams()
        grid = grid or GridSpec()
        profile = profile or TorqueProfile()
        if not math.isclose(params.omega_b, 2 * math.pi * grid.f, rel_tol=1e-12):
            params = params.replace(omega_b=2 * math.pi * grid.f)
        flux, mech, e_fd = init_steady_state(params, grid)
        params = params.replace(e_fd=e_fd)
        x0 = np.array([flux.psi_dr, flux.psi_q, flux.psi_F, flux.psi_D, flux.psi_Q,
                       mech.omega_r, mech.theta])
        return cls(params, grid, profile, x0, pack_params(params, grid, profile, torque_dq))

    def rhs(self, x: np.ndarray, t: float) -> np.ndarray:
        out = np.empty(7)
        machine_rhs(np.ascontiguousarray(x, dtype=np.float64), float(t), self.packed, out)
        return out

    def currents(self, x: np.ndarray) -> np.ndarray:
        """Columns ``i_dr, i_qr, i_F, i_D, i_Q`` for states `x` of shape (..., 7)."""
        x = np.asarray(x, dtype=np.float64)
        mdi = self.packed[_MDI:_MDI + 9].reshape(3, 3)
        mqi = self.packed[_MQI:_MQI + 4].reshape(2, 2)
        d = x[..., [PSI_DR, PSI_F, PSI_D]] @ mdi.T
        qc = x[..., [PSI_Q, PSI_Q_DAMPER]] @ mqi.T
        return np.stack([d[..., 0], qc[..., 0], d[..., 1], d[..., 2], qc[..., 1]], axis=-1)

    def power(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Active and reactive power for states `x` of shape (..., 7)."""
        x = np.asarray(x, dtype=np.float64)
        cur = self.currents(x)
        vm = self.grid.v_peak
        v_d = -vm * np.sin(x[..., THETA])
        v_q = vm * np.cos(x[..., THETA])
        return power_output(v_d, v_q, cur[..., 0], cur[..., 1])

    def jacobian(self, x: np.ndarray, t: float, rel: float = 1e-6) -> np.ndarray:
        """Central finite-difference Jacobian of the state equations."""
        x = np.asarray(x, dtype=np.float64)
        jac = np.empty((7, 7))
        for j in range(7):
            h = rel * max(1.0, abs(x[j]))
            e = np.zeros(7)
            e[j] = h
            jac[:, j] = (self.rhs(x + e, t) - self.rhs(x - e, t)) / (2 * h)
        return jac


def build_atoms(params: MachineParams | None = None, grid: GridSpec | None = None,
                profile: TorqueProfile | None = None, *, flux_dq: float = 1e-4,
                speed_dq: float | None = None, angle_dq: float | None = None,
                torque_dq: float | None = None, overrides: dict | None = None
                ) -> tuple[QssModel, np.ndarray, np.ndarray]:
    """Atoms for the seven machine states.

    Returns ``(model, x0, delta_q)``.  The speed quantum defaults to a tenth
    of the flux quantum and the angle quantum to `ANGLE_DQ_RATIO` times it.
    `overrides` maps state names to quanta.
    """
    system = MachineSystem.create(params, grid, profile, torque_dq)
    if speed_dq is None:
        speed_dq = flux_dq / 10.0
    if angle_dq is None:
        angle_dq = ANGLE_DQ_RATIO * flux_dq
    dq = np.array([flux_dq] * 5 + [speed_dq, angle_dq], dtype=np.float64)
    for name, val in (overrides or {}).items():
        if name not in STATE_NAMES:
            raise ValueError(f"unknown state {name!r}")
        dq[STATE_NAMES.index(name)] = val
    model = QssModel(
        names=STATE_NAMES,
        deriv=_machine_deriv,
        params=system.packed,
        graph=DependencyGraph.from_reads(READS),
        input_atoms=(OMEGA_R,),
        next_input_time=_torque_next_time,
    )
    return model, system.x0.copy(), dq
