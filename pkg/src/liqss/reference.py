"""Fixed-step forward Euler reference solution."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .machine import STATE_NAMES, MachineSystem, machine_rhs

__all__ = ["DenseTrajectory", "ReferenceSolverError", "euler_step", "run_reference"]


class ReferenceSolverError(RuntimeError):
    """The Euler integration blew up or produced non-finite values."""


@dataclass
class DenseTrajectory:
    """Uniformly sampled states: ``values[k]`` is the state at ``t0 + k*dt``."""

    t0: float
    dt: float
    values: np.ndarray
    names: tuple[str, ...] = STATE_NAMES

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ValueError("values must have shape (n_samples, n_states)")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.shape[0])

    def __len__(self) -> int:
        return self.values.shape[0]

    def state(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


def euler_step(state, t: float, h: float, model: MachineSystem | Callable) -> np.ndarray:
    """One forward Euler step ``state + h * f(state, t)``.

    `model` is a `MachineSystem` or any callable ``f(state, t)``.
    """
    if not h > 0:
        raise ValueError("h must be > 0")
    state = np.asarray(state, dtype=np.float64)
    f = model.rhs if isinstance(model, MachineSystem) else model
    new = state + h * np.asarray(f(state, t), dtype=np.float64)
    if not np.all(np.isfinite(new)):
        raise ReferenceSolverError(f"non-finite state after Euler step at t={t}")
    return new


@numba.njit(cache=True)
def _euler_loop(x0, h, n_steps, v, envelope, out):
    n = x0.shape[0]
    x = x0.copy()
    f = np.empty(n)
    for m in range(n):
        out[0, m] = x[m]
    for k in range(n_steps):
        machine_rhs(x, k * h, v, f)
        for m in range(n):
            x[m] += h * f[m]
            if not math.isfinite(x[m]) or abs(x[m]) > envelope[m]:
                return k + 1
            out[k + 1, m] = x[m]
    return -1


def run_reference(system: MachineSystem, t_end: float = 50.0, h: float = 1e-4,
                  blowup_factor: float = 10.0) -> DenseTrajectory:
    """Integrate the machine from its initial state over ``[0, t_end]``.

    Aborts when a state leaves ``blowup_factor`` times its initial magnitude
    envelope (the largest initial state magnitude for the flux states, the
    state's own magnitude otherwise, with a floor of 1).
    """
    if not (h > 0 and t_end > 0):
        raise ValueError("h and t_end must be > 0")
    n_steps = int(round(t_end / h))
    x0 = np.ascontiguousarray(system.x0, dtype=np.float64)
    flux_scale = np.abs(x0[:5]).max()
    scale = np.concatenate((np.full(5, flux_scale), np.abs(x0[5:])))
    envelope = blowup_factor * np.maximum(scale, 1.0)
    out = np.empty((n_steps + 1, x0.size))
    failed = _euler_loop(x0, float(h), n_steps, system.packed, envelope, out)
    if failed >= 0:
        raise ReferenceSolverError(f"Euler integration unstable after {failed} steps "
                             f"(t={failed * h:.6g} s, h={h:g})")
    return DenseTrajectory(0.0, float(h), out)
