"""First-order linearly implicit quantized state system (LIQSS1) engine.

A model is a set of atoms, one per state variable.  Each atom integrates
``dx_i/dt = f_i(q, t)`` where ``q`` is the vector of quantized outputs, which
are piecewise constant in time.  Internal states are therefore piecewise
linear and the only work happens at discrete events: an atom reaching the
next quantum boundary (a *self event*) or one of its inputs changing (an
*input change*).

The event loop is compiled with numba.  Models supply a jitted scalar
derivative ``deriv(i, q, t, params) -> float`` and, when the derivatives read
time-varying inputs, a jitted ``next_input_time(t, params) -> float`` that
tells the engine when those inputs must be resampled.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

__all__ = [
    "DERIVATIVE_FLOOR",
    "TIME_TOL",
    "SimulationError",
    "SchedulingError",
    "DependencyGraph",
    "QssModel",
    "QssAtom",
    "EventTrajectory",
    "LiqssResult",
    "LiqssSimulator",
    "next_event_time",
    "liqss1_select_q",
    "update_linear_coefficient",
    "advance_internal",
    "next_atom",
    "no_inputs",
]

#: |dx| below this is treated as zero when scheduling (model units / s).
DERIVATIVE_FLOOR = 1e-14
#: Absolute tolerance for comparing event times (s).
TIME_TOL = 1e-12
#: Secant updates need |q_new - q_old| above this fraction of the quantum.
SECANT_REL_FLOOR = 1e-3

_STATUS_OK = 0
_STATUS_NONFINITE = 1
_STATUS_MAX_EVENTS = 2


class SimulationError(RuntimeError):
    """A run produced a non-finite state or exhausted its event budget."""


class SchedulingError(RuntimeError):
    """An atom was asked to fire at a time other than its scheduled one."""


# --------------------------------------------------------------------------
# scalar primitives (callable from Python and from jitted code)
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def next_event_time(x, q, dx, delta_q, t_now):
    """Time at which ``x + dx*(t - t_now)`` reaches ``q +/- delta_q``.

    The boundary is the one in the direction of motion.  Derivatives below
    `DERIVATIVE_FLOOR` never cross and map to ``inf``.
    """
    if abs(dx) < DERIVATIVE_FLOOR:
        return math.inf
    if dx > 0.0:
        dt = (q + delta_q - x) / dx
    else:
        dt = (q - delta_q - x) / dx
    if dt < 0.0:
        dt = 0.0
    return t_now + dt


@numba.njit(cache=True)
def update_linear_coefficient(f_new, f_old, q_new, q_old, a_prev, floor=0.0):
    """Secant estimate of the diagonal Jacobian entry ``df_i/dq_i``.

    Keeps `a_prev` when the two quantized values are not separated by more
    than `floor`.
    """
    dq = q_new - q_old
    if abs(dq) <= floor or dq == 0.0:
        return a_prev
    return (f_new - f_old) / dq


@numba.njit(cache=True)
def advance_internal(x, dx, dt):
    """Piecewise-linear advance of an internal state."""
    return x + dx * dt


@numba.njit(cache=True)
def next_atom(t_next):
    """Index of the earliest scheduled atom; ties go to the lowest index."""
    best = 0
    tbest = t_next[0]
    for k in range(1, t_next.shape[0]):
        if t_next[k] < tbest:
            tbest = t_next[k]
            best = k
    return best


@numba.njit(cache=True)
def _snap(dx):
    # below the floor an atom is stationary: it is never scheduled, so it
    # must not drift either
    return 0.0 if abs(dx) < DERIVATIVE_FLOOR else dx


@numba.njit(cache=True)
def _root_clamped(q_c, f_c, a, q_prev, delta_q):
    qs = q_c - f_c / a
    lo = q_prev - delta_q
    hi = q_prev + delta_q
    if qs < lo:
        return lo
    if qs > hi:
        return hi
    return qs


def liqss1_select_q(
    x: float,
    q_prev: float,
    delta_q: float,
    a: float,
    f_eval: Callable[[float], float],
    direction: int = 1,
) -> float:
    """Choose the next quantized output with the LIQSS1 rule.

    Parameters
    ----------
    x : float
        Internal state at the event.
    q_prev : float
        Quantized output before the event.
    delta_q : float
        Quantum size.
    a : float
        Current estimate of ``df/dq`` for this atom.
    f_eval : callable
        ``f_eval(q)`` returns the atom's derivative with its own output set
        to ``q`` and all inputs held.
    direction : {1, -1}
        Direction in which the state crossed its boundary.  The candidate in
        that direction is tried first; ``1`` gives the plain upward-first
        ordering.

    Returns
    -------
    float
        ``q_prev + delta_q`` if the derivative there is non-negative,
        ``q_prev - delta_q`` if the derivative there is non-positive,
        otherwise the root of the linear model through the last evaluated
        candidate, clamped to ``[q_prev - delta_q, q_prev + delta_q]``
        (``x`` when ``a == 0``).
    """
    s = 1.0 if direction >= 0 else -1.0
    q_f = q_prev + s * delta_q
    f_f = f_eval(q_f)
    if s * f_f >= 0.0:
        return q_f
    q_b = q_prev - s * delta_q
    f_b = f_eval(q_b)
    if s * f_b <= 0.0:
        return q_b
    if a == 0.0:
        return x
    return float(_root_clamped(q_b, f_b, a, q_prev, delta_q))


@numba.njit(cache=True)
def _no_input_time(t, params):
    return math.inf


no_inputs = _no_input_time


# --------------------------------------------------------------------------
# model description
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DependencyGraph:
    """For each atom, the atoms whose derivative reads its quantized output.

    Self-loops are dropped: an atom always re-evaluates itself on its own
    event.
    """

    dependents: tuple[tuple[int, ...], ...]

    @classmethod
    def from_reads(cls, reads: Sequence[Sequence[int]]) -> "DependencyGraph":
        """Build from ``reads[j]`` = atoms that ``f_j`` reads."""
        n = len(reads)
        deps: list[list[int]] = [[] for _ in range(n)]
        for j, rj in enumerate(reads):
            for i in rj:
                if i != j and j not in deps[i]:
                    deps[i].append(j)
        return cls(tuple(tuple(sorted(d)) for d in deps))

    def __len__(self) -> int:
        return len(self.dependents)

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        indptr = np.zeros(len(self.dependents) + 1, dtype=np.int64)
        for i, d in enumerate(self.dependents):
            indptr[i + 1] = indptr[i] + len(d)
        indices = np.array([j for d in self.dependents for j in d], dtype=np.int64)
        return indptr, indices


@dataclass
class QssModel:
    """Everything the engine needs to simulate a system of atoms.

    `deriv` and `next_input_time` must be numba-jitted functions.  Atoms
    listed in `input_atoms` read time-varying inputs and are re-evaluated at
    every time returned by `next_input_time`.
    """

    names: tuple[str, ...]
    deriv: Callable
    params: np.ndarray
    graph: DependencyGraph
    input_atoms: tuple[int, ...] = ()
    next_input_time: Callable = no_inputs

    def __post_init__(self) -> None:
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if len(self.names) != len(self.graph):
            raise ValueError("graph size does not match number of atoms")
        if len(self.names) < 1:
            raise ValueError("a model needs at least one atom")

    @property
    def n(self) -> int:
        return len(self.names)

    def derivatives(self, q: np.ndarray, t: float) -> np.ndarray:
        """All derivatives at quantized vector `q` (convenience, not jitted)."""
        q = np.ascontiguousarray(q, dtype=np.float64)
        return np.array([self.deriv(i, q, t, self.params) for i in range(self.n)])


@dataclass
class QssAtom:
    """Snapshot of one atom's state."""

    index: int
    x: float
    q: float
    dx: float
    a: float
    delta_q: float
    t_last: float
    t_next: float
    update_count: int


@dataclass
class EventTrajectory:
    """Per-atom ``(t, q)`` records: the initial value plus every change."""

    names: tuple[str, ...]
    times: list[np.ndarray]
    values: list[np.ndarray]

    def __getitem__(self, key: int | str) -> tuple[np.ndarray, np.ndarray]:
        i = self.names.index(key) if isinstance(key, str) else key
        return self.times[i], self.values[i]

    def __len__(self) -> int:
        return len(self.names)

    def counts_between(self, t0: float, t1: float) -> np.ndarray:
        """Number of recorded updates with ``t0 < t <= t1`` for each atom."""
        out = np.empty(len(self.names), dtype=np.int64)
        for i, ts in enumerate(self.times):
            # index 0 is the initial record, not an update
            upd = ts[1:]
            out[i] = np.count_nonzero((upd > t0) & (upd <= t1))
        return out


@dataclass
class LiqssResult:
    names: tuple[str, ...]
    t_end: float
    update_counts: np.ndarray
    final_x: np.ndarray
    final_q: np.ndarray
    n_events: int
    trajectory: EventTrajectory | None = None
    resampled: np.ndarray | None = None
    resample_dt: float | None = None
    wall_time: float = 0.0

    @property
    def total_updates(self) -> int:
        return int(self.update_counts.sum())

    def intensity(self) -> np.ndarray:
        return self.update_counts / self.t_end


# --------------------------------------------------------------------------
# jitted kernels, specialised per model
# --------------------------------------------------------------------------


def _make_kernels(deriv, next_input_time):
    @numba.njit
    def input_change(j, t, x, q, dx, dq, t_last, t_next, p):
        x[j] = x[j] + dx[j] * (t - t_last[j])
        t_last[j] = t
        dx[j] = _snap(deriv(j, q, t, p))
        t_next[j] = next_event_time(x[j], q[j], dx[j], dq[j], t)
        return math.isfinite(x[j]) and math.isfinite(dx[j])

    @numba.njit
    def self_event(i, t, x, q, dx, a, dq, t_last, t_next, counts, p):
        """Returns 1 if q changed, 0 if not, -1 on a non-finite state."""
        x_i = x[i] + dx[i] * (t - t_last[i])
        x[i] = x_i
        t_last[i] = t
        q_old = q[i]
        f_old = dx[i]
        d = dq[i]
        s = 1.0 if f_old > 0.0 else -1.0

        q_f = q_old + s * d
        q[i] = q_f
        f_f = deriv(i, q, t, p)
        if s * f_f >= 0.0:
            q_new = q_f
            f_new = f_f
        else:
            q_b = q_old - s * d
            q[i] = q_b
            f_b = deriv(i, q, t, p)
            if s * f_b <= 0.0:
                q_new = q_b
                f_new = f_b
            elif a[i] == 0.0:
                q_new = x_i
                f_new = math.nan
            else:
                q_new = _root_clamped(q_b, f_b, a[i], q_old, d)
                # A stale slope can put the root outside the bracket the
                # signs of f_old and f_f guarantee; re-fit through it.
                if not (s * (q_new - q_old) > 0.0 and s * (q_f - q_new) > 0.0):
                    a_br = (f_f - f_old) / (q_f - q_old)
                    q_new = _root_clamped(q_f, f_f, a_br, q_old, d)
                f_new = math.nan
            # band guard: |x - q| <= dq
            if abs(x_i - q_new) > d * (1.0 + 1e-9):
                q_new = x_i
                f_new = math.nan

        q[i] = q_new
        if math.isnan(f_new):
            f_new = deriv(i, q, t, p)
        a[i] = update_linear_coefficient(
            f_new, f_old, q_new, q_old, a[i], SECANT_REL_FLOOR * d
        )
        dx[i] = _snap(f_new)
        t_next[i] = next_event_time(x_i, q_new, f_new, d, t)
        if not (math.isfinite(x_i) and math.isfinite(f_new) and math.isfinite(q_new)):
            return -1
        if q_new != q_old:
            counts[i] += 1
            return 1
        return 0

    @numba.njit
    def initialize(x, q, dx, a, dq, t_last, t_next, p):
        for i in range(x.shape[0]):
            t_last[i] = 0.0
            a[i] = 0.0
        for i in range(x.shape[0]):
            dx[i] = _snap(deriv(i, q, 0.0, p))
            t_next[i] = next_event_time(x[i], q[i], dx[i], dq[i], 0.0)

    @numba.njit(nogil=True)
    def run_loop(
        t_end, x, q, dx, a, dq, t_last, t_next, counts, p,
        dep_ptr, dep_idx, input_atoms,
        record, ev_atom, ev_t, ev_q,
        rs_dt, rs_out, max_events,
    ):
        n = x.shape[0]
        n_rec = 0
        cap = ev_t.shape[0]
        rs_k = 0
        rs_n = rs_out.shape[0]
        n_events = 0
        t_in = next_input_time(0.0, p)
        status = _STATUS_OK
        bad_atom = -1
        bad_t = 0.0
        while True:
            i = next_atom(t_next)
            tn = t_next[i]
            if t_in <= t_end and t_in < tn:
                for k in range(input_atoms.shape[0]):
                    j = input_atoms[k]
                    if not input_change(j, t_in, x, q, dx, dq, t_last, t_next, p):
                        status = _STATUS_NONFINITE
                        bad_atom = j
                        bad_t = t_in
                        break
                if status != _STATUS_OK:
                    break
                t_in = next_input_time(t_in, p)
                continue
            if tn > t_end:
                break
            while rs_k < rs_n and rs_k * rs_dt < tn:
                for m in range(n):
                    rs_out[rs_k, m] = q[m]
                rs_k += 1
            res = self_event(i, tn, x, q, dx, a, dq, t_last, t_next, counts, p)
            n_events += 1
            if res < 0:
                status = _STATUS_NONFINITE
                bad_atom = i
                bad_t = tn
                break
            if res == 1:
                if record:
                    if n_rec == cap:
                        cap *= 2
                        na = np.empty(cap, dtype=np.int64)
                        nt = np.empty(cap)
                        nq = np.empty(cap)
                        na[:n_rec] = ev_atom[:n_rec]
                        nt[:n_rec] = ev_t[:n_rec]
                        nq[:n_rec] = ev_q[:n_rec]
                        ev_atom = na
                        ev_t = nt
                        ev_q = nq
                    ev_atom[n_rec] = i
                    ev_t[n_rec] = tn
                    ev_q[n_rec] = q[i]
                    n_rec += 1
                for k in range(dep_ptr[i], dep_ptr[i + 1]):
                    j = dep_idx[k]
                    if not input_change(j, tn, x, q, dx, dq, t_last, t_next, p):
                        status = _STATUS_NONFINITE
                        bad_atom = j
                        bad_t = tn
                        break
                if status != _STATUS_OK:
                    break
            if n_events >= max_events:
                status = _STATUS_MAX_EVENTS
                bad_atom = i
                bad_t = tn
                break
        while rs_k < rs_n:
            for m in range(n):
                rs_out[rs_k, m] = q[m]
            rs_k += 1
        # bring every internal state to t_end
        if status == _STATUS_OK:
            for m in range(n):
                x[m] = x[m] + dx[m] * (t_end - t_last[m])
                t_last[m] = t_end
        return status, bad_atom, bad_t, n_events, n_rec, ev_atom, ev_t, ev_q

    return input_change, self_event, initialize, run_loop


_KERNELS: dict = {}


def _kernels_for(model: QssModel):
    key = (model.deriv, model.next_input_time)
    if key not in _KERNELS:
        _KERNELS[key] = _make_kernels(model.deriv, model.next_input_time)
    return _KERNELS[key]


# --------------------------------------------------------------------------
# simulator
# --------------------------------------------------------------------------


class LiqssSimulator:
    """One LIQSS1 simulation instance.

    Owns all mutable state; not safe to drive from several threads at once.
    Independent instances share nothing and can run in parallel.

    Parameters
    ----------
    model : QssModel
    x0 : array_like
        Initial internal states.  Quantized outputs start equal to them.
    delta_q : float or array_like
        Quantum per atom (broadcast if scalar).
    """

    def __init__(self, model: QssModel, x0, delta_q) -> None:
        self.model = model
        n = model.n
        x0 = np.array(x0, dtype=np.float64).reshape(-1)
        if x0.shape[0] != n:
            raise ValueError(f"expected {n} initial states, got {x0.shape[0]}")
        dq = np.broadcast_to(np.asarray(delta_q, dtype=np.float64), (n,)).copy()
        if not np.all(dq > 0.0):
            raise ValueError("every quantum must be > 0")
        self._x0 = x0
        self.dq = dq
        self._dep_ptr, self._dep_idx = model.graph.csr()
        self._inputs = np.array(model.input_atoms, dtype=np.int64)
        (self._input_change, self._self_event,
         self._initialize, self._run_loop) = _kernels_for(model)
        self.reset()

    def reset(self) -> None:
        n = self.model.n
        self.x = self._x0.copy()
        self.q = self._x0.copy()
        self.dx = np.zeros(n)
        self.a = np.zeros(n)
        self.t_last = np.zeros(n)
        self.t_next = np.full(n, math.inf)
        self.counts = np.zeros(n, dtype=np.int64)
        self.time = 0.0
        self._initialize(self.x, self.q, self.dx, self.a, self.dq,
                         self.t_last, self.t_next, self.model.params)

    def atom(self, i: int) -> QssAtom:
        return QssAtom(i, float(self.x[i]), float(self.q[i]), float(self.dx[i]),
                       float(self.a[i]), float(self.dq[i]), float(self.t_last[i]),
                       float(self.t_next[i]), int(self.counts[i]))

    def handle_self_event(self, i: int, t: float) -> list[int]:
        """Fire atom `i` at its scheduled time `t`.

        Returns the dependents that must re-evaluate (empty when the
        quantized output did not change).  Dependents are *not* updated
        here; call `handle_input_change` on each.
        """
        if abs(t - self.t_next[i]) > TIME_TOL:
            raise SchedulingError(
                f"atom {self.model.names[i]} scheduled at {self.t_next[i]!r}, fired at {t!r}"
            )
        res = self._self_event(i, t, self.x, self.q, self.dx, self.a, self.dq,
                               self.t_last, self.t_next, self.counts, self.model.params)
        self.time = t
        if res < 0:
            raise SimulationError(f"non-finite state in atom {self.model.names[i]} at t={t}")
        if res == 0:
            return []
        return list(self.model.graph.dependents[i])

    def handle_input_change(self, j: int, t: float) -> None:
        ok = self._input_change(j, t, self.x, self.q, self.dx, self.dq,
                                self.t_last, self.t_next, self.model.params)
        if not ok:
            raise SimulationError(f"non-finite state in atom {self.model.names[j]} at t={t}")

    def run(
        self,
        t_end: float,
        *,
        record: bool = True,
        resample_dt: float | None = None,
        max_events: int | None = None,
    ) -> LiqssResult:
        """Run the event loop from the current state until `t_end`.

        With `resample_dt`, quantized outputs are also sampled (zero-order
        hold) on the grid ``k * resample_dt`` for ``k*resample_dt <= t_end``
        while the run proceeds; this is what `analysis.resample` would
        produce from the recorded trajectory.
        """
        if not t_end > 0:
            raise ValueError("t_end must be > 0")
        if self.time != 0.0:
            self.reset()
        n = self.model.n
        cap = 1024
        ev_atom = np.empty(cap, dtype=np.int64)
        ev_t = np.empty(cap)
        ev_q = np.empty(cap)
        if resample_dt is not None:
            n_grid = int(math.floor(t_end / resample_dt + 1e-9)) + 1
            rs_out = np.empty((n_grid, n))
            rs_dt = float(resample_dt)
        else:
            rs_out = np.empty((0, n))
            rs_dt = 1.0
        budget = np.iinfo(np.int64).max if max_events is None else int(max_events)
        q_init = self.q.copy()

        t0 = time.perf_counter()
        status, bad_atom, bad_t, n_events, n_rec, ev_atom, ev_t, ev_q = self._run_loop(
            float(t_end), self.x, self.q, self.dx, self.a, self.dq, self.t_last,
            self.t_next, self.counts, self.model.params, self._dep_ptr, self._dep_idx,
            self._inputs, record, ev_atom, ev_t, ev_q, rs_dt, rs_out, budget,
        )
        wall = time.perf_counter() - t0
        self.time = float(t_end)
        if status == _STATUS_NONFINITE:
            raise SimulationError(
                f"non-finite state in atom {self.model.names[bad_atom]} at t={bad_t}"
            )
        if status == _STATUS_MAX_EVENTS:
            raise SimulationError(f"event budget of {budget} exhausted at t={bad_t}")

        traj = None
        if record:
            traj = _split_events(self.model.names, q_init, ev_atom[:n_rec],
                                 ev_t[:n_rec], ev_q[:n_rec])
        return LiqssResult(
            names=self.model.names,
            t_end=float(t_end),
            update_counts=self.counts.copy(),
            final_x=self.x.copy(),
            final_q=self.q.copy(),
            n_events=int(n_events),
            trajectory=traj,
            resampled=rs_out if resample_dt is not None else None,
            resample_dt=resample_dt,
            wall_time=wall,
        )


def _split_events(names, q_init, ev_atom, ev_t, ev_q) -> EventTrajectory:
    times, values = [], []
    order = np.argsort(ev_atom, kind="stable")
    bounds = np.searchsorted(ev_atom[order], np.arange(len(names) + 1))
    for i in range(len(names)):
        sel = order[bounds[i]:bounds[i + 1]]
        times.append(np.concatenate(([0.0], ev_t[sel])))
        values.append(np.concatenate(([q_init[i]], ev_q[sel])))
    return EventTrajectory(tuple(names), times, values)
