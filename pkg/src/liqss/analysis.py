"""Error metrics for LIQSS runs against the Euler reference, and the quantum sweep."""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .machine import (
    STATE_NAMES,
    GridSpec,
    MachineParams,
    MachineSystem,
    TorqueProfile,
    build_atoms,
)
from .qss_core import EventTrajectory, LiqssResult, LiqssSimulator
from .reference import DenseTrajectory, run_reference

__all__ = [
    "Grid",
    "GridMismatchError",
    "ResampledSeries",
    "ErrorReport",
    "SweepRow",
    "Scenario",
    "resample",
    "pointwise_error",
    "tane",
    "max_error",
    "update_intensity",
    "error_report",
    "ripple",
    "quantum_sweep",
]


class GridMismatchError(ValueError):
    """Two series are not sampled on the same time grid."""


@dataclass(frozen=True)
class Grid:
    """Uniform sampling grid ``t0 + k*dt`` for ``k < count``."""

    t0: float
    dt: float
    count: int

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.count < 1:
            raise ValueError("count must be >= 1")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.count)

    @classmethod
    def of(cls, ref: DenseTrajectory) -> "Grid":
        return cls(ref.t0, ref.dt, len(ref))

    @classmethod
    def span(cls, t_end: float, dt: float) -> "Grid":
        """Grid covering ``[0, t_end]`` at spacing `dt`."""
        return cls(0.0, dt, int(math.floor(t_end / dt + 1e-9)) + 1)


@dataclass
class ResampledSeries:
    """Zero-order-hold samples of an event trajectory; ``values[k, i]`` is state i."""

    grid: Grid
    values: np.ndarray
    names: tuple[str, ...] = STATE_NAMES

    def __post_init__(self) -> None:
        if self.values.shape != (self.grid.count, len(self.names)):
            raise ValueError("values must have shape (grid.count, n_states)")

    @property
    def dt(self) -> float:
        return self.grid.dt

    def state(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


def _hold(times: np.ndarray, values: np.ndarray, t: np.ndarray) -> np.ndarray:
    # last record with time <= t; same-time records resolve to the latest
    idx = np.searchsorted(times, t, side="right") - 1
    if idx.size and idx.min() < 0:
        raise ValueError("grid starts before the first event")
    return values[idx]


def resample(events: EventTrajectory, grid: Grid) -> ResampledSeries:
    """Sample each atom's piecewise-constant output on `grid`.

    Parameters
    ----------
    events : EventTrajectory
        Per-atom ``(t, q)`` records; each must hold at least the initial one.
    grid : Grid

    Returns
    -------
    ResampledSeries
        At each grid time, the most recent value at or before that time.
    """
    t = grid.times
    cols = []
    for i in range(len(events)):
        ts, qs = events[i]
        if len(ts) == 0:
            raise ValueError(f"no records for {events.names[i]}")
        cols.append(_hold(np.asarray(ts), np.asarray(qs), t))
    return ResampledSeries(grid, np.column_stack(cols), tuple(events.names))


def _grid_of(series) -> Grid:
    if isinstance(series, ResampledSeries):
        return series.grid
    if isinstance(series, DenseTrajectory):
        return Grid.of(series)
    raise TypeError(f"expected ResampledSeries or DenseTrajectory, got {type(series)!r}")


def pointwise_error(y: ResampledSeries | DenseTrajectory, q_ref: DenseTrajectory) -> np.ndarray:
    """``y - q_ref`` sample by sample, shape ``(n_samples, n_states)``."""
    gy, gr = _grid_of(y), _grid_of(q_ref)
    if gy.count != gr.count or not math.isclose(gy.dt, gr.dt, rel_tol=1e-12) \
            or not math.isclose(gy.t0, gr.t0, abs_tol=1e-12):
        raise GridMismatchError(f"grids differ: {gy} vs {gr}")
    if y.values.shape != q_ref.values.shape:
        raise GridMismatchError("state counts differ")
    return y.values - q_ref.values


def tane(pe, y) -> float:
    """Time average normalized error of one state.

    RMS of the pointwise error divided by the dynamic range of `y`.
    A state whose `y` never moves gives ``inf`` (with a `RuntimeWarning`)
    unless the error is identically zero, in which case it gives 0.
    """
    pe = np.asarray(pe, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if pe.size == 0:
        raise ValueError("need at least one sample")
    rms = math.sqrt(float(np.mean(pe * pe)))
    rng = float(y.max() - y.min())
    if rng > 0.0:
        return rms / rng
    if rms == 0.0:
        return 0.0
    warnings.warn("zero dynamic range, TANE reported as inf", RuntimeWarning, stacklevel=2)
    return math.inf


def max_error(report: "ErrorReport | np.ndarray | list[float]") -> float:
    """Largest per-state TANE."""
    vals = report.tane if isinstance(report, ErrorReport) else report
    vals = np.asarray(vals, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("need at least one state")
    return float(vals.max())


def update_intensity(count, duration: float):
    """Updates per second of simulated time."""
    if not duration > 0:
        raise ValueError("duration must be > 0")
    return np.asarray(count) / duration if np.ndim(count) else count / duration


@dataclass
class ErrorReport:
    names: tuple[str, ...]
    tane: np.ndarray
    update_counts: np.ndarray
    intensity: np.ndarray
    zero_range: tuple[str, ...] = ()

    @property
    def max_error(self) -> float:
        return max_error(self.tane)

    @property
    def total_updates(self) -> int:
        return int(np.sum(self.update_counts))


def error_report(y: ResampledSeries | DenseTrajectory, q_ref: DenseTrajectory,
                 update_counts=None, duration: float | None = None) -> ErrorReport:
    """Per-state TANE plus update statistics.

    `duration` defaults to the span of the reference grid.
    """
    pe = pointwise_error(y, q_ref)
    names = tuple(q_ref.names)
    n = len(names)
    vals, flat = np.empty(n), []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for i in range(n):
            vals[i] = tane(pe[:, i], y.values[:, i])
            if np.ptp(y.values[:, i]) == 0.0:
                flat.append(names[i])
    if flat and not np.all(np.isfinite(vals)):
        warnings.warn(f"zero dynamic range in {', '.join(flat)}", RuntimeWarning, stacklevel=2)
    counts = np.zeros(n, dtype=np.int64) if update_counts is None \
        else np.asarray(update_counts, dtype=np.int64)
    if duration is None:
        duration = q_ref.dt * (len(q_ref) - 1)
    return ErrorReport(names, vals, counts, update_intensity(counts, duration), tuple(flat))


def ripple(values: np.ndarray) -> np.ndarray:
    """Largest deviation of each column from its mean."""
    values = np.asarray(values, dtype=np.float64)
    return np.abs(values - values.mean(axis=0)).max(axis=0)


@dataclass
class Scenario:
    """The machine, its grid connection, the torque ramp and the time horizon."""

    params: MachineParams = field(default_factory=MachineParams)
    grid: GridSpec = field(default_factory=GridSpec)
    torque: TorqueProfile = field(default_factory=TorqueProfile)
    t_end: float = 50.0
    euler_dt: float = 1e-4

    def system(self) -> MachineSystem:
        return MachineSystem.create(self.params, self.grid, self.torque)

    def reference(self, h: float | None = None) -> DenseTrajectory:
        return run_reference(self.system(), self.t_end, self.euler_dt if h is None else h)

    def liqss(self, flux_dq: float = 1e-4, *, speed_dq: float | None = None,
              angle_dq: float | None = None, overrides: dict | None = None,
              record: bool = False, resample: bool = True) -> LiqssResult:
        """Run LIQSS1 over the horizon, resampled on the Euler grid by default."""
        model, x0, dq = build_atoms(self.params, self.grid, self.torque, flux_dq=flux_dq,
                                    speed_dq=speed_dq, angle_dq=angle_dq,
                                    overrides=overrides)
        sim = LiqssSimulator(model, x0, dq)
        return sim.run(self.t_end, record=record,
                       resample_dt=self.euler_dt if resample else None)

    def resampled(self, result: LiqssResult) -> ResampledSeries:
        if result.resampled is None:
            if result.trajectory is None:
                raise ValueError("run kept neither samples nor events")
            return resample(result.trajectory, Grid.span(self.t_end, self.euler_dt))
        return ResampledSeries(Grid(0.0, result.resample_dt, result.resampled.shape[0]),
                               result.resampled, tuple(result.names))


@dataclass
class SweepRow:
    delta_q: float
    max_error: float
    total_updates: float
    wall_time: float
    error: str | None = None


def _sweep_row(scenario: Scenario, ref: DenseTrajectory, dq: float,
               speed_ratio: float, overrides: dict | None) -> SweepRow:
    t0 = time.perf_counter()
    try:
        res = scenario.liqss(dq, speed_dq=dq * speed_ratio, overrides=overrides)
        rep = error_report(scenario.resampled(res), ref, res.update_counts, scenario.t_end)
    except Exception as exc:  # recorded per row; the sweep carries on
        return SweepRow(dq, math.nan, math.nan, time.perf_counter() - t0,
                        f"{type(exc).__name__}: {exc}")
    return SweepRow(dq, rep.max_error, rep.total_updates, time.perf_counter() - t0)


def quantum_sweep(scenario: Scenario, dq_list, *, speed_ratio: float = 0.1,
                  overrides: dict | None = None, reference: DenseTrajectory | None = None,
                  workers: int = 1) -> list[SweepRow]:
    """Run LIQSS1 once per flux quantum and score each run against one reference.

    Parameters
    ----------
    scenario : Scenario
    dq_list : sequence of float
        Flux quanta.  The speed quantum is ``speed_ratio * dq`` and the angle
        quantum follows the flux quantum (see `build_atoms`).
    overrides : dict, optional
        Fixed per-state quanta applied to every row.
    reference : DenseTrajectory, optional
        Reuse an existing reference instead of integrating one.
    workers : int
        Rows run on this many threads.

    Returns
    -------
    list of SweepRow
        In the order of `dq_list`.  A failed row has NaN metrics and its
        exception text in ``error``.
    """
    dq_list = [float(d) for d in dq_list]
    if not dq_list:
        raise ValueError("dq_list is empty")
    if not all(d > 0 for d in dq_list):
        raise ValueError("every quantum must be > 0")
    ref = scenario.reference() if reference is None else reference
    # compile the event kernels outside the timed rows; a failure here
    # resurfaces in the rows themselves
    try:
        replace(scenario, t_end=10 * scenario.euler_dt).liqss(dq_list[0], resample=False)
    except Exception:
        pass
    if workers <= 1:
        return [_sweep_row(scenario, ref, d, speed_ratio, overrides) for d in dq_list]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda d: _sweep_row(scenario, ref, d, speed_ratio, overrides),
                             dq_list))
