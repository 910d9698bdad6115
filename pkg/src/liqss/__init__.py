"""Linearly implicit quantized state simulation (LIQSS1) of a synchronous
machine on an infinite bus, with a forward Euler reference and error metrics."""

from .analysis import (
    ErrorReport,
    Grid,
    ResampledSeries,
    Scenario,
    SweepRow,
    error_report,
    max_error,
    pointwise_error,
    quantum_sweep,
    resample,
    ripple,
    tane,
    update_intensity,
)
from .config import ConfigError, RunConfig, load_config
from .linear import linear_model, linear_solution
from .machine import (
    STATE_NAMES,
    GridSpec,
    MachineParams,
    MachineSystem,
    TorqueProfile,
    build_atoms,
    init_steady_state,
)
from .qss_core import (
    DependencyGraph,
    EventTrajectory,
    LiqssResult,
    LiqssSimulator,
    QssModel,
    SchedulingError,
    SimulationError,
)
from .reference import DenseTrajectory, ReferenceSolverError, euler_step, run_reference

__version__ = "0.1.0"
