"""Classical trajectories as minimizers of a discretized action, plus a
path-integral wave propagator on a 1D grid."""
from .errors import (
    ConfigError,
    DegeneracyError,
    DivergenceError,
    DomainError,
    EphemerisParseError,
    InvalidPathError,
    LeastActionError,
)
from .experiment import ExperimentConfig, ExperimentReport, preset, run_experiment
from .integrator import InitialState, euler_integrate, rest_terminated_state, substep_integrate
from .optimizer import (
    Mitigation,
    OptimizeConfig,
    OptimizeHistory,
    apply_mitigation_loss,
    compare_paths,
    freeze_mask,
    minimize_action,
    perturb,
)
from .path import ActionBreakdown, Path, PathGradient, action, discrete_el_residual, energy_series, grad_action
from .systems import (
    DoublePendulum,
    DoublePendulumParams,
    FreeBody,
    Gravity,
    LennardJonesGas,
    LennardJonesParams,
    Pendulum,
    make_system,
)

__version__ = "0.1.0"
