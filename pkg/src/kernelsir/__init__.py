"""Spatial kernel SIR epidemic model with optimal lockdown control.

Subpackages cover the discretized spatial model (``grid_kernel``,
``sir_forward``), adjoint-based control optimization
(``optimal_control``), long-run equilibrium analysis (``equilibria``),
a stochastic agent-based counterpart (``abm``), and experiment
orchestration with file output (``experiments``, ``cli``).
"""

from .abm import (
    AbmConfig,
    AbmRun,
    EnsembleResult,
    compare,
    measure_infectious_periods,
    run,
    run_ensemble,
)
from .equilibria import (
    FixedPointConfig,
    PrevalenceSolution,
    SisEquilibrium,
    sir_prevalence,
    sis_fixed_point,
    threshold_report,
)
from .experiments import (
    SCENARIOS,
    ConfigurationError,
    OutputBundle,
    ScenarioSpec,
    diagnostics,
    load_scenario,
    run_scenario,
)
from .grid_kernel import (
    KernelMatrix,
    KernelSpec,
    SpatialGrid,
    build_kernel_matrix,
    compute_norms,
)
from .optimal_control import (
    AdjointField,
    CostParams,
    SweepConfig,
    SweepResult,
    cost_functional,
    cost_gradient,
    fbs_solve,
    integrate_adjoint_backward,
)
from .sir_forward import (
    ControlField,
    EpidemicParams,
    InitialCondition,
    IntegrationError,
    StateField,
    integrate_forward,
    spatial_mean,
)

__all__ = [
    "AbmConfig",
    "AbmRun",
    "AdjointField",
    "ConfigurationError",
    "ControlField",
    "CostParams",
    "EnsembleResult",
    "EpidemicParams",
    "FixedPointConfig",
    "InitialCondition",
    "IntegrationError",
    "KernelMatrix",
    "KernelSpec",
    "OutputBundle",
    "PrevalenceSolution",
    "SCENARIOS",
    "ScenarioSpec",
    "SisEquilibrium",
    "SpatialGrid",
    "StateField",
    "SweepConfig",
    "SweepResult",
    "build_kernel_matrix",
    "compare",
    "compute_norms",
    "cost_functional",
    "cost_gradient",
    "diagnostics",
    "fbs_solve",
    "integrate_adjoint_backward",
    "integrate_forward",
    "load_scenario",
    "measure_infectious_periods",
    "run",
    "run_ensemble",
    "run_scenario",
    "sir_prevalence",
    "sis_fixed_point",
    "spatial_mean",
    "threshold_report",
]

__version__ = "0.1.0"
