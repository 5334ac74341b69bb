"""Corridor design for pulse-modulated feedback on third-order chain plants.

A controller fires impulses of weight ``lambda_n`` at intervals ``T_n``,
both set from the output at the firing instant. This package computes the
1-cycle that keeps the output inside a requested corridor, the modulation
laws that reproduce it, their local stability, and event-driven
simulations of the closed loop.
"""
from .cycle import (
    CorridorAnalysis,
    OneCycle,
    PeriodicProfile,
    corridor_extrema,
    fixed_point,
    fixed_point_elements,
    map_corridor_through_output_nl,
    periodic_output,
)
from .design import (
    CorridorSpec,
    ModulationConfig,
    PeriodDesign,
    SlopeChoice,
    StabilityReport,
    corridor_ratio,
    design_period,
    design_weight,
    slope_grid,
    slope_search,
    stability_report,
    synthesize_modulation,
)
from .errors import (
    AnalysisError,
    CorridorError,
    DegenerateCycleError,
    DegeneratePointsError,
    DistinctnessError,
    DomainError,
    NoStabilizingSlopesError,
    SaturationError,
    SimulationAbort,
    SingularityError,
    SingularSystemError,
    UnreachableCorridorError,
    UnreachableDoseError,
    ValidationError,
)
from .numerics import (
    DEFAULT_SETTINGS,
    NumericsSettings,
    RootSet,
    divided_difference,
    eigenvalues,
    find_roots,
    mat_exp,
    mu,
    mu_derivative,
    solve_linear,
    spectral_radius,
)
from .plant import (
    HillFunction,
    Identity,
    NmbParams,
    PlantLTI,
    PlantStructure,
    PowerLaw,
    StaticNonlinearity,
    TableNonlinearity,
    invert_numeric,
    plant_from_nmb,
)
from .scenario import ConfigError, DesignResult, ScenarioConfig, load_config, parse_config, run_design
from .simulate import (
    ConvergenceReport,
    CorridorReport,
    FiringEvent,
    Trajectory,
    corridor_report,
    detect_convergence,
    simulate,
    write_events_csv,
    write_trajectory_csv,
)

__version__ = "0.1.0"
