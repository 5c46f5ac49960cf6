"""NLS bound states of prescribed mass on noncompact metric graphs with
nonlinearity localized on the compact core."""

from .graphs import (
    Edge,
    GraphSpecError,
    MetricGraph,
    compact_core,
    interval_with_half_lines,
    longest_core_edge,
    parse_graph,
)
from .mesh import (
    GraphFunction,
    Mesh,
    MeshError,
    build_mesh,
    default_spacing,
    default_truncation,
    kirchhoff_residual,
)
from .functionals import (
    DegenerateFunctionError,
    EnergyBreakdown,
    FunctionalDomainError,
    em_dual_norm,
    energy,
    fd_manifold_derivative,
    gn_check,
    j_apply,
    j_dual_norm,
    lambda_of,
    sublevel_coefficients,
    tangent_project,
)
from .soliton import (
    CutoffSoliton,
    MassBelowThresholdError,
    SolitonParams,
    SolitonRangeError,
    certified_gap,
    cutoff_soliton,
    energy_conservation_residual,
    gn_line_ratio,
    mass_threshold,
    sech_moment,
    sign_point,
    soliton_energy,
    soliton_params,
    unit_multiplier,
)
from .minmax import (
    LevelReport,
    MinmaxError,
    SeedFamily,
    build_seed,
    level_bound,
    mass_threshold_k,
    seed_family,
    sphere_min_pnorm,
    sphere_samples,
    theta_sweep,
)
from .solver import (
    BoundState,
    BumpProfile,
    FlowStallError,
    MultiSolveResult,
    PsSample,
    SolverConfig,
    TruncationError,
    flow_step,
    multi_solve,
    ps_scaling_sequence,
    ps_sine_sequence,
    solve,
)

__version__ = "0.1.0"
