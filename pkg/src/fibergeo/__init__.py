"""Riemannian geometry of full-rank matrix fibers and matrix-valued fields.

The package computes, for the metric
tr(U (A^T A)^{-1} V^T) sqrt(det(A^T A)) on full-rank n x m matrices
(n > m): closed-form geodesics and their blow-up times, geodesic
distances by two independent solvers, distances in the metric completion
(singular stratum identified to a cone point), the quotient geometry on
symmetric positive definite matrices under left SO(n) actions, and L2
distances between discretized matrix-valued one-form fields.
"""

from .errors import (
    ConvergenceError,
    DomainError,
    FibergeoError,
    GramMismatchError,
    InputFormatError,
    InterpolationError,
    ManifoldMismatchError,
    RankError,
    ShapeError,
)
from .fiber import (
    RANK_TOL,
    FullRankMatrix,
    GeodesicData,
    PLPath,
    TangentMatrix,
    exp_map,
    exp_map_with_velocity,
    fs_coefficients,
    geodesic_data,
    gram,
    inner_product,
    is_full_rank,
    lower_bound,
    moore_penrose,
    norm,
    path_energy,
    path_length,
    segment_lengths,
    volume_quarter,
)
from .solver import (
    ALL_ROUTES,
    METHOD_PL,
    METHOD_SHOOTING,
    METHOD_SINGULAR,
    CompletionPoint,
    DistanceResult,
    SolverOptions,
    completion_distance,
    dist_to_singular,
    distance,
    log_map,
    pl_shorten,
)
from .quotient import (
    Rotation,
    SPDMatrix,
    align,
    ebin_inner,
    polar_lift,
    project,
    sqrtm_spd,
    sym_distance,
)
from .fields import (
    CompletionField,
    MetricField,
    OneFormField,
    RotationField,
    SampledManifold,
    as_completion_field,
    canonicalize,
    ebin_field_distance,
    field_align,
    field_distance,
    field_exp,
    field_interpolate,
    field_log,
    field_speed,
    field_volume,
    metric_field,
    pointwise_distances,
)
from .oracles import (
    InstanceGenerator,
    fd_speed_profile,
    radial_integral_oracle,
    random_full_rank,
    random_rotation,
    random_spd,
    random_tangent,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
