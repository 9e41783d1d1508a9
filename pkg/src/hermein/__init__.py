"""Balanced metrics, Kempf-Ness functionals and Hermite-Einstein recovery
for split vector bundles over the Riemann sphere."""

from .bundles import (
    BundleSpec,
    CallableField,
    DistortionSpec,
    EvaluationMap,
    MetricField,
    PathField,
    ScaledField,
    basis_dimension,
    curvature,
    degree_from_curvature,
    evaluation_map,
    mean_curvature,
    metric_eval,
)
from .errors import (
    BasePointError,
    ConditioningError,
    DivergenceError,
    HermeinError,
    InsufficientQuadratureError,
    InvalidArgumentError,
    NumericDomainError,
    StallError,
    UnsupportedBundleError,
)
from .functionals import (
    MetricPath,
    ReferenceMetric,
    donaldson_derivative,
    donaldson_m,
    functional_gap,
    kn_functional,
    kn_gradient,
    ldet_w,
    torsion_variation,
    ym_energy,
)
from .maps import GramMetric, InducedField, bergman, gram, induce, iln_matrix
from .optimize import (
    IterationReport,
    RecoveredMetric,
    convergence_study,
    he_defect,
    minimize_kn,
    recover_ym,
    sobolev_distance,
    t_iterate,
)
from .report import Row, emit_report
from .sphere import QuadratureRule, build_quadrature, fs_weight, integrate, point_masses, quasi_uniform_points

__version__ = "0.1.0"
