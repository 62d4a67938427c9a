"""explaudit: measure, estimate, and stress-test local explanation quality."""

from ._kernels import kernel_backend
from .adversary import (
    ExactLosses,
    FStarInstance,
    HonestExplainer,
    LowerBoundReport,
    WorldSeparationReport,
    choose_K,
    constant_estimator,
    exact_losses,
    likelihood_ratio,
    oracle_estimator,
    run_lower_bound_experiment,
    sample_f_star,
    simple_audit_estimator,
    trial_rng,
    world_separation_experiment,
)
from .auditor import (
    AuditInput,
    AuditorConfig,
    AuditReport,
    accuracy_interval,
    audit_sample_sizes,
    coverage_samples,
    lower_bound_samples,
    simple_audit,
    upper_bound_samples,
)
from .core import (
    Ball,
    ConstantClassifier,
    HyperRectangle,
    LinearClassifier,
    LocalExplanation,
    LossEstimate,
    MassEstimate,
    as_batch_classifier,
    explainability_loss,
    local_loss,
    local_mass,
    locality,
)
from .distributions import (
    GaussianMarginal,
    ProductDistribution,
    UniformMarginal,
    distribution_from_spec,
    sample_uniform_sphere,
)
from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    ExplauditError,
    InconsistentLabels,
    InsufficientCoverage,
    InsufficientData,
    OracleUnavailable,
    OutsideLabelViolation,
    OutsideSupportError,
    ParameterOutOfRange,
    RecordUnreadable,
    RegionMassZero,
    ZeroMassBall,
    ZeroMassRectangle,
)
from .harness import ExperimentConfig, ExperimentRecord, plot_record, run_experiment
from .moments import (
    MomentMatchedProbs,
    moment_matched_probs,
    moment_system_for_l,
    verify_moment_system,
)
from .partition import PartitionSpec, build_partition, split_rectangle
from .spheres import (
    SpheresDistribution,
    SpheresInstance,
    ball_cap_decomposition,
    best_linear_loss,
    f_spheres,
    psi,
    psi_inverse,
    sample_in_ball,
    theorem3_scan,
)

__version__ = "0.1.0"

__all__ = [
    "AuditInput",
    "AuditorConfig",
    "AuditReport",
    "Ball",
    "ConfigInvalid",
    "ConstantClassifier",
    "DimensionMismatch",
    "ExactLosses",
    "ExperimentConfig",
    "ExperimentRecord",
    "ExplauditError",
    "FStarInstance",
    "GaussianMarginal",
    "HonestExplainer",
    "HyperRectangle",
    "InconsistentLabels",
    "InsufficientCoverage",
    "InsufficientData",
    "LinearClassifier",
    "LocalExplanation",
    "LossEstimate",
    "LowerBoundReport",
    "MassEstimate",
    "MomentMatchedProbs",
    "OracleUnavailable",
    "OutsideLabelViolation",
    "OutsideSupportError",
    "ParameterOutOfRange",
    "PartitionSpec",
    "ProductDistribution",
    "RecordUnreadable",
    "RegionMassZero",
    "SpheresDistribution",
    "SpheresInstance",
    "UniformMarginal",
    "WorldSeparationReport",
    "ZeroMassBall",
    "ZeroMassRectangle",
    "accuracy_interval",
    "as_batch_classifier",
    "audit_sample_sizes",
    "ball_cap_decomposition",
    "best_linear_loss",
    "build_partition",
    "choose_K",
    "constant_estimator",
    "coverage_samples",
    "distribution_from_spec",
    "exact_losses",
    "explainability_loss",
    "f_spheres",
    "kernel_backend",
    "likelihood_ratio",
    "oracle_estimator",
    "local_loss",
    "local_mass",
    "locality",
    "lower_bound_samples",
    "moment_matched_probs",
    "moment_system_for_l",
    "plot_record",
    "psi",
    "psi_inverse",
    "run_experiment",
    "run_lower_bound_experiment",
    "sample_f_star",
    "sample_in_ball",
    "sample_uniform_sphere",
    "simple_audit",
    "simple_audit_estimator",
    "split_rectangle",
    "theorem3_scan",
    "trial_rng",
    "upper_bound_samples",
    "verify_moment_system",
    "world_separation_experiment",
]
