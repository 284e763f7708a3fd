"""Discrete entropy estimators, an evaluation harness and MI tools."""

from .distributions import (
    CategoricalDistribution,
    Histogram,
    draw_histogram,
    from_counts,
    sample_dirichlet_symmetric,
    true_entropy,
    zipfian,
)
from .estimators import (
    ESTIMATOR_NAMES,
    EntropyEstimate,
    EstimatorId,
    EstimatorPreconditionError,
    all_estimators,
    estimate,
)
from .evaluation import ExperimentConfig, TruthSpec, compare_all, run_experiment
from .information import (
    JointCountTable,
    estimate_mi,
    hierarchical_cluster,
    mi_permutation_significance,
    normalized_mi,
    variation_of_information,
)
from .mathfns import DomainError, QuadratureError, QuadratureSpec

__version__ = "0.1.0"

__all__ = [
    "CategoricalDistribution",
    "Histogram",
    "draw_histogram",
    "from_counts",
    "sample_dirichlet_symmetric",
    "true_entropy",
    "zipfian",
    "ESTIMATOR_NAMES",
    "EntropyEstimate",
    "EstimatorId",
    "EstimatorPreconditionError",
    "all_estimators",
    "estimate",
    "ExperimentConfig",
    "TruthSpec",
    "compare_all",
    "run_experiment",
    "JointCountTable",
    "estimate_mi",
    "hierarchical_cluster",
    "mi_permutation_significance",
    "normalized_mi",
    "variation_of_information",
    "DomainError",
    "QuadratureError",
    "QuadratureSpec",
    "__version__",
]
