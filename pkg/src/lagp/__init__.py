"""Local approximate Gaussian process regression.

Each prediction location gets its own small GP, built greedily from a pool of
nearby design points by maximising the reduction in predictive variance.
"""

from ._backend import available as available_backends
from .alc import (
    AlcScores,
    CandidateSet,
    alc_scores_batch,
    alc_scores_serial,
    fused_dual_reduce,
    select_next,
)
from .data import LhsSpec, borehole, gp_sample_path, lhs_sample
from .emulate import (
    EmulationJob,
    EmulationResult,
    LocationError,
    emulate,
    fidelity_schedule,
)
from .errors import (
    DimensionError,
    ExhaustedCandidates,
    LagpError,
    NearSingularExtension,
    NumericalError,
    ParameterError,
    PartialDesignError,
    SingularityError,
)
from .gp import (
    Design,
    Hyperparameters,
    LocalState,
    MLEResult,
    Prediction,
    build_gp,
    correlation,
    correlation_matrix,
    log_marginal_likelihood,
    mle_theta,
    predict,
    update_gp,
)
from .local import LocalDesignParams, LocalFit, local_design, local_fit, nearest_neighbors

__version__ = "0.1.0"

__all__ = [
    "AlcScores", "CandidateSet", "alc_scores_batch", "alc_scores_serial",
    "fused_dual_reduce", "select_next", "available_backends",
    "LhsSpec", "borehole", "gp_sample_path", "lhs_sample",
    "EmulationJob", "EmulationResult", "LocationError", "emulate", "fidelity_schedule",
    "DimensionError", "ExhaustedCandidates", "LagpError", "NearSingularExtension",
    "NumericalError", "ParameterError", "PartialDesignError", "SingularityError",
    "Design", "Hyperparameters", "LocalState", "MLEResult", "Prediction",
    "build_gp", "correlation", "correlation_matrix", "log_marginal_likelihood",
    "mle_theta", "predict", "update_gp",
    "LocalDesignParams", "LocalFit", "local_design", "local_fit", "nearest_neighbors",
]
