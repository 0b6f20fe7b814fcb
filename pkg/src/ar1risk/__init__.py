"""Risk model with a log-AR(1) claim intensity: moments, estimation, ruin bounds."""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DegenerateInputError,
    NoPositiveSolutionError,
    ParameterDomainError,
    RangeError,
)
from .model import (
    ModelParams,
    MomentSet,
    SeriesEval,
    StationaryLaw,
    exp_lambda_quadrature,
    exp_lambda_series,
    lambda_moment,
    mean_S,
    mgf_S,
    mgf_claim,
    moments_S,
    stationary_law,
    third_moment_S,
    third_moment_S_paper,
    var_S,
)
from .simulate import PathRecord, RuinEstimate, SimConfig
from .estimation import EstimateResult, ReplicationReport, SampleMoments, replication_study, solve_moments
from .ruin import AdjustmentCoefficient, BoundReport, lundberg_bound, net_profit_min_premium

__all__ = [
    "ConvergenceError",
    "DegenerateInputError",
    "NoPositiveSolutionError",
    "ParameterDomainError",
    "RangeError",
    "ModelParams",
    "MomentSet",
    "SeriesEval",
    "StationaryLaw",
    "exp_lambda_quadrature",
    "exp_lambda_series",
    "lambda_moment",
    "mean_S",
    "mgf_S",
    "mgf_claim",
    "moments_S",
    "stationary_law",
    "third_moment_S",
    "third_moment_S_paper",
    "var_S",
    "PathRecord",
    "RuinEstimate",
    "SimConfig",
    "EstimateResult",
    "ReplicationReport",
    "SampleMoments",
    "replication_study",
    "solve_moments",
    "AdjustmentCoefficient",
    "BoundReport",
    "lundberg_bound",
    "net_profit_min_premium",
]
