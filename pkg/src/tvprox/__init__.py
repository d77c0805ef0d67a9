"""Online inexact proximal-gradient method for time-varying composite problems."""

from .analysis import (BoundCheck, BoundReport, OptimaPath, analyze, optima_path,
                       reference_optimum, regret_series, tracking_series)
from .errors import (CapabilityError, ConfigError, ConvergenceError, DataError,
                     DomainError, InfeasibleRestrictionError, InputError, ParameterError,
                     SolverError, TVProxError)
from .generators import (Drift, NetworkTopology, gen_lasso_stream, gen_least_squares_box,
                         gen_network_flow, gen_quadratic_box)
from .gradients import GradOracleConfig, GradientEstimate, ZerothOrderConfig
from .problem import (NonsmoothCost, ProblemConstants, SmoothCost, TimeVaryingProblem,
                      contraction_factor, eval_objective, grad_smooth, problem_constants)
from .prox import (ProxOracleConfig, ProxResult, certify_precision, project_inexact,
                   prox_exact)
from .sets import FeasibleSet
from .solver import RunTrace, SolverConfig, StepRecord, run, step

__version__ = "0.1.0"

__all__ = [
    "BoundCheck", "BoundReport", "CapabilityError", "ConfigError", "ConvergenceError",
    "DataError", "DomainError", "Drift", "FeasibleSet", "GradOracleConfig",
    "GradientEstimate", "InfeasibleRestrictionError", "InputError", "NetworkTopology",
    "NonsmoothCost", "OptimaPath", "ParameterError", "ProblemConstants",
    "ProxOracleConfig", "ProxResult", "RunTrace", "SmoothCost", "SolverConfig",
    "SolverError", "StepRecord", "TVProxError", "TimeVaryingProblem",
    "ZerothOrderConfig", "analyze", "certify_precision", "contraction_factor",
    "eval_objective", "gen_lasso_stream", "gen_least_squares_box", "gen_network_flow",
    "gen_quadratic_box", "grad_smooth", "optima_path", "problem_constants",
    "project_inexact", "prox_exact", "reference_optimum", "regret_series", "run", "step",
    "tracking_series",
]
