"""Active Bayesian system identification.

Linearized MAP parameter estimation inside a trust region, online calibration
of the output noise covariance, and informative input selection by maximizing
a scalar measure of the approximate posterior information matrix.
"""

from sysid.model import (
    Dataset,
    EvaluationError,
    Linearization,
    ParametricModel,
    SystemOracle,
    finite_difference_jacobian,
    linearize,
)
from sysid.estimator import (
    CalibrationError,
    CalibrationState,
    GaussianBelief,
    LoopResult,
    Residuals,
    SolverError,
    compute_residuals,
    estimation_loop,
    map_step,
    model_error_covariance,
    solve_trust_region,
    step_accepted,
    update_sigma,
)
from sysid.design import (
    ConstraintSet,
    DesignError,
    InformationObjective,
    design_input,
    design_objective,
    posterior_information,
)
from sysid.systems import (
    BenchmarkCase,
    CASE_NAMES,
    get_case,
    henon_case,
    linear_case,
    mismatch_cases,
    unicycle_case,
)

__version__ = "0.1.0"
