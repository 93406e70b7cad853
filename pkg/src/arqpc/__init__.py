"""Adaptive regularization for composite nonconvex minimization with strong
high-order optimality certificates, plus worst-case instance generators and
an evaluation-complexity verification harness."""

from .composite import AS3Report, HFunction, check_as3, eval_h, make_h
from .errors import (
    ArqpcError,
    BudgetExhaustedError,
    DegenerateDenominatorError,
    DimensionMismatchError,
    EmptyDomainError,
    InfeasiblePointError,
    InvalidArgumentError,
    OracleError,
    ReplayMismatchError,
    SingularPointError,
    UnknownProblemError,
)
from .optimality import (
    Certificate,
    GridSpec,
    PhiQuery,
    PhiRecord,
    chi,
    global_min_ball,
    phi_w,
    strong_check,
    weak_check,
)
from .problems import (
    EvalCounters,
    FeasibleSet,
    Problem,
    eval_w,
    get_problem,
    lw_constant,
    polynomial_oracle,
    taylor_at,
)
from .solver import (
    AlgoParams,
    IterationRecord,
    RunResult,
    iteration_bound_check,
    rho,
    run,
    sigma_update,
)
from .subproblem import (
    RegModel,
    StepResult,
    compute_step,
    large_step_shortcut,
    model_eval,
    model_phi,
)
from .tensors import (
    SymTensor,
    TaylorPoly,
    VecTaylorPoly,
    eval_taylor,
    reg_derivative_norm,
    reg_derivative_tensor,
    shift_derivative,
)
from .worstcase import (
    HermiteInterpolant,
    WorstCaseInstance,
    build_cor64,
    build_thm61,
    build_thm63,
    hermite_interpolant,
    interpolant_problem,
    replay,
)

__version__ = "0.1.0"
