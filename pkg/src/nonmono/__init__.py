"""Primal-dual splitting for composite inclusions beyond monotonicity.

Solves 0 in A x + L^T B L x by the relaxed primal-dual (Chambolle-Pock
type) iteration, with stepsize and relaxation windows certified from
semimonotonicity moduli of A and B rather than from monotonicity.

    numlin    grouped SVD, pseudoinverses, parallel sums
    ops       operator objects and closed-form resolvents
    semimono  certificates and their calculus (the core)
    rules     admissible (gamma, tau, lambda) windows from certificates
    solver    the iteration with diagnostics
    analysis  spectral ground truth on linear instances
    problems  builtin instances and the JSON problem schema
    cli       command-line front end
"""

__version__ = "0.1.0"

from .analysis import (
    NoStableLambda,
    SingularOperator,
    algo_operator,
    tight_lambda,
    trace_negativity_probe,
    verify_weak_minty_linear,
)
from .numlin import (
    GroupedSvd,
    NotParallelSummable,
    grouped_svd,
    parallel_sum_matrix,
    parallel_sum_scalar,
)
from .ops import AffineOp, BoxNormalCone, ResolventOracle, SingularResolvent, pd_matrix
from .problems import (
    MalformedProblem,
    ProblemBundle,
    UnknownName,
    best_plan,
    builtin,
    load_problem,
    resolve_problem,
    save_problem,
)
from .rules import (
    EmptyWindow,
    ExistenceViolated,
    RequestedOutOfWindow,
    StepsizePlan,
    eta_bound,
    plan_from_moduli,
    plan_from_oblique,
    quadratic_window,
    tau_window,
)
from .semimono import (
    Infeasible,
    ObliqueParams,
    ScalarModuli,
    SemiCert,
    cert_box_normal_cone,
    cert_linear_optimal_R,
    check_linear_cert,
    derive_oblique_params,
    lmi_solve,
    scalar_oblique_params,
)
from .solver import (
    IterateTrace,
    NotGeometric,
    PdProblem,
    assemble_preconditioner,
    cpa_step,
    make_problem,
    min_residual_rate,
    pppa_step,
    rlinear_fit,
    run,
    shadow,
)

__all__ = [
    "__version__",
    "AffineOp", "BoxNormalCone", "ResolventOracle", "SingularResolvent", "pd_matrix",
    "GroupedSvd", "NotParallelSummable", "grouped_svd",
    "parallel_sum_matrix", "parallel_sum_scalar",
    "SemiCert", "ScalarModuli", "ObliqueParams", "Infeasible",
    "check_linear_cert", "cert_linear_optimal_R", "cert_box_normal_cone",
    "lmi_solve", "derive_oblique_params", "scalar_oblique_params",
    "StepsizePlan", "plan_from_oblique", "plan_from_moduli",
    "quadratic_window", "tau_window", "eta_bound",
    "ExistenceViolated", "RequestedOutOfWindow", "EmptyWindow",
    "PdProblem", "IterateTrace", "NotGeometric", "make_problem",
    "assemble_preconditioner", "shadow", "cpa_step", "pppa_step",
    "run", "min_residual_rate", "rlinear_fit",
    "algo_operator", "tight_lambda", "verify_weak_minty_linear",
    "trace_negativity_probe", "NoStableLambda", "SingularOperator",
    "ProblemBundle", "builtin", "best_plan", "load_problem", "save_problem",
    "resolve_problem", "UnknownName", "MalformedProblem",
]
