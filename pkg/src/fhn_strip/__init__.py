"""Semi-analytic kernels, integral-equation and finite-difference solvers,
and a machine-checkable bound suite for the FitzHugh-Nagumo system on a
strip with flux boundary conditions."""

from .analysis import (
    ALL_CHECKS,
    CheckReport,
    SamplePlan,
    check_convolution_limits,
    check_kernel_bounds,
    check_solution_bounds,
    check_steady_limit,
    check_theta_decay,
    invariant_rectangle_monitor,
    run_verification,
)
from .errors import (
    AccuracyError,
    BlowUpError,
    BudgetExceededError,
    ConfigError,
    DivergenceError,
    DomainError,
    FhnStripError,
    NonContractionError,
    PreconditionError,
    UnsupportedOperationError,
    ValidationError,
)
from .kernel import (
    KernelContext,
    eval_G,
    eval_K,
    eval_theta,
    laplace_K_closed,
    laplace_theta_closed,
    make_context,
    steady_profile,
)
from .model import (
    DerivedConstants,
    ModelParams,
    ProblemSpec,
    SpaceFunction,
    TimeFunction,
    derive_constants,
    eval_space_fn,
    eval_time_fn,
    eval_time_fn_deriv,
    load_problem,
    validate_params,
)
from .quadrature import (
    ConvGrid,
    QuadResult,
    build_conv_grid,
    convolve,
    integrate,
    integrate_semi_infinite,
)
from .solver_fd import ConvergenceStudy, FDConfig, convergence_study, solve_fd
from .solver_ie import (
    Field,
    Grid,
    InvariantRectangle,
    PicardReport,
    Solution,
    SolveOptions,
    assemble_N,
    picard_window,
    recover_v,
    residual_ie,
    solve_ie,
)
from .special import bessel_j1, eval_E, lipschitz_F, nagumo_F, nagumo_f

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
