"""Radial solver and existence/largeness classifier for coupled p-Laplacian
systems driven by nonnegative coefficients and coordinatewise nondecreasing
nonlinearities."""

__version__ = "0.1.0"

from .expressions import (
    ArityError,
    DomainError,
    Expression,
    ExpressionError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    ValidationReport,
    evaluate,
    parse,
    to_source,
    validate_nonlinearity,
)
from .grid import (
    GridFunction,
    RadialGrid,
    cumulative_integral,
    make_grid,
    weighted_inner_integral,
)
from .solver import (
    InternalConsistencyError,
    IterationConfig,
    NonFiniteValueError,
    ProblemSpec,
    ProfileSet,
    SandwichFailedError,
    SolveReport,
    build_sandwich,
    picard_step,
    solve_auxiliary_scalar,
    solve_radial_system,
)
from .criteria import (
    CriteriaReport,
    NonPositiveIntegrandError,
    Verdict,
    WeightMonotonicity,
    check_existence_decay,
    check_keller_osserman,
    check_largeness_forcing,
    check_largeness_necessary,
    check_nonexistence_mass,
    check_sum_reciprocal_integral,
    check_weight_monotonicity,
    classify_improper_integral,
    predict,
)
from .verify import (
    GrowthReport,
    ResidualReport,
    check_monotone_in_k,
    classify_growth,
    fixed_point_residual,
)

__all__ = [
    "__version__",
    "ArityError",
    "DomainError",
    "Expression",
    "ExpressionError",
    "ExpressionSyntaxError",
    "UnknownIdentifierError",
    "ValidationReport",
    "evaluate",
    "parse",
    "to_source",
    "validate_nonlinearity",
    "GridFunction",
    "RadialGrid",
    "cumulative_integral",
    "make_grid",
    "weighted_inner_integral",
    "InternalConsistencyError",
    "IterationConfig",
    "NonFiniteValueError",
    "ProblemSpec",
    "ProfileSet",
    "SandwichFailedError",
    "SolveReport",
    "build_sandwich",
    "picard_step",
    "solve_auxiliary_scalar",
    "solve_radial_system",
    "CriteriaReport",
    "NonPositiveIntegrandError",
    "Verdict",
    "WeightMonotonicity",
    "check_existence_decay",
    "check_keller_osserman",
    "check_largeness_forcing",
    "check_largeness_necessary",
    "check_nonexistence_mass",
    "check_sum_reciprocal_integral",
    "check_weight_monotonicity",
    "classify_improper_integral",
    "predict",
    "GrowthReport",
    "ResidualReport",
    "check_monotone_in_k",
    "classify_growth",
    "fixed_point_residual",
]
