"""OPE coefficients of massive Euclidean phi^4 theory in four dimensions.

Zeroth order comes from Wick contractions; higher orders from the
counter-term-subtracted recursion in the insertion point of the interaction.
"""

from .core import (
    IDENTITY,
    INTERACTION,
    PHI,
    CompositeOp,
    DomainError,
    ModelParams,
    OpSpecError,
    PointConfig,
    dimension,
    enumerate_basis,
    multinomial_weight,
    parse_op,
    two_points,
)
from .deform import (
    CoeffResult,
    CoeffTable,
    Integrand,
    NumericSettings,
    SymbolicUnavailable,
    build_integrand,
    coefficient,
    ir_slopes,
    uv_slopes,
)
from .expr import CoeffExpr, DivergenceError, evaluate, integrate_y_symbolic
from .quad import NumericCoeff, QuadPlan, QuadratureError, integrate_r4, mc_integrate_r4
from .specfun import bessel_k0, bessel_k1, propagator, propagator_deriv
from .wick import vanishes_by_counting, zeroth_order

__version__ = "0.1.0"

__all__ = [
    "IDENTITY",
    "INTERACTION",
    "PHI",
    "CoeffExpr",
    "CoeffResult",
    "CoeffTable",
    "CompositeOp",
    "DivergenceError",
    "DomainError",
    "Integrand",
    "ModelParams",
    "NumericCoeff",
    "NumericSettings",
    "OpSpecError",
    "PointConfig",
    "QuadPlan",
    "QuadratureError",
    "SymbolicUnavailable",
    "bessel_k0",
    "bessel_k1",
    "build_integrand",
    "coefficient",
    "dimension",
    "enumerate_basis",
    "evaluate",
    "integrate_r4",
    "integrate_y_symbolic",
    "ir_slopes",
    "mc_integrate_r4",
    "multinomial_weight",
    "parse_op",
    "propagator",
    "propagator_deriv",
    "two_points",
    "uv_slopes",
    "vanishes_by_counting",
    "zeroth_order",
]
