"""Numerical laboratory for a two-phase boundary-penalized obstacle problem
in the weighted half-ball formulation of the fractional Laplacian."""

__version__ = "0.1.0"

from .domain import BallRules, QuadratureMesh, build_half_ball_mesh
from .fields import (
    CallableField,
    DifferenceField,
    Field,
    PolynomialField,
    RescaledField,
    exact_remark_solution,
)
from .polynomials import (
    AHarmonicPolynomial,
    basis,
    classify_star_or_y,
    degeneracy_dimension,
    extend_from_trace,
    hypergeometric_polynomial_2d,
)
from .solver import (
    ProblemSpec,
    SolutionField,
    check_max_principles,
    check_mean_value,
    energy,
    solve,
    weak_residual,
)

__all__ = [
    "BallRules",
    "QuadratureMesh",
    "build_half_ball_mesh",
    "Field",
    "CallableField",
    "PolynomialField",
    "RescaledField",
    "DifferenceField",
    "exact_remark_solution",
    "AHarmonicPolynomial",
    "basis",
    "extend_from_trace",
    "hypergeometric_polynomial_2d",
    "classify_star_or_y",
    "degeneracy_dimension",
    "ProblemSpec",
    "SolutionField",
    "solve",
    "weak_residual",
    "energy",
    "check_max_principles",
    "check_mean_value",
]
