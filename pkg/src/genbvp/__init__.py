"""Linear boundary-value problems for ODE systems with generic boundary conditions.

Modules:
    funcspace: function representations, Sobolev norms, quadrature.
    odecore: fundamental systems, particular solutions, higher derivatives.
    boundary: canonical, multipoint and fractional boundary operators.
    bvpsolve: characteristic matrix, d-characteristics, solution.
    paramlab: parameter dependence, discrepancy, two-sided estimate.
    approx: polynomial and multipoint approximation, convergence studies.
    cli: command-line front end.
"""

from .boundary import (
    CanonicalBoundaryOperator,
    FractionalBoundaryOperator,
    FractionalTerm,
    MultipointBoundaryOperator,
    point_conditions,
    to_canonical,
)
from .bvpsolve import BvProblem, BvpSolution, CharMatrix, characteristic_matrix, solve_bvp
from .funcspace import ChebyshevSeries, Interval, PiecewisePolynomial, SobolevIndex, StepFunction
from .odecore import OdeSystem

__version__ = "0.1.0"

__all__ = [
    "BvProblem",
    "BvpSolution",
    "CanonicalBoundaryOperator",
    "CharMatrix",
    "ChebyshevSeries",
    "FractionalBoundaryOperator",
    "FractionalTerm",
    "Interval",
    "MultipointBoundaryOperator",
    "OdeSystem",
    "PiecewisePolynomial",
    "SobolevIndex",
    "StepFunction",
    "characteristic_matrix",
    "point_conditions",
    "solve_bvp",
    "to_canonical",
]
