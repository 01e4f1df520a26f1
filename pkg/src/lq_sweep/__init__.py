"""Linear-quadratic optimal control with coupled two-point boundary conditions."""

from .errors import (
    LqSweepError,
    NonFiniteState,
    NotHurwitz,
    OutOfRange,
    ParseError,
    PreconditionViolated,
    ShapeError,
    SingularMatrix,
)
from .problem import LqProblem, TimeMatrix, parse_problem, serialize_problem, validate
from .sweep import Solution, solve
from .oracle import compare, oracle_solve

__version__ = "0.1.0"

__all__ = [
    "LqProblem",
    "LqSweepError",
    "NonFiniteState",
    "NotHurwitz",
    "OutOfRange",
    "ParseError",
    "PreconditionViolated",
    "ShapeError",
    "SingularMatrix",
    "Solution",
    "TimeMatrix",
    "compare",
    "oracle_solve",
    "parse_problem",
    "serialize_problem",
    "solve",
    "validate",
]
