"""Interior-point, branch-and-bound and cutting-surface solvers."""

from .types import SolveOptions, Solution
from .continuous import solve_continuous
from .bnb import solve_mixed
from .cutting import WorstCase, cutting_surface, extract_worst_case, solve_robust

__all__ = [
    "SolveOptions",
    "Solution",
    "WorstCase",
    "cutting_surface",
    "extract_worst_case",
    "solve_continuous",
    "solve_mixed",
    "solve_robust",
]
