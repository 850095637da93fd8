"""Options and result records shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ParameterError


@dataclass(frozen=True)
class SolveOptions:
    """Tolerances and limits.

    ``tol`` is the feasibility/optimality tolerance of continuous solves and
    the absolute gap at which branch-and-bound stops; ``int_tol`` decides
    integrality; ``delta`` is the cutting-surface stopping gap.
    """

    tol: float = 1e-8
    int_tol: float = 1e-6
    delta: float = 1e-6
    node_limit: int = 100_000
    time_limit: float = 3600.0
    max_iterations: int = 100
    cut_limit: int = 200
    verbose: bool = False

    def __post_init__(self):
        for name in ("tol", "int_tol", "delta", "time_limit"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.node_limit < 1 or self.max_iterations < 1 or self.cut_limit < 1:
            raise ParameterError("limits must be at least one")


@dataclass
class Solution:
    """Outcome of a solve.

    ``u`` is the full variable vector of ``program``; ``value`` the objective
    in the program's own sense.  ``bound`` is the best proven bound (equal to
    ``value`` for continuous optimal solves).
    """

    status: str
    value: float
    u: Optional[np.ndarray] = None
    program: object = None
    bound: float = np.nan
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    v_star: Optional[np.ndarray] = None
    duals: dict = field(default_factory=dict)
    nodes: int = 0
    iterations: int = 0
    wall_time: float = 0.0
    history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def gap(self) -> float:
        return abs(self.bound - self.value) if np.isfinite(self.bound) else np.inf

    def block(self, name: str) -> np.ndarray:
        return self.program.block(self.u, name)

    def blocks(self) -> dict:
        if self.u is None or self.program is None:
            return {}
        return {k: self.u[s] for k, s in self.program.blocks.items()}
