"""Generic conic program container and a block-wise builder.

A :class:`ConicProgram` is

    optimise  c'u + offset
    s.t.      A_eq u = b_eq,  A_in u <= b_in,  lb <= u <= ub,
              F_k u + f_k  in  SOC   (first entry is the cone head),
              u_j integer for j in the integrality mask.

Variables are grouped into named blocks so solutions can be decoded back to
model symbols.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt

from .errors import ModelError

Array = npt.NDArray[np.float64]


@dataclass(frozen=True)
class ConicProgram:
    c: Array
    sense: str
    A_eq: Array
    b_eq: Array
    A_in: Array
    b_in: Array
    lb: Array
    ub: Array
    soc: tuple = ()
    integer: Array = None
    blocks: dict = field(default_factory=dict)
    offset: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.c.size
        if self.sense not in ("min", "max"):
            raise ModelError("sense must be 'min' or 'max'")
        if self.A_eq.shape != (self.b_eq.size, n) or self.A_in.shape != (self.b_in.size, n):
            raise ModelError("inconsistent constraint dimensions")
        if self.lb.size != n or self.ub.size != n:
            raise ModelError("bounds must have one entry per variable")
        for F, f in self.soc:
            if F.shape != (f.size, n) or f.size < 2:
                raise ModelError("second-order cone blocks need arity >= 2 and n columns")
        if self.integer is None:
            object.__setattr__(self, "integer", np.zeros(n, dtype=bool))

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def is_mixed(self) -> bool:
        return bool(np.any(self.integer))

    def block(self, u, name: str) -> Array:
        return np.asarray(u)[self.blocks[name]]

    def objective(self, u) -> float:
        return float(self.c @ u + self.offset)

    def relaxed(self) -> "ConicProgram":
        return replace(self, integer=np.zeros(self.n, dtype=bool))

    def with_bounds(self, lb, ub) -> "ConicProgram":
        return replace(self, lb=np.asarray(lb, float), ub=np.asarray(ub, float))

    def violation(self, u) -> float:
        """Largest constraint violation of ``u`` (integrality excluded)."""
        u = np.asarray(u, dtype=float)
        worst = 0.0
        if self.b_eq.size:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ u - self.b_eq))))
        if self.b_in.size:
            worst = max(worst, float(np.max(self.A_in @ u - self.b_in)))
        worst = max(worst, float(np.max(self.lb - u, initial=0.0)))
        worst = max(worst, float(np.max(u - self.ub, initial=0.0)))
        for F, f in self.soc:
            r = F @ u + f
            worst = max(worst, float(np.linalg.norm(r[1:]) - r[0]))
        return worst

    def integrality_residual(self, u) -> float:
        u = np.asarray(u, dtype=float)[self.integer]
        return float(np.max(np.abs(u - np.round(u)), initial=0.0))


class ProgramBuilder:
    """Assemble a :class:`ConicProgram` from named variable blocks."""

    def __init__(self, sense: str = "max"):
        self.sense = sense
        self._sizes = {}
        self._order = []
        self._lb = {}
        self._ub = {}
        self._int = {}
        self._obj = {}
        self._eq = []
        self._in = []
        self._soc = []
        self.offset = 0.0
        self.meta = {}

    def add(self, name: str, size: int, lb=-np.inf, ub=np.inf, integer=False) -> str:
        if name in self._sizes:
            raise ModelError(f"duplicate block {name}")
        self._sizes[name] = int(size)
        self._order.append(name)
        self._lb[name] = np.broadcast_to(np.asarray(lb, float), (size,)).copy()
        self._ub[name] = np.broadcast_to(np.asarray(ub, float), (size,)).copy()
        self._int[name] = np.broadcast_to(np.asarray(integer, bool), (size,)).copy()
        return name

    def size(self, name: str) -> int:
        return self._sizes[name]

    def objective(self, terms: dict) -> None:
        for name, coef in terms.items():
            self._obj[name] = self._obj.get(name, 0.0) + np.broadcast_to(
                np.asarray(coef, float), (self._sizes[name],)
            )

    def _check(self, terms: dict, rows: int) -> dict:
        out = {}
        for name, mat in terms.items():
            mat = np.atleast_2d(np.asarray(mat, float))
            if mat.shape != (rows, self._sizes[name]):
                raise ModelError(
                    f"block {name}: coefficient shape {mat.shape}, expected {(rows, self._sizes[name])}"
                )
            out[name] = mat
        return out

    def eq(self, terms: dict, rhs) -> None:
        rhs = np.atleast_1d(np.asarray(rhs, float))
        if rhs.size:
            self._eq.append((self._check(terms, rhs.size), rhs))

    def le(self, terms: dict, rhs) -> None:
        rhs = np.atleast_1d(np.asarray(rhs, float))
        if rhs.size:
            self._in.append((self._check(terms, rhs.size), rhs))

    def soc(self, terms: dict, const) -> None:
        const = np.atleast_1d(np.asarray(const, float))
        self._soc.append((self._check(terms, const.size), const))

    def _slices(self) -> dict:
        out, pos = {}, 0
        for name in self._order:
            out[name] = slice(pos, pos + self._sizes[name])
            pos += self._sizes[name]
        return out

    def _stack(self, rows: list, n: int, sl: dict) -> tuple:
        total = sum(r.size for _, r in rows)
        A = np.zeros((total, n))
        b = np.zeros(total)
        r0 = 0
        for terms, rhs in rows:
            for name, mat in terms.items():
                A[r0:r0 + rhs.size, sl[name]] += mat
            b[r0:r0 + rhs.size] = rhs
            r0 += rhs.size
        return A, b

    def build(self) -> ConicProgram:
        sl = self._slices()
        n = sum(self._sizes.values())
        c = np.zeros(n)
        for name, coef in self._obj.items():
            c[sl[name]] += coef
        A_eq, b_eq = self._stack(self._eq, n, sl)
        A_in, b_in = self._stack(self._in, n, sl)
        socs = tuple(self._stack([s], n, sl) for s in self._soc)
        cat = lambda d: np.concatenate([d[k] for k in self._order]) if self._order else np.zeros(0)
        return ConicProgram(
            c=c, sense=self.sense, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in,
            lb=cat(self._lb), ub=cat(self._ub), soc=socs, integer=cat(self._int),
            blocks=sl, offset=self.offset, meta=dict(self.meta),
        )
