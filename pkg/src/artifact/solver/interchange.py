"""Text interchange for programs and solutions.

Programs are written in free-format MPS:

* ``OBJSENSE`` gives ``MAX`` or ``MIN``; the objective row is ``obj`` and
  the objective constant is stored as the negated ``RHS`` entry of ``obj``.
* Integer columns sit between ``MARKER 'MARKER' 'INTORG'`` and
  ``'INTEND'`` lines; their bounds are always written explicitly.
* Each cone ``F u + f in SOC`` gets auxiliary free columns
  ``q<k>.<i> = (F u + f)_i`` defined by equality rows ``qdef<k>.<i>`` and a
  section ``CSECTION K<k> 0.0 QUAD`` listing the head column first.
* Column names are ``<block>.<index>`` (``x.0``, ``z.12``), so a solution
  can be mapped back onto the program's blocks.

Solutions are CSV files with ``name,value`` rows.  :func:`validate`
re-checks a solution against the original program (constraints, cones,
integrality and the objective), so an external solver's answer is trusted
only after it passes the same checks as an internal one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..program import ConicProgram

INF = 1e30


def column_names(p: ConicProgram) -> list:
    names = [""] * p.n
    for k, s in p.blocks.items():
        for i, j in enumerate(range(s.start, s.stop)):
            names[j] = f"{k}.{i}"
    return [nm or f"u.{j}" for j, nm in enumerate(names)]


def _num(v: float) -> str:
    return repr(float(v))


def write_mps(p: ConicProgram, path, name: str = "DPRO") -> None:
    """Write ``p`` in the format described in the module docstring."""
    cols = column_names(p)
    ncone = [f.size for _, f in p.soc]
    qcols = [[f"q{k}.{i}" for i in range(m)] for k, m in enumerate(ncone)]
    rows = [("E", f"e{i}") for i in range(p.b_eq.size)]
    rows += [("L", f"l{i}") for i in range(p.b_in.size)]
    for k, m in enumerate(ncone):
        rows += [("E", f"qdef{k}.{i}") for i in range(m)]
    entries = {j: [] for j in range(p.n)}
    if p.c.any():
        for j in np.flatnonzero(p.c):
            entries[j].append(("obj", p.c[j]))
    for i, j in zip(*np.nonzero(p.A_eq)):
        entries[j].append((f"e{i}", p.A_eq[i, j]))
    for i, j in zip(*np.nonzero(p.A_in)):
        entries[j].append((f"l{i}", p.A_in[i, j]))
    for k, (F, _) in enumerate(p.soc):
        # (F u + f)_i - q_i = 0  =>  F u - q = -f
        for i, j in zip(*np.nonzero(F)):
            entries[j].append((f"qdef{k}.{i}", F[i, j]))
    out = [f"NAME {name}", "OBJSENSE", f"    {p.sense.upper()}", "ROWS", " N obj"]
    out += [f" {t} {r}" for t, r in rows]
    out.append("COLUMNS")
    in_int = False
    for j in range(p.n):
        if p.integer[j] != in_int:
            out.append(f"    MARKER 'MARKER' {'INTORG' if p.integer[j] else 'INTEND'}")
            in_int = bool(p.integer[j])
        if not entries[j]:
            out.append(f"    {cols[j]} obj 0.0")
        for r, v in entries[j]:
            out.append(f"    {cols[j]} {r} {_num(v)}")
    if in_int:
        out.append("    MARKER 'MARKER' INTEND")
    for k, names in enumerate(qcols):
        for i, q in enumerate(names):
            out.append(f"    {q} qdef{k}.{i} -1.0")
    out.append("RHS")
    if p.offset:
        out.append(f"    rhs obj {_num(-p.offset)}")
    for i in np.flatnonzero(p.b_eq):
        out.append(f"    rhs e{i} {_num(p.b_eq[i])}")
    for i in np.flatnonzero(p.b_in):
        out.append(f"    rhs l{i} {_num(p.b_in[i])}")
    for k, (_, f) in enumerate(p.soc):
        for i in np.flatnonzero(f):
            out.append(f"    rhs qdef{k}.{i} {_num(-f[i])}")
    out.append("BOUNDS")
    for j in range(p.n):
        lo, hi, nm = p.lb[j], p.ub[j], cols[j]
        if np.isfinite(lo) and np.isfinite(hi) and lo == hi:
            out.append(f" FX bnd {nm} {_num(lo)}")
            continue
        if not np.isfinite(lo) and not np.isfinite(hi):
            out.append(f" FR bnd {nm}")
            continue
        if not np.isfinite(lo):
            out.append(f" MI bnd {nm}")
        elif lo != 0.0 or p.integer[j]:
            out.append(f" LO bnd {nm} {_num(lo)}")
        if np.isfinite(hi):
            out.append(f" UP bnd {nm} {_num(hi)}")
        elif p.integer[j]:
            out.append(f" PL bnd {nm}")
    for names in qcols:
        out += [f" FR bnd {q}" for q in names]
    for k, names in enumerate(qcols):
        out.append(f"CSECTION K{k} 0.0 QUAD")
        out += [f"    {q}" for q in names]
    out.append("ENDATA")
    Path(path).write_text("\n".join(out) + "\n")


def read_mps(path) -> ConicProgram:
    """Read a file written by :func:`write_mps` (or any file in that subset).

    The result carries the auxiliary cone columns as ordinary variables, with
    each cone expressed over them; block names are rebuilt from the column
    names.
    """
    lines = Path(path).read_text().splitlines()
    sense = "min"
    rows, rtype = [], {}
    cols, colidx, integer = [], {}, []
    coef = {}
    rhs = {}
    bounds = {}
    cones = []
    section = None
    in_int = False
    for raw in lines:
        if not raw.strip() or raw.startswith("*"):
            continue
        tok = raw.split()
        if not raw[0].isspace():
            section = tok[0]
            if section == "CSECTION":
                if len(tok) < 4 or tok[3] != "QUAD":
                    raise DataError(f"unsupported cone section: {raw.strip()}")
                cones.append([])
            if section == "ENDATA":
                break
            continue
        if section == "OBJSENSE":
            sense = "max" if tok[0].upper().startswith("MAX") else "min"
        elif section == "ROWS":
            rtype[tok[1]] = tok[0]
            if tok[0] != "N":
                rows.append(tok[1])
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "'MARKER'":
                in_int = "INTORG" in tok[2]
                continue
            name = tok[0]
            if name not in colidx:
                colidx[name] = len(cols)
                cols.append(name)
                integer.append(in_int)
            for r, v in zip(tok[1::2], tok[2::2]):
                coef[(r, colidx[name])] = coef.get((r, colidx[name]), 0.0) + float(v)
        elif section == "RHS":
            for r, v in zip(tok[1::2], tok[2::2]):
                rhs[r] = float(v)
        elif section == "BOUNDS":
            bounds.setdefault(tok[2], []).append((tok[0], float(tok[3]) if len(tok) > 3 else None))
        elif section == "CSECTION":
            cones[-1].append(tok[0])
        else:
            raise DataError(f"unsupported MPS section {section!r}")
    n = len(cols)
    ridx = {r: i for i, r in enumerate(rows)}
    eq = [r for r in rows if rtype[r] == "E"]
    le = [r for r in rows if rtype[r] == "L"]
    ge = [r for r in rows if rtype[r] == "G"]
    c = np.zeros(n)
    A = np.zeros((len(rows), n))
    for (r, j), v in coef.items():
        if rtype.get(r) == "N":
            c[j] += v
        elif r in ridx:
            A[ridx[r], j] += v
        else:
            raise DataError(f"column entry for unknown row {r!r}")
    b = np.array([rhs.get(r, 0.0) for r in rows])
    objrow = next((r for r, t in rtype.items() if t == "N"), None)
    offset = -rhs.get(objrow, 0.0) if objrow else 0.0
    integer = np.array(integer, dtype=bool)
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    for nm, items in bounds.items():
        j = colidx[nm]
        for kind, v in items:
            if kind == "UP":
                ub[j] = v if abs(v) < INF else np.inf
            elif kind == "LO":
                lb[j] = v if abs(v) < INF else -np.inf
            elif kind == "FX":
                lb[j] = ub[j] = v
            elif kind == "FR":
                lb[j], ub[j] = -np.inf, np.inf
            elif kind == "MI":
                lb[j] = -np.inf
            elif kind == "PL":
                ub[j] = np.inf
            elif kind == "BV":
                lb[j], ub[j], integer[j] = 0.0, 1.0, True
            else:
                raise DataError(f"unsupported bound type {kind!r}")
    sel = lambda rs: np.array([ridx[r] for r in rs], dtype=int)
    A_eq, b_eq = A[sel(eq)], b[sel(eq)]
    A_in = np.vstack([A[sel(le)], -A[sel(ge)]])
    b_in = np.concatenate([b[sel(le)], -b[sel(ge)]])
    soc = []
    for members in cones:
        F = np.zeros((len(members), n))
        for i, nm in enumerate(members):
            F[i, colidx[nm]] = 1.0
        soc.append((F, np.zeros(len(members))))
    blocks = {}
    for j, nm in enumerate(cols):
        key = nm.rsplit(".", 1)[0] if "." in nm else nm
        s = blocks.get(key)
        blocks[key] = slice(j if s is None else s.start, j + 1)
    return ConicProgram(c, sense, A_eq.reshape(-1, n), b_eq, A_in.reshape(-1, n), b_in, lb, ub,
                        tuple(soc), integer, blocks, offset, {"source": str(path)})


def write_solution(p: ConicProgram, u, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value"])
        for nm, v in zip(column_names(p), np.asarray(u, float)):
            w.writerow([nm, _num(v)])


def read_solution(p: ConicProgram, path) -> np.ndarray:
    """Read ``name,value`` rows onto ``p``'s columns; auxiliary cone columns are ignored."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"solution file {path} not found")
    idx = {nm: j for j, nm in enumerate(column_names(p))}
    u = np.full(p.n, np.nan)
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd, None)
        for row in rd:
            if len(row) < 2:
                continue
            if row[0] in idx:
                try:
                    u[idx[row[0]]] = float(row[1])
                except ValueError as exc:
                    raise DataError(f"bad value for {row[0]}: {row[1]!r}") from exc
    missing = [nm for nm, j in idx.items() if np.isnan(u[j])]
    if missing:
        raise DataError(f"solution is missing {len(missing)} columns, e.g. {missing[0]}")
    return u


@dataclass(frozen=True)
class Validation:
    feasible: bool
    max_violation: float
    integrality: float
    objective: float
    claimed: float
    objective_error: float

    @property
    def ok(self) -> bool:
        return self.feasible and (not np.isfinite(self.claimed) or self.objective_error <= 1e-6)


def validate(p: ConicProgram, u, claimed: float = np.nan, tol: float = 1e-6,
             int_tol: float = 1e-6) -> Validation:
    """Re-check a candidate solution against ``p``."""
    u = np.asarray(u, dtype=float)
    viol = p.violation(u)
    integ = p.integrality_residual(u)
    obj = p.objective(u)
    err = abs(obj - claimed) if np.isfinite(claimed) else 0.0
    return Validation(viol <= tol and integ <= int_tol, viol, integ, obj, float(claimed), err)
