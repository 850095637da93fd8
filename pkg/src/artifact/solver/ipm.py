"""Primal-dual interior-point method for linear and second-order cone programs.

Standard form::

    minimize    c'x
    subject to  G x + s = h,   A x = b,   s in K,

with ``K = R_+^l x Q^{q_1} x ... x Q^{q_k}``.  The method runs on the
homogeneous self-dual embedding so that infeasibility and unboundedness are
detected through certificates instead of diverging iterates.  Search
directions use Nesterov-Todd scaling and a Mehrotra predictor-corrector;
Newton systems are reduced to ``[[G'W^-2 G, A'], [A, 0]]`` and solved with two
dense Cholesky factorisations.  ``G`` is kept sparse because most rows are
variable bounds or encoding rows with two or three nonzeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

STEP = 0.99
EXPON = 3
STALL = 8  # iterations without progress before returning the best iterate


@dataclass
class IPMResult:
    status: str  # optimal | primal_infeasible | dual_infeasible | unknown
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    primal_objective: float
    dual_objective: float
    gap: float
    relative_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    ridge: float


class _Cones:
    """Index bookkeeping and Jordan-algebra operations for ``K``."""

    def __init__(self, l: int, q: list):
        self.l = l
        self.q = list(q)
        starts = np.cumsum([l] + self.q[:-1]) if self.q else np.zeros(0, dtype=int)
        self.soc = [slice(int(a), int(a) + k) for a, k in zip(starts, self.q)]
        self.m = l + sum(self.q)
        self.degree = l + len(self.q)
        e = np.zeros(self.m)
        e[:l] = 1.0
        for b in self.soc:
            e[b.start] = 1.0
        self.e = e

    def margin(self, u: np.ndarray) -> float:
        """Smallest 'eigenvalue' of ``u``; positive iff ``u`` is interior."""
        vals = [np.min(u[: self.l])] if self.l else []
        vals += [u[b][0] - np.linalg.norm(u[b][1:]) for b in self.soc]
        return float(min(vals))

    def dot(self, u, v) -> np.ndarray:
        return u @ v

    def prod(self, u, v) -> np.ndarray:
        out = np.empty(self.m)
        out[: self.l] = u[: self.l] * v[: self.l]
        for b in self.soc:
            ub, vb = u[b], v[b]
            out[b.start] = ub @ vb
            out[b.start + 1:b.stop] = ub[0] * vb[1:] + vb[0] * ub[1:]
        return out

    def div(self, u, v) -> np.ndarray:
        """Solve ``u o x = v`` for ``x`` (``u`` interior)."""
        out = np.empty(self.m)
        out[: self.l] = v[: self.l] / u[: self.l]
        for b in self.soc:
            ub, vb = u[b], v[b]
            det = (ub[0] - np.linalg.norm(ub[1:])) * (ub[0] + np.linalg.norm(ub[1:]))
            x0 = (ub[0] * vb[0] - ub[1:] @ vb[1:]) / det
            out[b.start] = x0
            out[b.start + 1:b.stop] = (vb[1:] - ub[1:] * x0) / ub[0]
        return out

    def max_step(self, u, du) -> float:
        """Largest ``a >= 0`` with ``u + a du`` in ``K`` (``u`` interior)."""
        alpha = np.inf
        if self.l:
            neg = du[: self.l] < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-u[: self.l][neg] / du[: self.l][neg])))
        for b in self.soc:
            x, d = u[b], du[b]
            qa = d[0] ** 2 - d[1:] @ d[1:]
            qb = 2.0 * (x[0] * d[0] - x[1:] @ d[1:])
            n1 = np.linalg.norm(x[1:])
            qc = (x[0] - n1) * (x[0] + n1)
            alpha = min(alpha, _first_root(qa, qb, qc))
        return alpha


def _first_root(a: float, b: float, c: float) -> float:
    """Smallest positive root of ``a t^2 + b t + c`` with ``c > 0``."""
    scale = max(abs(a), abs(b), abs(c))
    if scale == 0.0:
        return np.inf
    if abs(a) <= 1e-15 * scale:
        return -c / b if b < 0 else np.inf
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return np.inf
    sq = np.sqrt(disc)
    qq = -0.5 * (b + np.copysign(sq, b))
    roots = [r for r in ((qq / a) if qq != 0 else np.inf, (c / qq) if qq != 0 else np.inf) if r > 0]
    return min(roots) if roots else np.inf


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^{-1} s = lambda``."""

    def __init__(self, cones: _Cones, s: np.ndarray, z: np.ndarray):
        self.cones = cones
        l = cones.l
        self.d = np.sqrt(s[:l] / z[:l])
        self.blocks = []
        for b in cones.soc:
            sb, zb = s[b], z[b]
            n_s, n_z = np.linalg.norm(sb[1:]), np.linalg.norm(zb[1:])
            sn = np.sqrt((sb[0] - n_s) * (sb[0] + n_s))
            zn = np.sqrt((zb[0] - n_z) * (zb[0] + n_z))
            sbar, zbar = sb / sn, zb / zn
            gamma = np.sqrt(0.5 * (1.0 + sbar @ zbar))
            w = sbar.copy()
            w[0] += zbar[0]
            w[1:] -= zbar[1:]
            w /= 2.0 * gamma
            eta = np.sqrt(sn / zn)
            k = sb.size
            Wbar = np.empty((k, k))
            Wbar[0, 0] = w[0]
            Wbar[0, 1:] = w[1:]
            Wbar[1:, 0] = w[1:]
            Wbar[1:, 1:] = np.eye(k - 1) + np.outer(w[1:], w[1:]) / (1.0 + w[0])
            Winv = Wbar.copy()
            Winv[0, 1:] *= -1.0
            Winv[1:, 0] *= -1.0
            self.blocks.append((eta * Wbar, Winv / eta))

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        l = self.cones.l
        out[:l] = self.d * v[:l]
        for b, (W, _) in zip(self.cones.soc, self.blocks):
            out[b] = W @ v[b]
        return out

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        l = self.cones.l
        out[:l] = v[:l] / self.d
        for b, (_, Wi) in zip(self.cones.soc, self.blocks):
            out[b] = Wi @ v[b]
        return out


class _KKT:
    """Factorised reduced Newton system for a fixed scaling."""

    def __init__(self, Gl, GlT, Gq: list, A: np.ndarray, cones: _Cones, scaling, ridge: float):
        self.A = A
        self.cones = cones
        self.W = scaling
        self.Gl, self.GlT, self.Gq = Gl, GlT, Gq
        n = Gl.shape[1]
        if scaling is None:
            dl = np.ones(cones.l)
            Ginv = Gq
        else:
            dl = 1.0 / scaling.d ** 2
            Ginv = [Wi @ G for (_, Wi), G in zip(scaling.blocks, Gq)]
        self.Ginv = Ginv
        self.dl = dl
        H = (GlT @ sp.diags(dl) @ Gl).toarray() if cones.l else np.zeros((n, n))
        for M in Ginv:
            H += M.T @ M
        if A.shape[0]:
            H += A.T @ A
        self.ridge = 0.0
        # the ridge is relative to each diagonal entry so that rows with huge
        # scaling weights do not swamp the others
        base = np.maximum(np.abs(np.diag(H)), 1e-8) if n else np.ones(0)
        delta = ridge
        while True:
            try:
                Hr = H if self.ridge == 0.0 else H + np.diag(self.ridge * base)
                self.L = sla.cho_factor(Hr, lower=True, check_finite=False)
                if not np.all(np.isfinite(self.L[0])):
                    raise np.linalg.LinAlgError
                if A.shape[0]:
                    X = sla.cho_solve(self.L, A.T, check_finite=False)
                    S = A @ X
                    self.LS = sla.cho_factor(S, lower=True, check_finite=False)
                    if not np.all(np.isfinite(self.LS[0])):
                        raise np.linalg.LinAlgError
                break
            except (np.linalg.LinAlgError, ValueError):
                if delta > 1e-4:
                    raise np.linalg.LinAlgError("KKT system is singular")
                self.ridge = delta
                delta *= 100.0

    def _winv2(self, v: np.ndarray) -> np.ndarray:
        if self.W is None:
            return v.copy()
        return self.W.apply_inv(self.W.apply_inv(v))

    def _w2(self, v: np.ndarray) -> np.ndarray:
        if self.W is None:
            return v.copy()
        return self.W.apply(self.W.apply(v))

    def _Gx(self, x):
        out = [self.Gl @ x] + [G @ x for G in self.Gq]
        return np.concatenate(out)

    def _GTz(self, z):
        l = self.cones.l
        out = self.GlT @ z[:l]
        for b, G in zip(self.cones.soc, self.Gq):
            out = out + G.T @ z[b]
        return out

    def _raw(self, bx, by, bz):
        A = self.A
        r1 = bx + self._GTz(self._winv2(bz))
        if A.shape[0]:
            r1 = r1 + A.T @ by
            t = sla.cho_solve(self.L, r1, check_finite=False)
            y = sla.cho_solve(self.LS, A @ t - by, check_finite=False)
            x = t - sla.cho_solve(self.L, A.T @ y, check_finite=False)
        else:
            y = np.zeros(0)
            x = sla.cho_solve(self.L, r1, check_finite=False)
        z = self._winv2(self._Gx(x) - bz)
        return x, y, z

    def solve(self, bx, by, bz, refine: int = 1):
        # a regularised factorisation needs more refinement to recover the true direction
        steps = refine if self.ridge == 0.0 else max(refine, 8)
        x, y, z = self._raw(bx, by, bz)
        scale = max(1.0, np.linalg.norm(bx), np.linalg.norm(by), np.linalg.norm(bz))
        for _ in range(steps):
            rx = bx - (self.A.T @ y + self._GTz(z))
            ry = by - self.A @ x
            rz = bz - (self._Gx(x) - self._w2(z))
            res = max(np.linalg.norm(rx), np.linalg.norm(ry), np.linalg.norm(rz))
            if res <= 1e-14 * scale:
                break
            dx, dy, dz = self._raw(rx, ry, rz)
            x, y, z = x + dx, y + dy, z + dz
        return x, y, z


def conelp(c, G, h, l: int, q: list, A=None, b=None, *, feastol: float = 1e-8,
           abstol: float = 1e-9, reltol: float = 1e-9, maxiters: int = 100,
           ridge: float = 1e-10) -> IPMResult:
    """Solve the standard-form conic program; ``G`` may be dense or sparse."""
    c = np.asarray(c, dtype=float)
    n = c.size
    h = np.asarray(h, dtype=float)
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float)
    G = sp.csr_matrix(G)
    if G.shape[0] == 0:
        G = sp.csr_matrix((1, n))
        h = np.ones(1)
        l = 1
    cones = _Cones(l, q)
    Gl = G[:l].tocsr()
    GlT = Gl.T.tocsr()
    Gq = [G[bk].toarray() for bk in cones.soc]

    def Gx(x):
        return np.concatenate([Gl @ x] + [M @ x for M in Gq])

    def GTz(z):
        out = GlT @ z[:l]
        for bk, M in zip(cones.soc, Gq):
            out = out + M.T @ z[bk]
        return out

    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))

    # starting point: least-norm primal slack and dual multiplier
    kkt = _KKT(Gl, GlT, Gq, A, cones, None, ridge)
    x, _, zz = kkt.solve(np.zeros(n), b, h)
    s = -zz
    _, y, z = kkt.solve(-c, np.zeros(A.shape[0]), np.zeros(cones.m))
    for u in (s, z):
        a = -cones.margin(u)
        if a >= -1e-8 * max(1.0, np.linalg.norm(u)):
            u += (1.0 + max(a, 0.0)) * cones.e
    tau, kappa = 1.0, 1.0
    used_ridge = kkt.ridge

    status = "unknown"
    it = 0
    best = None
    stall = 0
    ratio = np.inf
    for it in range(maxiters + 1):
        rx = A.T @ y + GTz(z) + c * tau
        ry = -(A @ x) + b * tau
        rz = s + Gx(x) - h * tau
        cx, by_, hz = c @ x, b @ y, h @ z
        rt = kappa + cx + by_ + hz
        pcost = cx / tau
        dcost = -(by_ + hz) / tau
        gap = (s @ z) / tau ** 2
        pres = max(np.linalg.norm(ry) / resy0, np.linalg.norm(rz) / resz0) / tau
        dres = np.linalg.norm(rx) / resx0 / tau
        if pcost < 0:
            relgap = gap / -pcost
        elif dcost > 0:
            relgap = gap / dcost
        else:
            relgap = np.inf
        score = max(pres, dres, min(gap, relgap * 1e-3 if np.isfinite(relgap) else gap))
        if best is None or score < best[0]:
            best = (score, x / tau, y / tau, z / tau, s / tau, pcost, dcost, gap, relgap, pres, dres)
            stall = 0
        elif tau / kappa < 0.5 * ratio:
            stall = 0  # heading for an infeasibility certificate
        else:
            stall += 1
        ratio = tau / kappa
        if pres <= feastol and dres <= feastol and (gap <= abstol or relgap <= reltol):
            status = "optimal"
            break
        if hz + by_ < 0:
            pinf = np.linalg.norm(A.T @ y + GTz(z)) / resx0 / -(hz + by_)
            if pinf <= feastol:
                status = "primal_infeasible"
                scale = -(hz + by_)
                return IPMResult(status, np.full(n, np.nan), y / scale, z / scale, np.full(cones.m, np.nan),
                                 np.nan, np.nan, np.nan, np.nan, pres, dres, it, used_ridge)
        if cx < 0:
            dinf = max(np.linalg.norm(A @ x) / resy0, np.linalg.norm(Gx(x) + s) / resz0) / -cx
            if dinf <= feastol:
                status = "dual_infeasible"
                return IPMResult(status, x / -cx, np.full(A.shape[0], np.nan), np.full(cones.m, np.nan),
                                 s / -cx, np.nan, np.nan, np.nan, np.nan, pres, dres, it, used_ridge)
        if it == maxiters or stall >= STALL:
            break

        W = _Scaling(cones, s, z)
        lam = W.apply(z)
        mu = (s @ z + tau * kappa) / (cones.degree + 1)
        try:
            kkt = _KKT(Gl, GlT, Gq, A, cones, W, ridge)
        except np.linalg.LinAlgError:
            break
        used_ridge = max(used_ridge, kkt.ridge)
        x1, y1, z1 = kkt.solve(-c, b, h)
        denom = c @ x1 + b @ y1 + h @ z1 - kappa / tau

        lamsq = cones.prod(lam, lam)
        dsa = dza = None
        dtau_a = dkap_a = 0.0
        sigma = 0.0
        for phase in (0, 1):
            if phase == 0:
                eta = 1.0
                ds = -lamsq
                dk = -tau * kappa
            else:
                eta = 1.0 - sigma
                ds = -lamsq - cones.prod(dsa, dza) + sigma * mu * cones.e
                dk = -tau * kappa - dtau_a * dkap_a + sigma * mu
            rc = cones.div(lam, ds)
            x2, y2, z2 = kkt.solve(-eta * rx, eta * ry, -eta * rz - W.apply(rc))
            dtau = (-eta * rt - dk / tau - (c @ x2 + b @ y2 + h @ z2)) / denom
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            dkap = (dk - kappa * dtau) / tau
            wdz = W.apply(dz)
            ds_ = W.apply(rc - wdz)
            amax = min(cones.max_step(s, ds_), cones.max_step(z, dz))
            if dtau < 0:
                amax = min(amax, -tau / dtau)
            if dkap < 0:
                amax = min(amax, -kappa / dkap)
            if phase == 0:
                alpha_a = min(1.0, amax)
                sigma = (1.0 - alpha_a) ** EXPON
                dsa, dza = rc - wdz, wdz
                dtau_a, dkap_a = dtau, dkap
            else:
                alpha = min(1.0, STEP * amax)
        if not np.isfinite(alpha) or alpha < 1e-14:
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds_
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap
        if cones.margin(s) <= 0 or cones.margin(z) <= 0 or tau <= 0 or kappa <= 0:
            break

    if status == "optimal":
        return IPMResult(status, x / tau, y / tau, z / tau, s / tau, pcost, dcost, gap, relgap,
                         pres, dres, it, used_ridge)
    _, bx, byv, bz, bs, pc, dc, gp, rg, pr, dr = best
    return IPMResult("unknown", bx, byv, bz, bs, pc, dc, gp, rg, pr, dr, it, used_ridge)
