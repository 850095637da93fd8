"""Scenario files: grid, sample source, ambiguity set, region and options.

A scenario is a YAML mapping.  Keys:

``grid.attributes``
    list of ``{name, breakpoints, direction}``; ``direction: decreasing``
    marks attributes that are better when smaller.  Their breakpoints are
    listed from worst to best and the model works with the negated values.
``sample``
    exactly one of ``file`` (matrix CSV), ``dirichlet`` (``{concentration,
    N, seed}``), ``conjoint`` (responses CSV) or ``shares`` (MNL CSV);
    optional ``mean`` overrides the sample mean and ``normalize_mean``
    rescales it to sum to one.
``ambiguity``
    ``kind`` (ellipsoid, bootstrap or saa), ``gamma``, ``alpha``, ``K``,
    ``directions``, ``support`` (V or VC) and ``seed``.
``region``
    ``type`` simplex, polyhedron (``inequalities``/``equalities`` over the
    raw attributes), actions (``actions``, ``replicas``, rows over actions)
    or ev-planning (built from ``parameters``); ``clamp`` lets attributes
    saturate outside the grid.
``solver``, ``sweep``, ``evaluate``
    options, sweep grids (``values``, ``linspace`` or ``geomspace``) and
    out-of-sample settings.

Relative file names are looked up next to the scenario file, then in the
packaged data directory.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import ambiguity as amb
from .elicit import conjoint_samples, mnl_samples, read_conjoint, read_shares
from .errors import ConfigError, DataError
from .model import ActionMapped, AttributeGrid, Polyhedron, simplex_region
from .solver import SolveOptions

CASES = {
    "comparative": "comparative.yaml",
    "project-investment": "project.yaml",
    "ev-planning": "ev.yaml",
}

_SOLVER_KEYS = ("tol", "int_tol", "delta", "node_limit", "time_limit", "max_iterations", "cut_limit", "verbose")


def data_dir() -> Path:
    return Path(str(resources.files("artifact") / "data"))


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing key {key!r}")
    return d[key]


def sweep_values(spec) -> list:
    """Expand ``{values}``, ``{linspace: [a, b, n]}`` or ``{geomspace: [a, b, n]}``."""
    if isinstance(spec, (list, tuple)):
        vals = list(spec)
    elif isinstance(spec, dict) and "values" in spec:
        vals = list(spec["values"])
    elif isinstance(spec, dict) and "linspace" in spec:
        a, b, n = spec["linspace"]
        vals = np.linspace(a, b, int(n)).tolist()
    elif isinstance(spec, dict) and "geomspace" in spec:
        a, b, n = spec["geomspace"]
        vals = np.geomspace(a, b, int(n)).tolist()
    else:
        raise ConfigError(f"cannot read sweep specification {spec!r}")
    if not vals:
        raise ConfigError("sweep list is empty")
    return [float(v) for v in vals]


@dataclass
class Scenario:
    """A loaded scenario; builders are lazy and cached."""

    config: dict
    base: Optional[Path] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.config = copy.deepcopy(self.config)
        g = _need(self.config, "grid", "scenario")
        attrs = _need(g, "attributes", "grid")
        if not attrs:
            raise ConfigError("grid: at least one attribute is required")
        names, signs, bps = [], [], []
        for k, a in enumerate(attrs):
            names.append(str(a.get("name", f"attribute-{k + 1}")))
            direction = a.get("direction", "increasing")
            if direction not in ("increasing", "decreasing"):
                raise ConfigError(f"attribute {names[-1]}: direction must be increasing or decreasing")
            s = -1.0 if direction == "decreasing" else 1.0
            t = s * np.asarray(_need(a, "breakpoints", f"attribute {names[-1]}"), dtype=float)
            if t.size < 2 or np.any(np.diff(t) <= 0):
                order = "decreasing" if s < 0 else "increasing"
                raise ConfigError(f"attribute {names[-1]}: breakpoints must be strictly {order}")
            signs.append(s)
            bps.append(t)
        if len(set(names)) != len(names):
            raise ConfigError("attribute names must be unique")
        self.names = tuple(names)
        self.signs = np.array(signs)
        try:
            self.grid = AttributeGrid(tuple(bps), self.names)
        except Exception as exc:
            raise ConfigError(f"grid: {exc}") from exc
        self.name = str(self.config.get("name", "scenario"))
        self.row_names = {}
        self.seed = int(self.config.get("seed", 0))

    # -- files -----------------------------------------------------------

    def resolve(self, name: str) -> Path:
        p = Path(name)
        if p.is_absolute():
            return p
        for root in ([self.base] if self.base else []) + [data_dir()]:
            if (root / p).exists():
                return root / p
        raise DataError(f"data file {name!r} not found")

    # -- sample and ambiguity --------------------------------------------

    def samples(self) -> amb.SampleSet:
        if "samples" in self._cache:
            return self._cache["samples"]
        spec = _need(self.config, "sample", "scenario")
        sources = [k for k in ("file", "dirichlet", "conjoint", "shares") if k in spec]
        if len(sources) != 1:
            raise ConfigError("sample: exactly one of file, dirichlet, conjoint or shares is required")
        src = sources[0]
        if src == "file":
            S = amb.SampleSet.from_csv(self.resolve(spec["file"]), self.grid)
        elif src == "dirichlet":
            d = spec["dirichlet"]
            conc = np.broadcast_to(np.asarray(d.get("concentration", 1.0), float), (self.grid.I,))
            rng = np.random.default_rng(int(d.get("seed", self.seed)))
            S = amb.SampleSet(rng.dirichlet(conc, int(_need(d, "N", "sample.dirichlet"))), self.grid)
        elif src == "conjoint":
            resp = read_conjoint(self.resolve(spec["conjoint"]), self.grid.M)
            S, fits = conjoint_samples(resp, self.grid)
            self._cache["fits"] = fits
        else:
            obs = read_shares(self.resolve(spec["shares"]), self.grid.M)
            obs = [type(o)(o.label, o.X * self.signs, o.shares) for o in obs]
            S, fits = mnl_samples(obs, self.grid, clamp=bool(spec.get("clamp", False)))
            self._cache["fits"] = fits
        self._cache["samples"] = S
        return S

    def mean_override(self):
        spec = self.config.get("sample", {})
        if "mean" not in spec:
            return None
        m = np.asarray(spec["mean"], dtype=float)
        if m.shape != (self.grid.I,):
            raise ConfigError(f"sample.mean has {m.size} entries, grid has I = {self.grid.I}")
        if spec.get("normalize_mean", False):
            m = m / m.sum()
        try:
            return amb.SampleSet(m[None, :].repeat(2, axis=0)).data[0]
        except Exception as exc:
            raise DataError(f"sample.mean is not a valid increment vector: {exc}") from exc

    def moments(self) -> amb.Moments:
        if "moments" not in self._cache:
            self._cache["moments"] = amb.compute_moments(self.samples(), self.grid, mean=self.mean_override())
        return self._cache["moments"]

    @property
    def amb_spec(self) -> dict:
        return dict(self.config.get("ambiguity", {}))

    def bootstrap_statistics(self) -> amb.BootstrapStatistics:
        if "boot" not in self._cache:
            a = self.amb_spec
            self._cache["boot"] = amb.bootstrap_statistics(
                self.samples(), int(a.get("K", 1000)), int(a.get("seed", self.seed)),
                int(a.get("directions", 1000)), moments=self.moments())
        return self._cache["boot"]

    def ambiguity(self, kind: Optional[str] = None, gamma: Optional[float] = None,
                  alpha: Optional[float] = None):
        a = self.amb_spec
        kind = kind or a.get("kind", "ellipsoid")
        support = a.get("support", "V")
        if kind == "saa":
            return None
        if kind == "ellipsoid":
            g = gamma if gamma is not None else a.get("gamma")
            if g is None:
                if "alpha" not in a:
                    raise ConfigError("ambiguity: ellipsoid needs gamma (or alpha for calibration)")
                return amb.calibrate_ellipsoid(self.moments(), float(a["alpha"]), support, self.grid)
            return amb.build_ellipsoid(self.moments(), float(g), support, self.grid)
        if kind == "bootstrap":
            al = alpha if alpha is not None else a.get("alpha")
            if al is None:
                raise ConfigError("ambiguity: bootstrap needs alpha")
            return self.bootstrap_statistics().region(float(al), support)
        raise ConfigError(f"ambiguity: unknown kind {kind!r}")

    # -- region ----------------------------------------------------------

    def region(self):
        if "region" in self._cache:
            return self._cache["region"]
        spec = dict(self.config.get("region", {"type": "simplex"}))
        typ = spec.get("type", "simplex")
        if typ == "simplex":
            if np.any(self.signs < 0):
                raise ConfigError("region: the simplex needs increasing attributes")
            reg = simplex_region(self.grid.M)
        elif typ == "polyhedron":
            reg = self._polyhedron(spec)
        elif typ == "actions":
            reg = self._actions(spec)
        elif typ == "ev-planning":
            reg = ev_region(self.config.get("parameters", {}), self.names, self.signs, bool(spec.get("clamp", True)))
            self.row_names = dict(inequalities=list(EV_ROWS), equalities=["one-location"])
        else:
            raise ConfigError(f"region: unknown type {typ!r}")
        self._cache["region"] = reg
        return reg

    def _rows(self, rows, width: int, index: dict, what: str):
        A, b, names = [], [], []
        stem = {"inequalities": "inequality", "equalities": "equality"}[what.split(".")[-1]]
        for k, r in enumerate(rows or []):
            names.append(str(r.get("name", f"{stem}-{k + 1}")))
            co = _need(r, "coeffs", what)
            row = np.zeros(width)
            if isinstance(co, dict):
                for k, v in co.items():
                    if k not in index:
                        raise ConfigError(f"{what}: unknown name {k!r}")
                    row[index[k]] = float(v)
            else:
                if len(co) != width:
                    raise ConfigError(f"{what}: expected {width} coefficients")
                row[:] = co
            A.append(row)
            b.append(float(_need(r, "rhs", what)))
        self.row_names.setdefault(what.split(".")[-1], []).extend(names)
        return (np.array(A).reshape(-1, width), np.array(b))

    def _polyhedron(self, spec):
        idx = {n: i for i, n in enumerate(self.names)}
        A_in, b_in = self._rows(spec.get("inequalities"), self.grid.M, idx, "region.inequalities")
        A_eq, b_eq = self._rows(spec.get("equalities"), self.grid.M, idx, "region.equalities")
        # rows are written in raw units; x_model = sign * x_raw
        return Polyhedron(self.grid.M, A_in * self.signs, b_in, A_eq * self.signs, b_eq)

    def _actions(self, spec):
        acts = _need(spec, "actions", "region")
        names = [str(a["name"]) for a in acts]
        n = len(names)
        kinds = tuple(a.get("kind", "continuous") for a in acts)
        lower = np.array([float(a.get("lower", 0.0)) for a in acts])
        upper = np.array([float(a.get("upper", 1.0 if k == "binary" else np.inf)) for a, k in zip(acts, kinds)])
        aidx = {k: i for i, k in enumerate(names)}
        reps = _need(spec, "replicas", "region")
        R, M = len(reps), self.grid.M
        off = np.zeros((R, M))
        maps = np.zeros((R, M, n))
        w = np.zeros(R)
        for r, rep in enumerate(reps):
            w[r] = float(rep.get("weight", 1.0 / R))
            for name, val in rep.get("offset", {}).items():
                off[r, self._attr(name)] = float(val)
            for name, row in rep.get("map", {}).items():
                m = self._attr(name)
                if isinstance(row, dict):
                    for k, v in row.items():
                        maps[r, m, aidx[k]] = float(v)
                else:
                    if len(row) != n:
                        raise ConfigError(f"region.map[{name}]: expected {n} coefficients")
                    maps[r, m] = row
        off *= self.signs
        maps *= self.signs[None, :, None]
        A_in, b_in = self._rows(spec.get("inequalities"), n, aidx, "region.inequalities")
        A_eq, b_eq = self._rows(spec.get("equalities"), n, aidx, "region.equalities")
        try:
            return ActionMapped(off, maps, kinds, lower, upper, A_in, b_in, A_eq, b_eq, weights=w / w.sum(),
                                clamp=bool(spec.get("clamp", False)), action_names=tuple(names))
        except Exception as exc:
            raise ConfigError(f"region: {exc}") from exc

    def _attr(self, name: str) -> int:
        if name not in self.names:
            raise ConfigError(f"unknown attribute {name!r}")
        return self.names.index(name)

    # -- options ---------------------------------------------------------

    def options(self, **over) -> SolveOptions:
        s = {k: v for k, v in dict(self.config.get("solver", {})).items() if k in _SOLVER_KEYS}
        s.update({k: v for k, v in over.items() if v is not None})
        try:
            return SolveOptions(**s)
        except Exception as exc:
            raise ConfigError(f"solver: {exc}") from exc

    @property
    def method(self) -> str:
        return str(self.config.get("solver", {}).get("method", "direct"))

    def raw_attributes(self, X) -> np.ndarray:
        return np.asarray(X, float) * self.signs


EV_ROWS = ("pillar-cap", "traffic-cap", "commerce-cap", "budget")


def ev_region(p: dict, names, signs, clamp: bool = True) -> ActionMapped:
    """Location one-hot ``z``, pillar count ``y`` and upgrades ``w``, ``s``."""
    try:
        xi = np.asarray(p["xi"], dtype=float)
        land = np.asarray(p["land_cost"], float)
        rho = np.asarray(p["charge_price"], float)
        eta = np.asarray(p["traffic"], float)
        sig = np.asarray(p["commerce"], float)
        theta = np.asarray(p["pillars"], float)
        Cy, Cyb = float(p["pillar_cost"]), float(p["pillar_cap"])
        Cw, Cwb = float(p["traffic_cost"]), float(p["traffic_cap"])
        Cs, Csb = float(p["commerce_cost"]), float(p["commerce_cap"])
        Phi = float(p["budget"])
        ybound = float(p.get("pillar_bound", np.floor(Cyb / Cy)))
    except KeyError as exc:
        raise ConfigError(f"parameters: missing {exc}") from exc
    D, L = xi.shape
    if theta.size != D or any(v.size != L for v in (land, rho, eta, sig)):
        raise ConfigError("parameters: inconsistent community/location counts")
    want = ("distance", "price", "accessibility", "traffic", "commerce")
    if tuple(names) != want:
        raise ConfigError(f"ev-planning needs attributes {want}")
    n = L + 3
    iy, iw, is_ = L, L + 1, L + 2
    off = np.zeros((D, 5))
    maps = np.zeros((D, 5, n))
    for d in range(D):
        maps[d, 0, :L] = xi[d]
        maps[d, 1, :L] = rho
        off[d, 2] = theta[d]
        maps[d, 2, iy] = 1.0
        maps[d, 3, :L] = eta
        maps[d, 3, iw] = 1.0
        maps[d, 4, :L] = sig
        maps[d, 4, is_] = 1.0
    s = np.asarray(signs, float)
    off *= s
    maps *= s[None, :, None]
    kinds = ("binary",) * L + ("integer", "continuous", "continuous")
    lower = np.zeros(n)
    upper = np.concatenate([np.ones(L), [ybound, np.inf, np.inf]])
    A_in = np.zeros((4, n))
    A_in[0, iy] = Cy
    A_in[1, iw] = Cw
    A_in[2, is_] = Cs
    A_in[3, :L] = land
    A_in[3, iy], A_in[3, iw], A_in[3, is_] = Cy, Cw, Cs
    b_in = np.array([Cyb, Cwb, Csb, Phi])
    A_eq = np.zeros((1, n))
    A_eq[0, :L] = 1.0
    names_a = tuple(f"z{l + 1}" for l in range(L)) + ("y", "w", "s")
    return ActionMapped(off, maps, kinds, lower, upper, A_in, b_in, A_eq, np.ones(1),
                        weights=np.full(D, 1.0 / D), clamp=clamp, action_names=names_a)


def load_scenario(source) -> Scenario:
    """Load a scenario from a path, a packaged case name or a mapping."""
    if isinstance(source, dict):
        return Scenario(source)
    s = str(source)
    if s in CASES:
        path = data_dir() / CASES[s]
    else:
        path = Path(s)
    if not path.exists():
        raise ConfigError(f"scenario file {s!r} not found")
    try:
        cfg = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: the scenario must be a mapping")
    return Scenario(cfg, base=path.parent)
