"""Regenerate the shipped sample files in ``src/artifact/data``.

The raw samples are synthetic: Dirichlet draws shrunk towards the reference
mean so that their average equals it exactly, which keeps the injected mean
and the shipped file consistent.  Run from the repository root::

    python scripts/make_fixtures.py
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import yaml

from artifact.model import AttributeGrid
from artifact.scenario import load_scenario

DATA = Path(__file__).resolve().parents[1] / "src" / "artifact" / "data"


def shrink_to_mean(X, target):
    """Rows ``target + s (X_n - mean(X))`` with the largest ``s <= 1`` keeping them nonnegative."""
    D = X - X.mean(axis=0)
    T = np.broadcast_to(target, D.shape)
    neg = D < 0
    s = min(1.0, float(np.min(T[neg] / -D[neg]))) if neg.any() else 1.0
    return np.clip(target + 0.999 * s * D, 0.0, None)


def write_matrix(path, X, prefix="v"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{prefix}{i + 1}" for i in range(X.shape[1])])
        for row in X:
            w.writerow([repr(float(v)) for v in row])


def comparative(rng):
    sc = load_scenario(DATA / "comparative.yaml")
    mean = np.asarray(sc.config["sample"]["mean"], float)
    X = rng.dirichlet(np.full(sc.grid.I, 0.5), 50)
    write_matrix(DATA / "comparative_sample.csv", shrink_to_mean(X, mean))


def project(rng):
    cfg = yaml.safe_load((DATA / "project.yaml").read_text())
    mean = np.asarray(cfg["sample"]["mean"], float)
    X = rng.dirichlet(60.0 * mean + 0.05, 200)
    write_matrix(DATA / "project_sample.csv", shrink_to_mean(X, mean))


def ev_conjoint(rng, groups=100, profiles=80, noise=0.01):
    cfg = yaml.safe_load((DATA / "ev.yaml").read_text())
    bps = [np.asarray(a["breakpoints"], float) * (-1 if a.get("direction") == "decreasing" else 1)
           for a in cfg["grid"]["attributes"]]
    grid = AttributeGrid(tuple(bps))
    mean = np.asarray(cfg["sample"]["mean"], float)
    mean = mean / mean.sum()
    from artifact.elicit import conjoint_responses

    # one shared design; each attribute's levels are cycled so every level is observed
    while True:
        L = np.column_stack([rng.permutation(np.resize(np.arange(n + 1), profiles)) for n in grid.sizes])
        X = np.hstack([np.ones((profiles, 1))] + [np.eye(n + 1)[L[:, m]][:, 1:] for m, n in enumerate(grid.sizes)])
        if np.linalg.matrix_rank(X) == X.shape[1]:
            break
    with open(DATA / "ev_conjoint.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "profile"] + [f"level_{m + 1}" for m in range(grid.M)] + ["response"])
        for g in range(groups):
            v = rng.dirichlet(80.0 * mean + 0.1)
            y = conjoint_responses(grid, L, v) + rng.normal(0.0, noise, profiles)
            y = np.clip(y, 0.0, 1.0)
            for j in range(profiles):
                w.writerow([f"g{g + 1:03d}", j + 1] + [int(k) for k in L[j]] + [f"{y[j]:.6f}"])


def main():
    comparative(np.random.default_rng(20221115))
    project(np.random.default_rng(20221116))
    ev_conjoint(np.random.default_rng(20221117))


if __name__ == "__main__":
    main()
