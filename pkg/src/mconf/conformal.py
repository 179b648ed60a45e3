"""Locally valid conformal prediction sets with manifold-valued responses.

A :class:`ConformalModel` stores one kernel density estimate per covariate
cell.  For a query ``(x, y)`` with ``x`` in cell ``k`` the local conformity
rank is the fraction of the ``n_k + 1`` augmented responses (cell responses
plus ``y``) whose augmented density does not exceed that of ``y``; ``y``
belongs to the level-alpha set iff its rank is at least ``alpha``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .density import (
    BandwidthRule,
    CellDensity,
    TooFewPointsError,
    joint_score_threshold,
    kde_eval,
    sq_dists,
    unit_kernel,
)
from .geometry import EmbeddedManifold
from .partition import LevelSample, Partition, _as_covariates

_ROW_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class ConformalModel:
    partition: Partition
    manifold: EmbeddedManifold
    bandwidth_rule: BandwidthRule
    cell_densities: tuple
    cell_members: tuple
    x: np.ndarray
    y: np.ndarray
    kernel_scale: float | None = None

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def cell_counts(self) -> np.ndarray:
        return np.array([cd.n for cd in self.cell_densities])

    def density(self, k: int) -> CellDensity:
        return self.cell_densities[k]

    def pooled_density(self) -> CellDensity:
        """KDE of all responses, ignoring the partition."""
        h = self.bandwidth_rule(self.n, self.manifold.intrinsic_dim)
        return CellDensity(self.y, h, self.manifold.intrinsic_dim, self.kernel_scale)

    def with_kernel_scale(self, kernel_scale: float) -> "ConformalModel":
        return fit(
            self.x, self.y, self.partition, self.bandwidth_rule, self.manifold,
            kernel_scale=kernel_scale,
        )

    def contains(self, x, y, alpha: float):
        return contains(self, x, y, alpha)


def fit(
    x,
    y,
    partition: Partition,
    bw: BandwidthRule,
    m: EmbeddedManifold,
    kernel_scale: float | None = None,
) -> ConformalModel:
    """Fit one kernel density estimate per cell of ``partition``.

    ``x`` is ``(n, d)`` (or ``(n,)`` when ``d == 1``); ``y`` is ``(n, D)``
    with every row on ``m``.
    """
    x = _as_covariates(x, partition.dim)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if y.shape[0] == 0:
        raise ValueError("no data")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} covariates but {y.shape[0]} responses")
    bad = ~m.contains(y)
    if bad.any():
        raise ValueError(f"{int(bad.sum())} responses are not on the {m.kind.value}")
    cells = partition.locate(x)
    ell = m.intrinsic_dim
    dens, members = [], []
    for k in range(partition.n_cells):
        idx = np.flatnonzero(cells == k)
        h = bw(idx.size, ell)
        resp = y[idx] if idx.size else np.empty((0, m.ambient_dim))
        dens.append(CellDensity(resp, h, ell, kernel_scale))
        members.append(idx)
    x = x.copy()
    y = y.copy()
    x.setflags(write=False)
    y.setflags(write=False)
    return ConformalModel(
        partition, m, bw, tuple(dens), tuple(members), x, y, kernel_scale
    )


def _cell_ranks(cd: CellDensity, y: np.ndarray) -> np.ndarray:
    """Conformity ranks of candidate responses ``y`` against one cell.

    All densities share the factor ``c_K / ((n+1) h^l)``, which is dropped:
    comparisons use unit-kernel sums only.
    """
    n = cd.n
    if n == 0:
        return np.ones(y.shape[0])
    base = cd.training_unit_sums()
    out = np.empty(y.shape[0])
    for s in range(0, y.shape[0], _ROW_CHUNK):
        k = unit_kernel(sq_dists(y[s : s + _ROW_CHUNK], cd.responses), cd.bandwidth)
        own = k.sum(axis=1) + 1.0
        count = ((base[None, :] + k) <= own[:, None]).sum(axis=1) + 1
        out[s : s + _ROW_CHUNK] = count / (n + 1)
    return out


def conformity_rank(model: ConformalModel, x, y):
    """Local conformity rank of response(s) ``y`` at the single covariate ``x``.

    Returns a float for one response, an array for an ``(m, D)`` stack.
    """
    single = np.ndim(y) == 1
    y = np.atleast_2d(np.asarray(y, dtype=float))
    k = model.partition.locate_one(x)
    r = _cell_ranks(model.cell_densities[k], y)
    return float(r[0]) if single else r


def pair_ranks(model: ConformalModel, x, y) -> np.ndarray:
    """Ranks of paired queries ``(x_i, y_i)``, batched by cell."""
    x = _as_covariates(x, model.partition.dim)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    cells = model.partition.locate(x)
    out = np.empty(y.shape[0])
    for k in np.unique(cells):
        sel = cells == k
        out[sel] = _cell_ranks(model.cell_densities[k], y[sel])
    return out


def contains(model: ConformalModel, x, y, alpha: float):
    """Whether ``y`` lies in the level-``alpha`` conformal set at ``x``."""
    r = conformity_rank(model, x, y)
    return r >= alpha if isinstance(r, np.ndarray) else bool(r >= alpha)


@dataclass(eq=False)
class PredictionSet:
    """Membership flags of a conformal set over a candidate sample."""

    query_x: np.ndarray
    alpha: float
    cell: int
    candidates: np.ndarray
    in_set: np.ndarray
    method: str = "exact"
    threshold: float | None = None
    predicate: Callable | None = field(default=None, repr=False)

    @property
    def fraction(self) -> float:
        return float(self.in_set.mean()) if self.in_set.size else float("nan")

    @property
    def members(self) -> np.ndarray:
        return self.candidates[self.in_set]

    def contains(self, y):
        if self.predicate is None:
            raise ValueError("set was loaded from disk and has no predicate")
        return self.predicate(y)

    def to_dict(self) -> dict:
        return {
            "query_x": self.query_x.tolist(),
            "alpha": self.alpha,
            "cell": self.cell,
            "method": self.method,
            "threshold": self.threshold,
            "candidates": self.candidates.tolist(),
            "in_set": self.in_set.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionSet":
        cand = np.asarray(d["candidates"], dtype=float)
        return cls(
            np.asarray(d["query_x"], dtype=float),
            float(d["alpha"]),
            int(d["cell"]),
            cand.reshape(len(d["candidates"]), -1),
            np.asarray(d["in_set"], dtype=bool),
            d.get("method", "exact"),
            d.get("threshold"),
        )

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1)
            f.write("\n")

    @classmethod
    def read_json(cls, path) -> "PredictionSet":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def write_csv(self, path) -> None:
        write_points_csv(path, self.candidates, {"in_set": self.in_set.astype(int)})


def write_points_csv(path, points: np.ndarray, extra: dict | None = None) -> None:
    """One row per point: ``c0..c{D-1}`` then any extra columns.

    Floats are written with ``repr`` so that reading them back is exact.
    """
    extra = extra or {}
    points = np.atleast_2d(points)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow([f"c{j}" for j in range(points.shape[1])] + list(extra))
        cols = [np.asarray(v) for v in extra.values()]
        for i, p in enumerate(points):
            w.writerow([repr(float(v)) for v in p] + [c[i].item() for c in cols])


def read_points_csv(path) -> tuple[np.ndarray, dict]:
    """Inverse of :func:`write_points_csv`."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    d = sum(1 for h in header if h.startswith("c") and h[1:].isdigit())
    pts = np.array([[float(v) for v in r[:d]] for r in body]).reshape(len(body), d)
    extra = {
        h: np.array([int(r[d + j]) for r in body])
        for j, h in enumerate(header[d:])
    }
    return pts, extra


def read_prediction_csv(path) -> tuple[np.ndarray, np.ndarray]:
    pts, extra = read_points_csv(path)
    return pts, extra["in_set"].astype(bool)


def predict_set(model: ConformalModel, x, alpha: float, candidates) -> PredictionSet:
    """Flag each candidate by membership in the level-``alpha`` set at ``x``."""
    xq = _as_covariates(x, model.partition.dim)[0]
    k = model.partition.locate_one(xq)
    cand = np.asarray(candidates, dtype=float).reshape(-1, model.manifold.ambient_dim)
    flags = _cell_ranks(model.cell_densities[k], cand) >= alpha
    return PredictionSet(
        xq, alpha, k, cand, flags, "exact",
        predicate=lambda y: contains(model, xq, y, alpha),
    )


def predict_set_fast(
    model: ConformalModel,
    x,
    alpha: float,
    candidates,
    correction: str = "exact",
) -> PredictionSet:
    """Threshold approximation ``{y : kde(y) >= t}`` of the conformal set.

    With the default ``correction="exact"`` the result contains the output of
    :func:`predict_set` on the same candidates.
    """
    xq = _as_covariates(x, model.partition.dim)[0]
    k = model.partition.locate_one(xq)
    cd = model.cell_densities[k]
    if cd.n == 0:
        raise TooFewPointsError("query cell is empty")
    t = joint_score_threshold(cd, alpha, model.partition.dim, correction)
    cand = np.asarray(candidates, dtype=float).reshape(-1, model.manifold.ambient_dim)
    flags = kde_eval(cd, cand) >= t if cand.size else np.zeros(0, dtype=bool)

    def pred(y):
        v = kde_eval(cd, y)
        return v >= t

    return PredictionSet(xq, alpha, k, cand, flags, "fast", t, pred)


@dataclass(frozen=True, eq=False)
class OracleSet:
    """Population highest-density set ``{y : p(y) >= level}``."""

    level: float
    density: Callable
    manifold: EmbeddedManifold

    def contains(self, y):
        flags = np.asarray(self.density(np.atleast_2d(y))) >= self.level
        return bool(flags[0]) if np.ndim(y) == 1 else flags


def oracle_level(p, alpha: float, m: EmbeddedManifold, n_mc: int, rng) -> float:
    """Monte Carlo estimate of the level whose upper set has mass ``1 - alpha``."""
    return LevelSample(p, m, n_mc, rng).level(alpha)


def oracle_set(p, alpha: float, m: EmbeddedManifold, n_mc: int, rng) -> OracleSet:
    return OracleSet(oracle_level(p, alpha, m, n_mc, rng), p, m)
