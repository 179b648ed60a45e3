"""Covariate partitions and Monte Carlo level-set quantities.

Two partition families are provided:

* :class:`GridPartition` -- product of per-axis breakpoints.  Built either from
  user breakpoints (:func:`grid_partition`) or from the ``w_n`` cube rule
  (:func:`cube_partition`).
* :class:`CDSplitPartition` -- groups covariates by the bin of their estimated
  conditional alpha-quantile ``q_alpha(x)`` computed from a pilot model.

Interval convention: a point lying exactly on an interior breakpoint belongs to
the lower-index cell; points outside the outer breakpoints are clamped to the
first/last cell, so ``locate`` is total.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .density import CellDensity
from .geometry import EmbeddedManifold


def _as_covariates(x, dim: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None] if dim in (None, 1) else x[None, :]
    if dim is not None and x.shape[1] != dim:
        raise ValueError(f"expected covariates of dimension {dim}, got {x.shape[1]}")
    return x


class Partition:
    """Common interface: ``n_cells``, ``dim``, ``locate`` and JSON descriptors."""

    kind: str
    n_cells: int
    dim: int

    def locate(self, x) -> np.ndarray:
        raise NotImplementedError

    def locate_one(self, x) -> int:
        return int(self.locate(_as_covariates(x, self.dim).reshape(1, -1))[0])

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict) -> "Partition":
        if d["kind"] in ("grid", "cubes"):
            return GridPartition.from_dict(d)
        if d["kind"] == "cdsplit":
            return CDSplitPartition.from_dict(d)
        raise ValueError(f"unknown partition kind {d['kind']!r}")


@dataclass(frozen=True, eq=False)
class GridPartition(Partition):
    breaks: tuple
    kind: str = "grid"
    side: float | None = None

    def __post_init__(self):
        bs = []
        for b in self.breaks:
            b = np.array(b, dtype=float)
            if b.ndim != 1 or b.size < 2:
                raise ValueError("each axis needs at least two breakpoints")
            if not np.all(np.diff(b) > 0):
                raise ValueError("breakpoints must be strictly increasing")
            b.setflags(write=False)
            bs.append(b)
        object.__setattr__(self, "breaks", tuple(bs))

    @property
    def dim(self) -> int:
        return len(self.breaks)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b.size - 1 for b in self.breaks)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def locate(self, x) -> np.ndarray:
        x = _as_covariates(x, self.dim)
        idx = []
        for j, b in enumerate(self.breaks):
            i = np.searchsorted(b, x[:, j], side="left") - 1
            idx.append(np.clip(i, 0, b.size - 2))
        return np.ravel_multi_index(tuple(idx), self.shape)

    def cell_box(self, k: int) -> list[tuple[float, float]]:
        """Per-axis ``(low, high)`` bounds of cell ``k``."""
        multi = np.unravel_index(k, self.shape)
        return [(float(b[i]), float(b[i + 1])) for b, i in zip(self.breaks, multi)]

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "breaks": [b.tolist() for b in self.breaks]}
        if self.side is not None:
            d["w_n"] = self.side
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GridPartition":
        return cls(tuple(d["breaks"]), kind=d["kind"], side=d.get("w_n"))


def grid_partition(breaks: Sequence[Sequence[float]]) -> GridPartition:
    """Product partition from per-axis strictly increasing breakpoints."""
    return GridPartition(tuple(breaks))


def cube_side(n: int, d: int) -> float:
    """w_n = (log n / n)^(1/(d+2))."""
    if n < 2:
        raise ValueError("need n >= 2")
    return (math.log(n) / n) ** (1.0 / (d + 2))


def cube_partition(x_train, bounds=None, normalize: bool = False) -> GridPartition:
    """Cube partition with side ``w_n`` for the training covariates.

    Each axis of the bounding box (the empirical one unless ``bounds`` is
    given as ``[(low, high), ...]``) is cut into ``ceil(length / w_n)`` equal
    intervals, so the cells tile the box exactly with side at most ``w_n``.
    With ``normalize=True`` the box is first rescaled to the unit cube, i.e.
    every axis gets ``ceil(1 / w_n)`` intervals.
    """
    x = _as_covariates(x_train)
    n, d = x.shape
    w = cube_side(n, d)
    if bounds is None:
        bounds = list(zip(x.min(axis=0), x.max(axis=0)))
    breaks = []
    for lo, hi in bounds:
        length = hi - lo
        if length <= 0:
            breaks.append(np.array([lo - w / 2, lo + w / 2]))
            continue
        k = max(1, math.ceil((1.0 if normalize else length) / w - 1e-12))
        breaks.append(np.linspace(lo, hi, k + 1))
    return GridPartition(tuple(breaks), kind="cubes", side=w)


class LevelSample:
    """A density evaluated on one uniform Monte Carlo sample of a manifold.

    Reusing the sample makes every derived quantity exactly monotone.
    """

    def __init__(
        self,
        density: Callable[[np.ndarray], np.ndarray],
        manifold: EmbeddedManifold,
        n_mc: int,
        rng: np.random.Generator,
    ):
        pts = manifold.uniform_sample(n_mc, rng)
        vals = np.asarray(density(pts), dtype=float)
        if np.any(vals < 0):
            raise ValueError("density must be nonnegative")
        self.values = np.sort(vals)
        self.volume = manifold.total_volume
        self.n_mc = n_mc
        # mass[k] = nu(M)/n * sum of the k+1 smallest values
        self.mass = np.cumsum(self.values) * (self.volume / n_mc)

    @property
    def total(self) -> float:
        return float(self.mass[-1])

    def h(self, z: float) -> float:
        """Integral of the density over ``{density <= z}``."""
        if z < 0:
            raise ValueError("z must be nonnegative")
        k = np.searchsorted(self.values, z, side="right")
        return 0.0 if k == 0 else float(self.mass[k - 1])

    def quantile(self, alpha: float) -> float:
        """Smallest sample value ``z`` with ``h(z) >= alpha``."""
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        k = np.searchsorted(self.mass, alpha, side="left")
        return float(self.values[min(k, self.values.size - 1)])

    def level(self, alpha: float) -> float:
        """Largest sample value ``t`` whose upper set ``{density >= t}``
        carries at least ``1 - alpha`` of the (self-normalized) mass."""
        if not 0 <= alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        before = np.concatenate([[0.0], self.mass[:-1]])
        k = np.searchsorted(before, alpha * self.total, side="right") - 1
        return float(self.values[max(k, 0)])


def h_hat(density, z: float, m: EmbeddedManifold, n_mc: int, rng) -> float:
    """Monte Carlo estimate of the integral of ``density`` over
    ``{y : density(y) <= z}``."""
    return LevelSample(density, m, n_mc, rng).h(z)


def q_alpha_hat(density, alpha: float, m: EmbeddedManifold, n_mc: int, rng) -> float:
    """Inverse of :func:`h_hat` in ``z`` at level ``alpha``."""
    return LevelSample(density, m, n_mc, rng).quantile(alpha)


@dataclass(frozen=True, eq=False)
class CDSplitPartition(Partition):
    """Cells are bins of the pilot's estimated conditional alpha-quantile.

    ``pilot_q[c]`` is ``q_alpha`` of pilot cell ``c``; ``edges`` are the
    interior bin edges (a quantile equal to an edge falls in the lower bin).
    """

    pilot: Partition
    pilot_q: np.ndarray
    edges: np.ndarray
    kind: str = "cdsplit"

    def __post_init__(self):
        for name in ("pilot_q", "edges"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def dim(self) -> int:
        return self.pilot.dim

    @property
    def n_cells(self) -> int:
        return self.edges.size + 1

    def q_of(self, x) -> np.ndarray:
        return self.pilot_q[self.pilot.locate(x)]

    def locate(self, x) -> np.ndarray:
        return np.searchsorted(self.edges, self.q_of(x), side="left")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "pilot": self.pilot.to_dict(),
            "pilot_q": self.pilot_q.tolist(),
            "edges": self.edges.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CDSplitPartition":
        return cls(Partition.from_dict(d["pilot"]), d["pilot_q"], d["edges"])


def cd_split_partition(
    x_train,
    alpha: float,
    n_bins: int,
    pilot,
    m: EmbeddedManifold,
    n_mc: int,
    rng: np.random.Generator,
) -> CDSplitPartition:
    """Build a CD-split partition.

    Parameters
    ----------
    x_train : array
        Covariates of the conformal split; only used to place the bin edges.
    pilot : ConformalModel
        Cell-KDE model fitted on a disjoint split.  Its ``q_alpha`` is
        computed once per pilot cell; empty pilot cells fall back to the
        pooled estimate over all pilot responses.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    dens = pilot.cell_densities
    pooled = None
    q = np.empty(len(dens))
    for c, cd in enumerate(dens):
        if cd.n == 0:
            if pooled is None:
                pooled = q_alpha_hat(pilot.pooled_density(), alpha, m, n_mc, rng)
            q[c] = pooled
        else:
            q[c] = q_alpha_hat(cd, alpha, m, n_mc, rng)
    qx = q[pilot.partition.locate(x_train)]
    if n_bins == 1 or np.ptp(qx) == 0:
        edges = np.array([])
    else:
        edges = np.unique(np.quantile(qx, np.arange(1, n_bins) / n_bins))
        # an edge at the maximum would leave the top bin empty
        edges = edges[edges < qx.max()]
    return CDSplitPartition(pilot.partition, q, edges)
