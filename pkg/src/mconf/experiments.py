"""Synthetic regression models, evaluation metrics and end-to-end pipelines."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .conformal import ConformalModel, fit, pair_ranks, predict_set
from .density import BandwidthRule
from .partition import (
    GridPartition,
    cd_split_partition,
    cube_partition,
    grid_partition,
)


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named stage of a seeded run."""
    return np.random.default_rng([seed & (2**64 - 1), zlib.crc32(name.encode())])


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# --------------------------------------------------------------------------
# sphere model


def vmf_cap_cosine(kappa: float, alpha: float) -> float:
    """Cosine ``c`` such that the cap ``{mu.y >= c}`` has vMF mass ``1 - alpha``."""
    return 1.0 + math.log(alpha + (1.0 - alpha) * math.exp(-2.0 * kappa)) / kappa


@dataclass(frozen=True)
class SphereRegressionModel:
    """vMF responses on S^2 with mean direction ``(eta + beta x) / |.|``."""

    eta: tuple = (1.0, 0.0, 0.0)
    beta: tuple = (0.0, 0.0, 1.0)
    kappa: float = 200.0
    n: int = 400
    h: float = 0.5
    breaks: tuple = (-1.0, -0.5, 0.0, 0.5, 1.0)

    def mean_direction(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(self.eta) + np.multiply.outer(x, np.asarray(self.beta))
        return _normalize(v)

    def density_at(self, x: float):
        mu = self.mean_direction(x)
        return lambda y: geo.vmf_density(mu, self.kappa, np.atleast_2d(y))

    def partition(self) -> GridPartition:
        return grid_partition([self.breaks])

    def oracle_cap(self, x: float, alpha: float):
        """Membership predicate of the population set at ``x`` (a cap)."""
        mu = self.mean_direction(x)
        c = vmf_cap_cosine(self.kappa, alpha)
        return lambda y: np.atleast_2d(y) @ mu >= c


def gen_sphere(model: SphereRegressionModel, n: int, rng: np.random.Generator):
    """Draw ``X ~ U(-1, 1)`` and vMF responses; returns ``(x, y)``."""
    x = rng.uniform(-1.0, 1.0, n)
    y = geo.vmf_sample(model.mean_direction(x), model.kappa, n, rng)
    return x, y


# --------------------------------------------------------------------------
# Stiefel model


def first_entry_positive(frames: np.ndarray) -> np.ndarray:
    """Flip columns so that the first nonzero entry of each is positive."""
    f = np.array(frames, dtype=float)
    nz = np.abs(f) > 1e-12
    first = np.argmax(nz, axis=-2)
    lead = np.take_along_axis(f, first[..., None, :], axis=-2)
    return f * np.where(lead < 0, -1.0, 1.0)


@dataclass(frozen=True)
class StiefelRegressionModel:
    """Top-2 principal frame of a 3-D Gaussian cloud whose axes depend on x."""

    eigenvalues: tuple = (2.0, 1.0, 0.5)
    n_cloud: int = 400
    n: int = 500
    h: float = 1.0
    breaks: tuple = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

    def eigenbasis(self, x: float) -> np.ndarray:
        """Gram-Schmidt of the three stated axes, in order (columns)."""
        v = np.array(
            [[2 + x, 2 + 2 * x, 2 - x], [-2 + x, 2 - 3 * x, -2 + x], [1.0, 0.0, 0.0]]
        ).T
        q, r = np.linalg.qr(v)
        return q * np.sign(np.diag(r))

    def covariance(self, x: float) -> np.ndarray:
        q = self.eigenbasis(x)
        return q @ np.diag(self.eigenvalues) @ q.T

    def frame(self, x: float, rng: np.random.Generator) -> np.ndarray:
        """One response: PCA frame (3x2) of ``n_cloud`` Gaussian points."""
        q = self.eigenbasis(x)
        z = rng.standard_normal((self.n_cloud, 3)) * np.sqrt(self.eigenvalues)
        pts = z @ q.T
        w, v = np.linalg.eigh(np.cov(pts, rowvar=False))
        top = v[:, np.argsort(w)[::-1][:2]]
        return first_entry_positive(top)

    def partition(self) -> GridPartition:
        return grid_partition([self.breaks])


def gen_stiefel(model: StiefelRegressionModel, n: int, rng: np.random.Generator):
    """Draw ``X ~ U(0, 1)`` and PCA-frame responses (column-major rows)."""
    x = rng.uniform(0.0, 1.0, n)
    frames = np.stack([model.frame(xi, rng) for xi in x]) if n else np.empty((0, 3, 2))
    return x, geo.from_frames(frames)


# --------------------------------------------------------------------------
# cylinder model (synthetic stand-in for paired wind stations)


@dataclass(frozen=True)
class CylinderRegressionModel:
    """Paired cylinder observations ``(theta1, r1) -> (theta2, r2)``.

    ``theta2`` is ``theta1`` plus a shift and wrapped-normal noise; ``r2`` is
    a noisy affine function of ``r1`` reflected into ``[0, r_max]``.
    """

    shift: float = 0.3
    angle_sd: float = 0.5
    slope: float = 0.7
    intercept: float = 2.0
    speed_sd: float = 1.5
    r_max: float = 20.0

    def generate(self, n: int, rng: np.random.Generator):
        theta1 = rng.uniform(0.0, 2 * np.pi, n)
        r1 = rng.uniform(0.0, self.r_max, n)
        theta2 = np.mod(theta1 + self.shift + self.angle_sd * rng.standard_normal(n),
                        2 * np.pi)
        r2 = self.intercept + self.slope * r1 + self.speed_sd * rng.standard_normal(n)
        r2 = np.abs(r2)
        r2 = np.where(r2 > self.r_max, 2 * self.r_max - r2, r2)
        return theta1, r1, theta2, r2


def wind_partition(r_max: float = 20.0) -> GridPartition:
    """Eight direction sectors of width pi/4 times five 4 m/s speed bands."""
    return grid_partition(
        [np.arange(9) * np.pi / 4, np.linspace(0.0, r_max, 6)]
    )


# --------------------------------------------------------------------------
# evaluation


@dataclass
class CoverageReport:
    alpha: float
    hits: np.ndarray
    counts: np.ndarray
    set_fraction_sum: float = 0.0
    set_fraction_n: int = 0

    @property
    def n_test(self) -> int:
        return int(self.counts.sum())

    @property
    def defined(self) -> bool:
        return self.n_test > 0

    @property
    def overall(self) -> float:
        return float(self.hits.sum() / self.n_test) if self.defined else float("nan")

    @property
    def per_cell(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.hits / np.maximum(self.counts, 1),
                            np.nan)

    @property
    def mean_set_fraction(self) -> float:
        if self.set_fraction_n == 0:
            return float("nan")
        return self.set_fraction_sum / self.set_fraction_n

    def merge(self, other: "CoverageReport") -> "CoverageReport":
        if other.alpha != self.alpha:
            raise ValueError("cannot merge reports at different alpha")
        return CoverageReport(
            self.alpha,
            self.hits + other.hits,
            self.counts + other.counts,
            self.set_fraction_sum + other.set_fraction_sum,
            self.set_fraction_n + other.set_fraction_n,
        )

    def to_dict(self) -> dict:
        def num(v):
            return None if not np.isfinite(v) else float(v)

        return {
            "alpha": self.alpha,
            "n_test": self.n_test,
            "defined": self.defined,
            "overall": num(self.overall),
            "per_cell": [num(v) for v in self.per_cell],
            "per_cell_counts": self.counts.astype(int).tolist(),
            "mean_set_fraction": num(self.mean_set_fraction),
        }


def empirical_coverage(
    model: ConformalModel, test_x, test_y, alpha: float, candidates=None
) -> CoverageReport:
    """Held-out hit rates of the conformal sets, overall and per cell.

    When ``candidates`` is given, the fraction of them falling in the set at
    each test covariate is averaged into ``mean_set_fraction``.
    """
    nc = model.partition.n_cells
    test_y = np.asarray(test_y, dtype=float)
    if test_y.size == 0:
        return CoverageReport(alpha, np.zeros(nc, int), np.zeros(nc, int))
    cells = model.partition.locate(test_x)
    hit = pair_ranks(model, test_x, test_y) >= alpha
    counts = np.bincount(cells, minlength=nc)
    hits = np.bincount(cells, weights=hit, minlength=nc).astype(int)
    frac_sum, frac_n = 0.0, 0
    if candidates is not None:
        xs = np.atleast_2d(np.asarray(test_x, dtype=float).reshape(len(cells), -1))
        for k in np.flatnonzero(counts):
            first = np.flatnonzero(cells == k)[0]
            frac = predict_set(model, xs[first], alpha, candidates).fraction
            frac_sum += frac * counts[k]
            frac_n += int(counts[k])
    return CoverageReport(alpha, hits, counts, frac_sum, frac_n)


def _membership(pred, pts: np.ndarray) -> np.ndarray:
    return np.asarray(pred(pts), dtype=bool).reshape(pts.shape[0])


def set_comparison(a, b, m: geo.EmbeddedManifold, n_mc: int, rng) -> dict:
    """Volume of ``a``, ``b``, their symmetric difference and Jaccard index,
    estimated on one shared uniform sample.  ``a`` and ``b`` are vectorized
    membership predicates."""
    pts = m.uniform_sample(n_mc, rng)
    ia, ib = _membership(a, pts), _membership(b, pts)
    vol = m.total_volume
    union = np.count_nonzero(ia | ib)
    return {
        "volume_a": vol * ia.mean(),
        "volume_b": vol * ib.mean(),
        "sym_diff": vol * np.count_nonzero(ia ^ ib) / n_mc,
        "jaccard": np.count_nonzero(ia & ib) / union if union else 1.0,
    }


def sym_diff_measure(a, b, m: geo.EmbeddedManifold, n_mc: int, rng) -> float:
    """Monte Carlo estimate of the volume of ``a`` xor ``b``."""
    return float(set_comparison(a, b, m, n_mc, rng)["sym_diff"])


def xi_correlation(x, y) -> float:
    """Chatterjee's rank correlation of ``y`` on ``x``.

    Ties in ``x`` keep their input order; ties in ``y`` use the general
    formula with ``r_i = #{y_j <= y_i}`` and ``l_i = #{y_j >= y_i}``.  Computed
    in integer arithmetic with a single final division.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    n = x.size
    if n < 2:
        raise ValueError("need at least two observations")
    ys = y[np.argsort(x, kind="stable")]
    srt = np.sort(ys)
    r = np.searchsorted(srt, ys, side="right").astype(np.int64)
    l = (n - np.searchsorted(srt, ys, side="left")).astype(np.int64)
    num = n * int(np.abs(np.diff(r)).sum())
    den = 2 * int((l * (n - l)).sum())
    if den == 0:
        raise ValueError("y is constant")
    return (den - num) / den


def circular_mean(theta) -> float:
    theta = np.asarray(theta, dtype=float)
    return float(np.arctan2(np.sin(theta).mean(), np.cos(theta).mean()))


def angular_correlation(theta1, theta2) -> float:
    """Pearson correlation of ``sin(theta1 - mean1)`` and ``sin(theta2 - mean2)``,
    with circular means."""
    t1 = np.asarray(theta1, dtype=float)
    t2 = np.asarray(theta2, dtype=float)
    if t1.shape != t2.shape:
        raise ValueError("length mismatch")
    a = np.sin(t1 - circular_mean(t1))
    b = np.sin(t2 - circular_mean(t2))
    a = a - a.mean()
    b = b - b.mean()
    saa, sbb, sab = a @ a, b @ b, a @ b
    if saa == 0 or sbb == 0:
        raise ValueError("zero variance")
    return float(np.clip(sab / (math.sqrt(saa) * math.sqrt(sbb)), -1.0, 1.0))


@dataclass
class ClassBand:
    fractions: np.ndarray
    class_set: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"fractions": self.fractions.tolist(), "class_set": self.class_set}


def voronoi_class(p) -> np.ndarray:
    """Argmax class of simplex points; ties go to the lowest index."""
    return np.argmax(np.atleast_2d(p), axis=1)


def simplex_class_band(pset) -> ClassBand:
    """Share of an in-set simplex sample in each argmax (Voronoi) region.

    Accepts a :class:`PredictionSet` or an array of in-set points.  Class
    indices in ``class_set`` are 0-based.
    """
    pts = pset.members if hasattr(pset, "members") else np.atleast_2d(pset)
    if pts.shape[0] == 0:
        raise ValueError("prediction set is empty")
    counts = np.bincount(voronoi_class(pts), minlength=pts.shape[1])
    fractions = counts / counts.sum()
    return ClassBand(fractions, [int(k) for k in np.flatnonzero(counts)])


# --------------------------------------------------------------------------
# pipelines


def sphere_run(
    seed: int,
    model: SphereRegressionModel = SphereRegressionModel(),
    alpha: float = 0.1,
    x_query: float = 0.0,
    n_grid: int = 10000,
    n_mc: int = 100000,
    n_test: int | None = None,
) -> dict:
    """Fit the sphere example, build the set at ``x_query`` and evaluate it."""
    x, y = gen_sphere(model, model.n, substream(seed, "train"))
    cm = fit(x, y, model.partition(), BandwidthRule.fixed(model.h), geo.sphere())
    grid = geo.sphere().uniform_sample(n_grid, substream(seed, "grid"))
    pset = predict_set(cm, x_query, alpha, grid)
    oracle_pred = model.oracle_cap(x_query, alpha)
    tx, ty = gen_sphere(model, n_test or model.n, substream(seed, "test"))
    report = empirical_coverage(cm, tx, ty, alpha)
    cmp_ = set_comparison(
        pset.predicate, oracle_pred, geo.sphere(), n_mc, substream(seed, "mc")
    )
    return {
        "model": cm,
        "set": pset,
        "oracle_points": grid[oracle_pred(grid)],
        "coverage": report,
        "comparison": cmp_,
        "train": (x, y),
    }


def sphere_coverage_study(
    reps: int,
    seed: int,
    model: SphereRegressionModel = SphereRegressionModel(),
    alpha: float = 0.1,
    n_test: int | None = None,
) -> CoverageReport:
    """Merge coverage over independent train/test repetitions."""
    part = model.partition()
    bw = BandwidthRule.fixed(model.h)
    total = None
    for r in range(reps):
        rng = substream(seed, f"rep{r}")
        x, y = gen_sphere(model, model.n, rng)
        tx, ty = gen_sphere(model, n_test or model.n, rng)
        rep = empirical_coverage(fit(x, y, part, bw, geo.sphere()), tx, ty, alpha)
        total = rep if total is None else total.merge(rep)
    return total


def stiefel_run(
    seed: int,
    model: StiefelRegressionModel = StiefelRegressionModel(),
    alpha: float = 0.05,
    x_query: float = 0.1,
    n_grid: int = 10000,
) -> dict:
    x, y = gen_stiefel(model, model.n, substream(seed, "train"))
    m = geo.stiefel32()
    cm = fit(x, y, model.partition(), BandwidthRule.fixed(model.h), m)
    grid = m.uniform_sample(n_grid, substream(seed, "grid"))
    pset = predict_set(cm, x_query, alpha, grid)
    query_frame = geo.from_frames(model.frame(x_query, substream(seed, "query")))[0]
    tx, ty = gen_stiefel(model, model.n, substream(seed, "test"))
    return {
        "model": cm,
        "set": pset,
        "query_response": query_frame,
        "query_in_set": bool(pset.contains(query_frame)),
        "coverage": empirical_coverage(cm, tx, ty, alpha),
        "train": (x, y),
    }


def wind_run(
    theta1, r1, theta2, r2,
    seed: int,
    alpha: float = 0.2,
    h: float = 0.4,
    query=(2.3, 5.1),
    truth=(2.4, 6.6),
    n_grid: int = 10000,
    r_max: float = 20.0,
) -> dict:
    """Cylinder-to-cylinder pipeline on paired station records.

    Rows with either speed above ``r_max`` are dropped.  Half the rows fit
    the model, the other half measure coverage.
    """
    theta1, r1, theta2, r2 = (np.asarray(a, dtype=float) for a in (theta1, r1, theta2, r2))
    keep = (r1 <= r_max) & (r2 <= r_max) & (r1 >= 0) & (r2 >= 0)
    theta1, r1, theta2, r2 = theta1[keep], r1[keep], theta2[keep], r2[keep]
    n = theta1.size
    if n < 2:
        raise ValueError("need at least two usable rows")
    x = np.column_stack([np.mod(theta1, 2 * np.pi), r1])
    y = geo.cylinder_embed(theta2, r2)
    perm = substream(seed, "split").permutation(n)
    tr, te = perm[: n // 2], perm[n // 2 :]
    m = geo.cylinder(r_max)
    cm = fit(x[tr], y[tr], wind_partition(r_max), BandwidthRule.fixed(h), m)
    grid = m.uniform_sample(n_grid, substream(seed, "grid"))
    qx = np.array([np.mod(query[0], 2 * np.pi), query[1]])
    pset = predict_set(cm, qx, alpha, grid)
    out = {
        "model": cm,
        "set": pset,
        "coverage": empirical_coverage(cm, x[te], y[te], alpha),
        "xi_intensity": xi_correlation(r1, r2),
        "angular_correlation": angular_correlation(theta1, theta2),
        "n_rows": int(n),
        "n_dropped": int((~keep).sum()),
    }
    if truth is not None:
        out["truth_in_set"] = bool(pset.contains(geo.cylinder_embed([truth[0]], [truth[1]])[0]))
    return out


VEHICLE_QUERY = (84.0, 45.0, 66.0, 150.0, 65.0)


def simplex_run(
    probs,
    x,
    seed: int,
    alphas=(0.1, 0.05),
    query_x=VEHICLE_QUERY,
    n_bins: int = 4,
    h: float | None = None,
    n_grid: int = 10000,
    n_mc: int = 20000,
    partition_alpha: float | None = None,
) -> dict:
    """CD-split conformal sets on the probability simplex.

    The rows are split in half: a pilot cell-KDE (cube partition) on one half
    supplies ``q_alpha(x)``; the conformal model is fitted on the other half
    with the resulting CD-split partition.  One partition, built at
    ``partition_alpha`` (default: the smallest requested level), serves every
    level so that the sets are nested.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    x = np.asarray(x, dtype=float)
    x = x.reshape(probs.shape[0], -1)
    n = probs.shape[0]
    if n < 4:
        raise ValueError("need at least four rows")
    m = geo.simplex()
    bw = BandwidthRule.rule_of_thumb() if h is None else BandwidthRule.fixed(h)
    perm = substream(seed, "split").permutation(n)
    pil, conf = perm[: n // 2], perm[n // 2 :]
    pilot = fit(x[pil], probs[pil], cube_partition(x[pil], normalize=True), bw, m)
    grid = m.uniform_sample(n_grid, substream(seed, "grid"))
    qx = np.asarray(query_x, dtype=float)
    pa = min(alphas) if partition_alpha is None else partition_alpha
    part = cd_split_partition(x[conf], pa, n_bins, pilot, m, n_mc, substream(seed, "cdsplit"))
    cm = fit(x[conf], probs[conf], part, bw, m)
    out = {"sets": {}, "bands": {}, "partition": part, "model": cm}
    for a in alphas:
        pset = predict_set(cm, qx, a, grid)
        out["sets"][a] = pset
        out["bands"][a] = simplex_class_band(pset) if pset.in_set.any() else None
    return out
