"""Gaussian-kernel density estimation of responses falling in one covariate cell."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class EmptyCellError(ValueError):
    """Raised when a density is requested for a cell without responses."""


class TooFewPointsError(ValueError):
    """Raised when a cell holds fewer than ``1 / alpha`` responses."""


_CHUNK = 4096


def sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``a`` and ``b``.

    Computed from explicit differences (chunked over ``a``) so that equal
    points give exactly zero.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    out = np.empty((a.shape[0], b.shape[0]))
    step = max(1, _CHUNK * 64 // max(b.shape[0], 1))
    for s in range(0, a.shape[0], step):
        diff = a[s : s + step, None, :] - b[None, :, :]
        out[s : s + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def unit_kernel(d2: np.ndarray, h: float) -> np.ndarray:
    """exp(-d^2 / (2 h^2)); the Gaussian kernel without its scale constant."""
    return np.exp(-0.5 * d2 / (h * h))


def kernel_row_sums(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """sum_j exp(-|a_i - b_j|^2 / 2h^2) for every row of ``a``, in chunks."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    out = np.empty(a.shape[0])
    step = max(1, _CHUNK * 256 // max(b.shape[0], 1))
    for s in range(0, a.shape[0], step):
        out[s : s + step] = unit_kernel(sq_dists(a[s : s + step], b), h).sum(axis=1)
    return out


@dataclass(frozen=True)
class BandwidthRule:
    """Bandwidth as a function of the cell count.

    ``BandwidthRule.fixed(h)`` always returns ``h``;
    ``BandwidthRule.rule_of_thumb()`` returns ``n_k ** (-1 / (l + 4))``.
    """

    mode: str = "rule_of_thumb"
    h: float | None = None

    def __post_init__(self):
        if self.mode not in ("fixed", "rule_of_thumb"):
            raise ValueError(f"unknown bandwidth mode {self.mode!r}")
        if self.mode == "fixed" and not (self.h is not None and self.h > 0):
            raise ValueError("fixed bandwidth must be positive")

    @classmethod
    def fixed(cls, h: float) -> "BandwidthRule":
        return cls("fixed", float(h))

    @classmethod
    def rule_of_thumb(cls) -> "BandwidthRule":
        return cls("rule_of_thumb")

    def __call__(self, n_k: int, intrinsic_dim: int) -> float:
        if self.mode == "fixed":
            return self.h
        return max(n_k, 1) ** (-1.0 / (intrinsic_dim + 4))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "h": self.h}


@dataclass(frozen=True, eq=False)
class CellDensity:
    """Kernel density estimate built from the responses of one cell.

    Parameters
    ----------
    responses : (n_k, D) array
        Responses whose covariate falls in the cell.
    bandwidth : float
        Kernel bandwidth ``h``.
    intrinsic_dim : int
        Manifold dimension ``l``; the estimate is normalized by ``h**l``.
    kernel_scale : float, optional
        Constant ``c_K`` in ``K(u) = c_K exp(-u^2/2)``.  Defaults to
        ``(2 pi)^(-l/2)``.
    """

    responses: np.ndarray
    bandwidth: float
    intrinsic_dim: int
    kernel_scale: float | None = None
    _gram_sums: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.array(self.responses, dtype=float, copy=True)
        if y.ndim == 1:
            y = y[None, :] if y.size else y.reshape(0, 0)
        y.setflags(write=False)
        object.__setattr__(self, "responses", y)
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.kernel_scale is None:
            object.__setattr__(
                self, "kernel_scale", (2 * math.pi) ** (-self.intrinsic_dim / 2)
            )
        elif not self.kernel_scale > 0:
            raise ValueError("kernel_scale must be positive")
        if y.shape[0]:
            sums = kernel_row_sums(y, y, self.bandwidth)
        else:
            sums = np.zeros(0)
        sums.setflags(write=False)
        object.__setattr__(self, "_gram_sums", sums)

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    @property
    def norm(self) -> float:
        """c_K / h^l, the kernel value at zero divided by h^l."""
        return self.kernel_scale / self.bandwidth**self.intrinsic_dim

    def unit_sums(self, v) -> np.ndarray:
        """sum_i exp(-|Y_i - v|^2 / 2h^2) for each row of ``v``."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if self.n == 0:
            return np.zeros(v.shape[0])
        return kernel_row_sums(v, self.responses, self.bandwidth)

    def training_unit_sums(self) -> np.ndarray:
        """:meth:`unit_sums` evaluated at the cell's own responses."""
        return self._gram_sums

    def __call__(self, v):
        return kde_eval(self, v)


def kde_eval(cd: CellDensity, v) -> np.ndarray | float:
    """Evaluate the cell density estimate at ``v`` (one point or rows)."""
    if cd.n == 0:
        raise EmptyCellError("cell has no responses")
    single = np.ndim(v) == 1
    out = cd.norm * cd.unit_sums(v) / cd.n
    return float(out[0]) if single else out


def augmented_eval(cd: CellDensity, y_new, v) -> np.ndarray | float:
    """Density estimate after adding ``y_new`` to the cell's responses.

    Equals ``n/(n+1) * kde(v) + c_K / ((n+1) h^l) * exp(-|y_new - v|^2 / 2h^2)``;
    well defined for an empty cell.
    """
    single = np.ndim(v) == 1
    v = np.atleast_2d(np.asarray(v, dtype=float))
    y_new = np.atleast_2d(np.asarray(y_new, dtype=float))
    own = unit_kernel(sq_dists(v, y_new)[:, 0], cd.bandwidth)
    out = cd.norm * (cd.unit_sums(v) + own) / (cd.n + 1)
    return float(out[0]) if single else out


def exact_correction(cd: CellDensity) -> float:
    """K(0) / (n h^l): the slack that makes the threshold set contain the
    rank-based set."""
    return cd.norm / cd.n


def joint_correction(
    kernel_scale: float, n: int, h: float, covariate_dim: int
) -> float:
    """K(0)^2 / (n h^(d+1)) with K(0) = c_K and d the covariate dimension."""
    return kernel_scale**2 / (n * h ** (covariate_dim + 1))


def joint_score_threshold(
    cd: CellDensity,
    alpha: float,
    covariate_dim: int = 1,
    correction: str = "exact",
) -> float:
    """Density threshold ``t`` of the fast set ``{y : kde(y) >= t}``.

    The cell's responses are scored by the estimate itself and sorted
    increasingly; ``t`` is the score of rank ``floor(n alpha)`` minus a
    correction.  ``correction`` is ``"exact"`` (``K(0)/(n h^l)``, which
    guarantees the fast set contains the rank-based set), ``"joint"``
    (``K(0)^2/(n h^(d+1))``) or ``"none"``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    n = cd.n
    j = math.floor(n * alpha)
    if j < 1:
        raise TooFewPointsError(
            f"need at least 1/alpha = {1 / alpha:.3g} responses, cell has {n}"
        )
    scores = np.sort(cd.norm * cd.training_unit_sums() / n)
    if correction == "exact":
        c = exact_correction(cd)
    elif correction == "joint":
        c = joint_correction(cd.kernel_scale, n, cd.bandwidth, covariate_dim)
    elif correction == "none":
        c = 0.0
    else:
        raise ValueError(f"unknown correction {correction!r}")
    return float(scores[j - 1] - c)
