"""Embedded manifolds, ambient distances and samplers.

Points are stored as rows of a float array in ambient coordinates.  A frame on
the Stiefel manifold V_2(R^3) (3x2 matrix with orthonormal columns) is stored
column-major, i.e. ``[col1, col2]`` as a length-6 vector.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

TOL = 1e-9


class Kind(str, enum.Enum):
    SPHERE2 = "sphere2"
    STIEFEL32 = "stiefel32"
    CYLINDER = "cylinder"
    SIMPLEX2 = "simplex2"


@dataclass(frozen=True)
class EmbeddedManifold:
    """One of the supported manifolds embedded in R^D.

    Parameters
    ----------
    kind : Kind
        Which manifold.
    r_max : float
        Truncation radius of the cylinder ``S^1 x [0, r_max]``.  Ignored for
        the other kinds.
    """

    kind: Kind
    r_max: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.CYLINDER and not self.r_max > 0:
            raise ValueError("r_max must be positive")

    @property
    def ambient_dim(self) -> int:
        return 6 if self.kind is Kind.STIEFEL32 else 3

    @property
    def intrinsic_dim(self) -> int:
        return 3 if self.kind is Kind.STIEFEL32 else 2

    @property
    def total_volume(self) -> float:
        if self.kind is Kind.SPHERE2:
            return 4 * math.pi
        if self.kind is Kind.STIEFEL32:
            # Riemannian volume induced by the Frobenius metric of R^6
            return 8 * math.sqrt(2) * math.pi**2
        if self.kind is Kind.CYLINDER:
            return 2 * math.pi * self.r_max
        return math.sqrt(3) / 2

    def contains(self, p) -> np.ndarray | bool:
        """Membership test with absolute tolerance 1e-9.

        Accepts a single point (returns bool) or an ``(n, D)`` array
        (returns a boolean array).
        """
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        if p.shape[1] != self.ambient_dim:
            raise ValueError(
                f"expected points of length {self.ambient_dim}, got {p.shape[1]}"
            )
        if self.kind is Kind.SPHERE2:
            ok = np.abs(np.linalg.norm(p, axis=1) - 1.0) <= TOL
        elif self.kind is Kind.STIEFEL32:
            f = as_frames(p)
            gram = np.einsum("nij,nik->njk", f, f)
            ok = np.abs(gram - np.eye(2)).max(axis=(1, 2)) <= TOL
        elif self.kind is Kind.CYLINDER:
            ok = (
                (np.abs(np.hypot(p[:, 0], p[:, 1]) - 1.0) <= TOL)
                & (p[:, 2] >= -TOL)
                & (p[:, 2] <= self.r_max + TOL)
            )
        else:
            ok = (p >= -TOL).all(axis=1) & (np.abs(p.sum(axis=1) - 1.0) <= TOL)
        ok = ok & np.isfinite(p).all(axis=1)
        return bool(ok[0]) if single else ok

    def uniform_sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` i.i.d. points from the normalized volume measure."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.kind is Kind.SPHERE2:
            g = rng.standard_normal((n, 3))
            return g / np.linalg.norm(g, axis=1, keepdims=True)
        if self.kind is Kind.STIEFEL32:
            return haar_stiefel(n, rng)
        if self.kind is Kind.CYLINDER:
            theta = rng.uniform(0.0, 2 * np.pi, n)
            r = rng.uniform(0.0, self.r_max, n)
            return cylinder_embed(theta, r)
        return rng.dirichlet(np.ones(3), size=n)


def sphere() -> EmbeddedManifold:
    return EmbeddedManifold(Kind.SPHERE2)


def stiefel32() -> EmbeddedManifold:
    return EmbeddedManifold(Kind.STIEFEL32)


def cylinder(r_max: float = 20.0) -> EmbeddedManifold:
    return EmbeddedManifold(Kind.CYLINDER, r_max=r_max)


def simplex() -> EmbeddedManifold:
    return EmbeddedManifold(Kind.SIMPLEX2)


def ambient_distance(a, b) -> np.ndarray | float:
    """Euclidean distance between points in the ambient embedding.

    Broadcasts over leading axes; scalar inputs give a float.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    d = np.linalg.norm(a - b, axis=-1)
    return float(d) if d.ndim == 0 else d


def as_frames(p: np.ndarray) -> np.ndarray:
    """View column-major length-6 rows as an ``(n, 3, 2)`` stack of frames."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    return p.reshape(-1, 2, 3).transpose(0, 2, 1)


def from_frames(f: np.ndarray) -> np.ndarray:
    """Inverse of :func:`as_frames`."""
    f = np.asarray(f, dtype=float).reshape(-1, 3, 2)
    return f.transpose(0, 2, 1).reshape(-1, 6)


def haar_stiefel(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed 3x2 orthonormal frames via QR of Gaussian matrices."""
    g = rng.standard_normal((n, 3, 2))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diagonal(r, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    return from_frames(q * signs[:, None, :])


def cylinder_embed(theta, r) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    r = np.asarray(r, dtype=float)
    return np.column_stack([np.cos(theta), np.sin(theta), r])


def cylinder_coords(p) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(theta in [0, 2pi), r)`` for embedded cylinder points."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    theta = np.mod(np.arctan2(p[:, 1], p[:, 0]), 2 * np.pi)
    return theta, p[:, 2]


def _check_kappa(kappa: float) -> None:
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")


def _rotate_from_pole(mu: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # Householder reflection sending e_z to mu, applied row-wise.
    ez = np.array([0.0, 0.0, 1.0])
    v = ez - mu
    vv = np.einsum("ij,ij->i", v, v)
    safe = vv > 1e-30
    coef = np.where(safe, 2.0 / np.where(safe, vv, 1.0), 0.0)
    return pts - (coef * np.einsum("ij,ij->i", v, pts))[:, None] * v


def vmf_sample(mu, kappa: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sample the von Mises-Fisher distribution on S^2.

    ``mu`` is either one unit vector or an ``(n, 3)`` array of mean
    directions (one per draw).  The cosine ``t = mu.y`` is drawn by inverting
    its CDF, the azimuth uniformly.
    """
    _check_kappa(kappa)
    mu = np.asarray(mu, dtype=float)
    mu = np.broadcast_to(np.atleast_2d(mu), (n, 3))
    if np.any(np.abs(np.linalg.norm(mu, axis=1) - 1.0) > 1e-9):
        raise ValueError("mu must be a unit vector")
    u = rng.uniform(size=n)
    phi = rng.uniform(0.0, 2 * np.pi, size=n)
    # t = 1 + log(u + (1 - u) e^{-2 kappa}) / kappa, written to stay finite
    t = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    t = np.clip(t, -1.0, 1.0)
    s = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    pts = np.column_stack([s * np.cos(phi), s * np.sin(phi), t])
    out = _rotate_from_pole(mu, pts)
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def vmf_log_normalizer(kappa: float) -> float:
    """log C_3(kappa) with C_3(kappa) = kappa / (4 pi sinh kappa)."""
    _check_kappa(kappa)
    # log sinh k = k + log1p(-e^{-2k}) - log 2
    log_sinh = kappa + math.log1p(-math.exp(-2 * kappa)) - math.log(2)
    return math.log(kappa) - math.log(4 * math.pi) - log_sinh


def vmf_density(mu, kappa: float, y) -> np.ndarray | float:
    """Density of vMF(mu, kappa) w.r.t. surface measure on S^2."""
    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    logp = vmf_log_normalizer(kappa) + kappa * (y @ mu)
    p = np.exp(logp)
    return float(p) if np.ndim(p) == 0 else p


def vmf_mean_resultant_length(kappa: float) -> float:
    """A_3(kappa) = coth(kappa) - 1/kappa."""
    return 1.0 / math.tanh(kappa) - 1.0 / kappa
