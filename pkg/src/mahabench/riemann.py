"""Numerical checks of the interpolated metric-field view of the classifier.

The feature space is given a metric field g(x) = sum_k w_k(x - mu_k) P_k
where P_k is class k's precision (inverse covariance) and {w_k} is a
partition of unity that is exactly 1 on a plateau around each centroid.
Straight-line path energies under that field are integrated with composite
Gauss-Legendre quadrature, and the relative class scores are compared
against the first-order energy-gap approximation
(1/2)(maha_i - maha_j).
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import spd
from .errors import DimensionMismatch, InvalidConfig
from .heads import ClassStatistics
from .rng import Rng

_GL_ORDER = 8
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


@dataclass(frozen=True)
class PartitionOfUnity:
    """Compact-support bumps, flat on an inner plateau, renormalized.

    Each raw bump is 1 for r <= plateau, decays C1-smoothly (cubic
    smoothstep) to 0 at the support radius, and vanishes beyond.  Where the
    bumps sum to less than 1, the deficit is carried by inverse-distance
    softmax weights, so the partition stays defined everywhere and the
    handoff is continuous (C1 when supports do not overlap, since the bump
    slope vanishes at both the plateau edge and the support edge).
    """

    support_radius: np.ndarray  # (K,)
    plateau_radius: np.ndarray  # (K,)

    def __post_init__(self):
        sup = np.asarray(self.support_radius, dtype=np.float64)
        flat = np.asarray(self.plateau_radius, dtype=np.float64)
        if sup.shape != flat.shape:
            raise DimensionMismatch("radius arrays disagree on K")
        if np.any(sup <= 0) or np.any(flat < 0) or np.any(flat >= sup):
            raise InvalidConfig("need 0 <= plateau < support radius per centroid")
        object.__setattr__(self, "support_radius", sup)
        object.__setattr__(self, "plateau_radius", flat)

    def weights(self, points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
        """(m, K) partition weights at each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        diffs = pts[:, None, :] - centroids[None, :, :]
        dist = np.linalg.norm(diffs, axis=2)
        s = (dist - self.plateau_radius) / (self.support_radius - self.plateau_radius)
        s = np.clip(s, 0.0, 1.0)
        raw = 1.0 - s * s * (3.0 - 2.0 * s)
        total = raw.sum(axis=1, keepdims=True)
        shifted = -(dist - dist.min(axis=1, keepdims=True))
        e = np.exp(shifted)
        soft = e / e.sum(axis=1, keepdims=True)
        return raw / np.maximum(total, 1.0) + np.maximum(1.0 - total, 0.0) * soft


@dataclass(frozen=True)
class MetricField:
    """Interpolated field of per-class precisions over class centroids."""

    centroids: np.ndarray  # (K, d)
    precisions: np.ndarray  # (K, d, d), SPD
    partition: PartitionOfUnity

    def __post_init__(self):
        # the plateau constraint w_k(mu_k) = 1 requires every other bump to
        # vanish at each centroid
        dist = np.linalg.norm(
            self.centroids[:, None, :] - self.centroids[None, :, :], axis=2
        )
        k = dist.shape[0]
        for j in range(k):
            others = np.delete(dist[:, j], j)
            if np.any(others < self.partition.support_radius[np.arange(k) != j]):
                raise InvalidConfig(
                    "support radii overlap a foreign centroid; shrink them"
                )

    @classmethod
    def from_covariances(
        cls, centroids, covariances, support_scale=0.45, flatness=0.5
    ) -> "MetricField":
        """Field from class covariances; radii scale with the smallest
        centroid separation and ``flatness`` sets plateau/support."""
        centroids = np.asarray(centroids, dtype=np.float64)
        k = centroids.shape[0]
        precisions = np.empty((k, centroids.shape[1], centroids.shape[1]))
        for i, cov in enumerate(covariances):
            factor = spd.cholesky(cov)
            precisions[i] = spd.solve_spd(factor, np.eye(factor.dim))
        if k == 1:
            radius = np.array([1.0])
        else:
            dist = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
            np.fill_diagonal(dist, np.inf)
            radius = np.full(k, support_scale * dist.min())
        part = PartitionOfUnity(radius, flatness * radius)
        return cls(centroids=centroids, precisions=precisions, partition=part)

    @classmethod
    def from_statistics(cls, stats: ClassStatistics, **kwargs) -> "MetricField":
        return cls.from_covariances(stats.means, stats.covariances, **kwargs)


def metric_at(field: MetricField, x: np.ndarray) -> spd.SymMatrix:
    """The metric tensor at one point: sum_k w_k(x - mu_k) P_k."""
    w = field.partition.weights(np.asarray(x, dtype=np.float64), field.centroids)[0]
    return spd.SymMatrix(np.einsum("k,kde->de", w, field.precisions))


def _metrics_along(field: MetricField, points: np.ndarray) -> np.ndarray:
    w = field.partition.weights(points, field.centroids)
    return np.einsum("mk,kde->mde", w, field.precisions)


def _quadrature_grid(quadrature_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [0, 1]."""
    if quadrature_points < 2:
        raise InvalidConfig("need at least 2 quadrature points")
    panels = max(1, quadrature_points // _GL_ORDER)
    h = 1.0 / panels
    starts = np.arange(panels) * h
    nodes = (starts[:, None] + (_GL_NODES[None, :] + 1.0) * (h / 2.0)).ravel()
    weights = np.tile(_GL_WEIGHTS * (h / 2.0), panels)
    return nodes, weights


def path_energy(
    field: MetricField, x: np.ndarray, y: np.ndarray, quadrature_points: int = 64
) -> float:
    """Energy of the straight-line path from x to y under the field:
    the integral over [0, 1] of (y-x)^T g((1-t)x + ty) (y-x)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    delta = y - x
    if not np.any(delta):
        return 0.0
    nodes, weights = _quadrature_grid(quadrature_points)
    pts = x[None, :] + nodes[:, None] * delta[None, :]
    g = _metrics_along(field, pts)
    vals = np.einsum("mde,d,e->m", g, delta, delta)
    return float(weights @ vals)


def path_arclength(
    field: MetricField, x: np.ndarray, y: np.ndarray, quadrature_points: int = 64
) -> float:
    """Arclength of the straight-line path: integral of the square root of
    the same quadratic form, on the same quadrature grid as the energy."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    delta = y - x
    if not np.any(delta):
        return 0.0
    nodes, weights = _quadrature_grid(quadrature_points)
    pts = x[None, :] + nodes[:, None] * delta[None, :]
    g = _metrics_along(field, pts)
    vals = np.einsum("mde,d,e->m", g, delta, delta)
    return float(weights @ np.sqrt(np.maximum(vals, 0.0)))


class GapCheck(NamedTuple):
    delta_energy: float
    half_maha_gap: float
    relative_error: float


def energy_gap_check(
    field: MetricField, x: np.ndarray, i: int, j: int, quadrature_points: int = 256
) -> GapCheck:
    """Compare the numeric energy gap against its first-order approximation.

    Returns the straight-line energy difference
    ``E(x, mu_i) - E(x, mu_j)``, the half Mahalanobis gap
    ``(maha_i - maha_j) / 2``, and ``|gap - half| / |gap|``.
    """
    if i == j:
        raise InvalidConfig("need two distinct centroids")
    x = np.asarray(x, dtype=np.float64)
    e_i = path_energy(field, x, field.centroids[i], quadrature_points)
    e_j = path_energy(field, x, field.centroids[j], quadrature_points)
    delta_e = e_i - e_j
    maha = [
        float((x - field.centroids[k]) @ field.precisions[k] @ (x - field.centroids[k]))
        for k in (i, j)
    ]
    half_gap = 0.5 * (maha[0] - maha[1])
    rel = abs(delta_e - half_gap) / abs(delta_e) if delta_e != 0 else np.inf
    return GapCheck(delta_energy=delta_e, half_maha_gap=half_gap, relative_error=rel)


def make_two_centroid_field(
    seed: int,
    dims: int = 2,
    separation: float = 6.0,
    support_scale: float = 0.1,
    flatness: float = 0.5,
    weak_side_scale: float = 150.0,
) -> MetricField:
    """Seeded two-centroid field for the approximation checks.

    Centroid 0 (where test points are placed) gets a covariance inflated by
    ``weak_side_scale``, so the metric near the test point contributes
    little to either path energy; the dropped near-point term of the
    first-order expansion is then genuinely higher-order.  Small support
    radii keep plateau test points close to the centroid, which the
    half-gap approximation also needs.
    """
    rng = Rng(seed)
    direction = rng.normal(dims)
    direction /= np.linalg.norm(direction)
    centroids = np.stack([np.zeros(dims), separation * direction])

    covs = []
    for k in range(2):
        gauss = rng.normal((dims, dims))
        q, r = np.linalg.qr(gauss)
        q = q * np.where(np.diag(r) >= 0, 1.0, -1.0)
        eigs = np.exp(rng.uniform(dims) * np.log(2.0))  # spread in [1, 2)
        cov = (q * eigs) @ q.T
        if k == 0:
            cov = cov * weak_side_scale
        covs.append(cov)
    return MetricField.from_covariances(
        centroids, covs, support_scale=support_scale, flatness=flatness
    )


def sample_plateau_point(field: MetricField, k: int, rng: Rng) -> np.ndarray:
    """A point uniformly inside the plateau ball of centroid k."""
    d = field.centroids.shape[1]
    direction = rng.normal(d)
    direction /= np.linalg.norm(direction)
    radius = field.partition.plateau_radius[k] * float(rng.uniform(1)[0]) ** (1.0 / d)
    return field.centroids[k] + radius * direction
