"""Closed-form class statistics and metric-based softmax classification.

The core head estimates a mean and a regularized covariance per class from
the support set, then scores queries with a choice of metric.  The default
squared-Mahalanobis scoring uses, per class,

    Q_k = lam_k * S_k + (1 - lam_k) * S + beta * I,   lam_k = n_k / (n_k + 1)

where ``S`` and ``S_k`` are the 1/n-normalized scatter matrices of the whole
support set and of class k.  Scores deliberately carry no 1/2 coefficient;
the GMM head owns that variant.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import spd
from .errors import DimensionMismatch, EmptyClass


class MetricKind(Enum):
    SQUARED_MAHALANOBIS = "mahalanobis"
    ROOT_RIEMANNIAN = "root-riemannian"
    SQUARED_EUCLIDEAN = "euclidean"
    ABSOLUTE_L1 = "l1"
    COSINE_SIMILARITY = "cosine"
    NEGATIVE_DOT_PRODUCT = "dot"


@dataclass(frozen=True)
class ClassStatistics:
    """Per-class means, regularized covariances and effective counts.

    ``factors`` caches the Cholesky factor of each covariance; instances are
    immutable and safe to share across threads.
    """

    means: np.ndarray  # (K, d)
    covariances: np.ndarray  # (K, d, d)
    counts: np.ndarray  # (K,), support counts or soft counts
    factors: tuple

    @property
    def class_count(self) -> int:
        return self.means.shape[0]

    @property
    def dims(self) -> int:
        return self.means.shape[1]

    @classmethod
    def from_moments(cls, means, covariances, counts) -> "ClassStatistics":
        """Build statistics from raw moments, factoring each covariance.

        Covariances are symmetrized; a matrix that fails exact Cholesky is
        repaired through the default jitter schedule (only reachable when
        beta is 0 or the inputs are degenerate).
        """
        means = np.asarray(means, dtype=np.float64)
        counts = np.asarray(counts, dtype=np.float64)
        if np.any(counts <= 0):
            raise EmptyClass(int(np.argmax(counts <= 0)))
        covs = []
        factors = []
        for q in covariances:
            repaired, factor = spd.ensure_pd(q)
            covs.append(repaired.entries)
            factors.append(factor)
        return cls(
            means=means,
            covariances=np.stack(covs),
            counts=counts,
            factors=tuple(factors),
        )


def estimate_class_statistics(
    features: np.ndarray,
    labels: np.ndarray,
    beta: float = 1.0,
    num_classes: int | None = None,
) -> ClassStatistics:
    """Closed-form class statistics from a labelled support set.

    Parameters
    ----------
    features : (n, d) array
        Support feature vectors.
    labels : (n,) int array
        Class index per row, in [0, K).
    beta : float
        Ridge added to every covariance (default 1.0).
    num_classes : int, optional
        K; inferred as ``labels.max() + 1`` when omitted.

    Raises
    ------
    EmptyClass
        If some class in [0, K) has no support example.
    """
    z = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2:
        raise DimensionMismatch("features must be a 2-D array")
    if y.shape[0] != z.shape[0]:
        raise DimensionMismatch("labels and features disagree on n")
    if z.shape[0] == 0:
        raise EmptyClass(0, "support set is empty")
    if beta < 0:
        raise ValueError("beta must be nonnegative")

    n, d = z.shape
    k_count = int(num_classes) if num_classes is not None else int(y.max()) + 1
    n_k = np.bincount(y, minlength=k_count).astype(np.float64)
    if len(n_k) > k_count or np.any(y < 0):
        raise ValueError("label outside [0, num_classes)")
    for k in range(k_count):
        if n_k[k] == 0:
            raise EmptyClass(k)

    task_mean = z.mean(axis=0)
    centered = z - task_mean
    task_scatter = centered.T @ centered / n

    means = np.empty((k_count, d))
    covs = np.empty((k_count, d, d))
    eye = np.eye(d)
    for k in range(k_count):
        rows = z[y == k]
        means[k] = rows.mean(axis=0)
        ck = rows - means[k]
        class_scatter = ck.T @ ck / n_k[k]
        lam = n_k[k] / (n_k[k] + 1.0)
        covs[k] = lam * class_scatter + (1.0 - lam) * task_scatter + beta * eye
    return ClassStatistics.from_moments(means, covs, n_k)


def _mahalanobis_sq(queries: np.ndarray, stats: ClassStatistics) -> np.ndarray:
    """(m, K) squared Mahalanobis distances via triangular solves."""
    out = np.empty((queries.shape[0], stats.class_count))
    for k, factor in enumerate(stats.factors):
        out[:, k] = spd.quad_form(factor, queries - stats.means[k])
    return out


def class_scores(query: np.ndarray, stats: ClassStatistics, metric: MetricKind) -> np.ndarray:
    """Per-class scores for one query vector or an (m, d) batch.

    Higher means more likely.  Distance metrics are negated; cosine
    similarity and the dot product are used directly as scores (the
    "negative dot product" of the distance framing is the negated
    similarity, so the raw dot product already ranks correctly).
    """
    q = np.asarray(query, dtype=np.float64)
    single = q.ndim == 1
    rows = q[None, :] if single else q
    if rows.shape[1] != stats.dims:
        raise DimensionMismatch(f"query dim {rows.shape[1]} != stats dim {stats.dims}")

    if metric is MetricKind.SQUARED_MAHALANOBIS:
        scores = -_mahalanobis_sq(rows, stats)
    elif metric is MetricKind.ROOT_RIEMANNIAN:
        scores = -np.sqrt(_mahalanobis_sq(rows, stats))
    elif metric is MetricKind.SQUARED_EUCLIDEAN:
        diffs = rows[:, None, :] - stats.means[None, :, :]
        scores = -np.einsum("mkd,mkd->mk", diffs, diffs)
    elif metric is MetricKind.ABSOLUTE_L1:
        diffs = rows[:, None, :] - stats.means[None, :, :]
        scores = -np.abs(diffs).sum(axis=2)
    elif metric is MetricKind.COSINE_SIMILARITY:
        qn = np.linalg.norm(rows, axis=1)
        mn = np.linalg.norm(stats.means, axis=1)
        denom = qn[:, None] * mn[None, :]
        dots = rows @ stats.means.T
        # zero-norm query or mean: score 0 for that pair, avoiding NaN
        scores = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
    elif metric is MetricKind.NEGATIVE_DOT_PRODUCT:
        scores = rows @ stats.means.T
    else:
        raise ValueError(f"unknown metric {metric}")
    return scores[0] if single else scores


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-shift for stability."""
    s = np.asarray(scores, dtype=np.float64)
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def classify(query: np.ndarray, stats: ClassStatistics, metric: MetricKind):
    """Class probabilities and argmax labels under a metric.

    Returns ``(probs, label)`` for a single query vector or
    ``(probs (m, K), labels (m,))`` for a batch.  Ties break toward the
    lowest class index.
    """
    scores = class_scores(query, stats, metric)
    probs = softmax(scores)
    if scores.ndim == 1:
        return probs, int(np.argmax(scores))
    return probs, np.argmax(scores, axis=1)


def bregman_divergence(z: np.ndarray, z_ref: np.ndarray, q) -> float:
    """Bregman divergence generated by F(v) = v^T Q^-1 v.

    Evaluated from the three-term definition
    ``F(z) - F(z_ref) - grad F(z_ref) . (z - z_ref)``; for this quadratic
    generator the value coincides with the squared Mahalanobis distance
    between ``z`` and ``z_ref``.
    """
    z = np.asarray(z, dtype=np.float64)
    z_ref = np.asarray(z_ref, dtype=np.float64)
    if z.shape != z_ref.shape:
        raise DimensionMismatch("z and z_ref must have the same shape")
    factor = spd.cholesky(q)
    if z.shape[0] != factor.dim:
        raise DimensionMismatch(f"vector length {z.shape[0]} != matrix dim {factor.dim}")
    f_z = spd.quad_form(factor, z)
    f_ref = spd.quad_form(factor, z_ref)
    grad_ref = 2.0 * spd.solve_spd(factor, z_ref)
    return float(f_z - f_ref - grad_ref @ (z - z_ref))
