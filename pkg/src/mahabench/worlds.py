"""Synthetic cluster worlds and episodic task sampling.

A world is a set of Gaussian classes standing in for an adapted feature
space: means on a shell, covariances with a controlled condition number.
Tasks are sampled from a world either with variable way/shot (way uniform
on a range, per-class shots uniform then rescaled to a support cap) or with
fixed way/shot, and every draw is a pure function of a 64-bit seed.

Task files are JSON Lines: a header record, then one record per task.
Floats are serialized with Python's shortest round-trip repr, so reading a
file back reproduces the exact bit patterns that were written.
"""

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import FormatError, InvalidConfig, NotEnoughClasses
from .rng import Rng

TASK_FILE_VERSION = "v1"


@dataclass(frozen=True)
class ClusterWorld:
    """Generative description of one synthetic domain."""

    domain_id: str
    dims: int
    class_count: int
    true_means: np.ndarray  # (C, d)
    true_covariances: np.ndarray  # (C, d, d)
    anisotropy: float
    seed: int
    # lower Cholesky factors of the true covariances, cached for sampling
    _factors: np.ndarray = field(repr=False, default=None)

    def factor(self, class_id: int) -> np.ndarray:
        return self._factors[class_id]


@dataclass(frozen=True)
class EncodingTransform:
    """Affine feature transform plus the task-encoding vector it realizes."""

    linear: np.ndarray  # (d, d), invertible
    offset: np.ndarray  # (d,)
    encoding_vector: np.ndarray

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=np.float64)
        off = np.asarray(self.offset, dtype=np.float64)
        vec = np.asarray(self.encoding_vector, dtype=np.float64)
        if abs(np.linalg.det(lin)) <= 1e-9:
            raise InvalidConfig("encoding transform is numerically singular")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "encoding_vector", vec)

    @classmethod
    def identity(cls, dims: int) -> "EncodingTransform":
        return cls(np.eye(dims), np.zeros(dims), np.zeros(dims))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.linear.T + self.offset


@dataclass(frozen=True, eq=False)
class EpisodicTask:
    """One sampled (support, query) classification problem.

    Query labels ship with the task; heads never see them, scorers do.
    """

    domain_id: str
    seed: int
    way: int
    dims: int
    support_x: np.ndarray  # (n, d)
    support_y: np.ndarray  # (n,)
    query_x: np.ndarray  # (m, d)
    query_y: np.ndarray  # (m,)

    @property
    def shots(self) -> np.ndarray:
        return np.bincount(self.support_y, minlength=self.way)


class SamplerMode(Enum):
    META_DATASET_LIKE = "metadataset"
    FIXED_WAY_SHOT = "fixed"


@dataclass(frozen=True)
class SamplerConfig:
    """Way/shot distribution settings for task sampling."""

    mode: SamplerMode = SamplerMode.META_DATASET_LIKE
    way_range: tuple[int, int] = (5, 50)
    shot_range: tuple[int, int] = (1, 100)
    support_cap: int = 500
    query_per_class: int = 10
    fixed_way: int | None = None
    fixed_shot: int | None = None

    def __post_init__(self):
        if self.way_range[0] > self.way_range[1] or self.way_range[0] < 1:
            raise InvalidConfig("way_range must be ordered and positive")
        if self.shot_range[0] > self.shot_range[1] or self.shot_range[0] < 1:
            raise InvalidConfig("shot_range must be ordered and positive")
        if self.support_cap <= 0:
            raise InvalidConfig("support_cap must be positive")
        if self.query_per_class <= 0:
            raise InvalidConfig("query_per_class must be positive")
        if self.mode is SamplerMode.FIXED_WAY_SHOT:
            if not self.fixed_way or not self.fixed_shot:
                raise InvalidConfig("fixed mode needs fixed_way and fixed_shot")


def make_cluster_world(
    dims: int,
    class_count: int,
    anisotropy: float,
    rng_seed: int,
    mean_radius: float = 3.0,
    scale_range: tuple[float, float] = (1.0, 1.0),
    center_norm: float = 0.0,
    domain_id: str = "world",
) -> ClusterWorld:
    """Build a world with shell means and rotated log-uniform covariances.

    Class means sit on a shell of radius ``mean_radius`` around the point
    ``center_norm * (1, ..., 1)/sqrt(d)``; a nonzero center models the
    uncentered feature spaces that deep extractors produce.  Each
    covariance is R diag(e) R^T with a seeded random rotation and
    eigenvalues spanning exactly the anisotropy ratio: the extreme
    eigenvalues are pinned to ``s`` and ``s / anisotropy`` (``s`` drawn
    log-uniformly from ``scale_range``) and interior ones are log-uniform
    in between, so every condition number equals the anisotropy bound.
    """
    if dims < 2 or class_count < 2:
        raise InvalidConfig("need dims >= 2 and class_count >= 2")
    if anisotropy < 1.0:
        raise InvalidConfig("anisotropy must be >= 1")
    if scale_range[0] > scale_range[1] or scale_range[0] <= 0:
        raise InvalidConfig("scale_range must be ordered and positive")

    rng = Rng(rng_seed)
    directions = rng.normal((class_count, dims))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    center = center_norm * np.ones(dims) / np.sqrt(dims)
    means = center + mean_radius * directions / norms

    covs = np.empty((class_count, dims, dims))
    factors = np.empty((class_count, dims, dims))
    log_scale_lo, log_scale_hi = np.log(scale_range[0]), np.log(scale_range[1])
    for c in range(class_count):
        gauss = rng.normal((dims, dims))
        q, r = np.linalg.qr(gauss)
        q = q * np.where(np.diag(r) >= 0, 1.0, -1.0)  # fix the sign convention
        s = np.exp(log_scale_lo + (log_scale_hi - log_scale_lo) * float(rng.uniform(1)[0]))
        eigs = np.empty(dims)
        eigs[0] = s
        eigs[1] = s / anisotropy
        if dims > 2:
            u = rng.uniform(dims - 2)
            eigs[2:] = s * np.exp(-u * np.log(anisotropy))
        covs[c] = (q * eigs) @ q.T
        factors[c] = np.linalg.cholesky(covs[c])
    return ClusterWorld(
        domain_id=domain_id,
        dims=dims,
        class_count=class_count,
        true_means=means,
        true_covariances=covs,
        anisotropy=float(anisotropy),
        seed=rng_seed,
        _factors=factors,
    )


def _rescale_shots(shots: np.ndarray, cap: int) -> np.ndarray:
    """Proportionally shrink shots so the total fits the cap, keeping >= 1."""
    total = int(shots.sum())
    if total <= cap:
        return shots
    scaled = np.maximum(1, (shots * cap) // total)
    # integer floors plus the >=1 clamp can leave a small overshoot;
    # trim it from the largest classes deterministically
    while scaled.sum() > cap:
        candidates = np.where(scaled > 1)[0]
        scaled[candidates[np.argmax(scaled[candidates])]] -= 1
    return scaled


def draw_class_examples(
    world: ClusterWorld, class_ids, counts, rng: Rng
) -> list[np.ndarray]:
    """Per-class Gaussian draws in latent space, one block per class id."""
    blocks = []
    for cid, count in zip(class_ids, counts):
        raw = rng.normal((int(count), world.dims))
        blocks.append(world.true_means[cid] + raw @ world.factor(cid).T)
    return blocks


def sample_task(
    world: ClusterWorld,
    cfg: SamplerConfig,
    encoding: EncodingTransform,
    rng_seed: int,
) -> EpisodicTask:
    """Sample one episodic task from a world, deterministically in the seed.

    Draw order is fixed: way (variable mode only), class permutation,
    per-class shots, then per task-class support rows followed by query
    rows.  Features are latent Gaussian draws mapped through ``encoding``.
    """
    rng = Rng(rng_seed)
    if cfg.mode is SamplerMode.META_DATASET_LIKE:
        if world.class_count < cfg.way_range[0]:
            raise NotEnoughClasses(
                f"world has {world.class_count} classes, need {cfg.way_range[0]}"
            )
        way = int(rng.integers(cfg.way_range[0], cfg.way_range[1], 1)[0])
        way = min(way, world.class_count)
        chosen = rng.permutation(world.class_count)[:way]
        shots = rng.integers(cfg.shot_range[0], cfg.shot_range[1], way)
        shots = _rescale_shots(shots, cfg.support_cap)
    else:
        way = int(cfg.fixed_way)
        if world.class_count < way:
            raise NotEnoughClasses(f"world has {world.class_count} classes, need {way}")
        chosen = rng.permutation(world.class_count)[:way]
        shots = np.full(way, int(cfg.fixed_shot), dtype=np.int64)

    support_blocks = []
    query_blocks = []
    for slot in range(way):
        block = draw_class_examples(
            world, [chosen[slot]], [int(shots[slot]) + cfg.query_per_class], rng
        )[0]
        support_blocks.append(block[: shots[slot]])
        query_blocks.append(block[shots[slot] :])

    support_x = encoding.apply(np.vstack(support_blocks))
    query_x = encoding.apply(np.vstack(query_blocks))
    support_y = np.repeat(np.arange(way, dtype=np.int64), shots)
    query_y = np.repeat(np.arange(way, dtype=np.int64), cfg.query_per_class)
    return EpisodicTask(
        domain_id=world.domain_id,
        seed=rng_seed & ((1 << 64) - 1),
        way=way,
        dims=world.dims,
        support_x=support_x,
        support_y=support_y,
        query_x=query_x,
        query_y=query_y,
    )


def _task_record(task: EpisodicTask) -> dict:
    return {
        "domain_id": task.domain_id,
        "seed": task.seed,
        "way": task.way,
        "dims": task.dims,
        "support": [
            {"label": int(y), "features": [float(v) for v in x]}
            for x, y in zip(task.support_x, task.support_y)
        ],
        "query": [
            {"label": int(y), "features": [float(v) for v in x]}
            for x, y in zip(task.query_x, task.query_y)
        ],
    }


def write_tasks(path, tasks) -> None:
    """Write tasks as JSON Lines with a version header record."""
    tasks = list(tasks)
    with open(path, "w", encoding="utf-8") as fh:
        header = {"format": "tasks", "version": TASK_FILE_VERSION, "count": len(tasks)}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for task in tasks:
            fh.write(json.dumps(_task_record(task), sort_keys=True) + "\n")


def _parse_examples(rows, dims, line_no):
    feats = np.empty((len(rows), dims))
    labels = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        values = row["features"]
        if len(values) != dims:
            raise FormatError(line_no, f"expected {dims} features, got {len(values)}")
        feats[i] = values
        labels[i] = row["label"]
    return feats, labels


def read_tasks(path) -> list:
    """Read tasks written by :func:`write_tasks`; lossless round trip."""
    tasks = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(1, "missing header record")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(1, f"bad header: {exc.msg}") from exc
    if not isinstance(header, dict) or header.get("version") != TASK_FILE_VERSION:
        raise FormatError(1, "unsupported or missing task file version")
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            dims = int(rec["dims"])
            support_x, support_y = _parse_examples(rec["support"], dims, line_no)
            query_x, query_y = _parse_examples(rec["query"], dims, line_no)
            tasks.append(
                EpisodicTask(
                    domain_id=rec["domain_id"],
                    seed=int(rec["seed"]),
                    way=int(rec["way"]),
                    dims=dims,
                    support_x=support_x,
                    support_y=support_y,
                    query_x=query_x,
                    query_y=query_y,
                )
            )
        except FormatError:
            raise
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(line_no, f"bad task record: {exc}") from exc
    if header.get("count") is not None and header["count"] != len(tasks):
        raise FormatError(1, f"header count {header['count']} != {len(tasks)} records")
    return tasks


def tasks_equal(a: EpisodicTask, b: EpisodicTask) -> bool:
    """Field-wise equality including exact float bit patterns."""
    return (
        a.domain_id == b.domain_id
        and a.seed == b.seed
        and a.way == b.way
        and a.dims == b.dims
        and np.array_equal(a.support_x, b.support_x)
        and np.array_equal(a.support_y, b.support_y)
        and np.array_equal(a.query_x, b.query_x)
        and np.array_equal(a.query_y, b.query_y)
    )
