"""Episodic few-shot classification with class-covariance metrics.

Closed-form Mahalanobis classification heads, transductive soft k-means
refinement, GMM ablation heads, synthetic Gaussian cluster worlds with
episodic task samplers, active and continual learning loops, a Riemannian
metric-field verification, and a deterministic benchmark harness.
"""

from .active import (
    AcquisitionStrategy,
    ActiveSession,
    acquisition_scores,
    run_active_session,
    select_next,
)
from .bench import (
    BenchConfig,
    BenchmarkReport,
    DomainSpec,
    RecallCurve,
    mean_ci,
    recall_vs_shot,
    run_benchmark,
)
from .continual import (
    ClassRecord,
    ContinualState,
    EncodingStrategy,
    HeadMode,
    StreamConfig,
    merge_class_statistics,
    run_continual_session,
    update_encoding,
)
from .errors import (
    ConfigError,
    DimensionMismatch,
    EmptyClass,
    EmptyQuery,
    FormatError,
    InvalidConfig,
    MahabenchError,
    NotEnoughClasses,
    NotPositiveDefinite,
    NotRepairable,
    PoolExhausted,
    StrategyHasNoScore,
)
from .gmm import ClassPrior, gmm_classify, gmm_em_refine, gmm_log_scores
from .heads import (
    ClassStatistics,
    MetricKind,
    bregman_divergence,
    class_scores,
    classify,
    estimate_class_statistics,
)
from .methods import HeadConfig, parse_method
from .refine import (
    RefineConfig,
    RefineOutcome,
    Responsibilities,
    SetEncodings,
    init_responsibilities,
    pool_set_encodings,
    refine,
    weighted_class_statistics,
)
from .riemann import (
    MetricField,
    PartitionOfUnity,
    energy_gap_check,
    metric_at,
    path_arclength,
    path_energy,
)
from .rng import Rng, derive_seed
from .spd import (
    CholeskyFactor,
    SymMatrix,
    cholesky,
    ensure_pd,
    logdet,
    solve_spd,
)
from .worlds import (
    ClusterWorld,
    EncodingTransform,
    EpisodicTask,
    SamplerConfig,
    SamplerMode,
    make_cluster_world,
    read_tasks,
    sample_task,
    tasks_equal,
    write_tasks,
)

__version__ = "0.1.0"
