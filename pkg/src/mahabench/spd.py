"""Dense symmetric-positive-definite linear algebra.

Factorization, solves, log-determinants and PSD repair used by every
classification head.  Quadratic forms are always evaluated through the
Cholesky factor (``||L^-1 v||^2``); explicit inverses are never formed.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotrf

from .errors import DimensionMismatch, NotPositiveDefinite, NotRepairable

# First entry 0 so well-conditioned inputs are never perturbed; the tail
# guards pathological synthetic inputs (e.g. beta=0 ablations).
DEFAULT_JITTER_SCHEDULE = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


@dataclass(frozen=True)
class SymMatrix:
    """Dense symmetric matrix; construction symmetrizes as (A + A^T) / 2."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] < 1:
            raise DimensionMismatch("matrix dimension must be at least 1")
        object.__setattr__(self, "entries", (a + a.T) / 2.0)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with L L^T equal to the source matrix."""

    lower: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


def _as_sym(m) -> SymMatrix:
    return m if isinstance(m, SymMatrix) else SymMatrix(m)


def cholesky(m) -> CholeskyFactor:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Parameters
    ----------
    m : SymMatrix or array_like
        Matrix to factor; arrays are symmetrized on entry.

    Raises
    ------
    NotPositiveDefinite
        If some leading minor is singular or negative; carries the 0-based
        failing pivot index.
    """
    sym = _as_sym(m)
    c, info = dpotrf(sym.entries, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefinite(pivot=int(info) - 1)
    if info < 0:
        raise ValueError(f"illegal argument {-info} passed to dpotrf")
    return CholeskyFactor(lower=c)


def solve_spd(f: CholeskyFactor, v: np.ndarray) -> np.ndarray:
    """Solve (L L^T) x = v given the factor."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != f.dim:
        raise DimensionMismatch(f"vector length {v.shape[0]} != matrix dim {f.dim}")
    return cho_solve((f.lower, True), v)


def solve_lower(f: CholeskyFactor, b: np.ndarray) -> np.ndarray:
    """Solve L y = b (forward substitution only)."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != f.dim:
        raise DimensionMismatch(f"rhs length {b.shape[0]} != matrix dim {f.dim}")
    return solve_triangular(f.lower, b, lower=True, check_finite=False)


def quad_form(f: CholeskyFactor, diffs: np.ndarray) -> np.ndarray:
    """Quadratic forms diff^T (L L^T)^-1 diff, one per row of ``diffs``.

    Evaluated as ||L^-1 diff||^2, which keeps the result exactly
    nonnegative.  Accepts a single vector or an (m, d) stack of rows.
    """
    diffs = np.asarray(diffs, dtype=np.float64)
    single = diffs.ndim == 1
    rows = diffs[None, :] if single else diffs
    if rows.shape[1] != f.dim:
        raise DimensionMismatch(f"vector length {rows.shape[1]} != matrix dim {f.dim}")
    y = solve_triangular(f.lower, rows.T, lower=True, check_finite=False)
    q = np.einsum("dm,dm->m", y, y)
    return float(q[0]) if single else q


def logdet(f: CholeskyFactor) -> float:
    """Log-determinant of the factored matrix: 2 * sum(log diag(L))."""
    return float(2.0 * np.sum(np.log(np.diag(f.lower))))


def ensure_pd(m, jitter_schedule=DEFAULT_JITTER_SCHEDULE) -> tuple[SymMatrix, CholeskyFactor]:
    """Repair a nearly-PSD matrix by adding the smallest scheduled jitter.

    Tries ``m + j*I`` for each ``j`` in the schedule in order and returns the
    first repaired matrix together with its factor.  The schedule must be
    non-decreasing and start at 0 so exact-PD inputs come back unchanged.

    Raises
    ------
    NotRepairable
        If no scheduled jitter makes the factorization succeed.
    """
    schedule = list(jitter_schedule)
    if not schedule or schedule[0] != 0.0:
        raise ValueError("jitter schedule must start at 0")
    if any(b < a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("jitter schedule must be non-decreasing")
    sym = _as_sym(m)
    eye = np.eye(sym.dim)
    for j in schedule:
        try:
            repaired = sym if j == 0.0 else SymMatrix(sym.entries + j * eye)
            return repaired, cholesky(repaired)
        except NotPositiveDefinite:
            continue
    raise NotRepairable(f"no jitter in {schedule} repaired the matrix")
