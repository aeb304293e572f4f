"""Error metrics, diagnostics and the per-trial result record."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionMismatchError
from .manifold import FactorPair

__all__ = [
    "rel_error",
    "rmse",
    "oracle_rmse",
    "noise_ratio",
    "nmae",
    "IncoherenceDiagnostic",
    "incoherence_diagnostic",
    "ExperimentResult",
    "RECONSTRUCTION_THRESHOLD",
    "result_csv_header",
]

RECONSTRUCTION_THRESHOLD = 1e-4

_EXACT_PAIR_LIMIT = 20_000_000
_SAMPLED_PAIRS = 1_000_000


def _as_dense(estimate) -> np.ndarray:
    if hasattr(estimate, "to_dense"):
        return estimate.to_dense()
    return np.asarray(estimate, dtype=np.float64)


def _deviation(truth: np.ndarray, estimate) -> np.ndarray:
    dense = _as_dense(estimate)
    if truth.shape != dense.shape:
        raise DimensionMismatchError(
            f"shapes differ: {truth.shape} vs {dense.shape}"
        )
    return truth - dense


def rel_error(truth: np.ndarray, estimate) -> float:
    """||truth - estimate||_F / ||truth||_F; estimate may be a FactorTriple."""
    diff = _deviation(truth, estimate)
    denom = float(np.linalg.norm(truth))
    if denom == 0:
        raise DegenerateInputError("relative error undefined for a zero matrix")
    return float(np.linalg.norm(diff)) / denom


def rmse(truth: np.ndarray, estimate) -> float:
    """Root mean square entry error ||truth - estimate||_F / sqrt(m n)."""
    diff = _deviation(truth, estimate)
    return float(np.linalg.norm(diff)) / np.sqrt(truth.size)


def oracle_rmse(n: int, rank: int, sample_count: int, sigma: float) -> float:
    """RMSE of the oracle that knows the true row and column spaces.

    For an n x n matrix the factored model has 2 n r - r^2 free parameters;
    fitting them to sample_count noisy entries leaves
    sigma * sqrt((2 n r - r^2) / sample_count).
    """
    if sample_count < 1 or rank < 1 or n < rank:
        raise DimensionMismatchError("need n >= rank >= 1 and sample_count >= 1")
    return float(sigma) * np.sqrt((2.0 * n * rank - rank * rank) / sample_count)


def noise_ratio(truth_values, noise_values) -> float:
    """||noise|| / ||signal|| over a shared set of observed positions."""
    signal = np.asarray(truth_values, dtype=np.float64).ravel()
    noise = np.asarray(noise_values, dtype=np.float64).ravel()
    if signal.shape != noise.shape:
        raise DimensionMismatchError("value arrays cover different patterns")
    denom = float(np.linalg.norm(signal))
    if denom == 0:
        raise DegenerateInputError("signal vanishes on the observed positions")
    return float(np.linalg.norm(noise)) / denom


def nmae(predicted, actual, value_min: float, value_max: float,
         pred_index=None, true_index=None) -> float:
    """Mean absolute error normalized by the value range.

    When index arrays are given the two sides are aligned by index and must
    cover identical index sets.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if value_max <= value_min:
        raise DimensionMismatchError("value range must be non-empty")
    if (pred_index is None) != (true_index is None):
        raise DimensionMismatchError("supply both index arrays or neither")
    if pred_index is not None:
        pi = np.asarray(pred_index, dtype=np.int64)
        ti = np.asarray(true_index, dtype=np.int64)
        po, to = np.argsort(pi, kind="stable"), np.argsort(ti, kind="stable")
        if pi.shape != ti.shape or not np.array_equal(pi[po], ti[to]):
            raise DimensionMismatchError("prediction and truth index sets differ")
        predicted, actual = predicted[po], actual[to]
    if predicted.shape != actual.shape:
        raise DimensionMismatchError("prediction and truth lengths differ")
    if predicted.size == 0:
        raise DegenerateInputError("no predictions to score")
    return float(np.mean(np.abs(predicted - actual))) / (value_max - value_min)


@dataclass(frozen=True)
class IncoherenceDiagnostic:
    """How evenly the factor mass spreads over rows and columns.

    ``cumulative_left[k]`` is the sum of the k + 1 smallest normalized row
    leverages (m / r) ||U_i||^2 of the left factor; a perfectly spread factor
    gives the straight line 1, 2, ..., m.  ``a2_max`` is the worst entry of
    the rank-r projector product scaled by sqrt(m n / r); ``sampled_pairs``
    reports when it was estimated on a random subset of positions.
    """

    cumulative_left: np.ndarray
    cumulative_right: np.ndarray
    a2_max: float
    sampled_pairs: int | None = None


_ORTHO_TOL = 1e-8


def _orthonormal_block(block: np.ndarray, name: str) -> np.ndarray:
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2 or block.shape[0] < block.shape[1]:
        raise DimensionMismatchError(f"{name} block must be tall (rows >= columns)")
    dev = np.abs(block.T @ block - np.eye(block.shape[1])).max()
    if dev > _ORTHO_TOL:
        raise DegenerateInputError(
            f"{name} block is not column-orthonormal (deviation {dev:.3e})"
        )
    return block


def incoherence_diagnostic(factors, rank: int | None = None,
                           seed: int = 0) -> IncoherenceDiagnostic:
    """Sorted cumulative row-leverage curves and the peak cross term.

    Accepts a FactorPair (internally rescaled to orthonormal blocks) or a
    (left, right) pair of column-orthonormal arrays.
    """
    if isinstance(factors, FactorPair):
        u = factors.x / np.sqrt(factors.m)
        v = factors.y / np.sqrt(factors.n)
    else:
        left, right = factors
        u = _orthonormal_block(left, "left")
        v = _orthonormal_block(right, "right")
        if u.shape[1] != v.shape[1]:
            raise DimensionMismatchError("factor blocks have different widths")
    m, n = u.shape[0], v.shape[0]
    r = u.shape[1] if rank is None else int(rank)
    if r < 1:
        raise DimensionMismatchError("rank must be at least 1")
    lev_left = np.sort((m / r) * (u * u).sum(axis=1))
    lev_right = np.sort((n / r) * (v * v).sum(axis=1))
    scale = np.sqrt(m * n / r)
    if m * n <= _EXACT_PAIR_LIMIT:
        best = 0.0
        step = max(1, _EXACT_PAIR_LIMIT // max(n * r, 1))
        for start in range(0, m, step):
            block = np.abs(u[start:start + step] @ v.T).max()
            best = max(best, float(block))
        sampled = None
    else:
        rng = np.random.default_rng(seed)
        ii = rng.integers(0, m, _SAMPLED_PAIRS)
        jj = rng.integers(0, n, _SAMPLED_PAIRS)
        best = float(np.abs(np.einsum("ij,ij->i", u[ii], v[jj])).max())
        sampled = _SAMPLED_PAIRS
    return IncoherenceDiagnostic(np.cumsum(lev_left), np.cumsum(lev_right),
                                 best * scale, sampled)


@dataclass(frozen=True)
class ExperimentResult:
    """Outcome of one benchmark trial."""

    rel_error: float
    rmse: float
    fit_error: float
    iterations: int
    wall_time_seconds: float
    r_hat: int
    seed: int
    reconstructed: bool

    @classmethod
    def build(cls, *, rel_error: float, rmse: float, fit_error: float,
              iterations: int, wall_time_seconds: float, r_hat: int,
              seed: int, threshold: float = RECONSTRUCTION_THRESHOLD) -> "ExperimentResult":
        """Construct with the reconstruction flag derived from rel_error."""
        return cls(rel_error, rmse, fit_error, iterations, wall_time_seconds,
                   r_hat, seed, bool(rel_error <= threshold))

    def to_csv_row(self) -> str:
        return ",".join([
            format(self.rel_error, ".12g"),
            format(self.rmse, ".12g"),
            format(self.fit_error, ".12g"),
            str(self.iterations),
            format(self.wall_time_seconds, ".6f"),
            str(self.r_hat),
            str(self.seed),
            "1" if self.reconstructed else "0",
        ])


def result_csv_header() -> str:
    """Column order used by ExperimentResult.to_csv_row."""
    return ("rel_error,rmse,fit_error,iterations,wall_time_seconds,"
            "r_hat,seed,reconstructed")
