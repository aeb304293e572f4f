"""Degree trimming and rank estimation for partially observed matrices.

Over-represented rows and columns dominate the spectrum of a sparsely
sampled matrix; zeroing them out before any spectral computation makes the
leading singular space informative again.  The rank is then read off the
trimmed spectrum by balancing the spectral gap against a sampling penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .lanczos import truncated_svd
from .observed import ObservedMatrix

__all__ = ["TrimReport", "RankEstimate", "trim", "estimate_rank"]


@dataclass(frozen=True)
class TrimReport:
    """Result of degree trimming."""

    trimmed: ObservedMatrix
    zeroed_rows: np.ndarray
    zeroed_cols: np.ndarray
    epsilon_after: float


@dataclass(frozen=True)
class RankEstimate:
    """Estimated rank with the spectral evidence it was read from."""

    r_hat: int
    costs: np.ndarray            # penalized gap ratio per candidate rank
    singular_values: np.ndarray
    epsilon: float               # sample density the penalty used
    degenerate: bool = False


def trim(observed: ObservedMatrix) -> TrimReport:
    """Drop every entry in a row or column that is observed too often.

    A row is over-represented when its degree exceeds twice the mean row
    degree 2|E|/m (strictly); likewise 2|E|/n for columns.  Both thresholds
    are computed once from the input, so rows and columns are judged on the
    original degrees, not on intermediate states.
    """
    if observed.entry_count == 0:
        raise DegenerateInputError("cannot trim a matrix with no observed entries")
    m, n = observed.shape.m, observed.shape.n
    count = observed.entry_count
    row_limit = 2.0 * count / m
    col_limit = 2.0 * count / n
    heavy_rows = observed.row_degrees > row_limit
    heavy_cols = observed.col_degrees > col_limit
    keep = ~(heavy_rows[observed.rows] | heavy_cols[observed.cols])
    if not keep.any():
        raise DegenerateInputError("trimming removed every observed entry")
    trimmed = observed.keep(keep)
    return TrimReport(
        trimmed=trimmed,
        zeroed_rows=np.flatnonzero(heavy_rows),
        zeroed_cols=np.flatnonzero(heavy_cols),
        epsilon_after=trimmed.epsilon,
    )


def estimate_rank(trimmed: ObservedMatrix, k_max: int | None = None,
                  seed: int = 0) -> RankEstimate:
    """Estimate the target rank from the trimmed spectrum.

    Computes the leading ``k_max`` singular values (default
    min(50, min(m, n) - 1)) and minimizes

        R(i) = (sigma_{i+1} + sigma_1 * sqrt(i / epsilon)) / sigma_i

    over i; the reported rank is the smallest index attaining the minimum.
    Candidates whose sigma_i is at or below sigma_1 * 1e-12 are skipped.
    Fewer than two meaningfully nonzero singular values make the statistic
    meaningless; the estimate then degrades to rank 1 with a flag.
    """
    if trimmed.entry_count == 0:
        raise DegenerateInputError("cannot estimate rank without observed entries")
    m, n = trimmed.shape.m, trimmed.shape.n
    if k_max is None:
        k_max = min(50, min(m, n) - 1)
    k_max = int(k_max)
    if k_max < 2:
        raise DegenerateInputError("need at least two singular values to compare")
    eps = trimmed.epsilon
    summary = truncated_svd(trimmed, k_max, tol=1e-8, seed=seed)
    sigma = summary.singular_values
    floor = sigma[0] * 1e-12
    if np.count_nonzero(sigma > floor) < 2:
        costs = np.full(k_max - 1, np.inf)
        return RankEstimate(1, costs, sigma, eps, degenerate=True)
    idx = np.arange(1, k_max)
    costs = np.full(k_max - 1, np.inf)
    ok = sigma[:-1] > floor
    costs[ok] = (sigma[1:][ok] + sigma[0] * np.sqrt(idx[ok] / eps)) / sigma[:-1][ok]
    r_hat = int(np.argmin(costs)) + 1
    return RankEstimate(r_hat, costs, sigma, eps)
