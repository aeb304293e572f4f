"""Factored representation, cost, gradient and line search for completion.

A candidate completion is X S Y^T with tall factor blocks kept on the scaled
Stiefel manifold X^T X = m I, Y^T Y = n I; the small core S absorbs all
magnitude.  The cost is the squared misfit on the observed entries, with an
optional penalty on unobserved energy:

    F(X, Y) = min_S  1/2 ||observed - X S Y^T||_E^2
              + lam/2 ||X S Y^T||_{complement of E}^2,   lam in [0, 1].

The inner minimization over S is a linear least-squares problem solved
exactly, so F depends on the factor subspaces alone.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateInputError, DimensionMismatchError,
                     LowRankSystemWarning)
from .observed import ObservedMatrix

__all__ = [
    "FactorPair",
    "FactorTriple",
    "OptConfig",
    "LineSearchResult",
    "retract",
    "solve_core",
    "cost",
    "gradient",
    "line_search_step",
]

_GRAM_TOL = 1e-8
_CHUNK = 1 << 15


@dataclass(frozen=True)
class FactorPair:
    """Normalized factor blocks: X^T X = m I and Y^T Y = n I (max-abs 1e-8)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        if self.x.ndim != 2 or self.y.ndim != 2 or self.x.shape[1] != self.y.shape[1]:
            raise DimensionMismatchError("factor blocks must share a column count")
        for block, size, name in ((self.x, self.m, "X"), (self.y, self.n, "Y")):
            gram = block.T @ block
            dev = np.max(np.abs(gram - size * np.eye(self.r)))
            if dev > _GRAM_TOL * max(1.0, size):
                raise DimensionMismatchError(
                    f"{name} is off the scaled manifold (gram deviation {dev:.3e})"
                )

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def r(self) -> int:
        return self.x.shape[1]

    def gram_deviation(self) -> float:
        """Worst max-abs deviation of X^T X / m and Y^T Y / n from identity."""
        dx = np.max(np.abs(self.x.T @ self.x / self.m - np.eye(self.r)))
        dy = np.max(np.abs(self.y.T @ self.y / self.n - np.eye(self.r)))
        return float(max(dx, dy))


@dataclass(frozen=True)
class FactorTriple:
    """Completion estimate X S Y^T in factored form."""

    factors: FactorPair
    core: np.ndarray

    def __post_init__(self) -> None:
        r = self.factors.r
        if self.core.shape != (r, r):
            raise DimensionMismatchError(
                f"core must be {r}x{r}, got {self.core.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.factors.m, self.factors.n)

    def values_at(self, rows, cols) -> np.ndarray:
        """Entries of X S Y^T at the given positions, without densifying."""
        return np.einsum("ij,ij->i",
                         self.factors.x[rows] @ self.core,
                         self.factors.y[cols])

    def to_dense(self) -> np.ndarray:
        return self.factors.x @ self.core @ self.factors.y.T


@dataclass(frozen=True)
class OptConfig:
    """Knobs for the descent drivers."""

    delta_tol: float = 1e-5      # relative misfit on observed entries
    k_max: int = 1000            # iteration cap
    tau: float = 1e-3            # first line-search step
    lam: float = 0.0             # weight of the unobserved-energy penalty
    max_halvings: int = 50
    noise_slack: float = 0.05    # tolerance factor for the noisy stop rule
    rho_max: int | None = None   # rank cap for the incremental driver

    def __post_init__(self) -> None:
        if self.delta_tol <= 0 or self.tau <= 0 or self.k_max < 1:
            raise DimensionMismatchError("delta_tol, tau and k_max must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise DimensionMismatchError("lam must lie in [0, 1]")
        if self.max_halvings < 1 or self.noise_slack < 0:
            raise DimensionMismatchError("bad line-search or noise-slack setting")
        if self.rho_max is not None and self.rho_max < 1:
            raise DimensionMismatchError("rho_max must be at least 1")


def retract(x_raw: np.ndarray, y_raw: np.ndarray) -> FactorPair:
    """Map arbitrary full-rank blocks back onto the scaled manifold.

    Thin QR with the R diagonal forced non-negative, rescaled to sqrt(m) /
    sqrt(n) column energy; an already-normalized block passes through
    unchanged under this sign convention.
    """
    out = []
    for block in (x_raw, y_raw):
        q, r = np.linalg.qr(block)
        diag = np.abs(np.diag(r))
        if diag.size == 0 or diag.min() <= 1e-13 * max(diag.max(), 1e-300):
            raise DegenerateInputError("factor block lost rank during retraction")
        sign = np.sign(np.diag(r))
        sign[sign == 0] = 1.0
        out.append(q * sign * np.sqrt(block.shape[0]))
    return FactorPair(out[0], out[1])


def _left_product(rows, cols, vals, right: np.ndarray, m: int) -> np.ndarray:
    """Product of the sparse matrix holding ``vals`` at (rows, cols) with a
    dense (n, r) block; O(|E| r)."""
    r = right.shape[1]
    contrib = vals[:, None] * right[cols]
    flat = rows[:, None] * r + np.arange(r)[None, :]
    return np.bincount(flat.ravel(), weights=contrib.ravel(),
                       minlength=m * r).reshape(m, r)


def _model_values(observed: ObservedMatrix, pair: FactorPair,
                  core: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i",
                     pair.x[observed.rows] @ core,
                     pair.y[observed.cols])


def _normal_system(observed: ObservedMatrix, pair: FactorPair, lam: float):
    """Least-squares normal system over the observed entries.

    With s = vec(S) (row-major) the model entry at (i, j) is w^T s with
    w = kron(X_i, Y_j); accumulating W^T W and W^T values in chunks keeps
    memory at O(chunk * r^2).  The unobserved-energy penalty contributes
    (X^T X) kron (Y^T Y) minus the observed part, hence the (1 - lam) mix.
    """
    r = pair.r
    rows, cols, vals = observed.rows, observed.cols, observed.values
    h = np.zeros((r * r, r * r))
    b = np.zeros(r * r)
    for start in range(0, vals.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        p = pair.x[rows[sl]]
        q = pair.y[cols[sl]]
        w = (p[:, :, None] * q[:, None, :]).reshape(p.shape[0], r * r)
        h += w.T @ w
        b += w.T @ vals[sl]
    if lam > 0.0:
        full = np.kron(pair.x.T @ pair.x, pair.y.T @ pair.y)
        h = (1.0 - lam) * h + lam * full
    return h, b


def solve_core(observed: ObservedMatrix, factors: FactorPair,
               lam: float = 0.0) -> np.ndarray:
    """Optimal core S for fixed factor blocks.

    Solves the r^2-by-r^2 normal system restricted to the observed entries.
    A singular or underdetermined system (r^2 > |E|) degrades to the
    minimum-norm solution and emits LowRankSystemWarning.
    """
    if observed.entry_count == 0:
        raise DegenerateInputError("cannot fit a core with no observed entries")
    r = factors.r
    h, b = _normal_system(observed, factors, lam)
    if r * r > observed.entry_count:
        warnings.warn(
            f"core has {r * r} unknowns but only {observed.entry_count} "
            "observed entries; returning the minimum-norm solution",
            LowRankSystemWarning, stacklevel=2,
        )
        s = np.linalg.lstsq(h, b, rcond=None)[0]
        return s.reshape(r, r)
    try:
        s = np.linalg.solve(h, b)
        if not np.all(np.isfinite(s)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError:
        warnings.warn(
            "normal system for the core was singular; returning the "
            "minimum-norm solution",
            LowRankSystemWarning, stacklevel=2,
        )
        s = np.linalg.lstsq(h, b, rcond=None)[0]
    return s.reshape(r, r)


def _cost_given_core(observed: ObservedMatrix, pair: FactorPair,
                     core: np.ndarray, lam: float):
    """(cost, squared misfit on observed entries) for a fixed core."""
    model = _model_values(observed, pair, core)
    resid = model - observed.values
    sq_misfit = float(resid @ resid)
    value = 0.5 * sq_misfit
    if lam > 0.0:
        gx = pair.x.T @ pair.x
        gy = pair.y.T @ pair.y
        total_sq = float(np.einsum("ab,ac,cd,bd->", core, gx, core, gy))
        value += 0.5 * lam * (total_sq - float(model @ model))
    return value, sq_misfit


def _cost_with_core(observed: ObservedMatrix, pair: FactorPair, lam: float):
    core = solve_core(observed, pair, lam)
    value, sq_misfit = _cost_given_core(observed, pair, core, lam)
    return value, core, sq_misfit


def cost(observed: ObservedMatrix, factors: FactorPair,
         lam: float = 0.0) -> tuple[float, np.ndarray]:
    """Cost F at the given factor subspaces and the minimizing core."""
    value, core, _ = _cost_with_core(observed, factors, lam)
    return value, core


def gradient(observed: ObservedMatrix, triple: FactorTriple,
             lam: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Manifold gradient of F at the triple's factors.

    Assumes ``triple.core`` is the minimizer from solve_core, so the core's
    own sensitivity drops out.  The raw derivatives

        G_X = P_E(X S Y^T - observed) Y S^T,
        G_Y = P_E(X S Y^T - observed)^T X S

    (plus the unobserved-energy term when lam > 0) are projected onto the
    tangent space: w_X = G_X - X (X^T G_X) / m, likewise for w_Y, giving
    X^T w_X = 0 exactly up to roundoff.
    """
    pair, core = triple.factors, triple.core
    rows, cols = observed.rows, observed.cols
    model = _model_values(observed, pair, core)
    resid = model - observed.values
    ys = pair.y @ core.T
    xs = pair.x @ core
    gx = _left_product(rows, cols, resid, ys, pair.m)
    gy = _left_product(cols, rows, resid, xs, pair.n)
    if lam > 0.0:
        gx += lam * (xs @ (pair.y.T @ ys) - _left_product(rows, cols, model, ys, pair.m))
        gy += lam * (ys @ (pair.x.T @ xs) - _left_product(cols, rows, model, xs, pair.n))
    wx = gx - pair.x @ (pair.x.T @ gx) / pair.m
    wy = gy - pair.y @ (pair.y.T @ gy) / pair.n
    return wx, wy


@dataclass(frozen=True)
class LineSearchResult:
    factors: FactorPair
    core: np.ndarray | None
    cost: float
    step: float
    stalled: bool


def line_search_step(observed: ObservedMatrix, factors: FactorPair,
                     w: tuple[np.ndarray, np.ndarray], tau: float = 1e-3,
                     max_halvings: int = 50, lam: float = 0.0,
                     current_cost: float | None = None) -> LineSearchResult:
    """Backtracking step along the negative manifold gradient.

    Tries t = tau * 2^-h for h = 0, 1, ... and accepts the first candidate
    satisfying the sufficient-decrease test

        F(new) - F(old) <= -1/2 t ||w||^2.

    Exhausting the halvings signals a stall (callers treat it as converged).
    """
    wx, wy = w
    w_sq = float((wx * wx).sum() + (wy * wy).sum())
    if w_sq == 0.0:
        raise DegenerateInputError("line search needs a nonzero direction")
    if current_cost is None:
        current_cost, _, _ = _cost_with_core(observed, factors, lam)
    t = tau
    for _ in range(max_halvings + 1):
        try:
            candidate = retract(factors.x - t * wx, factors.y - t * wy)
        except DegenerateInputError:
            t *= 0.5
            continue
        value, core, _ = _cost_with_core(observed, candidate, lam)
        if value - current_cost <= -0.5 * t * w_sq:
            return LineSearchResult(candidate, core, value, t, stalled=False)
        t *= 0.5
    return LineSearchResult(factors, None, current_cost, 0.0, stalled=True)
