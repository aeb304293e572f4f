"""Truncated SVD of sparse (and sparse-minus-low-rank) operators.

Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization.  The
basis grows, restarting with a fresh random direction whenever a chain hits
an invariant subspace, until the leading k triplets pass a residual test,
the row or column space is exhausted, or the iteration budget runs out.

Operators are duck-typed: anything with ``shape``, ``matvec`` and ``rmatvec``
works, in particular ObservedMatrix and CompositeOperator.  Runs are
deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionMismatchError
from .observed import ObservedMatrix, ProblemShape

__all__ = ["SpectralSummary", "CompositeOperator", "truncated_svd"]

_BREAK_REL = 1e-13  # relative scale below which a Lanczos step is a breakdown


@dataclass(frozen=True)
class SpectralSummary:
    """Leading singular triplets: column-orthonormal blocks and values."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    def __post_init__(self) -> None:
        k = self.singular_values.size
        if self.left.ndim != 2 or self.right.ndim != 2 \
                or self.left.shape[1] != k or self.right.shape[1] != k:
            raise DimensionMismatchError("inconsistent block shapes")
        s = self.singular_values
        if np.any(s < 0) or np.any(s[1:] > s[:-1]):
            raise DimensionMismatchError(
                "singular values must be non-negative and non-increasing"
            )
        for block in (self.left, self.right):
            gram = block.T @ block
            if np.max(np.abs(gram - np.eye(k))) > 1e-10:
                raise DimensionMismatchError("factor block is not orthonormal")

    @property
    def k(self) -> int:
        return int(self.singular_values.size)


class CompositeOperator:
    """Sparse term minus a factored dense term: A = S - X C Y^T.

    The dense part is never materialized; products cost O(entries + (m+n)r).
    """

    def __init__(self, sparse: ObservedMatrix, x: np.ndarray,
                 core: np.ndarray, y: np.ndarray):
        m, n = sparse.shape.m, sparse.shape.n
        r1, r2 = core.shape
        if x.shape != (m, r1) or y.shape != (n, r2):
            raise DimensionMismatchError(
                f"factored part {x.shape}x{core.shape}x{y.shape} does not "
                f"match sparse part {m}x{n}"
            )
        self.sparse = sparse
        self.x = x
        self.core = core
        self.y = y

    @property
    def shape(self) -> tuple[int, int]:
        return self.sparse.shape.as_tuple()

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.sparse.matvec(v) - self.x @ (self.core @ (self.y.T @ v))

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        return self.sparse.rmatvec(u) - self.y @ (self.core.T @ (self.x.T @ u))


def _operator_shape(operator) -> tuple[int, int]:
    shape = operator.shape
    if isinstance(shape, ProblemShape):
        return shape.as_tuple()
    m, n = shape
    return int(m), int(n)


def _reorthogonalize(vec: np.ndarray, basis: np.ndarray) -> np.ndarray:
    # two Gram-Schmidt passes keep the basis orthonormal to roundoff
    if basis.shape[1]:
        vec = vec - basis @ (basis.T @ vec)
        vec = vec - basis @ (basis.T @ vec)
    return vec


class _Bidiagonalization:
    """Growing two-sided Lanczos factorization A V = U B (+ open-chain tip)."""

    def __init__(self, operator, m: int, n: int, cap: int, rng):
        self.op = operator
        self.m, self.n = m, n
        self.rng = rng
        self.u = np.zeros((m, cap))
        self.v = np.zeros((n, cap))
        self.b = np.zeros((cap, cap))
        self.nu = 0
        self.nv = 0
        self.chain_open = False
        self.beta_prev = 0.0
        self.u_prev = -1
        self.scale = 0.0  # largest coefficient seen; proxy for ||A||

    def _grow(self) -> None:
        cap = self.b.shape[0]
        new = cap * 2
        self.u = np.hstack([self.u, np.zeros((self.m, new - cap))])
        self.v = np.hstack([self.v, np.zeros((self.n, new - cap))])
        b = np.zeros((new, new))
        b[:cap, :cap] = self.b
        self.b = b

    def _fresh_direction(self) -> np.ndarray | None:
        if self.nv >= self.n:
            return None
        for _ in range(3):
            cand = _reorthogonalize(self.rng.standard_normal(self.n),
                                    self.v[:, :self.nv])
            nrm = np.linalg.norm(cand)
            if nrm > 1e-6:
                return cand / nrm
        return None

    def step(self) -> bool:
        """One expansion step.  Returns False when no progress is possible."""
        if max(self.nu, self.nv) + 1 >= self.b.shape[0]:
            self._grow()
        if not self.chain_open:
            vec = self._fresh_direction()
            if vec is None:
                return False
            self.v[:, self.nv] = vec
            iv = self.nv
            self.nv += 1
            self.beta_prev = 0.0
            self.u_prev = -1
            self.chain_open = True
        else:
            iv = self.nv - 1

        p = self.op.matvec(self.v[:, iv])
        if self.u_prev >= 0:
            p = p - self.beta_prev * self.u[:, self.u_prev]
        p = _reorthogonalize(p, self.u[:, :self.nu])
        alpha = float(np.linalg.norm(p))
        self.scale = max(self.scale, alpha)
        if alpha <= _BREAK_REL * self.scale:
            # A maps the chain's span into the existing left basis: closed
            self.chain_open = False
            return True
        iu = self.nu
        self.u[:, iu] = p / alpha
        self.nu += 1
        self.b[iu, iv] = alpha

        # complete the new left vector's row immediately so that
        # A^T U = V B^T holds exactly for every stored u
        q = self.op.rmatvec(self.u[:, iu]) - alpha * self.v[:, iv]
        q = _reorthogonalize(q, self.v[:, :self.nv])
        beta = float(np.linalg.norm(q))
        self.scale = max(self.scale, beta)
        if beta <= _BREAK_REL * self.scale or self.nv >= self.n:
            self.chain_open = False
        else:
            self.v[:, self.nv] = q / beta
            self.b[iu, self.nv] = beta
            self.nv += 1
            self.beta_prev = beta
            self.u_prev = iu
        return True

    def available(self) -> int:
        """Number of Ritz triplets currently extractable."""
        return self.nv  # right-side count; zero values pad beyond rank

    def extract(self, k: int):
        """Top-k Ritz triplets plus a residual bound per triplet.

        The bound ``scale * |tip component|`` dominates the true one-sided
        residual ||A v - sigma u||; it is exactly 0 once every chain closed.
        """
        nu, nv = self.nu, self.nv
        bmat = self.b[:nu, :nv]
        p, s, qt = np.linalg.svd(bmat, full_matrices=True)
        nmin = min(nu, nv)
        sigma = np.concatenate([s, np.zeros(nv - nmin)])
        order = np.arange(nv)  # svd returns non-increasing; zeros trail

        tip = self.nv - 1 if self.chain_open else -1
        left = np.empty((self.m, k))
        right = np.empty((self.n, k))
        values = np.empty(k)
        bounds = np.empty(k)
        pad_basis = self.u[:, :nu]
        pads = []
        for out_i in range(k):
            j = order[out_i]
            values[out_i] = sigma[j]
            right[:, out_i] = self.v[:, :nv] @ qt[j, :]
            tipcomp = abs(qt[j, tip]) if tip >= 0 else 0.0
            bounds[out_i] = self.scale * tipcomp
            if j < nmin:
                left[:, out_i] = pad_basis @ p[:, j]
            else:
                # zero singular value: any unit vector orthogonal to the
                # stored left basis completes the triplet
                vec = None
                for _ in range(5):
                    cand = self.rng.standard_normal(self.m)
                    cand = _reorthogonalize(cand, pad_basis)
                    for prev in pads:
                        cand = cand - prev * (prev @ cand)
                    nrm = np.linalg.norm(cand)
                    if nrm > 1e-6:
                        vec = cand / nrm
                        break
                if vec is None:
                    raise ConvergenceError("could not complete a null triplet")
                pads.append(vec)
                left[:, out_i] = vec
        return values, left, right, bounds


def truncated_svd(operator, k: int, tol: float = 1e-10, seed: int = 0,
                  max_iter: int | None = None) -> SpectralSummary:
    """Leading k singular triplets of a linear operator.

    Grows a Lanczos bidiagonalization (random start from ``seed``) until each
    returned triplet satisfies ||A v_i - sigma_i u_i|| <= tol * sigma_1, with
    an iteration budget of ``max_iter`` (default 30 k + 100).  Raises
    ConvergenceError, carrying the best residuals seen, if the budget runs
    out first.
    """
    m, n = _operator_shape(operator)
    if not 1 <= k <= min(m, n):
        raise DimensionMismatchError(
            f"k must lie in [1, min(m, n)] = [1, {min(m, n)}], got {k}"
        )
    if tol <= 0:
        raise DimensionMismatchError("tol must be positive")
    budget = max_iter if max_iter is not None else 30 * k + 100
    rng = np.random.default_rng(seed)
    cap = min(max(2 * k + 40, 64), max(m, n) + 1)
    fac = _Bidiagonalization(operator, m, n, cap, rng)

    def _verified(values, left, right):
        ref = max(float(values[0]), np.finfo(float).tiny)
        res = np.empty(values.size)
        for i in range(values.size):
            res[i] = np.linalg.norm(operator.matvec(right[:, i])
                                    - values[i] * left[:, i])
        return res, bool(np.all(res <= tol * ref))

    best = None
    iterations = 0
    check_at = k
    while iterations < budget:
        if not fac.step():
            break  # column space exhausted: factorization is exact
        iterations += 1
        if fac.available() < k or iterations < check_at:
            continue
        values, left, right, bounds = fac.extract(k)
        ref = max(float(values[0]), np.finfo(float).tiny)
        if np.all(bounds <= 0.5 * tol * ref):
            res, ok = _verified(values, left, right)
            best = (values, left, right, res)
            if ok:
                return SpectralSummary(left, values, right)
        check_at = iterations + 5

    if fac.available() >= k:
        values, left, right, _ = fac.extract(k)
        res, ok = _verified(values, left, right)
        if ok:
            return SpectralSummary(left, values, right)
        best = (values, left, right, res)
    raise ConvergenceError(
        f"truncated SVD did not converge within {budget} iterations",
        residuals=None if best is None else best[3],
    )
