"""Synthetic low-rank instances: factors, sampling patterns and noise.

Every random quantity is drawn from a substream derived from the instance
seed (factors, pattern and noise evolve independently), so regenerating any
piece is bit-for-bit reproducible and changing e.g. the noise realization
never perturbs the factors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, DimensionMismatchError
from .observed import (ObservedMatrix, ProblemShape, project_observed,
                       write_matrix_market)

__all__ = [
    "InstanceSpec",
    "NoiseSpec",
    "Instance",
    "substream",
    "generate_matrix",
    "sample_pattern",
    "apply_noise",
    "calibrate_noise_ratio",
    "make_instance",
    "export_instance",
]

FACTOR_STREAM, PATTERN_STREAM, NOISE_STREAM = 0, 1, 2


def substream(seed: int, role: int) -> np.random.Generator:
    """Independent generator for one role of one instance seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(role,)))


@dataclass(frozen=True)
class InstanceSpec:
    """Recipe for one synthetic instance.

    ``epsilon`` is the target mean number of revealed entries per row of a
    square matrix: positions are revealed independently with probability
    epsilon / n.  ``kappa`` switches from Gaussian factors to a conditioned
    spectrum with singular values linearly spaced between n and n / kappa.
    """

    shape: ProblemShape
    rank: int
    epsilon: float
    factor_std: float = 1.0
    kappa: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.shape, ProblemShape):
            object.__setattr__(self, "shape", ProblemShape(*self.shape))
        if not 1 <= self.rank <= min(self.shape.m, self.shape.n):
            raise DimensionMismatchError(
                f"rank {self.rank} out of range for {self.shape.m}x{self.shape.n}"
            )
        if not 0 < self.epsilon <= self.shape.n:
            raise DimensionMismatchError(
                f"epsilon must lie in (0, n] = (0, {self.shape.n}], got {self.epsilon}"
            )
        if self.factor_std <= 0:
            raise DimensionMismatchError("factor_std must be positive")
        if self.kappa is not None and self.kappa < 1:
            raise DimensionMismatchError("kappa must be at least 1")


@dataclass(frozen=True)
class NoiseSpec:
    """One of the supported corruption models.

    kinds: "none"; "additive" (+= N(0, scale^2)); "multiplicative"
    (*= 1 + N(0, scale^2)); "outliers" (+= +scale w.p. p_pos, -scale w.p.
    p_neg); "quantization" (snap to the grid {(k + 1/2) * scale}, ties up).
    """

    kind: str = "none"
    scale: float = 0.0
    p_pos: float = 1.0 / 200.0
    p_neg: float = 1.0 / 200.0

    _KINDS = ("none", "additive", "multiplicative", "outliers", "quantization")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise DimensionMismatchError(f"unknown noise kind {self.kind!r}")
        if self.kind != "none" and self.scale <= 0:
            raise DimensionMismatchError(f"{self.kind} noise needs a positive scale")
        if not (0 <= self.p_pos and 0 <= self.p_neg and self.p_pos + self.p_neg <= 1):
            raise DimensionMismatchError("outlier probabilities out of range")

    @classmethod
    def none(cls) -> "NoiseSpec":
        return cls()

    @classmethod
    def additive(cls, sigma: float) -> "NoiseSpec":
        return cls("additive", sigma)

    @classmethod
    def multiplicative(cls, xi_std: float) -> "NoiseSpec":
        return cls("multiplicative", xi_std)

    @classmethod
    def outliers(cls, magnitude: float, p_pos: float = 1.0 / 200.0,
                 p_neg: float = 1.0 / 200.0) -> "NoiseSpec":
        return cls("outliers", magnitude, p_pos, p_neg)

    @classmethod
    def quantization(cls, bin_width: float) -> "NoiseSpec":
        return cls("quantization", bin_width)

    @property
    def variance(self) -> float | None:
        """Per-entry noise variance where well-defined (stop-rule input)."""
        if self.kind == "none":
            return 0.0
        if self.kind == "additive":
            return self.scale ** 2
        if self.kind == "outliers":
            return self.scale ** 2 * (self.p_pos + self.p_neg)
        return None


def _orthonormal_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    sign = np.sign(np.diag(r))
    sign[sign == 0] = 1.0
    return q * sign


def generate_matrix(spec: InstanceSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense ground truth plus its factors.

    Gaussian mode: M = U V^T with i.i.d. Normal(0, factor_std^2) factor
    entries.  Conditioned mode (kappa set): M = U D V^T with orthonormal U,
    V and D linearly spaced from n down to n / kappa.
    """
    rng = substream(spec.seed, FACTOR_STREAM)
    m, n, r = spec.shape.m, spec.shape.n, spec.rank
    if spec.kappa is None:
        u = spec.factor_std * rng.standard_normal((m, r))
        v = spec.factor_std * rng.standard_normal((n, r))
        return u @ v.T, u, v
    u = _orthonormal_columns(rng, m, r)
    v = _orthonormal_columns(rng, n, r)
    d = np.linspace(float(n), float(n) / spec.kappa, r)
    return (u * d) @ v.T, u * d, v


def sample_pattern(shape: ProblemShape, epsilon: float, seed: int = 0) -> ObservedMatrix:
    """Bernoulli revelation pattern: each position independently w.p. epsilon/n.

    Returns an ObservedMatrix with zero placeholder values.  An empty draw is
    resampled once; a second empty draw raises.
    """
    shape = shape if isinstance(shape, ProblemShape) else ProblemShape(*shape)
    if not 0 < epsilon <= shape.n:
        raise DimensionMismatchError(
            f"epsilon must lie in (0, n] = (0, {shape.n}], got {epsilon}"
        )
    rng = substream(seed, PATTERN_STREAM)
    p = epsilon / shape.n
    for _ in range(2):
        mask = rng.random((shape.m, shape.n)) < p
        rows, cols = np.nonzero(mask)
        if rows.size:
            return ObservedMatrix(shape, rows, cols, np.zeros(rows.size))
    raise DegenerateInputError(
        f"no entries revealed at epsilon={epsilon} after resampling"
    )


def quantize(values: np.ndarray, bin_width: float) -> np.ndarray:
    """Snap to the half-offset grid {..., -width/2, width/2, 3 width/2, ...}."""
    return bin_width * (np.floor(values / bin_width) + 0.5)


def apply_noise(truth: np.ndarray, pattern: ObservedMatrix, noise: NoiseSpec,
                seed: int = 0) -> ObservedMatrix:
    """Observed matrix: the truth at the pattern's positions, corrupted."""
    if truth.shape != pattern.shape.as_tuple():
        raise DimensionMismatchError("truth and pattern shapes differ")
    vals = np.asarray(truth[pattern.rows, pattern.cols], dtype=np.float64)
    rng = substream(seed, NOISE_STREAM)
    if noise.kind == "none":
        out = vals
    elif noise.kind == "additive":
        out = vals + rng.normal(0.0, noise.scale, vals.size)
    elif noise.kind == "multiplicative":
        out = vals * (1.0 + rng.normal(0.0, noise.scale, vals.size))
    elif noise.kind == "outliers":
        u = rng.random(vals.size)
        out = vals + np.where(u < noise.p_pos, noise.scale,
                              np.where(u < noise.p_pos + noise.p_neg,
                                       -noise.scale, 0.0))
    elif noise.kind == "quantization":
        out = quantize(vals, noise.scale)
    else:  # pragma: no cover - NoiseSpec validates kinds
        raise DimensionMismatchError(f"unknown noise kind {noise.kind!r}")
    return pattern.with_values(out)


def noise_ratio_measured(truth: np.ndarray, observed: ObservedMatrix) -> float:
    """Realized ||corruption||_E / ||truth||_E on the observed positions."""
    clean = truth[observed.rows, observed.cols]
    denom = np.linalg.norm(clean)
    if denom == 0:
        raise DegenerateInputError("truth vanishes on the observed positions")
    return float(np.linalg.norm(observed.values - clean) / denom)


def calibrate_noise_ratio(truth: np.ndarray, pattern: ObservedMatrix,
                          family: str, target: float) -> NoiseSpec:
    """Noise parameters that hit a target corruption-to-signal ratio.

    additive: sigma = target * rms of the truth on the pattern;
    outliers: magnitude = 10 * target * rms (outliers carry 1/100 of the
    positions, so their rms is magnitude / 10); multiplicative: the ratio is
    the xi standard deviation itself, independent of the truth; quantization:
    deterministic fixed-point fit of the bin width to the measured ratio.
    """
    if target <= 0:
        raise DimensionMismatchError("target ratio must be positive")
    vals = np.asarray(truth[pattern.rows, pattern.cols], dtype=np.float64)
    rms = float(np.linalg.norm(vals)) / np.sqrt(max(vals.size, 1))
    if rms == 0:
        raise DegenerateInputError("truth vanishes on the pattern")
    if family == "additive":
        return NoiseSpec.additive(target * rms)
    if family == "multiplicative":
        return NoiseSpec.multiplicative(target)
    if family == "outliers":
        return NoiseSpec.outliers(10.0 * target * rms)
    if family == "quantization":
        width = np.sqrt(12.0) * target * rms
        norm = float(np.linalg.norm(vals))
        for _ in range(40):
            ratio = float(np.linalg.norm(quantize(vals, width) - vals)) / norm
            if abs(ratio - target) <= 1e-3 * target:
                break
            width *= target / max(ratio, 1e-12)
        return NoiseSpec.quantization(width)
    raise DimensionMismatchError(f"unknown noise family {family!r}")


@dataclass(frozen=True)
class Instance:
    """A generated problem: ground truth, pattern, and observed entries."""

    spec: InstanceSpec
    noise: NoiseSpec
    truth: np.ndarray
    left: np.ndarray
    right: np.ndarray
    pattern: ObservedMatrix
    observed: ObservedMatrix


def make_instance(spec: InstanceSpec, noise: NoiseSpec | None = None,
                  noise_target: float | None = None) -> Instance:
    """Generate truth, pattern and (optionally corrupted) observations.

    ``noise_target`` calibrates the requested family's scale on this very
    instance instead of taking the NoiseSpec scale literally.
    """
    truth, left, right = generate_matrix(spec)
    pattern = sample_pattern(spec.shape, spec.epsilon, spec.seed)
    noise = noise or NoiseSpec.none()
    if noise_target is not None and noise.kind != "none":
        noise = calibrate_noise_ratio(truth, pattern, noise.kind, noise_target)
    if noise.kind == "none":
        observed = project_observed(truth, pattern)
    else:
        observed = apply_noise(truth, pattern, noise, spec.seed)
    return Instance(spec, noise, truth, left, right, pattern, observed)


def export_instance(instance: Instance, path: str | Path) -> tuple[Path, Path]:
    """Write the observed entries (MatrixMarket) plus a key-value sidecar."""
    mtx = Path(path)
    meta = mtx.with_suffix(mtx.suffix + ".meta")
    write_matrix_market(instance.observed, mtx)
    spec, noise = instance.spec, instance.noise
    lines = [
        f"m = {spec.shape.m}",
        f"n = {spec.shape.n}",
        f"rank = {spec.rank}",
        f"epsilon = {spec.epsilon!r}",
        f"factor_std = {spec.factor_std!r}",
        f"kappa = {'' if spec.kappa is None else repr(spec.kappa)}",
        f"seed = {spec.seed}",
        f"noise_kind = {noise.kind}",
        f"noise_scale = {noise.scale!r}",
    ]
    meta.write_text("\n".join(lines) + "\n")
    return mtx, meta
