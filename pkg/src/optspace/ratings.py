"""Ratings-file loading, holdout splitting and NMAE evaluation."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import RatingsFormatError
from .manifold import OptConfig
from .metrics import nmae
from .observed import ObservedMatrix, read_matrix_market
from .solvers import CompletionResult, incremental_optspace, optspace

__all__ = [
    "RatingsDataset",
    "per_user_k",
    "fixed_split",
    "load_ratings",
    "ratings_eval",
    "random_baseline",
    "NmaeReport",
]


@dataclass(frozen=True)
class _PerUserK:
    k: int
    seed: int


@dataclass(frozen=True)
class _FixedSplit:
    path: str


def per_user_k(k: int, seed: int = 0) -> _PerUserK:
    """Hold out k randomly chosen ratings from every user who can spare them."""
    if k < 1:
        raise RatingsFormatError("holdout size must be at least 1")
    return _PerUserK(int(k), int(seed))


def fixed_split(path: str | Path) -> _FixedSplit:
    """Use a second ratings file as the test set."""
    return _FixedSplit(str(path))


@dataclass(frozen=True)
class RatingsDataset:
    """A train/test split of (user, item, rating) triples.

    Users and items are compact 0-based indices; ``short_users`` lists users
    whose full history stayed in train because it was too small to split.
    """

    user_count: int
    item_count: int
    train_users: np.ndarray
    train_items: np.ndarray
    train_values: np.ndarray
    test_users: np.ndarray
    test_items: np.ndarray
    test_values: np.ndarray
    bounds: tuple[float, float]
    short_users: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        lo, hi = self.bounds
        if not hi > lo:
            raise RatingsFormatError("rating bounds must span a non-empty range")
        for vals in (self.train_values, self.test_values):
            if vals.size and (vals.min() < lo or vals.max() > hi):
                raise RatingsFormatError("rating outside the declared bounds")
        train_keys = set(zip(self.train_users.tolist(), self.train_items.tolist()))
        if len(train_keys) != self.train_users.size:
            raise RatingsFormatError("duplicate (user, item) pair in train")
        test_keys = set(zip(self.test_users.tolist(), self.test_items.tolist()))
        if len(test_keys) != self.test_users.size:
            raise RatingsFormatError("duplicate (user, item) pair in test")
        if train_keys & test_keys:
            raise RatingsFormatError("train and test share a (user, item) pair")

    @property
    def train_size(self) -> int:
        return int(self.train_users.size)

    @property
    def test_size(self) -> int:
        return int(self.test_users.size)

    def train_matrix(self) -> ObservedMatrix:
        return ObservedMatrix(
            (self.user_count, self.item_count),
            self.train_users, self.train_items, self.train_values,
        )


def _parse_triples(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    users, items, values = [], [], []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "\t" in line:
                parts = line.split("\t")
            elif "," in line:
                parts = line.split(",")
            else:
                parts = line.split()
            if len(parts) < 3:
                raise RatingsFormatError(
                    f"{path}:{lineno}: expected user, item, rating"
                )
            try:
                users.append(int(parts[0]))
                items.append(int(parts[1]))
                values.append(float(parts[2]))
            except ValueError as exc:
                raise RatingsFormatError(f"{path}:{lineno}: {exc}") from exc
    if not users:
        raise RatingsFormatError(f"{path}: no ratings found")
    return (np.asarray(users, dtype=np.int64),
            np.asarray(items, dtype=np.int64),
            np.asarray(values, dtype=np.float64))


def _read_entries(path: str | Path, format: str):
    if format == "tsv_triples":
        return _parse_triples(path)
    if format == "matrix_market":
        try:
            observed = read_matrix_market(path)
        except Exception as exc:
            raise RatingsFormatError(f"{path}: {exc}") from exc
        return observed.rows.copy(), observed.cols.copy(), observed.values.copy()
    raise RatingsFormatError(f"unknown ratings format {format!r}")


def _holdout_per_user(users, items, values, rule: _PerUserK):
    order = np.lexsort((items, users))
    users, items, values = users[order], items[order], values[order]
    rng = np.random.default_rng(rule.seed)
    test_mask = np.zeros(users.size, dtype=bool)
    short: list[int] = []
    boundaries = np.flatnonzero(np.diff(users)) + 1
    starts = np.concatenate(([0], boundaries))
    stops = np.concatenate((boundaries, [users.size]))
    for start, stop in zip(starts, stops):
        count = stop - start
        if count < rule.k + 1:
            short.append(int(users[start]))
            continue
        picks = rng.choice(count, size=rule.k, replace=False)
        test_mask[start + picks] = True
    return users, items, values, test_mask, tuple(short)


def load_ratings(path: str | Path, format: str = "tsv_triples",
                 holdout=None, bounds: tuple[float, float] | None = None,
                 ) -> RatingsDataset:
    """Read a ratings file and split it into train and test.

    ``holdout`` is either per_user_k(k, seed) or fixed_split(test_path);
    the default holds out two ratings per user.  Bounds default to the data
    range over train and test combined.
    """
    if holdout is None:
        holdout = per_user_k(2)
    users, items, values = _read_entries(path, format)

    if isinstance(holdout, _FixedSplit):
        t_users, t_items, t_values = _read_entries(holdout.path, format)
        short: tuple[int, ...] = ()
    elif isinstance(holdout, _PerUserK):
        users, items, values, test_mask, short = _holdout_per_user(
            users, items, values, holdout)
        t_users, t_items, t_values = (users[test_mask], items[test_mask],
                                      values[test_mask])
        users, items, values = (users[~test_mask], items[~test_mask],
                                values[~test_mask])
    else:
        raise RatingsFormatError(f"unknown holdout rule {holdout!r}")

    all_users = np.concatenate((users, t_users))
    all_items = np.concatenate((items, t_items))
    uniq_users, compact_users = np.unique(all_users, return_inverse=True)
    uniq_items, compact_items = np.unique(all_items, return_inverse=True)
    n_train = users.size
    if bounds is None:
        all_values = np.concatenate((values, t_values))
        bounds = (float(all_values.min()), float(all_values.max()))
    short_compact = tuple(
        int(np.searchsorted(uniq_users, u)) for u in short if u in uniq_users
    )
    return RatingsDataset(
        user_count=int(uniq_users.size),
        item_count=int(uniq_items.size),
        train_users=compact_users[:n_train].astype(np.int64),
        train_items=compact_items[:n_train].astype(np.int64),
        train_values=values,
        test_users=compact_users[n_train:].astype(np.int64),
        test_items=compact_items[n_train:].astype(np.int64),
        test_values=t_values,
        bounds=bounds,
        short_users=short_compact,
    )


@dataclass(frozen=True)
class NmaeReport:
    """NMAE evaluation of one solver run on a ratings split."""

    nmae: float
    wall_time_seconds: float
    rank: int
    iterations: int
    stop_reason: str
    result: CompletionResult

    def to_csv_row(self) -> str:
        return ",".join([
            format(self.nmae, ".12g"),
            format(self.wall_time_seconds, ".6f"),
            str(self.rank),
            str(self.iterations),
            self.stop_reason,
        ])


NMAE_REPORT_HEADER = "nmae,wall_time_seconds,rank,iterations,stop_reason"


def ratings_eval(dataset: RatingsDataset, solver: str = "incremental",
                 config: OptConfig | None = None, rank: int | None = None,
                 seed: int = 0) -> NmaeReport:
    """Complete the train matrix and score held-out ratings.

    Predictions are clipped to the rating bounds before the NMAE is taken.
    """
    if dataset.train_size == 0 or dataset.test_size == 0:
        raise RatingsFormatError("need non-empty train and test sets")
    observed = dataset.train_matrix()
    config = config or OptConfig()
    start = time.perf_counter()
    if solver == "incremental":
        if rank is not None:
            config = replace(config, rho_max=rank)
        result = incremental_optspace(observed, config, seed=seed)
    elif solver == "optspace":
        result = optspace(observed, config, rank_override=rank, seed=seed)
    else:
        raise RatingsFormatError(f"unknown solver {solver!r}")
    elapsed = time.perf_counter() - start
    lo, hi = dataset.bounds
    predictions = np.clip(
        result.triple.values_at(dataset.test_users, dataset.test_items), lo, hi)
    score = nmae(predictions, dataset.test_values, lo, hi)
    return NmaeReport(score, elapsed, result.rank, result.iterations,
                      result.stop_reason, result)


def random_baseline(dataset: RatingsDataset, seed: int = 0) -> float:
    """NMAE of uniform random guessing inside the rating bounds."""
    if dataset.test_size == 0:
        raise RatingsFormatError("need a non-empty test set")
    lo, hi = dataset.bounds
    rng = np.random.default_rng(seed)
    predictions = rng.uniform(lo, hi, dataset.test_size)
    return nmae(predictions, dataset.test_values, lo, hi)
