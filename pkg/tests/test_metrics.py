"""Error metrics, the oracle bound, NMAE, and incoherence diagnostics."""

import numpy as np
import pytest

from optspace import (
    DegenerateInputError,
    DimensionMismatchError,
    ExperimentResult,
    FactorPair,
    FactorTriple,
    RECONSTRUCTION_THRESHOLD,
    incoherence_diagnostic,
    nmae,
    noise_ratio,
    oracle_rmse,
    rel_error,
    result_csv_header,
    retract,
    rmse,
)


def test_rel_error_and_rmse_consistency():
    rng = np.random.default_rng(0)
    truth = rng.normal(size=(40, 30))
    estimate = truth + 0.01 * rng.normal(size=truth.shape)
    rel = rel_error(truth, estimate)
    root = rmse(truth, estimate)
    assert rel == pytest.approx(
        np.linalg.norm(truth - estimate) / np.linalg.norm(truth))
    assert root == pytest.approx(np.linalg.norm(truth - estimate)
                                 / np.sqrt(truth.size))
    assert root == pytest.approx(rel * np.linalg.norm(truth)
                                 / np.sqrt(truth.size))


def test_metrics_accept_factored_estimates():
    rng = np.random.default_rng(1)
    pair = retract(rng.normal(size=(20, 2)), rng.normal(size=(15, 2)))
    triple = FactorTriple(pair, rng.normal(size=(2, 2)))
    truth = rng.normal(size=(20, 15))
    assert rel_error(truth, triple) == pytest.approx(
        rel_error(truth, triple.to_dense()))
    assert rmse(truth, triple) == pytest.approx(rmse(truth, triple.to_dense()))


def test_oracle_rmse_frozen_value():
    # sigma=1, n=600, r=2, |E|=72000: sqrt(2396 / 72000)
    assert oracle_rmse(600, 2, 72000, 1.0) == pytest.approx(0.1824219772, abs=1e-9)
    assert oracle_rmse(600, 2, 72000, 2.0) == pytest.approx(2 * 0.1824219772, abs=1e-9)


def test_oracle_rmse_monotonicity():
    # more samples help, more parameters hurt
    assert oracle_rmse(500, 4, 20000, 1.0) < oracle_rmse(500, 4, 10000, 1.0)
    assert oracle_rmse(500, 2, 10000, 1.0) < oracle_rmse(500, 4, 10000, 1.0)
    with pytest.raises(DimensionMismatchError):
        oracle_rmse(3, 4, 100, 1.0)


def test_noise_ratio_basic_and_degenerate():
    signal = np.array([3.0, 4.0])
    noise = np.array([0.3, 0.4])
    assert noise_ratio(signal, noise) == pytest.approx(0.1)
    with pytest.raises(DimensionMismatchError):
        noise_ratio(signal, noise[:1])
    with pytest.raises(DegenerateInputError):
        noise_ratio(np.zeros(2), noise)


def test_nmae_random_baseline_one_third():
    rng = np.random.default_rng(2)
    actual = rng.uniform(1.0, 5.0, size=100_000)
    predicted = rng.uniform(1.0, 5.0, size=100_000)
    # E|X - Y| = range / 3 for independent uniforms
    assert nmae(predicted, actual, 1.0, 5.0) == pytest.approx(1 / 3, abs=0.01)


def test_nmae_midpoint_predictor_one_quarter():
    rng = np.random.default_rng(3)
    actual = rng.uniform(0.0, 2.0, size=100_000)
    predicted = np.full_like(actual, 1.0)
    assert nmae(predicted, actual, 0.0, 2.0) == pytest.approx(0.25, abs=0.01)


def test_nmae_index_alignment():
    actual = np.array([1.0, 2.0, 3.0])
    predicted = np.array([3.1, 1.1, 2.1])
    got = nmae(predicted, actual, 0.0, 10.0,
               pred_index=[30, 10, 20], true_index=[10, 20, 30])
    assert got == pytest.approx(0.01)
    with pytest.raises(DimensionMismatchError):
        nmae(predicted, actual, 0.0, 10.0,
             pred_index=[1, 2, 3], true_index=[1, 2, 4])
    with pytest.raises(DimensionMismatchError):
        nmae(predicted, actual, 0.0, 10.0, pred_index=[1, 2, 3])


def test_nmae_rejects_empty_and_bad_range():
    with pytest.raises(DegenerateInputError):
        nmae(np.array([]), np.array([]), 0.0, 1.0)
    with pytest.raises(DimensionMismatchError):
        nmae(np.ones(2), np.ones(2), 1.0, 1.0)


def test_incoherence_flat_factor_is_diagonal():
    m, r = 16, 4
    # block-constant orthonormal factor: every row carries identical mass
    u = np.kron(np.eye(r), np.ones((m // r, 1))) / np.sqrt(m // r)
    diag = incoherence_diagnostic((u, u))
    np.testing.assert_allclose(diag.cumulative_left, np.arange(1, m + 1),
                               atol=1e-12)
    assert diag.sampled_pairs is None


def test_incoherence_single_row_concentration():
    u = np.zeros((4, 1))
    u[2, 0] = 1.0
    diag = incoherence_diagnostic((u, u))
    np.testing.assert_allclose(diag.cumulative_left, [0.0, 0.0, 0.0, 4.0],
                               atol=1e-12)
    # peak cross term: |u_i v_j| = 1 at the concentrated pair, times sqrt(mn/r)
    assert diag.a2_max == pytest.approx(4.0)


def test_incoherence_curves_terminate_exactly():
    rng = np.random.default_rng(4)
    u = np.linalg.qr(rng.normal(size=(37, 3)))[0]
    v = np.linalg.qr(rng.normal(size=(23, 3)))[0]
    diag = incoherence_diagnostic((u, v))
    assert diag.cumulative_left.size == 37
    assert diag.cumulative_right.size == 23
    assert diag.cumulative_left[-1] == pytest.approx(37.0, abs=1e-9)
    assert diag.cumulative_right[-1] == pytest.approx(23.0, abs=1e-9)
    # sorted ascending leverages keep the curve below the diagonal
    assert np.all(diag.cumulative_left <= np.arange(1, 38) + 1e-9)


def test_incoherence_gaussian_band():
    rng = np.random.default_rng(5)
    u = np.linalg.qr(rng.normal(size=(1000, 5)))[0]
    v = np.linalg.qr(rng.normal(size=(1000, 5)))[0]
    diag = incoherence_diagnostic((u, v))
    gap = np.max(np.arange(1, 1001) - diag.cumulative_left) / 1000
    assert 0.15 <= gap <= 0.32


def test_incoherence_accepts_factor_pair():
    rng = np.random.default_rng(6)
    pair = retract(rng.normal(size=(50, 3)), rng.normal(size=(40, 3)))
    diag = incoherence_diagnostic(pair)
    assert diag.cumulative_left[-1] == pytest.approx(50.0, abs=1e-9)
    assert diag.a2_max > 0


def test_incoherence_rejects_non_orthonormal():
    rng = np.random.default_rng(7)
    with pytest.raises(DegenerateInputError):
        incoherence_diagnostic((rng.normal(size=(20, 2)),
                                rng.normal(size=(20, 2))))


def test_experiment_result_reconstruction_flag():
    kw = dict(rmse=0.1, fit_error=0.01, iterations=10,
              wall_time_seconds=1.0, r_hat=3, seed=0)
    assert ExperimentResult.build(rel_error=1e-4, **kw).reconstructed
    assert not ExperimentResult.build(rel_error=1.1e-4, **kw).reconstructed
    assert ExperimentResult.build(rel_error=5e-3, threshold=1e-2, **kw).reconstructed
    assert RECONSTRUCTION_THRESHOLD == 1e-4


def test_experiment_result_csv_row_parses_back():
    res = ExperimentResult.build(rel_error=1.5e-5, rmse=0.25, fit_error=1e-6,
                                 iterations=42, wall_time_seconds=3.25,
                                 r_hat=4, seed=7)
    row = res.to_csv_row()
    fields = row.split(",")
    header = result_csv_header().split(",")
    assert len(fields) == len(header)
    assert float(fields[header.index("rel_error")]) == pytest.approx(1.5e-5)
    assert fields[header.index("reconstructed")] == "1"
    assert int(fields[header.index("iterations")]) == 42
