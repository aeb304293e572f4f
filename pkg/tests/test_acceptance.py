"""Full-scale acceptance runs, one test per shipped guarantee.

Each test prints one line pairing the measured value with its bound, so
``pytest -v -s tests/test_acceptance.py`` reads as a checklist.  The whole
module takes about half an hour on one core; the ill-conditioning
comparison dominates because it runs both solvers on five seeds.
"""

import time

import numpy as np

import optspace as op

THRESHOLD = op.RECONSTRUCTION_THRESHOLD


def report(num: int, ok: bool, detail: str) -> None:
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} ({detail})",
          flush=True)


def complete_exact(n, r, eps, seed, kmax):
    inst = op.make_instance(op.InstanceSpec((n, n), r, float(eps), seed=seed))
    config = op.OptConfig(k_max=kmax, delta_tol=1e-14, tau=1e-2)
    start = time.perf_counter()
    result = op.optspace(inst.observed, config, rank_override=r, seed=seed)
    wall = time.perf_counter() - start
    return op.rel_error(inst.truth, result.triple), wall


def test_criterion_1_exact_completion_easy_regime():
    rels, walls = [], []
    for seed in range(5):
        rel, wall = complete_exact(1000, 10, 120.0, seed, kmax=400)
        rels.append(rel)
        walls.append(wall)
    median = float(np.median(rels))
    ok = median <= 1e-4 and max(walls) <= 300.0
    report(1, ok, f"median rel {median:.2e} <= 1e-4, "
                  f"max wall {max(walls):.0f}s <= 300s")
    assert median <= 1e-4
    assert max(walls) <= 300.0


def test_criterion_2_exact_completion_hard_regime():
    rels = []
    for seed in range(5):
        inst = op.make_instance(op.InstanceSpec((1000, 1000), 10, 50.0,
                                                seed=seed))
        assert inst.observed.entry_count <= 2.6 * (2 * 1000 * 10 - 10 * 10)
        config = op.OptConfig(k_max=1500, delta_tol=1e-14, tau=1e-2)
        result = op.optspace(inst.observed, config, rank_override=10,
                             seed=seed)
        rels.append(op.rel_error(inst.truth, result.triple))
    median = float(np.median(rels))
    rate = sum(rel <= THRESHOLD for rel in rels) / 5
    ok = median <= 1e-4 and rate >= 0.8
    report(2, ok, f"median rel {median:.2e} <= 1e-4, rate {rate:.1f} >= 0.8")
    assert median <= 1e-4
    assert rate >= 0.8


def test_criterion_3_phase_transition():
    grid = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0)
    config = op.OptConfig(k_max=400, delta_tol=1e-7, tau=1e-2)
    rates = []
    for eps in grid:
        hits = 0
        for seed in range(10):
            try:
                inst = op.make_instance(op.InstanceSpec((500, 500), 4, eps,
                                                        seed=seed))
                result = op.optspace(inst.observed, config, rank_override=4,
                                     seed=seed)
                hits += op.rel_error(inst.truth, result.triple) <= THRESHOLD
            except (op.CompletionError, np.linalg.LinAlgError):
                pass
        rates.append(hits / 10)
    monotone = all(a <= b for a, b in zip(rates, rates[1:]))
    ok = rates[0] == 0.0 and rates[-1] == 1.0 and monotone
    report(3, ok, "rates " + "/".join(f"{r:.1f}" for r in rates)
                  + " over eps 10..60, need 0.0 start, 1.0 end, monotone")
    assert rates[0] == 0.0
    assert rates[-1] == 1.0
    assert monotone


def test_criterion_4_rank_estimation():
    hits = 0
    scale_ok = True
    for seed in range(20):
        inst = op.make_instance(op.InstanceSpec((500, 500), 4, 80.0,
                                                seed=seed))
        trimmed = op.trim(inst.observed).trimmed
        estimate = op.estimate_rank(trimmed, seed=seed)
        hits += estimate.r_hat == 4
        scaled = op.estimate_rank(trimmed.with_values(7.0 * trimmed.values),
                                  seed=seed)
        scale_ok = scale_ok and scaled.r_hat == estimate.r_hat
    ok = hits >= 19 and scale_ok
    report(4, ok, f"r_hat correct {hits}/20 >= 19, x7 scale invariant: "
                  f"{scale_ok}")
    assert hits >= 19
    assert scale_ok


def test_criterion_5_noisy_completion_vs_oracle():
    ratios, iters = [], []
    for seed in range(3):
        spec = op.InstanceSpec((600, 600), 2, 120.0,
                               factor_std=np.sqrt(20.0 / np.sqrt(600.0)),
                               seed=seed)
        inst = op.make_instance(spec, noise=op.NoiseSpec.additive(1.0))
        config = op.OptConfig(k_max=50, delta_tol=1e-12, tau=1e-2,
                              noise_slack=0.0)
        result = op.optspace(inst.observed, config, rank_override=2,
                             seed=seed, noise_variance=1.0)
        oracle = op.oracle_rmse(600, 2, inst.observed.entry_count, 1.0)
        ratios.append(op.rmse(inst.truth, result.triple) / oracle)
        iters.append(result.iterations)
    ok = max(ratios) <= 1.3 and max(iters) <= 50
    report(5, ok, f"rmse/oracle max {max(ratios):.3f} <= 1.3 "
                  f"within {max(iters)} <= 50 iterations")
    assert max(ratios) <= 1.3
    assert max(iters) <= 50


def test_criterion_6_noise_table_spot_check():
    rels = []
    for seed in range(2):
        inst = op.make_instance(op.InstanceSpec((1000, 1000), 10, 120.0,
                                                seed=seed),
                                noise=op.NoiseSpec.additive(1.0),
                                noise_target=1e-2)
        config = op.OptConfig(k_max=150, delta_tol=1e-12, tau=1e-2,
                              noise_slack=0.0)
        result = op.optspace(inst.observed, config, rank_override=10,
                             seed=seed, noise_variance=inst.noise.variance)
        rels.append(op.rel_error(inst.truth, result.triple))
    ok = max(rels) <= 9e-3
    report(6, ok, f"rel error max {max(rels):.2e} <= 9e-3 at ratio 1e-2")
    assert max(rels) <= 9e-3


def test_criterion_7_ill_conditioning():
    wins = 0
    details = []
    for seed in range(5):
        inst = op.make_instance(op.InstanceSpec((1000, 1000), 10, 120.0,
                                                kappa=10.0, seed=seed))
        inc_config = op.OptConfig(k_max=2000, delta_tol=1e-5, tau=1e-2,
                                  rho_max=10)
        inc = op.incremental_optspace(inst.observed, inc_config, seed=seed)
        inc_rel = op.rel_error(inst.truth, inc.triple)
        plain_config = op.OptConfig(k_max=400, delta_tol=1e-5, tau=1e-2)
        plain = op.optspace(inst.observed, plain_config, rank_override=10,
                            seed=seed)
        plain_rel = op.rel_error(inst.truth, plain.triple)
        wins += inc_rel <= 1e-4 and plain_rel >= 1e-2
        details.append(f"{inc_rel:.1e}|{plain_rel:.1e}")
    ok = wins >= 4
    report(7, ok, f"{wins}/5 seeds with incremental <= 1e-4 and plain "
                  f">= 1e-2 at kappa=10; inc|plain: " + " ".join(details))
    assert wins >= 4


def test_criterion_8_property_suite():
    rng = np.random.default_rng(8)
    passed = []

    # rotation invariance of the cost
    inst = op.make_instance(op.InstanceSpec((40, 40), 3, 12.0, seed=1))
    pair = op.retract(rng.normal(size=(40, 3)), rng.normal(size=(40, 3)))
    rot_l = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    rot_r = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    rotated = op.FactorPair(pair.x @ rot_l, pair.y @ rot_r)
    base, core = op.cost(inst.observed, pair)
    turned, _ = op.cost(inst.observed, rotated)
    assert abs(base - turned) <= 1e-10
    passed.append("rotation-invariance")

    # gradient against a central finite difference
    triple = op.FactorTriple(pair, core)
    grad_x, grad_y = op.gradient(inst.observed, triple)
    dx = rng.normal(size=pair.x.shape)
    dx -= pair.x @ (pair.x.T @ dx) / 40
    dy = rng.normal(size=pair.y.shape)
    dy -= pair.y @ (pair.y.T @ dy) / 40
    h = 1e-6
    up, _ = op.cost(inst.observed, op.FactorPair(pair.x + h * dx,
                                                 pair.y + h * dy))
    dn, _ = op.cost(inst.observed, op.FactorPair(pair.x - h * dx,
                                                 pair.y - h * dy))
    fd = (up - dn) / (2 * h)
    analytic = float(np.sum(grad_x * dx) + np.sum(grad_y * dy))
    assert abs(fd - analytic) <= 1e-4 * max(1.0, abs(fd))
    passed.append("gradient-fd")

    # exact core solve against a dense least-squares oracle
    features = np.stack([np.outer(pair.x[i], pair.y[j]).ravel()
                         for i, j in zip(inst.observed.rows,
                                         inst.observed.cols)])
    dense_core, *_ = np.linalg.lstsq(features, inst.observed.values,
                                     rcond=None)
    solved = op.solve_core(inst.observed, pair)
    assert np.max(np.abs(solved.ravel() - dense_core)) <= 1e-9
    passed.append("core-solve")

    # monotone costs and normalized iterates along a real descent
    run = op.make_instance(op.InstanceSpec((120, 120), 3, 30.0, seed=2))
    result = op.optspace(run.observed,
                         op.OptConfig(k_max=60, delta_tol=1e-9, tau=1e-2),
                         rank_override=3, seed=2)
    costs = [entry.cost for entry in result.trace]
    assert all(b <= a + 1e-12 for a, b in zip(costs, costs[1:]))
    passed.append("monotone-descent")
    assert max(entry.gram_deviation for entry in result.trace) <= 1e-8
    passed.append("iterate-normalization")

    # trimming against a degree-count oracle
    mask = rng.random((30, 24)) < 0.3
    mask[3] = True
    rows, cols = np.nonzero(mask)
    obs = op.ObservedMatrix((30, 24), rows, cols,
                            rng.normal(size=rows.size))
    trimmed = op.trim(obs).trimmed
    heavy_rows = mask.sum(axis=1) > 2 * mask.sum() / 30
    heavy_cols = mask.sum(axis=0) > 2 * mask.sum() / 24
    keep = mask & ~heavy_rows[:, None] & ~heavy_cols[None, :]
    assert np.array_equal(np.stack([trimmed.rows, trimmed.cols]),
                          np.stack(np.nonzero(keep)))
    passed.append("trim-oracle")

    # truncated SVD against the dense decomposition
    small = rng.normal(size=(50, 41))
    srows, scols = np.nonzero(np.ones_like(small, dtype=bool))
    sparse = op.ObservedMatrix((50, 41), srows, scols, small.ravel())
    summary = op.truncated_svd(sparse, 5, seed=3)
    dense_sv = np.linalg.svd(small, compute_uv=False)
    assert np.allclose(summary.singular_values, dense_sv[:5], rtol=1e-8)
    passed.append("svd-oracle")

    # NMAE of uniform random guessing
    guesses = rng.uniform(0.0, 1.0, 100_000)
    actual = rng.uniform(0.0, 1.0, 100_000)
    assert abs(op.nmae(guesses, actual, 0.0, 1.0) - 1.0 / 3.0) <= 0.01
    passed.append("nmae-baseline")

    # cumulative incoherence curves end at the matrix dimensions
    left = np.linalg.qr(rng.normal(size=(37, 4)))[0]
    right = np.linalg.qr(rng.normal(size=(23, 4)))[0]
    diag = op.incoherence_diagnostic((left, right))
    assert abs(diag.cumulative_left[-1] - 37.0) <= 1e-9
    assert abs(diag.cumulative_right[-1] - 23.0) <= 1e-9
    passed.append("incoherence-endpoints")

    report(8, len(passed) == 9, f"{len(passed)}/9 properties: "
                                + ", ".join(passed))
    assert len(passed) == 9


def test_criterion_9_convergence_shape():
    inst = op.make_instance(op.InstanceSpec((1000, 1000), 10, 200.0, seed=0))
    config = op.OptConfig(k_max=55, delta_tol=1e-14, tau=1e-3)
    result = op.optspace(inst.observed, config, rank_override=10, seed=0,
                         truth=inst.truth)
    iters = np.array([entry.iteration for entry in result.trace], dtype=float)
    pred = np.array([entry.pred_error for entry in result.trace])
    window = (iters >= 5) & (iters <= 50)
    x, y = iters[window], np.log10(pred[window])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    r2 = 1.0 - np.sum((y - fitted) ** 2) / np.sum((y - y.mean()) ** 2)
    ok = slope < 0 and r2 >= 0.95
    report(9, ok, f"slope {slope:.4f} < 0, R^2 {r2:.4f} >= 0.95 "
                  f"over iterations 5..50")
    assert slope < 0
    assert r2 >= 0.95
