"""Plan parsing, defaults, and the runner's CSV/meta/figure artifacts."""

from pathlib import Path

import numpy as np
import pytest

from optspace import ExperimentPlan, PlanError, parse_plan_file, run_plan
from optspace.plans import SCHEMA_VERSION


def read_meta(path):
    meta = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition(" = ")
        meta[key] = value
    return meta


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# schema=")
    header = lines[1].split(",")
    rows = [line.split(",") for line in lines[2:]]
    return header, rows


def write_plan(tmp_path, text):
    path = tmp_path / "plan.txt"
    path.write_text(text)
    return path


def test_parse_plan_file_full(tmp_path):
    path = write_plan(tmp_path, """\
# exercise every key translation
kind = phase_diagram

n = 60
r = 2
epsilon = 20, 30
trials = 2
seed = 7
lambda = 0.5
tol = 1e-6
kmax = 8
tau = 1e-2
out = results/run.csv
figures = off
bounds_min = 1.0
bounds_max = 5.0
""")
    plan = parse_plan_file(path)
    assert plan.kind == "phase_diagram"
    assert plan.n == (60,)
    assert plan.epsilon == (20.0, 30.0)
    assert plan.trials == 2
    assert plan.seed == 7
    assert plan.lam == 0.5
    assert plan.tol == 1e-6
    assert plan.tau == 1e-2
    assert plan.output_path == "results/run.csv"
    assert plan.render_figures is False
    assert plan.bounds == (1.0, 5.0)


def test_parse_plan_file_ratings_keys(tmp_path):
    path = write_plan(tmp_path, """\
kind = ratings_eval
input = data.tsv
format = matrix_market
holdout_k = 3
solver = incremental
""")
    plan = parse_plan_file(path)
    assert plan.input_path == "data.tsv"
    assert plan.input_format == "matrix_market"
    assert plan.holdout_k == 3
    assert plan.solver == "incremental"


def test_parse_plan_file_unknown_key(tmp_path):
    path = write_plan(tmp_path, "kind = convergence\nwidgets = 3\n")
    with pytest.raises(PlanError, match=r":2.*widgets"):
        parse_plan_file(path)


def test_parse_plan_file_missing_equals(tmp_path):
    path = write_plan(tmp_path, "kind convergence\n")
    with pytest.raises(PlanError, match=r":1"):
        parse_plan_file(path)


def test_parse_plan_file_bad_value(tmp_path):
    path = write_plan(tmp_path, "kind = convergence\ntrials = soon\n")
    with pytest.raises(PlanError, match=r":2"):
        parse_plan_file(path)


def test_parse_plan_file_requires_kind(tmp_path):
    path = write_plan(tmp_path, "n = 100\n")
    with pytest.raises(PlanError, match="kind"):
        parse_plan_file(path)


def test_parse_plan_file_bounds_must_pair(tmp_path):
    path = write_plan(tmp_path, "kind = ratings_eval\nbounds_min = 1\n")
    with pytest.raises(PlanError, match="bounds"):
        parse_plan_file(path)


def test_kind_defaults_fill_missing_fields():
    plan = ExperimentPlan(kind="phase_diagram").validated()
    assert plan.n == (500,)
    assert plan.r == (4,)
    assert plan.epsilon == (10.0, 20.0, 30.0, 40.0, 50.0, 60.0)
    assert plan.trials == 10
    assert plan.tol == 1e-7
    assert plan.kmax == 400
    assert plan.tau == 1e-2
    assert plan.solver == "optspace"


def test_explicit_values_survive_defaults():
    plan = ExperimentPlan(kind="phase_diagram", epsilon=(15.0,), tol=1e-3,
                          trials=1, tau=0.5).validated()
    assert plan.epsilon == (15.0,)
    assert plan.tol == 1e-3
    assert plan.trials == 1
    assert plan.tau == 0.5


def test_fallbacks_cover_kinds_without_defaults():
    plan = ExperimentPlan(kind="incoherence_report").validated()
    assert plan.trials == 5
    assert plan.solver == "optspace"
    assert plan.tol == 1e-5
    assert plan.kmax == 150
    assert plan.tau == 1e-2


@pytest.mark.parametrize("bad", [
    ExperimentPlan(kind="warp_drive"),
    ExperimentPlan(kind="phase_diagram", solver="cg"),
    ExperimentPlan(kind="phase_diagram", trials=0),
    ExperimentPlan(kind="phase_diagram", epsilon=(-1.0,)),
    ExperimentPlan(kind="condition_sweep", kappa=(0.5,)),
    ExperimentPlan(kind="noise_table", noise_models=("pepper",)),
    ExperimentPlan(kind="ratings_eval"),
])
def test_validation_rejects(bad):
    with pytest.raises(PlanError):
        bad.validated()


@pytest.fixture(scope="module")
def phase_outcome(tmp_path_factory):
    # one small real run shared by the artifact checks below
    out_dir = tmp_path_factory.mktemp("phase")
    plan = ExperimentPlan(kind="phase_diagram", n=(60,), r=(2,),
                          epsilon=(20.0, 30.0), trials=2, kmax=8, tol=1e-5,
                          output_path=str(out_dir / "phase.csv"))
    return plan, run_plan(plan)


def test_phase_diagram_artifacts(phase_outcome):
    plan, outcome = phase_outcome
    assert outcome.exit_code == 0
    assert outcome.failures == 0
    assert outcome.rows == 4

    header, rows = read_csv(outcome.csv_paths[0])
    first = Path(outcome.csv_paths[0]).read_text().splitlines()[0]
    assert first == f"# schema={SCHEMA_VERSION} kind=phase_diagram"
    assert header[:5] == ["n", "r", "epsilon", "trial", "seed"]
    assert header[-1] == "error"
    assert len(rows) == 4
    assert all(len(row) == len(header) for row in rows)
    assert all(row[-1] == "" for row in rows)

    rates_path = Path(outcome.csv_paths[1])
    assert rates_path.name == "phase_rates.csv"
    rate_header, rate_rows = read_csv(rates_path)
    assert rate_header == ["n", "r", "epsilon", "trials",
                           "reconstruction_rate"]
    assert len(rate_rows) == 2

    # the reported rate is recomputable from the per-trial rows
    eps_col = header.index("epsilon")
    rec_col = header.index("reconstructed")
    for rate_row in rate_rows:
        flags = [int(row[rec_col]) for row in rows
                 if row[eps_col] == rate_row[2]]
        assert len(flags) == int(rate_row[3])
        assert float(rate_row[4]) == pytest.approx(sum(flags) / len(flags))


def test_phase_diagram_meta(phase_outcome):
    plan, outcome = phase_outcome
    meta = read_meta(outcome.meta_path)
    assert meta["schema"] == SCHEMA_VERSION
    assert meta["kind"] == "phase_diagram"
    assert meta["rows"] == "4"
    assert meta["failures"] == "0"
    assert float(meta["wall_time_total_seconds"]) > 0
    assert meta["plan.n"] == "60"
    assert meta["plan.epsilon"] == "20,30"
    assert meta["plan.trials"] == "2"


def test_phase_diagram_figure(phase_outcome):
    plan, outcome = phase_outcome
    assert len(outcome.figure_paths) == 1
    figure = Path(outcome.figure_paths[0])
    assert figure.name == "phase.png"
    assert figure.stat().st_size > 0


def test_csv_bodies_are_deterministic(tmp_path):
    def run(name):
        plan = ExperimentPlan(kind="phase_diagram", n=(60,), r=(2,),
                              epsilon=(25.0,), trials=2, kmax=6, tol=1e-5,
                              output_path=str(tmp_path / name / "out.csv"),
                              render_figures=False)
        return run_plan(plan)

    first, second = run("a"), run("b")
    for left, right in zip(first.csv_paths, second.csv_paths):
        assert Path(left).read_bytes() == Path(right).read_bytes()


def test_infeasible_gridpoint_reports_partial_failure(tmp_path):
    # epsilon above n cannot be sampled; the trial fails, the run continues
    plan = ExperimentPlan(kind="phase_diagram", n=(60,), r=(2,),
                          epsilon=(20.0, 120.0), trials=1, kmax=4, tol=1e-5,
                          output_path=str(tmp_path / "partial.csv"),
                          render_figures=False)
    outcome = run_plan(plan)
    assert outcome.exit_code == 2
    assert outcome.failures == 1
    assert outcome.rows == 2

    header, rows = read_csv(outcome.csv_paths[0])
    by_eps = {row[header.index("epsilon")]: row for row in rows}
    assert by_eps["120"][-1] == "DimensionMismatchError"
    assert by_eps["20"][-1] == ""
    assert read_meta(outcome.meta_path)["failures"] == "1"


def test_convergence_writes_mean_trace(tmp_path):
    plan = ExperimentPlan(kind="convergence", n=(60,), r=(2,),
                          epsilon=(20.0,), trials=2, kmax=4, tol=1e-12,
                          output_path=str(tmp_path / "conv.csv"),
                          render_figures=False)
    outcome = run_plan(plan)
    assert outcome.exit_code == 0
    header, rows = read_csv(outcome.csv_paths[0])
    assert header[:4] == ["trial", "seed", "iteration", "rank"]
    assert outcome.rows == len(rows) >= 2
    pred = [float(row[header.index("pred_error")]) for row in rows]
    assert all(np.isfinite(p) for p in pred)

    mean_path = Path(outcome.csv_paths[1])
    assert mean_path.name == "conv_mean.csv"
    mean_header, mean_rows = read_csv(mean_path)
    assert mean_header == ["iteration", "fit_error", "pred_error"]
    trials = {row[0] for row in rows}
    longest = max(sum(1 for row in rows if row[0] == t) for t in trials)
    assert len(mean_rows) == longest


def test_noise_model_sweep_rows_and_summary(tmp_path):
    plan = ExperimentPlan(kind="noise_model_sweep", n=(64,), r=(2,),
                          epsilon=(20.0,), noise=(0.3,),
                          noise_models=("additive", "quantization"),
                          trials=1, kmax=6,
                          output_path=str(tmp_path / "noise.csv"),
                          render_figures=False)
    outcome = run_plan(plan)
    assert outcome.exit_code == 0
    header, rows = read_csv(outcome.csv_paths[0])
    assert outcome.rows == len(rows) == 2
    assert {row[header.index("noise_model")] for row in rows} == {
        "additive", "quantization"}
    measured = [float(row[header.index("noise_ratio_measured")])
                for row in rows]
    assert all(0.1 < m < 0.6 for m in measured)

    summary_header, summary_rows = read_csv(outcome.csv_paths[1])
    assert summary_header[-1] == "median_rel_error"
    assert len(summary_rows) == 2


def test_condition_sweep_runs_both_solvers(tmp_path):
    plan = ExperimentPlan(kind="condition_sweep", n=(60,), r=(2,),
                          epsilon=(25.0,), kappa=(1.0, 4.0), trials=1,
                          kmax=6, tol=1e-5,
                          output_path=str(tmp_path / "cond.csv"),
                          render_figures=False)
    outcome = run_plan(plan)
    assert outcome.exit_code == 0
    header, rows = read_csv(outcome.csv_paths[0])
    assert len(rows) == 4
    pairs = {(row[header.index("kappa")], row[header.index("solver")])
             for row in rows}
    assert pairs == {("1", "optspace"), ("1", "incremental"),
                     ("4", "optspace"), ("4", "incremental")}
    _, summary_rows = read_csv(outcome.csv_paths[1])
    assert len(summary_rows) == 4


def ratings_file(tmp_path):
    # additive user/item structure, rank 2, 12 ratings per user
    path = tmp_path / "ratings.tsv"
    lines = []
    for user in range(20):
        for item in range(12):
            value = 1.0 + (user % 4) + 0.25 * (item % 3)
            lines.append(f"{user}\t{item}\t{value}")
    path.write_text("\n".join(lines) + "\n")
    return path


def test_ratings_eval_plan(tmp_path):
    plan = ExperimentPlan(kind="ratings_eval",
                          input_path=str(ratings_file(tmp_path)),
                          rank=2, kmax=60, tol=1e-6,
                          output_path=str(tmp_path / "ratings.csv"))
    outcome = run_plan(plan)
    assert outcome.exit_code == 0
    header, rows = read_csv(outcome.csv_paths[0])
    assert len(rows) == 1
    row = dict(zip(header, rows[0]))
    assert row["solver"] == "incremental"
    assert 0.0 <= float(row["nmae"]) < 1.0
    assert float(row["baseline_nmae"]) > 0.0
    assert row["test_size"] == "40"
    assert len(outcome.figure_paths) == 1
    assert Path(outcome.figure_paths[0]).stat().st_size > 0


def test_incoherence_report_plan(tmp_path):
    plan = ExperimentPlan(kind="incoherence_report", n=(40,), r=(3,),
                          output_path=str(tmp_path / "inco.csv"),
                          render_figures=False)
    outcome = run_plan(plan)
    assert outcome.exit_code == 0
    header, rows = read_csv(outcome.csv_paths[0])
    assert header == ["side", "k", "cumulative"]
    assert len(rows) == 80
    left = [float(row[2]) for row in rows if row[0] == "left"]
    assert len(left) == 40
    assert left == sorted(left)
    assert left[-1] == pytest.approx(40.0, abs=1e-9)
    meta = read_meta(outcome.meta_path)
    assert float(meta["a2_max"]) >= 1.0


def test_run_plan_creates_output_directories(tmp_path):
    plan = ExperimentPlan(kind="incoherence_report", n=(20,), r=(2,),
                          output_path=str(tmp_path / "deep" / "dir" / "o.csv"),
                          render_figures=False)
    outcome = run_plan(plan)
    assert Path(outcome.csv_paths[0]).exists()
    assert outcome.figure_paths == ()
