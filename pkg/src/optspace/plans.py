"""Experiment plans: parsing, validation and deterministic execution.

A plan names one experiment kind, a parameter grid, a trial count and an
output path.  Running it writes CSV artifacts whose bodies are byte-identical
across reruns; wall-clock facts go to a .meta sidecar instead of the CSV.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import CompletionError, PlanError
from .manifold import OptConfig
from .metrics import (RECONSTRUCTION_THRESHOLD, incoherence_diagnostic,
                      noise_ratio, rel_error, rmse)
from .observed import ObservedMatrix
from .ratings import load_ratings, per_user_k, fixed_split, random_baseline, ratings_eval
from .solvers import CompletionResult, incremental_optspace, optspace
from .synth import InstanceSpec, NoiseSpec, generate_matrix, make_instance

__all__ = [
    "ExperimentPlan",
    "PlanOutcome",
    "parse_plan_file",
    "run_plan",
    "PLAN_KINDS",
    "SCHEMA_VERSION",
]

PLAN_KINDS = (
    "convergence",
    "phase_diagram",
    "hard_easy_table",
    "noise_table",
    "noise_model_sweep",
    "condition_sweep",
    "ratings_eval",
    "incoherence_report",
)

SOLVERS = ("optspace", "incremental")

NOISE_MODELS = ("additive", "multiplicative", "outliers", "quantization")

SCHEMA_VERSION = "optspace-bench/1"


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to run one experiment kind reproducibly."""

    kind: str
    n: tuple[int, ...] = ()
    r: tuple[int, ...] = ()
    epsilon: tuple[float, ...] = ()
    noise: tuple[float, ...] = ()
    kappa: tuple[float, ...] = ()
    noise_models: tuple[str, ...] = ()
    trials: int | None = None
    solver: str | None = None
    output_path: str = "results.csv"
    seed: int = 0
    rank: int | None = None
    use_rank_estimation: bool = False
    lam: float = 0.0
    tol: float | None = None
    kmax: int | None = None
    tau: float | None = None
    rho_max: int | None = None
    input_path: str | None = None
    input_format: str = "tsv_triples"
    holdout_k: int = 2
    holdout_seed: int = 0
    test_path: str | None = None
    bounds: tuple[float, float] | None = None
    render_figures: bool = True

    def validated(self) -> "ExperimentPlan":
        """Check invariants and fill kind-specific grid defaults."""
        if self.kind not in PLAN_KINDS:
            raise PlanError(f"unknown plan kind {self.kind!r}")
        plan = replace(self, **_grid_defaults(self))
        if plan.solver not in SOLVERS:
            raise PlanError(f"unknown solver {plan.solver!r}")
        if plan.trials < 1:
            raise PlanError("trials must be at least 1")
        for model in plan.noise_models:
            if model not in NOISE_MODELS:
                raise PlanError(f"unknown noise model {model!r}")
        if plan.kind == "ratings_eval":
            if not plan.input_path:
                raise PlanError("ratings_eval needs input=<ratings file>")
        else:
            if not plan.n or not plan.r:
                raise PlanError("plan grid must include n and r")
            if plan.kind != "incoherence_report" and not plan.epsilon:
                raise PlanError("plan grid must include epsilon")
        if plan.kind in ("noise_table", "noise_model_sweep"):
            if not plan.noise:
                raise PlanError("noise plans need a grid of target ratios N")
            if not plan.noise_models:
                raise PlanError("noise plans need at least one noise model")
        if plan.kind == "condition_sweep" and not plan.kappa:
            raise PlanError("condition_sweep needs a kappa grid")
        if any(v < 1 for v in plan.n) or any(v < 1 for v in plan.r):
            raise PlanError("n and r must be positive")
        if any(e <= 0 for e in plan.epsilon):
            raise PlanError("epsilon values must be positive")
        if any(k < 1 for k in plan.kappa):
            raise PlanError("kappa values must be at least 1")
        return plan


_KIND_DEFAULTS: dict[str, dict] = {
    "convergence": dict(n=(1000,), r=(10,), epsilon=(200.0,), trials=10,
                        tol=1e-14, kmax=60, tau=1e-3),
    "phase_diagram": dict(n=(500,), r=(4,),
                          epsilon=(10.0, 20.0, 30.0, 40.0, 50.0, 60.0),
                          trials=10, tol=1e-7, kmax=400, tau=1e-2),
    "hard_easy_table": dict(n=(1000,), r=(10,), epsilon=(50.0, 120.0),
                            trials=5, tol=1e-6, kmax=1200, tau=1e-2),
    "noise_table": dict(n=(1000,), r=(10,), epsilon=(120.0,),
                        noise=(1e-4, 1e-3, 1e-2, 1e-1),
                        noise_models=("additive",), trials=5, kmax=150,
                        tau=1e-2),
    "noise_model_sweep": dict(n=(600,), r=(2,), epsilon=(120.0,),
                              noise=(0.5,), noise_models=NOISE_MODELS,
                              trials=5, kmax=150, tau=1e-2),
    "condition_sweep": dict(n=(1000,), r=(10,), epsilon=(120.0,),
                            kappa=(1.0, 5.0, 10.0), trials=3, tol=1e-5,
                            kmax=2000, tau=1e-2),
    "ratings_eval": dict(solver="incremental", tol=1e-4, kmax=200, tau=1e-2),
    "incoherence_report": dict(n=(1000,), r=(5,), tau=1e-2),
}


_FALLBACKS = {"trials": 5, "solver": "optspace", "tol": 1e-5, "kmax": 150,
              "tau": 1e-3}


def _grid_defaults(plan: ExperimentPlan) -> dict:
    updates = {}
    for key, value in _KIND_DEFAULTS.get(plan.kind, {}).items():
        if getattr(plan, key) in ((), None):
            updates[key] = value
    for key, value in _FALLBACKS.items():
        if getattr(plan, key) is None and key not in updates:
            updates[key] = value
    return updates


_LIST_KEYS = {
    "n": int, "r": int, "epsilon": float, "noise": float, "kappa": float,
}
_SCALAR_KEYS = {
    "kind": str, "solver": str, "trials": int, "seed": int, "rank": int,
    "lambda": float, "tol": float, "kmax": int, "tau": float, "rho_max": int,
    "out": str, "input": str, "format": str, "holdout_k": int,
    "holdout_seed": int, "test_path": str, "bounds_min": float,
    "bounds_max": float, "use_rank_estimation": bool, "figures": bool,
    "noise_models": str,
}
_KEY_TO_FIELD = {
    "lambda": "lam", "out": "output_path", "input": "input_path",
    "format": "input_format", "figures": "render_figures",
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise PlanError(f"expected a boolean, got {text!r}")


def parse_plan_file(path: str | Path) -> ExperimentPlan:
    """Read a line-oriented key=value plan description."""
    values: dict = {}
    bounds_min = bounds_max = None
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise PlanError(f"{path}:{lineno}: expected key = value")
            key, _, text = line.partition("=")
            key, text = key.strip(), text.strip()
            try:
                if key in _LIST_KEYS:
                    cast = _LIST_KEYS[key]
                    values[key] = tuple(cast(part.strip())
                                        for part in text.split(",") if part.strip())
                elif key == "noise_models":
                    values[key] = tuple(part.strip()
                                        for part in text.split(",") if part.strip())
                elif key in _SCALAR_KEYS:
                    cast = _SCALAR_KEYS[key]
                    parsed = _parse_bool(text) if cast is bool else cast(text)
                    if key == "bounds_min":
                        bounds_min = parsed
                    elif key == "bounds_max":
                        bounds_max = parsed
                    else:
                        values[_KEY_TO_FIELD.get(key, key)] = parsed
                else:
                    raise PlanError(f"{path}:{lineno}: unknown key {key!r}")
            except (ValueError, TypeError) as exc:
                raise PlanError(f"{path}:{lineno}: {exc}") from exc
    if "kind" not in values:
        raise PlanError(f"{path}: plan file must set kind")
    if (bounds_min is None) != (bounds_max is None):
        raise PlanError(f"{path}: set both bounds_min and bounds_max or neither")
    if bounds_min is not None:
        values["bounds"] = (bounds_min, bounds_max)
    return ExperimentPlan(**values)


@dataclass(frozen=True)
class PlanOutcome:
    """Where a plan wrote its artifacts and whether every trial succeeded."""

    csv_paths: tuple[str, ...]
    meta_path: str
    figure_paths: tuple[str, ...]
    rows: int
    failures: int

    @property
    def exit_code(self) -> int:
        return 2 if self.failures else 0


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _trial_seed(base_seed: int, gridpoint: int, trial: int) -> int:
    state = np.random.SeedSequence((base_seed, gridpoint, trial))
    return int(state.generate_state(1, dtype=np.uint64)[0] >> 1)


def _config_for(plan: ExperimentPlan) -> OptConfig:
    return OptConfig(delta_tol=plan.tol, k_max=plan.kmax, tau=plan.tau,
                     lam=plan.lam, rho_max=plan.rho_max)


def _resolve_rank(plan: ExperimentPlan, grid_rank: int) -> int | None:
    if plan.use_rank_estimation:
        return None
    if plan.rank is not None:
        return plan.rank
    return grid_rank


def _solve(observed: ObservedMatrix, solver: str, rank: int | None,
           config: OptConfig, truth=None, noise_variance=None,
           seed: int = 0) -> CompletionResult:
    if solver == "incremental":
        if rank is not None:
            config = replace(config, rho_max=rank)
        return incremental_optspace(observed, config, truth=truth,
                                    noise_variance=noise_variance, seed=seed)
    return optspace(observed, config, rank_override=rank, truth=truth,
                    noise_variance=noise_variance, seed=seed)


@dataclass
class _Collector:
    """Accumulates rows and timing while trials run."""

    rows: list[str] = field(default_factory=list)
    failures: int = 0
    wall_total: float = 0.0

    def add(self, cells: list) -> None:
        self.rows.append(",".join(_fmt(c) for c in cells))


def _completion_cells(result: CompletionResult, truth: np.ndarray) -> list:
    estimate = result.triple.to_dense()
    rel = rel_error(truth, estimate)
    return [rel, rmse(truth, estimate), result.final_fit, result.iterations,
            result.rank, int(rel <= RECONSTRUCTION_THRESHOLD), ""]

_COMPLETION_BLANKS = ["nan", "nan", "nan", "", "", ""]


def _run_exact_trials(plan: ExperimentPlan, collector: _Collector,
                      summaries: dict) -> None:
    config = _config_for(plan)
    grid = [(n, r, eps) for n in plan.n for r in plan.r for eps in plan.epsilon]
    for gp, (n, r, eps) in enumerate(grid):
        recon, rels = 0, []
        for t in range(plan.trials):
            seed = _trial_seed(plan.seed, gp, t)
            cells = [n, r, eps, t, seed]
            start = time.perf_counter()
            try:
                inst = make_instance(InstanceSpec((n, n), r, float(eps),
                                                  seed=seed))
                result = _solve(inst.observed, plan.solver,
                                _resolve_rank(plan, r), config, seed=seed)
                tail = _completion_cells(result, inst.truth)
                recon += tail[5]
                rels.append(tail[0])
            except (CompletionError, np.linalg.LinAlgError) as exc:
                tail = _COMPLETION_BLANKS + [type(exc).__name__]
                collector.failures += 1
            collector.wall_total += time.perf_counter() - start
            collector.add(cells + tail)
        summary = [n, r, eps, plan.trials, recon / plan.trials]
        if plan.kind == "hard_easy_table":
            summary.append(float(np.median(rels)) if rels else float("nan"))
        summaries[(n, r, eps)] = summary


def _run_noise_trials(plan: ExperimentPlan, collector: _Collector,
                      summaries: dict) -> None:
    config = _config_for(plan)
    grid = [(n, r, eps, model, ratio)
            for n in plan.n for r in plan.r for eps in plan.epsilon
            for model in plan.noise_models for ratio in plan.noise]
    for gp, (n, r, eps, model, ratio) in enumerate(grid):
        rels = []
        for t in range(plan.trials):
            seed = _trial_seed(plan.seed, gp, t)
            cells = [n, r, eps, model, ratio, t, seed]
            start = time.perf_counter()
            try:
                inst = make_instance(InstanceSpec((n, n), r, float(eps),
                                                  seed=seed),
                                     noise=NoiseSpec(model, 1.0),
                                     noise_target=float(ratio))
                clean = inst.truth[inst.observed.rows, inst.observed.cols]
                measured = noise_ratio(clean, inst.observed.values - clean)
                result = _solve(inst.observed, plan.solver,
                                _resolve_rank(plan, r), config,
                                noise_variance=inst.noise.variance, seed=seed)
                tail = [inst.noise.scale, measured] + _completion_cells(
                    result, inst.truth)
                rels.append(tail[2])
            except (CompletionError, np.linalg.LinAlgError) as exc:
                tail = ["nan", "nan"] + _COMPLETION_BLANKS + [type(exc).__name__]
                collector.failures += 1
            collector.wall_total += time.perf_counter() - start
            collector.add(cells + tail)
        summaries[(n, r, eps, model, ratio)] = [
            n, r, eps, model, ratio, plan.trials,
            float(np.median(rels)) if rels else float("nan")]


def _run_condition_trials(plan: ExperimentPlan, collector: _Collector,
                          summaries: dict) -> None:
    config = _config_for(plan)
    grid = [(n, r, eps, kappa)
            for n in plan.n for r in plan.r for eps in plan.epsilon
            for kappa in plan.kappa]
    for gp, (n, r, eps, kappa) in enumerate(grid):
        rels: dict[str, list] = {s: [] for s in SOLVERS}
        for t in range(plan.trials):
            seed = _trial_seed(plan.seed, gp, t)
            try:
                inst = make_instance(InstanceSpec((n, n), r, float(eps),
                                                  kappa=float(kappa),
                                                  seed=seed))
            except CompletionError as exc:
                for solver in SOLVERS:
                    collector.add([n, r, eps, kappa, solver, t, seed]
                                  + _COMPLETION_BLANKS + [type(exc).__name__])
                    collector.failures += 1
                continue
            for solver in SOLVERS:
                cells = [n, r, eps, kappa, solver, t, seed]
                start = time.perf_counter()
                try:
                    result = _solve(inst.observed, solver,
                                    _resolve_rank(plan, r), config, seed=seed)
                    tail = _completion_cells(result, inst.truth)
                    rels[solver].append(tail[0])
                except (CompletionError, np.linalg.LinAlgError) as exc:
                    tail = _COMPLETION_BLANKS + [type(exc).__name__]
                    collector.failures += 1
                collector.wall_total += time.perf_counter() - start
                collector.add(cells + tail)
        for solver in SOLVERS:
            vals = rels[solver]
            summaries[(n, r, eps, kappa, solver)] = [
                n, r, eps, kappa, solver, plan.trials,
                float(np.median(vals)) if vals else float("nan")]


def _run_convergence(plan: ExperimentPlan, collector: _Collector,
                     mean_rows: list[str]) -> None:
    config = _config_for(plan)
    n, r, eps = plan.n[0], plan.r[0], plan.epsilon[0]
    traces = []
    for t in range(plan.trials):
        seed = _trial_seed(plan.seed, 0, t)
        start = time.perf_counter()
        try:
            inst = make_instance(InstanceSpec((n, n), r, float(eps), seed=seed))
            result = _solve(inst.observed, plan.solver,
                            _resolve_rank(plan, r), config,
                            truth=inst.truth, seed=seed)
        except (CompletionError, np.linalg.LinAlgError) as exc:
            collector.failures += 1
            collector.add([t, seed, "", "", "nan", "nan", "nan", "nan",
                           type(exc).__name__])
            collector.wall_total += time.perf_counter() - start
            continue
        collector.wall_total += time.perf_counter() - start
        trace = [(e.iteration, e.fit_error, e.pred_error) for e in result.trace]
        traces.append(trace)
        for entry in result.trace:
            collector.add([t, seed, entry.iteration, entry.rank, entry.cost,
                           entry.fit_error, entry.pred_error, entry.grad_norm,
                           ""])
    if traces:
        length = max(len(tr) for tr in traces)
        fit = np.full((len(traces), length), np.nan)
        pred = np.full((len(traces), length), np.nan)
        for i, tr in enumerate(traces):
            for j, (_, f, p) in enumerate(tr):
                fit[i, j], pred[i, j] = f, p
            fit[i, len(tr):] = tr[-1][1]
            pred[i, len(tr):] = tr[-1][2]
        for j in range(length):
            mean_rows.append(",".join([str(j), _fmt(float(fit[:, j].mean())),
                                       _fmt(float(pred[:, j].mean()))]))


def _run_ratings(plan: ExperimentPlan, collector: _Collector) -> None:
    holdout = (fixed_split(plan.test_path) if plan.test_path
               else per_user_k(plan.holdout_k, plan.holdout_seed))
    dataset = load_ratings(plan.input_path, plan.input_format, holdout,
                           bounds=plan.bounds)
    config = _config_for(plan)
    start = time.perf_counter()
    try:
        report = ratings_eval(dataset, plan.solver, config, rank=plan.rank,
                              seed=plan.seed)
        baseline = random_baseline(dataset, seed=plan.seed)
        collector.add([plan.solver, report.rank, report.nmae, baseline,
                       report.iterations, report.stop_reason,
                       dataset.test_size, ""])
    except (CompletionError, np.linalg.LinAlgError) as exc:
        collector.failures += 1
        collector.add([plan.solver, "", "nan", "nan", "", "", dataset.test_size,
                       type(exc).__name__])
    collector.wall_total += time.perf_counter() - start


def _run_incoherence(plan: ExperimentPlan, collector: _Collector,
                     meta_extra: dict) -> None:
    n, r = plan.n[0], plan.r[0]
    start = time.perf_counter()
    if plan.input_path:
        dataset = load_ratings(plan.input_path, plan.input_format,
                               per_user_k(plan.holdout_k, plan.holdout_seed),
                               bounds=plan.bounds)
        result = _solve(dataset.train_matrix(), "incremental", plan.rank,
                        _config_for(plan), seed=plan.seed)
        diag = incoherence_diagnostic(result.triple.factors, seed=plan.seed)
    else:
        spec = InstanceSpec((n, n), r, float(n), seed=plan.seed)
        _, left, right = generate_matrix(spec)
        diag = incoherence_diagnostic((np.linalg.qr(left)[0],
                                       np.linalg.qr(right)[0]), seed=plan.seed)
    collector.wall_total += time.perf_counter() - start
    for k, value in enumerate(diag.cumulative_left, start=1):
        collector.add(["left", k, float(value)])
    for k, value in enumerate(diag.cumulative_right, start=1):
        collector.add(["right", k, float(value)])
    meta_extra["a2_max"] = _fmt(diag.a2_max)
    meta_extra["a2_sampled_pairs"] = str(diag.sampled_pairs or 0)


_HEADERS = {
    "convergence": "trial,seed,iteration,rank,cost,fit_error,pred_error,"
                   "grad_norm,error",
    "phase_diagram": "n,r,epsilon,trial,seed,rel_error,rmse,fit_error,"
                     "iterations,r_hat,reconstructed,error",
    "hard_easy_table": "n,r,epsilon,trial,seed,rel_error,rmse,fit_error,"
                       "iterations,r_hat,reconstructed,error",
    "noise_table": "n,r,epsilon,noise_model,noise_ratio_target,trial,seed,"
                   "noise_scale,noise_ratio_measured,rel_error,rmse,fit_error,"
                   "iterations,r_hat,reconstructed,error",
    "noise_model_sweep": "n,r,epsilon,noise_model,noise_ratio_target,trial,"
                         "seed,noise_scale,noise_ratio_measured,rel_error,"
                         "rmse,fit_error,iterations,r_hat,reconstructed,error",
    "condition_sweep": "n,r,epsilon,kappa,solver,trial,seed,rel_error,rmse,"
                       "fit_error,iterations,r_hat,reconstructed,error",
    "ratings_eval": "solver,rank,nmae,baseline_nmae,iterations,stop_reason,"
                    "test_size,error",
    "incoherence_report": "side,k,cumulative",
}

_SUMMARY_HEADERS = {
    "phase_diagram": "n,r,epsilon,trials,reconstruction_rate",
    "hard_easy_table": "n,r,epsilon,trials,reconstruction_rate,"
                       "median_rel_error",
    "noise_table": "n,r,epsilon,noise_model,noise_ratio_target,trials,"
                   "median_rel_error",
    "noise_model_sweep": "n,r,epsilon,noise_model,noise_ratio_target,trials,"
                         "median_rel_error",
    "condition_sweep": "n,r,epsilon,kappa,solver,trials,median_rel_error",
}


def _write_csv(path: Path, kind: str, header: str, rows: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(f"# schema={SCHEMA_VERSION} kind={kind}\n")
        handle.write(header + "\n")
        for row in rows:
            handle.write(row + "\n")


def _plan_echo(plan: ExperimentPlan) -> dict:
    echo = {}
    for f in fields(plan):
        value = getattr(plan, f.name)
        if isinstance(value, tuple):
            echo[f.name] = ",".join(_fmt(v) for v in value)
        else:
            echo[f.name] = "" if value is None else _fmt(value)
    return echo


def run_plan(plan: ExperimentPlan) -> PlanOutcome:
    """Execute a plan and write its CSV, metadata and figure artifacts."""
    plan = plan.validated()
    out = Path(plan.output_path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()

    collector = _Collector()
    summaries: dict = {}
    mean_rows: list[str] = []
    meta_extra: dict = {}

    if plan.kind in ("phase_diagram", "hard_easy_table"):
        _run_exact_trials(plan, collector, summaries)
    elif plan.kind in ("noise_table", "noise_model_sweep"):
        _run_noise_trials(plan, collector, summaries)
    elif plan.kind == "condition_sweep":
        _run_condition_trials(plan, collector, summaries)
    elif plan.kind == "convergence":
        _run_convergence(plan, collector, mean_rows)
    elif plan.kind == "ratings_eval":
        _run_ratings(plan, collector)
    else:
        _run_incoherence(plan, collector, meta_extra)

    csv_paths = [out]
    _write_csv(out, plan.kind, _HEADERS[plan.kind], collector.rows)
    if plan.kind in _SUMMARY_HEADERS:
        name = "_rates" if plan.kind == "phase_diagram" else "_summary"
        side = out.with_name(out.stem + name + ".csv")
        _write_csv(side, plan.kind, _SUMMARY_HEADERS[plan.kind],
                   [",".join(_fmt(c) for c in cells)
                    for cells in summaries.values()])
        csv_paths.append(side)
    if plan.kind == "convergence":
        side = out.with_name(out.stem + "_mean.csv")
        _write_csv(side, plan.kind, "iteration,fit_error,pred_error", mean_rows)
        csv_paths.append(side)

    meta_path = out.with_suffix(".meta")
    finished = datetime.now(timezone.utc).isoformat()
    meta = {"schema": SCHEMA_VERSION, "kind": plan.kind,
            "started_at": started, "finished_at": finished,
            "wall_time_total_seconds": f"{collector.wall_total:.6f}",
            "rows": str(len(collector.rows)),
            "failures": str(collector.failures),
            "numpy_version": np.__version__}
    meta.update(meta_extra)
    for key, value in _plan_echo(plan).items():
        meta[f"plan.{key}"] = value
    with open(meta_path, "w", encoding="utf-8", newline="\n") as handle:
        for key, value in meta.items():
            handle.write(f"{key} = {value}\n")

    figure_paths: tuple[str, ...] = ()
    if plan.render_figures:
        from .figures import render_plan_figures
        figure_paths = tuple(str(p) for p in render_plan_figures(
            plan.kind, [str(p) for p in csv_paths]))

    return PlanOutcome(tuple(str(p) for p in csv_paths), str(meta_path),
                       figure_paths, len(collector.rows), collector.failures)
