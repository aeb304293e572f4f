"""Low-rank matrix completion from a sparse set of revealed entries.

The solver family here recovers an m x n matrix of rank r from a small
sample of its entries: trim overweight rows and columns, estimate the rank,
project the sparse matrix to rank r spectrally, then descend the cost on the
manifold of normalized factor pairs.  An incremental variant grows the rank
one direction at a time, which helps on ill-conditioned inputs.  Around the
solvers sit instance generators, evaluation metrics, ratings-file handling
and a benchmark CLI.
"""

from .errors import (
    CompletionError,
    ConvergenceError,
    DegenerateInputError,
    DimensionMismatchError,
    LowRankSystemWarning,
    PlanError,
    RatingsFormatError,
)
from .lanczos import CompositeOperator, SpectralSummary, truncated_svd
from .manifold import (
    FactorPair,
    FactorTriple,
    LineSearchResult,
    OptConfig,
    cost,
    gradient,
    line_search_step,
    retract,
    solve_core,
)
from .metrics import (
    RECONSTRUCTION_THRESHOLD,
    ExperimentResult,
    IncoherenceDiagnostic,
    incoherence_diagnostic,
    nmae,
    noise_ratio,
    oracle_rmse,
    rel_error,
    result_csv_header,
    rmse,
)
from .observed import (
    ObservedMatrix,
    ProblemShape,
    observed_frobenius,
    project_observed,
    read_matrix_market,
    write_matrix_market,
)
from .plans import ExperimentPlan, PlanOutcome, parse_plan_file, run_plan
from .preprocess import RankEstimate, TrimReport, estimate_rank, trim
from .ratings import (
    RatingsDataset,
    fixed_split,
    load_ratings,
    per_user_k,
    random_baseline,
    ratings_eval,
)
from .solvers import (
    CompletionResult,
    TraceEntry,
    incremental_optspace,
    optspace,
    spectral_initialization,
)
from .synth import (
    Instance,
    InstanceSpec,
    NoiseSpec,
    apply_noise,
    calibrate_noise_ratio,
    export_instance,
    generate_matrix,
    make_instance,
    noise_ratio_measured,
    quantize,
    sample_pattern,
)

__version__ = "0.1.0"

__all__ = [
    "CompletionError",
    "ConvergenceError",
    "DegenerateInputError",
    "DimensionMismatchError",
    "LowRankSystemWarning",
    "PlanError",
    "RatingsFormatError",
    "CompositeOperator",
    "SpectralSummary",
    "truncated_svd",
    "FactorPair",
    "FactorTriple",
    "LineSearchResult",
    "OptConfig",
    "cost",
    "gradient",
    "line_search_step",
    "retract",
    "solve_core",
    "RECONSTRUCTION_THRESHOLD",
    "ExperimentResult",
    "IncoherenceDiagnostic",
    "incoherence_diagnostic",
    "nmae",
    "noise_ratio",
    "oracle_rmse",
    "rel_error",
    "result_csv_header",
    "rmse",
    "ObservedMatrix",
    "ProblemShape",
    "observed_frobenius",
    "project_observed",
    "read_matrix_market",
    "write_matrix_market",
    "ExperimentPlan",
    "PlanOutcome",
    "parse_plan_file",
    "run_plan",
    "RankEstimate",
    "TrimReport",
    "estimate_rank",
    "trim",
    "RatingsDataset",
    "fixed_split",
    "load_ratings",
    "per_user_k",
    "random_baseline",
    "ratings_eval",
    "CompletionResult",
    "TraceEntry",
    "incremental_optspace",
    "optspace",
    "spectral_initialization",
    "Instance",
    "InstanceSpec",
    "NoiseSpec",
    "apply_noise",
    "calibrate_noise_ratio",
    "export_instance",
    "generate_matrix",
    "make_instance",
    "noise_ratio_measured",
    "quantize",
    "sample_pattern",
]
