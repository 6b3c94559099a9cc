"""sketchlr: input-sparsity-style rank-k approximation in Schatten norms.

The pipeline sketches the input, extracts a candidate row space from the
sketch, and recovers the left factor by sketched regression, giving factors
``(Y, Z)`` with ``||A - Y Z^T||_p`` close to the best rank-k error for every
Schatten p-norm (and a family of generalized singular-value losses). A dense
SVD oracle, a Frobenius baseline and an experiment harness round out the
package.
"""

from .harness import (
    ExperimentConfig,
    ParseError,
    SummaryRow,
    TrialRecord,
    emit_csv,
    generate_synthetic,
    load_matrix,
    read_summary_csv,
    read_trials_csv,
    run_experiment,
    summarize,
    write_matrix_market,
)
from .matrixcore import (
    ConvergenceError,
    LowRankFactors,
    MultiplyAddCounter,
    SparseMatrix,
    SvdResult,
    complete_basis,
    dense_sparse_multiply,
    orthonormal_rowspace,
    singular_values,
    sparse_dense_multiply,
    svd,
    truncate_rank,
)
from .norms import (
    ConditionReport,
    HuberLoss,
    L1L2Loss,
    LossSpec,
    ScalarLoss,
    TukeyPLoss,
    check_phi_conditions,
    cpe_constant,
    kyfan_pr_norm,
    parse_loss,
    phi_eval,
    phi_head,
    phi_objective,
    schatten_norm,
)
from .rng import RandomStream, generator_from_seed
from .sketches import (
    DEFAULT_CONSTANTS,
    CountSketchOperator,
    IdentitySketch,
    SamplingSketch,
    SketchConstants,
    SketchPlan,
    apply_column_sampler,
    apply_countsketch_left,
    apply_countsketch_right,
    apply_row_sampler,
    build_column_sampler,
    build_countsketch,
    build_row_sampler,
    build_row_sampler_T,
    make_sketch_plan,
    sample_count,
)
from .solver import (
    DiagnosticReport,
    OracleResult,
    RegressionResult,
    SolveReport,
    diagnose_kyfan_preservation,
    exact_oracle,
    relative_error_from,
    solve_frobenius_baseline,
    solve_generalized,
    solve_regression_sketched,
    solve_schatten,
)

__version__ = "0.1.0"

__all__ = [
    "ConditionReport",
    "ConvergenceError",
    "CountSketchOperator",
    "DEFAULT_CONSTANTS",
    "DiagnosticReport",
    "ExperimentConfig",
    "HuberLoss",
    "IdentitySketch",
    "L1L2Loss",
    "LossSpec",
    "LowRankFactors",
    "MultiplyAddCounter",
    "OracleResult",
    "ParseError",
    "RandomStream",
    "RegressionResult",
    "SamplingSketch",
    "ScalarLoss",
    "SketchConstants",
    "SketchPlan",
    "SolveReport",
    "SparseMatrix",
    "SummaryRow",
    "SvdResult",
    "TrialRecord",
    "TukeyPLoss",
    "apply_column_sampler",
    "apply_countsketch_left",
    "apply_countsketch_right",
    "apply_row_sampler",
    "build_column_sampler",
    "build_countsketch",
    "build_row_sampler",
    "build_row_sampler_T",
    "check_phi_conditions",
    "complete_basis",
    "cpe_constant",
    "dense_sparse_multiply",
    "diagnose_kyfan_preservation",
    "emit_csv",
    "exact_oracle",
    "generate_synthetic",
    "generator_from_seed",
    "kyfan_pr_norm",
    "load_matrix",
    "make_sketch_plan",
    "orthonormal_rowspace",
    "parse_loss",
    "phi_eval",
    "phi_head",
    "phi_objective",
    "read_summary_csv",
    "read_trials_csv",
    "relative_error_from",
    "run_experiment",
    "sample_count",
    "schatten_norm",
    "singular_values",
    "solve_frobenius_baseline",
    "solve_generalized",
    "solve_regression_sketched",
    "solve_schatten",
    "sparse_dense_multiply",
    "summarize",
    "svd",
    "truncate_rank",
    "write_matrix_market",
]
