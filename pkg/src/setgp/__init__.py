"""Gaussian-process regression and Bayesian optimization on finite point sets."""

__version__ = "0.1.0"

from .errors import (
    ExhaustiveSingularityError,
    InputError,
    NumericalError,
    ParseError,
    PoolExhaustedError,
    SetGPError,
    SingularMatrixError,
    UndefinedError,
)
from .kernels import (
    DeepKernelParams,
    GroundSet,
    InnerKernelParams,
    JitterPolicy,
    KernelFamily,
    KernelSpec,
    PointSet,
    de_corr_grad,
    de_kernel,
    ds_gram_finite,
    ds_kernel,
    embed_distance,
    gram,
    inner_corr,
)
from .conditioning import condition_number, conditioning_jitter, jitter_bound
from .gp import GPModel, PredictionResult, SetDataset, concentrated_nll, fit, loo_residuals, predict, q2
from .hyperfit import FitConfig, FitReport, fit_hyperparams
from .bayesopt import (
    BOConfig,
    BOTrialRecord,
    CandidatePool,
    expected_improvement,
    propose,
    replicate,
    run_bo,
    run_random,
)
from .testbed import (
    CombinatorialProblem,
    SetObjective,
    branin,
    eval_combinatorial,
    eval_set_objective,
    generate_dataset,
    load_csv,
    split,
    write_csv,
)

__all__ = [
    "__version__",
    "ExhaustiveSingularityError",
    "InputError",
    "NumericalError",
    "ParseError",
    "PoolExhaustedError",
    "SetGPError",
    "SingularMatrixError",
    "UndefinedError",
    "DeepKernelParams",
    "GroundSet",
    "InnerKernelParams",
    "JitterPolicy",
    "KernelFamily",
    "KernelSpec",
    "PointSet",
    "de_corr_grad",
    "de_kernel",
    "ds_gram_finite",
    "ds_kernel",
    "embed_distance",
    "gram",
    "inner_corr",
    "condition_number",
    "jitter_bound",
    "conditioning_jitter",
    "GPModel",
    "PredictionResult",
    "SetDataset",
    "concentrated_nll",
    "fit",
    "loo_residuals",
    "predict",
    "q2",
    "FitConfig",
    "FitReport",
    "fit_hyperparams",
    "BOConfig",
    "BOTrialRecord",
    "CandidatePool",
    "expected_improvement",
    "propose",
    "replicate",
    "run_bo",
    "run_random",
    "CombinatorialProblem",
    "SetObjective",
    "branin",
    "eval_combinatorial",
    "eval_set_objective",
    "generate_dataset",
    "load_csv",
    "split",
    "write_csv",
]
