"""Hyperparameter tuning for linear classifiers via bilevel programs.

The package trains soft-margin linear classifiers whose weight box is tuned
on a validation set, under either a best-case or a worst-case reading of ties
in the training problem. The worst-case variant prices validation labels that
the classifier could plausibly get wrong, which makes the tuned model robust
to evasion at prediction time. Everything runs on an in-house simplex and
branch-and-bound core.
"""

from .bilevel import (
    OptimisticSolution,
    PessimisticSolution,
    SolverOptions,
    TuningRun,
    build_optimistic_mip,
    build_pessimistic_mip,
    evaluate_worst_case,
    solve_optimistic,
    solve_pessimistic,
    tune,
)
from .errors import (
    BigMValidationError,
    ConstantColumnWarning,
    DatasetError,
    DegenerateClassWarning,
    DegenerateReference,
    EmptyFlipSet,
    InsufficientSamples,
    IterationWarning,
    MalformedProblem,
    MissingLabelColumn,
    NodeLimitExceeded,
    NumericalFailure,
    ParseError,
    PbtuneError,
    PbtuneWarning,
    SingleClassData,
)
from .lp import LinearProgram, LpSolution, check_solution, dump_lp, solve_lp
from .mip import MipProblem, MipSolution, solve_mip, validate_big_m
from .svm import (
    FLIP_MODES,
    FlipSets,
    HyperBounds,
    SvmModel,
    accuracy,
    compute_flip_sets,
    hinge_loss,
    mean_hinge_loss,
    train_inner_svm,
    zero_one_margin_loss,
)

__version__ = "0.1.0"

__all__ = [
    "BigMValidationError",
    "ConstantColumnWarning",
    "DatasetError",
    "DegenerateClassWarning",
    "DegenerateReference",
    "EmptyFlipSet",
    "FLIP_MODES",
    "FlipSets",
    "HyperBounds",
    "InsufficientSamples",
    "IterationWarning",
    "LinearProgram",
    "LpSolution",
    "MalformedProblem",
    "MipProblem",
    "MipSolution",
    "MissingLabelColumn",
    "NodeLimitExceeded",
    "NumericalFailure",
    "OptimisticSolution",
    "ParseError",
    "PbtuneError",
    "PbtuneWarning",
    "PessimisticSolution",
    "SingleClassData",
    "SolverOptions",
    "SvmModel",
    "TuningRun",
    "accuracy",
    "build_optimistic_mip",
    "build_pessimistic_mip",
    "check_solution",
    "compute_flip_sets",
    "dump_lp",
    "evaluate_worst_case",
    "hinge_loss",
    "mean_hinge_loss",
    "solve_lp",
    "solve_mip",
    "solve_optimistic",
    "solve_pessimistic",
    "train_inner_svm",
    "tune",
    "validate_big_m",
    "zero_one_margin_loss",
    "__version__",
]
