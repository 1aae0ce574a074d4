"""Block-parallel stochastic optimization with gradient tracking."""

from .core import (
    BlockSpec,
    Box,
    FeasibleSet,
    IterationInfo,
    L2Ball,
    MaxIters,
    NumericalFailureError,
    ProblemInstance,
    RunConfig,
    SolverState,
    StepNormBelow,
    TraceRecord,
    Unconstrained,
    UnsupportedOperationError,
    explicit_weights,
    minimize_surrogate,
    project,
    run,
    stationarity_residual,
    update_tracker,
)
from .schedules import Schedule, ScheduleError, SequenceSchedule
from .problems import (
    QuadraticProblem,
    SparseExample,
    SvmDataset,
    SvmProblem,
    even_partition,
    make_nonconvex_toy,
    make_quadratic,
    make_separable_dataset,
    svm_accuracy,
    svm_objective,
    svm_sample_grad,
    svm_true_gradient,
)
from .baselines import (
    AdamParams,
    BaselineConfig,
    adam_step,
    averaging_weight,
    pegasos_step,
    run_adam,
    run_averaged_sca,
    run_baseline,
    run_pegasos,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
