"""Reference optimizers for the benchmark comparisons.

Three baselines: Pegasos-style single-sample SGD for the SVM, bias-corrected
Adam, and an iterate-averaged variant of the block solver (same inner
proximal update, but the reported point is a vanishing-weight running
average -- a reference implementation of the averaging behavior, not of any
specific published method in full generality).

All run loops draw mini-batches through the problem's own sampling layer,
so for a fixed seed and batch size every method here consumes the exact
sample stream of :func:`blockstoch.core.run`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import (
    NumericalFailureError,
    ProblemInstance,
    RunConfig,
    TraceRecord,
    Unconstrained,
    Vector,
    _make_record,
)
from .problems import SparseExample, SvmProblem


@dataclass(frozen=True)
class AdamParams:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class BaselineConfig:
    """Which baseline to run, with its method-specific knobs.

    ``lam`` (pegasos) defaults to the SVM problem's own regularizer;
    ``rho_avg`` (avg-sca) is the averaging-weight exponent, which must
    exceed the schedule's alpha exponent so the weight vanishes faster than
    the step size.  rho_avg = 0.0 pins the weight to 1, making the method
    coincide with the core iterate (used for equivalence checks).
    """

    kind: str
    run: RunConfig
    lam: Optional[float] = None
    adam: AdamParams = field(default_factory=AdamParams)
    rho_avg: float = 1.0

    def __post_init__(self):
        if self.kind not in ("pegasos", "adam", "avg-sca"):
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.kind == "avg-sca" and self.rho_avg != 0.0:
            rho_alpha = getattr(self.run.schedule, "alpha_exponent", None)
            if rho_alpha is not None and not self.rho_avg > rho_alpha:
                raise ValueError(
                    f"rho_avg={self.rho_avg} must exceed the schedule's "
                    f"alpha exponent {rho_alpha} (or be 0 to pin the weight)"
                )


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------

def pegasos_step(w, ex: SparseExample, lam: float, t: int) -> Vector:
    """One Pegasos update with step size eta_t = 1/(lam t).

    w' = (1 - 1/t) w + eta_t y x when the example violates the margin
    (strict y<x,w> < 1, this method's convention), else the pure shrink.
    At t = 1 the shrink factor is exactly zero, so w' is independent of w.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if not lam > 0:
        raise ValueError("lam must be positive")
    w = np.asarray(w, dtype=np.float64)
    out = (1.0 - 1.0 / t) * w
    margin = ex.label * float(ex.values @ w[ex.indices])
    if margin < 1.0:
        out[ex.indices] += (ex.label / (lam * t)) * ex.values
    return out


def adam_step(w, g, m, v, t: int, params: AdamParams = AdamParams(),
              project=None) -> tuple[Vector, Vector, Vector]:
    """One bias-corrected Adam update; returns (w', m', v').

    A zero gradient with zero moments leaves w unchanged for every t.  When
    ``project`` is given the updated point is projected back onto the
    feasible set.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    w = np.asarray(w, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if w.shape != g.shape:
        raise ValueError(f"layout mismatch: {w.shape} vs {g.shape}")
    m2 = params.beta1 * m + (1.0 - params.beta1) * g
    v2 = params.beta2 * v + (1.0 - params.beta2) * g * g
    m_hat = m2 / (1.0 - params.beta1 ** t)
    v_hat = v2 / (1.0 - params.beta2 ** t)
    w2 = w - params.lr * m_hat / (np.sqrt(v_hat) + params.eps)
    if project is not None:
        w2 = project(w2)
    return w2, m2, v2


def averaging_weight(k: int, rho_avg: float) -> float:
    """Vanishing averaging weight rho_k = k^-rho_avg with rho_1 = 1; a zero
    exponent pins the weight to 1 (no averaging)."""
    if k == 1 or rho_avg == 0.0:
        return 1.0
    return float(k) ** (-rho_avg)


# ---------------------------------------------------------------------------
# Full runs (shared sampling layer, shared trace cadence)
# ---------------------------------------------------------------------------

def _should_record(k: int, config: RunConfig) -> bool:
    return k % config.eval_every == 0 or k == config.max_iters


def _log_batch(sample_log, batch) -> None:
    if sample_log is not None and len(sample_log) < 100:
        sample_log.append(np.array(batch) if isinstance(batch, np.ndarray) else batch)


def run_pegasos(problem: SvmProblem, config: RunConfig,
                sample_log: Optional[list] = None) -> tuple[Vector, list[TraceRecord]]:
    """Pegasos on the SVM problem; outputs the LAST weight vector.

    The full mini-batch is drawn every iteration to keep the sample stream
    aligned with the other methods, but only the first token is consumed
    (mini-batch Pegasos is out of scope).  The original method's optional
    ball projection is omitted.
    """
    inst = problem.instance()
    w = inst.default_start()
    rng = np.random.default_rng(config.seed)
    trace: list[TraceRecord] = []
    started_ns = time.perf_counter_ns()
    for t in range(1, config.max_iters + 1):
        batch = inst.draw_batch(rng, config.batch_size)
        _log_batch(sample_log, batch)
        token = int(np.atleast_1d(batch)[0])
        w_prev = w
        w = pegasos_step(w, problem.dataset.examples[token], problem.lam, t)
        if _should_record(t, config):
            step_norm = float(np.linalg.norm(w - w_prev))
            trace.append(_make_record(inst, t, w, None, step_norm, started_ns))
    return w, trace


def run_adam(problem: Union[ProblemInstance, SvmProblem], config: RunConfig,
             params: AdamParams = AdamParams(),
             sample_log: Optional[list] = None) -> tuple[Vector, list[TraceRecord]]:
    """Adam on the batch-mean stochastic gradient, projected when constrained."""
    inst = problem.instance() if isinstance(problem, SvmProblem) else problem
    w = inst.default_start()
    m = np.zeros(inst.dim)
    v = np.zeros(inst.dim)
    slices = inst.block_slices
    constrained = any(not isinstance(b.feasible_set, Unconstrained) for b in inst.blocks)
    project = inst.project if constrained else None
    rng = np.random.default_rng(config.seed)
    trace: list[TraceRecord] = []
    started_ns = time.perf_counter_ns()
    for t in range(1, config.max_iters + 1):
        batch = inst.draw_batch(rng, config.batch_size)
        _log_batch(sample_log, batch)
        g = np.empty(inst.dim)
        for l, sl in enumerate(slices):
            g[sl] = inst.mean_block_grad(batch, w, l)
            if not np.all(np.isfinite(g[sl])):
                raise NumericalFailureError(t, l, "sample gradient")
        w_prev = w
        w, m, v = adam_step(w, g, m, v, t, params, project)
        if _should_record(t, config):
            step_norm = float(np.linalg.norm(w - w_prev))
            trace.append(_make_record(inst, t, w, None, step_norm, started_ns))
    return w, trace


def run_averaged_sca(problem: Union[ProblemInstance, SvmProblem], config: RunConfig,
                     rho_avg: float = 1.0,
                     sample_log: Optional[list] = None) -> tuple[Vector, list[TraceRecord]]:
    """The core block update plus vanishing-weight iterate averaging.

    The inner iterate follows exactly the tracked proximal update; the
    reported point is x_bar^k = (1 - rho_k) x_bar^{k-1} + rho_k x^k with
    rho_k = k^-rho_avg (rho_1 = 1).  Trace metrics are evaluated at the
    averaged point.  rho_avg = 0 pins rho_k = 1 and reproduces the core
    iterate exactly.
    """
    inst = problem.instance() if isinstance(problem, SvmProblem) else problem
    schedule = config.schedule
    slices = inst.block_slices
    x = inst.default_start()
    x_avg = x.copy()
    h = np.zeros(inst.dim)
    rng = np.random.default_rng(config.seed)
    trace: list[TraceRecord] = []
    started_ns = time.perf_counter_ns()
    for k in range(1, config.max_iters + 1):
        omega_k = schedule.omega(k)
        alpha_k = schedule.alpha(k)
        batch = inst.draw_batch(rng, config.batch_size)
        _log_batch(sample_log, batch)
        x_prev = x
        x = x_prev.copy()
        for l, sl in enumerate(slices):
            g = np.asarray(inst.mean_block_grad(batch, x_prev, l), dtype=np.float64)
            if not np.all(np.isfinite(g)):
                raise NumericalFailureError(k, l, "sample gradient")
            h[sl] = (1.0 - omega_k) * h[sl] + omega_k * g
            x[sl] = inst.blocks[l].feasible_set.project(x_prev[sl] - alpha_k * h[sl])
        rho_k = averaging_weight(k, rho_avg)
        x_avg_prev = x_avg
        x_avg = (1.0 - rho_k) * x_avg + rho_k * x
        if _should_record(k, config):
            step_norm = float(np.linalg.norm(x_avg - x_avg_prev))
            trace.append(_make_record(inst, k, x_avg, h, step_norm, started_ns))
    return x_avg, trace


def run_baseline(problem: Union[ProblemInstance, SvmProblem], cfg: BaselineConfig,
                 sample_log: Optional[list] = None) -> tuple[Vector, list[TraceRecord]]:
    """Dispatch a configured baseline on the given problem."""
    if cfg.kind == "pegasos":
        if not isinstance(problem, SvmProblem):
            raise TypeError("pegasos runs on SvmProblem only")
        if cfg.lam is not None and cfg.lam != problem.lam:
            problem = SvmProblem(problem.dataset, cfg.lam, problem.block_ranges)
        return run_pegasos(problem, cfg.run, sample_log)
    if cfg.kind == "adam":
        return run_adam(problem, cfg.run, cfg.adam, sample_log)
    return run_averaged_sca(problem, cfg.run, cfg.rho_avg, sample_log)
