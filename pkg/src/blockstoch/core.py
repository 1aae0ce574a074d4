"""Block-parallel stochastic optimization engine.

The solver maintains a gradient tracker h that blends each iteration's
mini-batch sample gradient into a running convex combination, then moves
every block through a proximal step (projection of a scaled tracker step
onto the block's feasible set).  Block updates within one iteration are
mutually independent and may run on a thread pool without changing the
result.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

import numpy as np

from .schedules import Schedule

Vector = np.ndarray


class NumericalFailureError(RuntimeError):
    """A non-finite gradient or iterate appeared mid-run."""

    def __init__(self, k: int, block: int, what: str):
        super().__init__(f"non-finite {what} at iteration {k}, block {block}")
        self.k = k
        self.block = block


class UnsupportedOperationError(RuntimeError):
    """The problem instance lacks an oracle this operation needs."""


def _as_vector(v, name: str) -> Vector:
    out = np.asarray(v, dtype=np.float64)
    if out.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {out.shape}")
    return out


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Unconstrained:
    """Whole space R^dim.  Permitted even though it is not compact; the
    linear-SVM application needs it."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")

    def project(self, p) -> Vector:
        p = _as_vector(p, "point")
        if p.size != self.dim:
            raise ValueError(f"point has dim {p.size}, set has dim {self.dim}")
        return p.copy()

    def contains(self, p, tol: float = 0.0) -> bool:
        return np.asarray(p).size == self.dim

    def centroid(self) -> Vector:
        return np.zeros(self.dim)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box {p : lower <= p <= upper}.

    Infinite bounds are accepted (a relaxation of compactness, like
    Unconstrained); clamping handles them transparently.
    """

    lower: Vector
    upper: Vector

    def __post_init__(self):
        lo = _as_vector(self.lower, "lower")
        hi = _as_vector(self.upper, "upper")
        if lo.size != hi.size:
            raise ValueError("lower and upper must have equal length")
        if np.any(lo > hi):
            raise ValueError("box requires lower[i] <= upper[i] for all i")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, p) -> Vector:
        p = _as_vector(p, "point")
        if p.size != self.dim:
            raise ValueError(f"point has dim {p.size}, set has dim {self.dim}")
        return np.clip(p, self.lower, self.upper)

    def contains(self, p, tol: float = 1e-12) -> bool:
        p = np.asarray(p)
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def centroid(self) -> Vector:
        # Midpoint where both bounds are finite, else the finite bound, else 0.
        lo, hi = self.lower, self.upper
        mid = np.where(np.isfinite(lo) & np.isfinite(hi), (lo + hi) / 2.0, 0.0)
        mid = np.where(np.isfinite(lo) & ~np.isfinite(hi), lo, mid)
        mid = np.where(~np.isfinite(lo) & np.isfinite(hi), hi, mid)
        return mid


@dataclass(frozen=True)
class L2Ball:
    """Euclidean ball {p : ||p - center|| <= radius}."""

    center: Vector
    radius: float

    def __post_init__(self):
        c = _as_vector(self.center, "center")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    def project(self, p) -> Vector:
        p = _as_vector(p, "point")
        if p.size != self.dim:
            raise ValueError(f"point has dim {p.size}, set has dim {self.dim}")
        offset = p - self.center
        dist = float(np.linalg.norm(offset))
        if dist <= self.radius:
            return p.copy()
        return self.center + (self.radius / dist) * offset

    def contains(self, p, tol: float = 1e-12) -> bool:
        return float(np.linalg.norm(np.asarray(p) - self.center)) <= self.radius + tol

    def centroid(self) -> Vector:
        return self.center.copy()


FeasibleSet = Union[Unconstrained, Box, L2Ball]


def project(feasible_set: FeasibleSet, p) -> Vector:
    """Euclidean projection of p onto the set.

    Idempotent, and the identity on feasible points.  Closed forms:
    Unconstrained -> copy of p; Box -> per-coordinate clamp; L2Ball ->
    radial rescaling toward the center when outside.
    """
    return feasible_set.project(p)


# ---------------------------------------------------------------------------
# Problem description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockSpec:
    """Dimension and feasible set of one block of the joint variable."""

    dim: int
    feasible_set: FeasibleSet

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if self.feasible_set.dim != self.dim:
            raise ValueError(
                f"feasible set has dim {self.feasible_set.dim}, block says {self.dim}"
            )


@dataclass(frozen=True)
class ProblemInstance:
    """Stochastic objective oracle over a block-partitioned variable.

    The sampling contract: ``sample_draw(rng)`` returns an opaque token for
    one realization of the problem's randomness, and
    ``sample_grad(token, x, l)`` evaluates that realization's cost gradient
    over block ``l`` at the joint point ``x``.  Gradients must be unbiased
    estimates of the true gradient with bounded variance; the synthetic
    problems in :mod:`blockstoch.problems` satisfy this by construction and
    the test suite checks it statistically.

    ``sample_batch``/``batch_grad`` are optional vectorized equivalents
    (draw a whole batch at once / return the batch-mean block gradient);
    when absent they are derived from the single-sample procedures.  The
    engine only ever consumes batches, so providing the vectorized pair
    changes speed, never semantics.

    ``true_objective``/``true_gradient`` are optional exact oracles used
    for trace metrics and verification; ``x0`` is an optional preferred
    start point (the engine falls back to feasible-set centroids).
    """

    blocks: tuple[BlockSpec, ...]
    sample_draw: Callable[[np.random.Generator], Any]
    sample_grad: Callable[[Any, Vector, int], Vector]
    sample_batch: Optional[Callable[[np.random.Generator, int], Any]] = None
    batch_grad: Optional[Callable[[Any, Vector, int], Vector]] = None
    sample_value: Optional[Callable[[Any, Vector], float]] = None
    true_objective: Optional[Callable[[Vector], float]] = None
    true_gradient: Optional[Callable[[Vector], Vector]] = None
    x0: Optional[Vector] = None

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("problem needs at least one block")
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    @property
    def block_slices(self) -> tuple[slice, ...]:
        out, offset = [], 0
        for b in self.blocks:
            out.append(slice(offset, offset + b.dim))
            offset += b.dim
        return tuple(out)

    def project(self, x) -> Vector:
        """Project a joint vector onto the product of block sets."""
        x = _as_vector(x, "x")
        if x.size != self.dim:
            raise ValueError(f"x has dim {x.size}, problem has dim {self.dim}")
        out = x.copy()
        for spec, sl in zip(self.blocks, self.block_slices):
            out[sl] = spec.feasible_set.project(x[sl])
        return out

    def default_start(self) -> Vector:
        if self.x0 is not None:
            return self.project(self.x0)
        return np.concatenate([b.feasible_set.centroid() for b in self.blocks])

    def draw_batch(self, rng: np.random.Generator, size: int):
        if self.sample_batch is not None:
            return self.sample_batch(rng, size)
        return tuple(self.sample_draw(rng) for _ in range(size))

    def mean_block_grad(self, batch, x: Vector, l: int) -> Vector:
        """Arithmetic mean of the batch's sample gradients over block l."""
        if self.batch_grad is not None:
            return self.batch_grad(batch, x, l)
        parts = [np.asarray(self.sample_grad(tok, x, l), dtype=np.float64) for tok in batch]
        return np.mean(parts, axis=0)


# ---------------------------------------------------------------------------
# Run configuration and trace
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MaxIters:
    """Stop at max_iters only."""


@dataclass(frozen=True)
class StepNormBelow:
    """Stop once ||x^k - x^{k-1}|| / alpha_k <= eps."""

    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("termination eps must be positive")


Termination = Union[MaxIters, StepNormBelow]


@dataclass(frozen=True)
class RunConfig:
    schedule: Schedule = field(default_factory=Schedule)
    batch_size: int = 1
    max_iters: int = 1000
    seed: int = 0
    eval_every: int = 100
    termination: Termination = field(default_factory=MaxIters)
    n_workers: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.max_iters > 0 and self.eval_every > self.max_iters:
            raise ValueError("eval_every must not exceed max_iters")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    k: int
    objective: Optional[float]
    step_norm: float
    tracker_error: Optional[float]
    elapsed_ns: int


@dataclass
class SolverState:
    """Mutable state of one run: joint iterate, tracker, counter, RNG."""

    x: Vector
    h: Vector
    k: int
    rng: np.random.Generator


@dataclass(frozen=True)
class IterationInfo:
    """Read-only view handed to per-iteration callbacks.  The arrays are
    live views owned by the engine; copy before storing."""

    k: int
    omega: float
    alpha: float
    x: Vector
    x_prev: Vector
    h: Vector


# ---------------------------------------------------------------------------
# Elementary operations
# ---------------------------------------------------------------------------

def update_tracker(h_prev, g_batch, omega_k: float) -> Vector:
    """One tracker recursion step: (1 - omega_k) * h_prev + omega_k * g_batch.

    Inputs are left unmodified; a fresh array is returned.
    """
    h_prev = _as_vector(h_prev, "h_prev")
    g = _as_vector(g_batch, "g_batch")
    if h_prev.shape != g.shape:
        raise ValueError(f"layout mismatch: {h_prev.shape} vs {g.shape}")
    if not 0.0 < omega_k <= 1.0:
        raise ValueError(f"omega_k must lie in (0, 1], got {omega_k}")
    return (1.0 - omega_k) * h_prev + omega_k * g


def explicit_weights(omegas) -> Vector:
    """Per-sample weights of the tracker's equivalent explicit sum.

    Given omega_1..omega_k with omega_1 = 1, returns w[i] =
    omega_i * prod_{j>i} (1 - omega_j), so that the recursively updated
    tracker equals sum_i w[i] * g_i for any gradient stream g_1..g_k.
    The weights always sum to 1 (telescoping), up to roundoff.
    """
    om = np.asarray(omegas, dtype=np.float64)
    if om.ndim != 1 or om.size == 0:
        raise ValueError("omegas must be a non-empty 1-D sequence")
    if om[0] != 1.0:
        raise ValueError("first mixing weight must be exactly 1")
    if np.any(om <= 0.0) or np.any(om > 1.0):
        raise ValueError("all mixing weights must lie in (0, 1]")
    suffix = np.ones_like(om)
    if om.size > 1:
        suffix[:-1] = np.cumprod((1.0 - om)[:0:-1])[::-1]
    return om * suffix


def minimize_surrogate(x_prev_l, h_l, alpha_k: float, feasible_set: FeasibleSet) -> Vector:
    """Minimize the per-block proximal-quadratic surrogate over the set.

    The surrogate ||x - x_prev||^2 / (2 alpha) + <h, x - x_prev> has the
    unique constrained minimizer project(set, x_prev - alpha * h), which is
    what this returns.  The step obeys ||result - x_prev|| <= 2 alpha ||h||.
    """
    if not alpha_k > 0:
        raise ValueError(f"alpha_k must be positive, got {alpha_k}")
    x_prev_l = _as_vector(x_prev_l, "x_prev_l")
    h_l = _as_vector(h_l, "h_l")
    if x_prev_l.shape != h_l.shape:
        raise ValueError(f"layout mismatch: {x_prev_l.shape} vs {h_l.shape}")
    return project(feasible_set, x_prev_l - alpha_k * h_l)


def stationarity_residual(problem: ProblemInstance, x, alpha_probe: float) -> float:
    """Projected-gradient fixed-point gap ||x - P_X(x - a grad F(x))|| / a.

    Zero exactly at first-order stationary points.  Requires the problem's
    true_gradient oracle.
    """
    if not alpha_probe > 0:
        raise ValueError("alpha_probe must be positive")
    if problem.true_gradient is None:
        raise UnsupportedOperationError("stationarity residual needs true_gradient")
    x = _as_vector(x, "x")
    g = np.asarray(problem.true_gradient(x), dtype=np.float64)
    moved = problem.project(x - alpha_probe * g)
    return float(np.linalg.norm(x - moved)) / alpha_probe


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------

def _make_record(problem: ProblemInstance, k: int, x: Vector, h: Optional[Vector],
                 step_norm: float, started_ns: int) -> TraceRecord:
    objective = None
    if problem.true_objective is not None:
        objective = float(problem.true_objective(x))
    tracker_error = None
    if h is not None and problem.true_gradient is not None:
        g = np.asarray(problem.true_gradient(x), dtype=np.float64)
        tracker_error = float(np.linalg.norm(h - g))
    return TraceRecord(
        k=k,
        objective=objective,
        step_norm=step_norm,
        tracker_error=tracker_error,
        elapsed_ns=time.perf_counter_ns() - started_ns,
    )


def run(problem: ProblemInstance, config: RunConfig, x0=None,
        iteration_callback: Optional[Callable[[IterationInfo], None]] = None,
        sample_log: Optional[list] = None,
        ) -> tuple[Vector, list[TraceRecord]]:
    """Run the solver and return (final joint iterate, trace records).

    Per iteration: the coordinator draws the mini-batch once, then every
    block independently folds the batch-mean sample gradient into its
    tracker and takes the projected proximal step.  With
    ``config.n_workers > 1`` the block updates run on a thread pool;
    results are identical for any worker count because blocks read shared
    state and write disjoint slices.  Deterministic for a fixed seed.

    An infeasible start is projected at entry.  ``sample_log``, when given,
    collects the first 100 drawn batch tokens (for sample-stream audits).
    """
    slices = problem.block_slices
    n_blocks = len(problem.blocks)
    dims = [b.dim for b in problem.blocks]

    if x0 is not None:
        x_start = problem.project(x0)
    else:
        x_start = problem.default_start()

    state = SolverState(
        x=x_start,
        h=np.zeros(problem.dim),
        k=0,
        rng=np.random.default_rng(config.seed),
    )
    trace: list[TraceRecord] = []
    started_ns = time.perf_counter_ns()
    schedule = config.schedule
    term = config.termination

    pool = None
    if config.n_workers > 1 and n_blocks > 1:
        pool = ThreadPoolExecutor(max_workers=min(config.n_workers, n_blocks))
    try:
        for k in range(1, config.max_iters + 1):
            omega_k = schedule.omega(k)
            alpha_k = schedule.alpha(k)
            batch = problem.draw_batch(state.rng, config.batch_size)
            if sample_log is not None and len(sample_log) < 100:
                sample_log.append(np.array(batch) if isinstance(batch, np.ndarray) else batch)

            x_prev = state.x
            x_next = x_prev.copy()
            h = state.h

            def update_block(l: int) -> None:
                sl = slices[l]
                g = np.asarray(problem.mean_block_grad(batch, x_prev, l), dtype=np.float64)
                if g.shape != (dims[l],):
                    raise ValueError(
                        f"block {l} gradient has shape {g.shape}, expected ({dims[l]},)"
                    )
                if not np.all(np.isfinite(g)):
                    raise NumericalFailureError(k, l, "sample gradient")
                h[sl] = (1.0 - omega_k) * h[sl] + omega_k * g
                x_next[sl] = problem.blocks[l].feasible_set.project(x_prev[sl] - alpha_k * h[sl])
                if not np.all(np.isfinite(x_next[sl])):
                    raise NumericalFailureError(k, l, "iterate")

            if pool is None:
                for l in range(n_blocks):
                    update_block(l)
            else:
                # list() forces completion and re-raises worker exceptions.
                list(pool.map(update_block, range(n_blocks)))

            step_norm = float(np.linalg.norm(x_next - x_prev))
            state.x = x_next
            state.k = k

            if iteration_callback is not None:
                iteration_callback(IterationInfo(
                    k=k, omega=omega_k, alpha=alpha_k, x=x_next, x_prev=x_prev, h=h,
                ))

            stopping = isinstance(term, StepNormBelow) and step_norm / alpha_k <= term.eps
            if k % config.eval_every == 0 or k == config.max_iters or stopping:
                trace.append(_make_record(problem, k, x_next, h, step_norm, started_ns))
            if stopping:
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    return state.x, trace
