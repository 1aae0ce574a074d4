"""Concrete problem instances: analytic synthetics for verification and the
sparse linear SVM used by the benchmark harness."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from .core import (
    BlockSpec,
    Box,
    FeasibleSet,
    L2Ball,
    ProblemInstance,
    Unconstrained,
    Vector,
)


def even_partition(n: int, n_blocks: int) -> tuple[tuple[int, int], ...]:
    """Split 0..n into n_blocks contiguous near-equal ranges."""
    if not 1 <= n_blocks <= n:
        raise ValueError(f"need 1 <= n_blocks <= {n}, got {n_blocks}")
    bounds = np.linspace(0, n, n_blocks + 1).astype(int)
    return tuple((int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]))


# ---------------------------------------------------------------------------
# Sparse SVM data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SparseExample:
    """One training example: sparse feature vector plus a +/-1 label."""

    indices: np.ndarray
    values: np.ndarray
    label: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.ndim != 1 or val.ndim != 1 or idx.size != val.size:
            raise ValueError("indices and values must be 1-D and equally long")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise ValueError("indices must be non-negative and strictly increasing")
        if np.any(val == 0.0):
            raise ValueError("explicit zero values are not stored")
        if self.label not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.label}")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "label", int(self.label))


@dataclass(eq=False)
class SvmDataset:
    examples: list[SparseExample]
    num_features: int
    name: str = ""

    def __post_init__(self):
        if not self.examples:
            raise ValueError("dataset must contain at least one example")
        if self.num_features < 1:
            raise ValueError("num_features must be positive")
        for i, ex in enumerate(self.examples):
            if ex.indices.size and ex.indices[-1] >= self.num_features:
                raise ValueError(
                    f"example {i} uses feature {ex.indices[-1]}, "
                    f"but num_features={self.num_features}"
                )

    @property
    def m(self) -> int:
        return len(self.examples)

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array([ex.label for ex in self.examples], dtype=np.float64)

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        indptr = np.zeros(self.m + 1, dtype=np.int64)
        for i, ex in enumerate(self.examples):
            indptr[i + 1] = indptr[i] + ex.indices.size
        if indptr[-1]:
            indices = np.concatenate([ex.indices for ex in self.examples])
            values = np.concatenate([ex.values for ex in self.examples])
        else:
            indices = np.zeros(0, dtype=np.int64)
            values = np.zeros(0, dtype=np.float64)
        return sparse.csr_matrix(
            (values, indices, indptr), shape=(self.m, self.num_features)
        )

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    def sparsity_percent(self) -> float:
        """Share of stored entries, in percent of the full m*n grid."""
        return 100.0 * self.nnz / (self.m * self.num_features)


def svm_sample_grad(w, ex: SparseExample, lam: float) -> Vector:
    """Single-sample (sub)gradient of the regularized hinge cost.

    Returns lam*w when the example clears the margin strictly
    (y <x, w> > 1), else lam*w - y*x.  The boundary y <x, w> = 1 takes the
    active-side subgradient (non-strict <=).
    """
    w = np.asarray(w, dtype=np.float64)
    if ex.indices.size and ex.indices[-1] >= w.size:
        raise ValueError("example dimension exceeds weight vector")
    g = lam * w
    margin = ex.label * float(ex.values @ w[ex.indices])
    if margin <= 1.0:
        g[ex.indices] -= ex.label * ex.values
    return g


def svm_objective(w, ds: SvmDataset, lam: float) -> float:
    """Regularized mean hinge loss (lam/2)||w||^2 + mean_i max(0, 1 - y_i <x_i, w>)."""
    w = np.asarray(w, dtype=np.float64)
    margins = ds.labels * (ds.matrix @ w)
    hinge = np.maximum(0.0, 1.0 - margins)
    return 0.5 * lam * float(w @ w) + float(hinge.mean())


def svm_true_gradient(w, ds: SvmDataset, lam: float) -> Vector:
    """Full-dataset (sub)gradient of svm_objective; active side at the kink."""
    w = np.asarray(w, dtype=np.float64)
    margins = ds.labels * (ds.matrix @ w)
    coeff = np.where(margins <= 1.0, ds.labels, 0.0)
    return lam * w - (ds.matrix.T @ coeff) / ds.m


def svm_accuracy(w, ds: SvmDataset) -> float:
    """Fraction of examples whose score sign matches the label.

    A zero inner product counts as misclassified.
    """
    scores = ds.matrix @ np.asarray(w, dtype=np.float64)
    return float(np.mean(scores * ds.labels > 0.0))


@dataclass(frozen=True)
class SvmProblem:
    """Sparse linear SVM over a dataset, with the weight vector split into
    contiguous feature blocks.  Blocks are unconstrained (documented
    relaxation of compactness); the canonical start point is all-ones."""

    dataset: SvmDataset
    lam: float
    block_ranges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        ranges = self.block_ranges or even_partition(self.dataset.num_features, 1)
        ranges = tuple((int(a), int(b)) for a, b in ranges)
        expected = 0
        for a, b in ranges:
            if a != expected or b <= a:
                raise ValueError("block ranges must be contiguous, disjoint, covering")
            expected = b
        if expected != self.dataset.num_features:
            raise ValueError("block ranges must cover all features")
        object.__setattr__(self, "block_ranges", ranges)

    @classmethod
    def with_blocks(cls, dataset: SvmDataset, lam: float, n_blocks: int) -> "SvmProblem":
        return cls(dataset, lam, even_partition(dataset.num_features, n_blocks))

    def instance(self) -> ProblemInstance:
        ds = self.dataset
        lam = self.lam
        ranges = self.block_ranges
        m = ds.m

        def sample_draw(rng):
            return int(rng.integers(0, m))

        def sample_batch(rng, size):
            return rng.integers(0, m, size=size)

        def sample_grad(token, x, l):
            return self._block_grad([int(token)], x, l)

        def batch_grad(batch, x, l):
            return self._block_grad([int(i) for i in np.atleast_1d(batch)], x, l)

        def sample_value(token, x):
            ex = ds.examples[int(token)]
            x = np.asarray(x, dtype=np.float64)
            margin = ex.label * float(ex.values @ x[ex.indices])
            return 0.5 * lam * float(x @ x) + max(0.0, 1.0 - margin)

        blocks = tuple(BlockSpec(b - a, Unconstrained(b - a)) for a, b in ranges)
        return ProblemInstance(
            blocks=blocks,
            sample_draw=sample_draw,
            sample_grad=sample_grad,
            sample_batch=sample_batch,
            batch_grad=batch_grad,
            sample_value=sample_value,
            true_objective=lambda x: svm_objective(x, ds, lam),
            true_gradient=lambda x: svm_true_gradient(x, ds, lam),
            x0=np.ones(ds.num_features),
        )

    def _block_grad(self, tokens: Sequence[int], x, l: int) -> Vector:
        start, stop = self.block_ranges[l]
        x = np.asarray(x, dtype=np.float64)
        g = self.lam * x[start:stop]
        for i in tokens:
            ex = self.dataset.examples[i]
            margin = ex.label * float(ex.values @ x[ex.indices])
            if margin <= 1.0:
                inside = (ex.indices >= start) & (ex.indices < stop)
                g[ex.indices[inside] - start] -= (ex.label / len(tokens)) * ex.values[inside]
        return g


def make_separable_dataset(m: int, n: int, margin: float = 0.5, seed: int = 0,
                           name: str = "separable") -> tuple[SvmDataset, Vector]:
    """Plant a unit normal w* and draw m examples with y <x, w*> >= margin.

    Returns the dataset and the planted separator.  Deterministic per seed.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    if not margin > 0:
        raise ValueError("margin must be positive")
    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(n)
    w_star /= np.linalg.norm(w_star)
    features = rng.standard_normal((m, n))
    scores = features @ w_star
    labels = np.where(scores >= 0, 1, -1)
    # Push margin violators out along w*, with random extra slack so they
    # spread over [margin, 2*margin] instead of piling up on the shell.
    deficit = np.maximum(0.0, margin - labels * scores)
    slack = np.where(deficit > 0, margin * rng.random(m), 0.0)
    features += (labels * (deficit + slack))[:, None] * w_star[None, :]
    examples = [
        SparseExample(np.arange(n, dtype=np.int64), features[i], int(labels[i]))
        for i in range(m)
    ]
    return SvmDataset(examples, num_features=n, name=name), w_star


# ---------------------------------------------------------------------------
# Synthetic analytic problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticProblem:
    """Separable stochastic quadratic: f(x, z) = 1/2 sum_j c_j (x_j - z_j)^2
    with z ~ N(target, noise_stddev^2 I).

    The expectation F(x) = 1/2 sum_j c_j ((x_j - target_j)^2 + sigma^2) and
    its gradient c * (x - target) are available in closed form, as is the
    constrained optimum for box-type sets, which makes this the main
    verification oracle.
    """

    target: Vector
    curvature: Vector
    noise_stddev: float
    blocks: tuple[BlockSpec, ...]

    def __post_init__(self):
        mu = np.asarray(self.target, dtype=np.float64)
        c = np.asarray(self.curvature, dtype=np.float64)
        if mu.shape != c.shape or mu.ndim != 1:
            raise ValueError("target and curvature must be 1-D with equal shape")
        if np.any(c <= 0):
            raise ValueError("curvature must be strictly positive")
        if self.noise_stddev < 0:
            raise ValueError("noise_stddev must be >= 0")
        if sum(b.dim for b in self.blocks) != mu.size:
            raise ValueError("block dims must sum to the problem dimension")
        object.__setattr__(self, "target", mu)
        object.__setattr__(self, "curvature", c)
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def dim(self) -> int:
        return self.target.size

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        offsets = x - self.target
        return 0.5 * float(self.curvature @ (offsets * offsets)) \
            + 0.5 * self.noise_stddev ** 2 * float(self.curvature.sum())

    def gradient(self, x) -> Vector:
        return self.curvature * (np.asarray(x, dtype=np.float64) - self.target)

    def optimum(self) -> Vector:
        """Constrained minimizer, available analytically.

        The objective is separable per coordinate, so box bounds clamp the
        target coordinate-wise for any diagonal curvature.  Ball blocks are
        supported only with isotropic curvature (plain projection).
        """
        out = np.empty(self.dim)
        offset = 0
        for spec in self.blocks:
            sl = slice(offset, offset + spec.dim)
            fs = spec.feasible_set
            if isinstance(fs, (Unconstrained, Box)):
                out[sl] = fs.project(self.target[sl])
            elif isinstance(fs, L2Ball):
                c_block = self.curvature[sl]
                if not np.allclose(c_block, c_block[0]):
                    raise ValueError("ball-constrained optimum needs isotropic curvature")
                out[sl] = fs.project(self.target[sl])
            else:
                raise ValueError(f"unsupported feasible set {type(fs).__name__}")
            offset += spec.dim
        return out

    def optimal_value(self) -> float:
        return self.objective(self.optimum())

    def instance(self) -> ProblemInstance:
        mu, c, sigma = self.target, self.curvature, self.noise_stddev
        bounds = np.concatenate(([0], np.cumsum([b.dim for b in self.blocks])))
        slices = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]

        def sample_draw(rng):
            return mu + sigma * rng.standard_normal(mu.size)

        def sample_batch(rng, size):
            return mu[None, :] + sigma * rng.standard_normal((size, mu.size))

        def sample_grad(z, x, l):
            sl = slices[l]
            return c[sl] * (np.asarray(x)[sl] - np.asarray(z)[sl])

        def batch_grad(z_batch, x, l):
            sl = slices[l]
            return c[sl] * (np.asarray(x)[sl] - np.asarray(z_batch)[:, sl].mean(axis=0))

        def sample_value(z, x):
            offsets = np.asarray(x, dtype=np.float64) - np.asarray(z, dtype=np.float64)
            return 0.5 * float(c @ (offsets * offsets))

        return ProblemInstance(
            blocks=self.blocks,
            sample_draw=sample_draw,
            sample_grad=sample_grad,
            sample_batch=sample_batch,
            batch_grad=batch_grad,
            sample_value=sample_value,
            true_objective=self.objective,
            true_gradient=self.gradient,
        )


def make_quadratic(dim: int, noise_stddev: float = 1.0, target=None, curvature=None,
                   n_blocks: int = 1,
                   feasible_sets: Optional[Sequence[FeasibleSet]] = None,
                   ) -> QuadraticProblem:
    """Build a QuadraticProblem with contiguous near-equal blocks.

    Defaults: target 0, unit curvature, unconstrained blocks.
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    mu = np.zeros(dim) if target is None else np.asarray(target, dtype=np.float64)
    c = np.ones(dim) if curvature is None else np.asarray(curvature, dtype=np.float64)
    ranges = even_partition(dim, n_blocks)
    if feasible_sets is None:
        sets: list[FeasibleSet] = [Unconstrained(b - a) for a, b in ranges]
    else:
        sets = list(feasible_sets)
        if len(sets) != len(ranges):
            raise ValueError(f"need {len(ranges)} feasible sets, got {len(sets)}")
    blocks = tuple(BlockSpec(b - a, fs) for (a, b), fs in zip(ranges, sets))
    return QuadraticProblem(mu, c, noise_stddev, blocks)


def make_nonconvex_toy(noise_stddev: float = 1.0) -> ProblemInstance:
    """2-D smooth nonconvex test problem over the box [-2, 2]^2.

    F(x) = (x1^2 - 1)^2 + x2^2, sampled as f(x, z) = F(x) + <z, x> with
    z ~ N(0, noise_stddev^2 I).  Stationary points sit at x1 in {-1, 0, 1},
    x2 = 0; the two pits at x1 = +/-1 are strict local minima.
    """
    sigma = float(noise_stddev)
    box = Box(np.array([-2.0, -2.0]), np.array([2.0, 2.0]))

    def true_objective(x):
        x = np.asarray(x, dtype=np.float64)
        return float((x[0] ** 2 - 1.0) ** 2 + x[1] ** 2)

    def true_gradient(x):
        x = np.asarray(x, dtype=np.float64)
        return np.array([4.0 * x[0] * (x[0] ** 2 - 1.0), 2.0 * x[1]])

    def sample_draw(rng):
        return sigma * rng.standard_normal(2)

    def sample_batch(rng, size):
        return sigma * rng.standard_normal((size, 2))

    def sample_grad(z, x, l):
        return true_gradient(x) + np.asarray(z)

    def batch_grad(z_batch, x, l):
        return true_gradient(x) + np.asarray(z_batch).mean(axis=0)

    def sample_value(z, x):
        return true_objective(x) + float(np.asarray(z) @ np.asarray(x))

    return ProblemInstance(
        blocks=(BlockSpec(2, box),),
        sample_draw=sample_draw,
        sample_grad=sample_grad,
        sample_batch=sample_batch,
        batch_grad=batch_grad,
        sample_value=sample_value,
        true_objective=true_objective,
        true_gradient=true_gradient,
    )
