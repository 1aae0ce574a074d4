"""Command-line benchmark driver.

Three subcommands: ``run`` executes one optimizer on one problem and writes
a trace CSV plus a run manifest, ``compare`` executes all four optimizers
on the identical sample stream and adds a summary table, ``gen`` writes
synthetic problems to disk.  Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import os
import re
import shlex
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as dataio
from .baselines import AdamParams, run_adam, run_averaged_sca, run_pegasos
from .core import MaxIters, ProblemInstance, RunConfig, StepNormBelow, run
from .problems import (
    SvmProblem,
    make_nonconvex_toy,
    make_quadratic,
    make_separable_dataset,
    svm_accuracy,
)
from .schedules import Schedule, ScheduleError

METHODS = ("proposed", "pegasos", "adam", "avg-sca")

DEFAULT_LAMBDA = 1e-4
# Conventional regularizers for the two reference datasets.
DATASET_LAMBDA = {"cov1": 1e-6, "covtype": 1e-6, "rcv1": 1e-4}


class UsageError(Exception):
    """Bad flag combination or missing input file; exit code 2."""


# ---------------------------------------------------------------------------
# Problem resolution
# ---------------------------------------------------------------------------

def _resolve_lambda(args, dataset_name: str) -> float:
    if args.lam is not None:
        return args.lam
    lowered = dataset_name.lower()
    for key, lam in DATASET_LAMBDA.items():
        if key in lowered:
            return lam
    return DEFAULT_LAMBDA


_QUAD_SPEC = re.compile(r"^quad-d(\d+)(?:-s([0-9.eE+-]+))?$")


def _parse_synthetic(args) -> tuple[ProblemInstance, dict]:
    spec = args.synthetic
    extras = {"synthetic": spec}
    if Path(spec).is_file():
        entries = dataio.read_manifest(spec)
        kind = entries.get("kind", "")
        if kind == "quadratic":
            dim = int(entries["dim"])
            sigma = float(entries.get("sigma", 1.0))
        elif kind == "nonconvex-toy":
            return make_nonconvex_toy(float(entries.get("sigma", 1.0))), extras
        else:
            raise UsageError(f"--synthetic: {spec}: unknown problem kind {kind!r}")
    else:
        match = _QUAD_SPEC.match(spec)
        if match:
            dim = int(match.group(1))
            sigma = float(match.group(2)) if match.group(2) else 1.0
        elif spec in ("noncvx", "nonconvex-toy"):
            return make_nonconvex_toy(), extras
        else:
            raise UsageError(
                f"--synthetic: {spec!r} is not quad-d<dim>[-s<sigma>], "
                "noncvx, or a problem-spec file"
            )
    if dim < 1:
        raise UsageError("--synthetic: dimension must be positive")
    # All-ones target: the centroid start (zeros) is genuinely away from it.
    quad = make_quadratic(dim, noise_stddev=sigma, target=np.ones(dim),
                          n_blocks=max(1, min(args.blocks, dim)))
    extras["analytic_objective"] = repr(quad.optimal_value())
    return quad.instance(), extras


def _load_problem(args):
    """Returns (kind, problem, extras): kind "svm" with an SvmProblem, or
    kind "synthetic" with a ProblemInstance."""
    if (args.data is None) == (args.synthetic is None):
        raise UsageError("exactly one of --data and --synthetic is required")
    if args.data is None:
        instance, extras = _parse_synthetic(args)
        return "synthetic", instance, extras
    path = Path(args.data)
    if not path.is_file():
        raise UsageError(f"--data: no such file: {path}")
    ds = dataio.load_libsvm(path, num_features=args.features,
                            remap_zero_one=args.remap_labels)
    if args.subsample is not None:
        ds = dataio.subsample(ds, args.subsample, args.subsample_seed)
    lam = _resolve_lambda(args, ds.name)
    problem = SvmProblem.with_blocks(ds, lam, max(1, min(args.blocks, ds.num_features)))
    extras = {
        "dataset_path": str(path),
        "dataset_checksum": dataio.dataset_checksum(path),
        "dataset_name": ds.name,
        "m": ds.m,
        "num_features": ds.num_features,
        "lambda": repr(lam),
    }
    return "svm", problem, extras


def _load_test_set(args, train_features: int):
    if args.test_data is None:
        return None
    path = Path(args.test_data)
    if not path.is_file():
        raise UsageError(f"--test-data: no such file: {path}")
    return dataio.load_libsvm(path, num_features=train_features,
                              remap_zero_one=args.remap_labels)


def _build_config(args) -> RunConfig:
    schedule = Schedule(args.rho_omega, args.rho_alpha, args.alpha_scale)
    termination = StepNormBelow(args.term_eps) if args.term_eps is not None else MaxIters()
    return RunConfig(
        schedule=schedule,
        batch_size=args.batch,
        max_iters=args.iters,
        seed=args.seed,
        eval_every=args.eval_every,
        termination=termination,
        n_workers=args.workers,
    )


# ---------------------------------------------------------------------------
# Single-method execution
# ---------------------------------------------------------------------------

def _run_method(method: str, kind: str, problem, config: RunConfig, args, sample_log):
    if method == "proposed":
        instance = problem.instance() if kind == "svm" else problem
        return run(instance, config, sample_log=sample_log)
    if method == "pegasos":
        if kind != "svm":
            raise UsageError("--method pegasos needs an SVM problem (--data)")
        return run_pegasos(problem, config, sample_log=sample_log)
    if method == "adam":
        return run_adam(problem, config, AdamParams(lr=args.adam_lr), sample_log=sample_log)
    if method == "avg-sca":
        return run_averaged_sca(problem, config, args.rho_avg, sample_log=sample_log)
    raise UsageError(f"unknown method {method!r}")


def _write_outputs(method: str, kind: str, problem, args, config, x, trace,
                   cpu_seconds, wall_seconds, extras, outdir: Path, sample_log):
    if not args.trace_timing:
        trace = [replace(r, elapsed_ns=0) for r in trace]
    trace_path = outdir / f"{method}.trace.csv"
    dataio.write_trace(trace, trace_path)

    instance = problem.instance() if kind == "svm" else problem
    final_objective = ""
    if instance.true_objective is not None:
        final_objective = repr(float(instance.true_objective(x)))
    train_acc = test_acc = ""
    if kind == "svm":
        train_acc = repr(svm_accuracy(x, problem.dataset))
        test_set = _load_test_set(args, problem.dataset.num_features)
        if test_set is not None:
            test_acc = repr(svm_accuracy(x, test_set))

    manifest = {
        "command": args.raw_command,
        "method": method,
        "seed": config.seed,
        "iters": config.max_iters,
        "batch": config.batch_size,
        "samples_per_iteration": config.batch_size,
        "eval_every": config.eval_every,
        "workers": config.n_workers,
        "blocks": args.blocks,
        "rho_omega": args.rho_omega,
        "rho_alpha": args.rho_alpha,
        "alpha_scale": args.alpha_scale,
        "rho_avg": args.rho_avg,
        "adam_lr": args.adam_lr,
        "term_eps": "" if args.term_eps is None else args.term_eps,
        "trace": trace_path.name,
        "final_objective": final_objective,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
        "cpu_seconds": f"{cpu_seconds:.6f}",
        "wall_seconds": f"{wall_seconds:.6f}",
    }
    manifest.update(extras)
    dataio.write_manifest(manifest, outdir / f"{method}.manifest.txt")

    if sample_log is not None:
        lines = [" ".join(str(v) for v in np.ravel(batch)) for batch in sample_log]
        (outdir / f"{method}.samples.txt").write_text(
            "".join(line + "\n" for line in lines), encoding="utf-8")

    print(f"{method}: final_objective={final_objective or 'n/a'} "
          f"train_accuracy={train_acc or 'n/a'} test_accuracy={test_acc or 'n/a'} "
          f"cpu_seconds={cpu_seconds:.3f}")
    return {
        "method": method,
        "final_objective": final_objective,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
        "cpu_seconds": f"{cpu_seconds:.6f}",
    }


def _execute(method: str, kind: str, problem, args, config, extras, outdir: Path):
    sample_log = [] if args.log_sample_indices else None
    cpu0 = time.process_time()
    wall0 = time.perf_counter()
    x, trace = _run_method(method, kind, problem, config, args, sample_log)
    cpu_seconds = time.process_time() - cpu0
    wall_seconds = time.perf_counter() - wall0
    summary = _write_outputs(method, kind, problem, args, config, x, trace,
                             cpu_seconds, wall_seconds, extras, outdir, sample_log)
    return summary, sample_log


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    kind, problem, extras = _load_problem(args)
    config = _build_config(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _execute(args.method, kind, problem, args, config, extras, outdir)
    return 0


def cmd_compare(args) -> int:
    kind, problem, extras = _load_problem(args)
    if kind != "svm":
        raise UsageError("compare needs an SVM problem (--data): pegasos is SVM-only")
    config = _build_config(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    summaries = []
    logs = {}
    for method in METHODS:
        summary, sample_log = _execute(method, kind, problem, args, config, extras, outdir)
        summaries.append(summary)
        if sample_log is not None:
            logs[method] = [np.ravel(b).tolist() for b in sample_log]

    columns = ("method", "final_objective", "train_accuracy", "test_accuracy", "cpu_seconds")
    with open(outdir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(summaries)
    width = max(len(m) for m in METHODS)
    print(f"{'method':<{width}}  objective      train_acc  test_acc  cpu_s")
    for s in summaries:
        print(f"{s['method']:<{width}}  {s['final_objective'] or 'n/a':<13.13}  "
              f"{s['train_accuracy'] or 'n/a':<9.9}  {s['test_accuracy'] or 'n/a':<8.8}  "
              f"{s['cpu_seconds']}")

    if logs:
        streams = list(logs.values())
        if all(s == streams[0] for s in streams[1:]):
            print(f"sample streams identical across methods "
                  f"(first {len(streams[0])} batches)")
        else:
            print("warning: sample streams differ across methods", file=sys.stderr)
            return 1
    return 0


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.spec == "separable-svm":
        if args.m < 1:
            raise UsageError("--m must be a positive integer")
        if args.n < 1:
            raise UsageError("--n must be a positive integer")
        if not args.margin > 0:
            raise UsageError("--margin must be positive")
        ds, _ = make_separable_dataset(args.m, args.n, margin=args.margin, seed=args.seed)
        dataio.write_libsvm(ds, out)
    elif args.spec == "quadratic":
        if args.dim < 1:
            raise UsageError("--dim must be a positive integer")
        dataio.write_manifest(
            {"kind": "quadratic", "dim": args.dim, "sigma": args.sigma, "seed": args.seed},
            out)
    else:
        dataio.write_manifest({"kind": "nonconvex-toy", "sigma": args.sigma}, out)
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("problem")
    g.add_argument("--data", metavar="PATH", help="LIBSVM training file")
    g.add_argument("--synthetic", metavar="SPEC",
                   help="quad-d<dim>[-s<sigma>], noncvx, or a gen'd problem file")
    g.add_argument("--test-data", metavar="PATH", help="LIBSVM test file")
    g.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="SVM regularizer (default: per-dataset convention)")
    g.add_argument("--features", type=int, default=None,
                   help="feature-count override for the parser")
    g.add_argument("--remap-labels", action="store_true",
                   help="accept 0/1 labels, remapped to -1/+1")
    g.add_argument("--subsample", type=float, default=None, metavar="FRAC",
                   help="train on a uniform fraction of the dataset")
    g.add_argument("--subsample-seed", type=int, default=0)
    g.add_argument("--blocks", type=int, default=4,
                   help="number of contiguous variable blocks")

    r = p.add_argument_group("run")
    r.add_argument("--iters", type=int, default=10_000)
    r.add_argument("--batch", type=int, default=1)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--eval-every", type=int, default=100)
    r.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    r.add_argument("--term-eps", type=float, default=None,
                   help="stop when step_norm/alpha_k falls below this")

    s = p.add_argument_group("method parameters")
    s.add_argument("--rho-omega", type=float, default=0.6)
    s.add_argument("--rho-alpha", type=float, default=0.9)
    s.add_argument("--alpha-scale", type=float, default=1.0)
    s.add_argument("--rho-avg", type=float, default=1.0,
                   help="averaging exponent for avg-sca")
    s.add_argument("--adam-lr", type=float, default=1e-3)

    o = p.add_argument_group("output")
    o.add_argument("--outdir", default=os.environ.get("BLOCKSTOCH_OUTDIR", "runs"))
    o.add_argument("--trace-timing", action="store_true",
                   help="record real elapsed_ns in the trace CSV "
                        "(default zeroes it so traces are bitwise reproducible)")
    o.add_argument("--log-sample-indices", action="store_true",
                   help="dump the first 100 drawn batches per method")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockstoch",
        description="Block-parallel stochastic optimization benchmark driver.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one optimizer on one problem")
    _add_common(p_run)
    p_run.add_argument("--method", required=True, choices=METHODS)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run all four optimizers, sample-matched")
    _add_common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_gen = sub.add_parser("gen", help="generate a synthetic problem file")
    p_gen.add_argument("spec", choices=("separable-svm", "quadratic", "nonconvex-toy"))
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--m", type=int, default=1000)
    p_gen.add_argument("--n", type=int, default=20)
    p_gen.add_argument("--margin", type=float, default=0.5)
    p_gen.add_argument("--dim", type=int, default=10)
    p_gen.add_argument("--sigma", type=float, default=1.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.raw_command = shlex.join(["blockstoch"] + argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ScheduleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
