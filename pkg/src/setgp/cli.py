"""Command-line front end: ``setgp {validate,diag,bo,jitter-sweep}``.

Every command writes CSV files plus a ``manifest.json`` into ``--out``.
Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bayesopt import BOConfig, CandidatePool, replicate
from .errors import InputError, NumericalError
from .gp import SetDataset, loo_residuals, predict, q2
from .hyperfit import FitConfig, fit_hyperparams
from .kernels import JitterPolicy, KernelFamily
from .testbed import (
    CombinatorialProblem,
    ObjectiveKind,
    SetObjective,
    generate_combinatorial_dataset,
    generate_dataset,
    load_csv,
    split,
)

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_rows(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_manifest(out: Path, args, outputs, started, extra=None):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:],
        "config": cfg,
        "seeds": {"seed": args.seed},
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started_unix": started,
        "wall_clock_seconds": time.time() - started,
        "outputs": sorted(str(p.relative_to(out)) for p in outputs),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def _fit_config(args, seed, jitter=None) -> FitConfig:
    return FitConfig.for_dimension(
        2 if args.csv is None else args._dimension,
        population=args.population,
        generations=args.generations,
        refinement_steps=args.refine,
        seed=seed,
        jitter_policy=jitter or JitterPolicy.none(),
    )


def _problem(args) -> CombinatorialProblem:
    return CombinatorialProblem.random(args.m, args.p, seed=args.seed)


def _dataset(args) -> tuple[str, SetDataset]:
    if args.csv is not None:
        data = load_csv(args.csv)
        args._dimension = data.dimension
        return Path(args.csv).stem, data
    args._dimension = 2
    if args.objective == "combinatorial":
        return "COMBINATORIAL", generate_combinatorial_dataset(_problem(args), args.n, seed=args.seed)
    obj = SetObjective(args.objective.upper())
    return obj.kind.value, generate_dataset(obj, args.n, args.p, seed=args.seed)


def _kernel_label(kernel, jitter_a):
    if kernel == "ds" and jitter_a is not None:
        return f"DS+j(a={jitter_a:g})"
    return kernel.upper()


def _jitter_for(kernel, jitter_a):
    if kernel == "ds" and jitter_a is not None:
        return JitterPolicy.bound(jitter_a)
    return JitterPolicy.none()


def _validate_job(job):
    train, test, kernel, jitter_a, cfg = job
    try:
        report = fit_hyperparams(train, KernelFamily.parse(kernel), cfg)
        pred = predict(report.model, test.sets)
        return q2(test.responses, pred.mean), ""
    except NumericalError as exc:
        return math.nan, type(exc).__name__


def _map(func, jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(func, jobs))
    return [func(j) for j in jobs]


def run_validate(args, out: Path, jitter_a=None):
    problem, data = _dataset(args)
    jobs, keys = [], []
    for ratio in args.ratio:
        for rep in range(args.reps):
            train, test = split(data, ratio, seed=args.seed + rep)
            for kernel in args.kernel:
                cfg = _fit_config(args, args.seed + rep, _jitter_for(kernel, jitter_a))
                jobs.append((train, test, kernel, jitter_a, cfg))
                keys.append((problem, _kernel_label(kernel, jitter_a), ratio, rep))
    results = _map(_validate_job, jobs, args.threads)
    rows = [k + r for k, r in zip(keys, results)]
    _write_rows(out / "q2.csv", ["problem", "kernel", "ratio", "replication", "q2", "error"], rows)
    summary = []
    for ratio in args.ratio:
        for kernel in args.kernel:
            label = _kernel_label(kernel, jitter_a)
            vals = [r[4] for r in rows if r[1] == label and r[2] == ratio]
            ok = [v for v in vals if not math.isnan(v)]
            summary.append((problem, label, ratio, float(np.mean(ok)) if ok else math.nan, len(ok), len(vals)))
    _write_rows(out / "q2_summary.csv", ["problem", "kernel", "ratio", "mean_q2", "n_ok", "n_total"], summary)
    return [out / "q2.csv", out / "q2_summary.csv"], summary


def cmd_validate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    outputs, summary = run_validate(args, out, args.jitter_a)
    _write_manifest(out, args, outputs, started)
    for row in summary:
        print(f"{row[0]:>14s} {row[1]:>12s} ratio={row[2]:.2f} mean Q2={row[3]:.6f} ({row[4]}/{row[5]} ok)")
    return 0


def cmd_diag(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    _, data = _dataset(args)
    kernel = args.kernel[0]
    ratio = args.ratio[0]
    train, test = split(data, ratio, seed=args.seed)
    train_ids = _ids_of(data, train)
    test_ids = _ids_of(data, test)
    report = fit_hyperparams(train, KernelFamily.parse(kernel), _fit_config(args, args.seed, _jitter_for(kernel, args.jitter_a)))
    model = report.model
    header = ["set_id", "observed", "predicted", "sd", "standardized"]
    loo_rows = []
    for sid, y, res in zip(train_ids, train.responses, loo_residuals(model)):
        loo_rows.append((sid, float(y), res.mean, res.sd, res.standardized))
    _write_rows(out / "residuals_loo.csv", header, loo_rows)
    pred = predict(model, test.sets)
    sd = np.sqrt(pred.variance)
    test_rows = []
    for sid, y, m, s in zip(test_ids, test.responses, pred.mean, sd):
        z = (y - m) / s if s > 0 else math.nan
        test_rows.append((sid, float(y), float(m), float(s), float(z)))
    _write_rows(out / "residuals_test.csv", header, test_rows)
    _write_manifest(out, args, [out / "residuals_loo.csv", out / "residuals_test.csv"], started,
                    {"hyperparameters": {"theta_H": report.best_theta_H, "theta_X": report.best_theta_X,
                                         "sigma2_H": report.best_sigma2_H}})
    print(f"wrote {len(loo_rows)} LOO and {len(test_rows)} test residuals to {out}")
    return 0


def _ids_of(data, part):
    pos = {s: i for i, s in enumerate(data.sets)}
    return [pos[s] for s in part.sets]


def _bo_pool(args):
    if args.csv is not None:
        data = load_csv(args.csv)
        args._dimension = data.dimension
        table = dict(zip(data.sets, data.responses.tolist()))
        return CandidatePool(data.sets), SetObjective(ObjectiveKind.EXTERNAL, table=table)
    args._dimension = 2
    if args.objective == "combinatorial":
        prob = _problem(args)
        obj = SetObjective(ObjectiveKind.COMBINATORIAL, problem=prob)
        return CandidatePool.from_subsets(prob.ground, prob.all_subsets()), obj
    obj = SetObjective(args.objective.upper())
    data = generate_dataset(obj, args.n, args.p, seed=args.seed)
    return CandidatePool(data.sets), obj


def run_bo_campaign(args, out: Path, jitter_a=None, include_random=True):
    pool, obj = _bo_pool(args)
    pool_min = float(min(obj(it) for it in pool.items))
    methods = [f"EI-{k.upper()}" for k in args.kernel]
    if include_random:
        methods.append("RANDOM")
    trial_rows, summary_rows, hit_rows = [], [], []
    for method in methods:
        jitter = _jitter_for("ds", jitter_a) if method == "EI-DS" else JitterPolicy.none()
        cfg = None if method == "RANDOM" else _fit_config(args, args.seed, jitter)
        config = BOConfig(method, pool, obj, args.init, args.budget, cfg, pool_min)
        records, summary = replicate(config, args.trials, args.seed, args.threads)
        label = records[0].method
        for t, rec in enumerate(records):
            for k, (idx, f) in enumerate(zip(rec.init_indices, rec.init_values)):
                trial_rows.append((label, t, 0, idx, f, min(rec.init_values[:k + 1]), "init", ""))
            for k, it in enumerate(rec.iterations, start=1):
                trial_rows.append((label, t, k, it.chosen_index, it.observed_f, it.best_so_far, "ei" if method != "RANDOM" else "random", ""))
            if rec.aborted:
                trial_rows.append((label, t, len(rec.iterations) + 1, -1, math.nan, rec.final_best, "aborted", rec.abort_reason))
        for k, med, p95 in summary.curve_rows():
            summary_rows.append((label, k, med, p95))
        hit_rows.append((label, summary.hit_count, summary.aborted_count, summary.n_trials))
    _write_rows(out / "trials.csv", ["method", "trial", "iteration", "chosen", "f", "best_so_far", "phase", "abort_reason"], trial_rows)
    _write_rows(out / "summary.csv", ["method", "iteration", "median", "p95"], summary_rows)
    _write_rows(out / "hits.csv", ["method", "hits", "aborted", "trials"], hit_rows)
    return [out / "trials.csv", out / "summary.csv", out / "hits.csv"], hit_rows, pool_min


def cmd_bo(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    outputs, hits, pool_min = run_bo_campaign(args, out, args.jitter_a)
    _write_manifest(out, args, outputs, started, {"pool_minimum": pool_min})
    for label, h, ab, n in hits:
        print(f"{label:>16s}: optimum found in {h}/{n} trials ({ab} aborted)")
    return 0


def cmd_jitter_sweep(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    outputs, rows = [], []
    for a in args.a_values:
        sub = out / f"a{a:g}"
        sub.mkdir(exist_ok=True)
        if args.mode == "validate":
            files, summary = run_validate(args, sub, jitter_a=float(a))
            rows.extend((a,) + tuple(r) for r in summary)
        else:
            files, hits, _ = run_bo_campaign(args, sub, jitter_a=float(a), include_random=False)
            rows.extend((a,) + tuple(h) for h in hits)
        outputs.extend(files)
    if args.mode == "validate":
        header = ["a", "problem", "kernel", "ratio", "mean_q2", "n_ok", "n_total"]
    else:
        header = ["a", "method", "hits", "aborted", "trials"]
    _write_rows(out / "sweep.csv", header, rows)
    outputs.append(out / "sweep.csv")
    _write_manifest(out, args, outputs, started)
    for r in rows:
        print(" ".join(_fmt(v) for v in r))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="setgp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--objective", choices=["max", "min", "mean", "combinatorial"], default="mean")
    src.add_argument("--csv", metavar="PATH", default=None)
    common.add_argument("--kernel", choices=["ds", "de"], action="append")
    common.add_argument("--jitter-a", type=float, default=None, help="DS jitter target exp(a) on the condition number")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="out")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--n", type=int, default=1000, help="dataset or pool size for synthetic objectives")
    common.add_argument("--p", type=int, default=10, help="points per set (subset size for combinatorial)")
    common.add_argument("--m", type=int, default=25, help="ground set size for the combinatorial objective")
    common.add_argument("--population", type=int, default=40)
    common.add_argument("--generations", type=int, default=25)
    common.add_argument("--refine", type=int, default=50)

    ratios = argparse.ArgumentParser(add_help=False)
    ratios.add_argument("--ratio", type=float, action="append")
    ratios.add_argument("--reps", type=int, default=5)

    bo = argparse.ArgumentParser(add_help=False)
    bo.add_argument("--trials", type=int, default=50)
    bo.add_argument("--init", type=int, default=10)
    bo.add_argument("--budget", type=int, default=40)

    p = subs.add_parser("validate", parents=[common, ratios], help="Q2 table over split ratios")
    p.set_defaults(func=cmd_validate)
    p = subs.add_parser("diag", parents=[common, ratios], help="LOO and test residual files")
    p.set_defaults(func=cmd_diag)
    p = subs.add_parser("bo", parents=[common, bo], help="EI campaign against random search")
    p.set_defaults(func=cmd_bo)
    p = subs.add_parser("jitter-sweep", parents=[common, ratios, bo], help="DS+jitter over a range of targets")
    p.add_argument("--mode", choices=["validate", "bo"], default="validate")
    p.add_argument("--a-values", type=float, nargs="+", default=[1, 2, 3, 4, 5, 6, 7])
    p.set_defaults(func=cmd_jitter_sweep)
    return parser


def _finalize(args):
    if args.kernel is None:
        args.kernel = ["ds"] if args.command == "jitter-sweep" else ["de", "ds"]
    args.kernel = list(dict.fromkeys(args.kernel))
    if getattr(args, "ratio", None) is None and args.command in ("validate", "diag", "jitter-sweep"):
        args.ratio = [0.8] if args.command == "diag" else [0.2, 0.5, 0.8]
    if args.threads < 1:
        raise InputError("--threads must be at least 1")
    if args.command == "jitter-sweep":
        args.kernel = ["ds"]
    args._dimension = 2


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _finalize(args)
        return args.func(args)
    except InputError as exc:
        print(f"setgp: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"setgp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
