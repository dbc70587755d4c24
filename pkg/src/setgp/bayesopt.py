"""Expected-improvement search over a finite pool of point sets.

Minimization throughout.  Each BO iteration refits the kernel ranges by
maximum likelihood, scores every unevaluated candidate by expected
improvement and evaluates the best one.  A uniform random-search baseline
shares the initial design of the same seed, and :func:`replicate` runs
many seeded trials and summarizes their best-so-far curves.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import InputError, NumericalError, PoolExhaustedError
from .gp import GPModel, PredictionResult, SetDataset, predict
from .hyperfit import FitConfig, fit_hyperparams
from .kernels import GroundSet, KernelFamily, SetCollection, as_pointset

__all__ = [
    "CandidatePool",
    "IterationRecord",
    "BOTrialRecord",
    "BOConfig",
    "ReplicationSummary",
    "expected_improvement",
    "propose",
    "run_bo",
    "run_random",
    "run_trial",
    "replicate",
]


class CandidatePool:
    """A finite list of distinct candidate point sets.

    ``items[i]`` is what the objective receives for candidate ``i``: the
    point set itself, or its index tuple for pools built from a ground set.
    """

    def __init__(self, candidates, items=None):
        self.candidates = [as_pointset(c) for c in candidates]
        if not self.candidates:
            raise InputError("the candidate pool is empty")
        if len(set(self.candidates)) != len(self.candidates):
            raise InputError("pool candidates must be pairwise distinct")
        self.items = list(self.candidates) if items is None else list(items)
        if len(self.items) != len(self.candidates):
            raise InputError("items and candidates differ in length")
        self.collection = SetCollection(self.candidates)

    @classmethod
    def from_subsets(cls, ground: GroundSet, subsets: Sequence[Sequence[int]]) -> "CandidatePool":
        subsets = [tuple(int(i) for i in s) for s in subsets]
        return cls([ground.subset(s) for s in subsets], subsets)

    def __len__(self):
        return len(self.candidates)


@dataclass(frozen=True)
class IterationRecord:
    chosen_index: int
    ei_value: float
    observed_f: float
    best_so_far: float


@dataclass
class BOTrialRecord:
    method: str
    seed: int
    init_indices: list
    init_values: list
    iterations: list = field(default_factory=list)
    final_best: float = math.inf
    found_optimum: bool = False
    aborted: bool = False
    abort_reason: str | None = None

    @property
    def initial_best(self) -> float:
        return float(min(self.init_values))

    def best_curve(self) -> np.ndarray:
        """Best-so-far after the initial design (entry 0) and after each iteration."""
        return np.array([self.initial_best] + [it.best_so_far for it in self.iterations])

    def evaluated(self) -> list[int]:
        return list(self.init_indices) + [it.chosen_index for it in self.iterations]


def expected_improvement(pred: PredictionResult, best: float):
    """Closed-form EI below ``best``.

    ``(best - m) Phi(z) + s phi(z)`` with ``z = (best - m) / s``; where the
    standard deviation is at most ``1e-12`` this degenerates to
    ``max(0, best - m)``.  Works elementwise on array predictions.
    """
    m = np.asarray(pred.mean, dtype=float)
    s = np.sqrt(np.maximum(np.asarray(pred.variance, dtype=float), 0.0))
    gap = best - m
    tiny = s <= 1e-12
    s_safe = np.where(tiny, 1.0, s)
    z = gap / s_safe
    ei = gap * norm.cdf(z) + s_safe * norm.pdf(z)
    ei = np.where(tiny, np.maximum(gap, 0.0), np.maximum(ei, 0.0))
    return float(ei) if ei.ndim == 0 else ei


def propose(model: GPModel, pool: CandidatePool, evaluated) -> tuple[int, float]:
    """Unevaluated candidate with the largest EI (lowest index on ties)."""
    evaluated = set(int(i) for i in evaluated)
    if len(evaluated) >= len(pool):
        raise PoolExhaustedError("every candidate has been evaluated")
    pred = predict(model, pool.collection.sets)
    best = float(np.min(model.responses))
    ei = np.asarray(expected_improvement(pred, best), dtype=float)
    mask = np.zeros(len(pool), dtype=bool)
    mask[list(evaluated)] = True
    ei = np.where(mask, -np.inf, ei)
    idx = int(np.argmax(ei))
    return idx, float(ei[idx])


def _initial_design(n_pool, n_init, seed):
    return np.random.default_rng(seed).permutation(n_pool)


def _iteration_seed(seed, iteration):
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, iteration]).generate_state(1)[0])


def _check_sizes(pool, n_init, budget):
    if n_init < 1 or budget < 0:
        raise InputError("n_init must be positive and budget nonnegative")
    if n_init + budget > len(pool):
        raise InputError(f"n_init + budget = {n_init + budget} exceeds the pool size {len(pool)}")


def _finish(rec: BOTrialRecord, pool_minimum):
    curve = rec.best_curve()
    rec.final_best = float(curve[-1])
    rec.found_optimum = pool_minimum is not None and rec.final_best <= pool_minimum
    return rec


def run_bo(pool: CandidatePool, objective: Callable, n_init: int, budget: int,
           kernel_family, fit_cfg: FitConfig, seed: int, pool_minimum: float | None = None,
           method: str | None = None) -> BOTrialRecord:
    """One EI trial.

    Parameters
    ----------
    pool : CandidatePool
    objective : callable
        Called with ``pool.items[i]``.
    n_init, budget : int
        Initial design size (at least 2) and number of EI iterations.
    kernel_family : {"DS", "DE"}
    fit_cfg : FitConfig
        Budget for the first refit; later iterations use half of it,
        warm-started at the previous optimum.  Its jitter policy applies.
    seed : int
        Drives the initial design and every refit.
    pool_minimum : float, optional
        Smallest objective value in the pool; computed by exhaustive
        evaluation when omitted.

    A refit that fails numerically ends the trial early; the record is
    flagged ``aborted`` with the reason and keeps what was done so far.
    """
    family = KernelFamily.parse(kernel_family)
    if n_init < 2:
        raise InputError("EI needs at least two initial evaluations")
    _check_sizes(pool, n_init, budget)
    if pool_minimum is None:
        pool_minimum = min(objective(it) for it in pool.items)
    order = _initial_design(len(pool), n_init, seed)
    init = [int(i) for i in order[:n_init]]
    values = [float(objective(pool.items[i])) for i in init]
    rec = BOTrialRecord(method or f"EI-{family.value}", int(seed), init, values)
    evaluated = list(init)
    ys = list(values)
    best = min(ys)
    warm = None
    for it in range(1, budget + 1):
        cfg = replace(fit_cfg, seed=_iteration_seed(seed, it))
        if it > 1 and warm is not None:
            cfg = cfg.reduced(warm_start=warm)
        data = SetDataset([pool.candidates[i] for i in evaluated], ys)
        try:
            report = fit_hyperparams(data, family, cfg)
        except NumericalError as exc:
            rec.aborted = True
            rec.abort_reason = f"iteration {it}: {exc}"
            break
        warm = (report.best_theta_H, report.best_theta_X)
        idx, ei = propose(report.model, pool, evaluated)
        f = float(objective(pool.items[idx]))
        evaluated.append(idx)
        ys.append(f)
        best = min(best, f)
        rec.iterations.append(IterationRecord(idx, ei, f, best))
    return _finish(rec, pool_minimum)


def run_random(pool: CandidatePool, objective: Callable, n_init: int, budget: int, seed: int,
               pool_minimum: float | None = None) -> BOTrialRecord:
    """Uniform sampling without replacement, sharing the EI initial design for ``seed``."""
    _check_sizes(pool, n_init, budget)
    if pool_minimum is None:
        pool_minimum = min(objective(it) for it in pool.items)
    order = _initial_design(len(pool), n_init, seed)
    init = [int(i) for i in order[:n_init]]
    values = [float(objective(pool.items[i])) for i in init]
    rec = BOTrialRecord("RANDOM", int(seed), init, values)
    best = min(values)
    for idx in order[n_init:n_init + budget]:
        f = float(objective(pool.items[int(idx)]))
        best = min(best, f)
        rec.iterations.append(IterationRecord(int(idx), math.nan, f, best))
    return _finish(rec, pool_minimum)


@dataclass(frozen=True)
class BOConfig:
    """Everything a trial needs except its seed.

    ``method`` is ``"EI-DE"``, ``"EI-DS"`` or ``"RANDOM"``.
    """

    method: str
    pool: CandidatePool = field(repr=False)
    objective: Callable = field(repr=False)
    n_init: int = 10
    budget: int = 40
    fit_cfg: FitConfig | None = None
    pool_minimum: float | None = None

    def __post_init__(self):
        m = self.method.upper()
        if m not in ("EI-DE", "EI-DS", "RANDOM"):
            raise InputError(f"unknown method {self.method!r}")
        object.__setattr__(self, "method", m)
        if m != "RANDOM" and self.fit_cfg is None:
            raise InputError("EI methods need a fit configuration")
        if self.pool_minimum is None:
            object.__setattr__(self, "pool_minimum",
                               float(min(self.objective(it) for it in self.pool.items)))


def run_trial(config: BOConfig, seed: int) -> BOTrialRecord:
    if config.method == "RANDOM":
        return run_random(config.pool, config.objective, config.n_init, config.budget, seed,
                          config.pool_minimum)
    family = config.method.split("-")[1]
    method = config.method
    if family == "DS" and config.fit_cfg.jitter_policy.enabled:
        method = f"EI-DS+j(a={config.fit_cfg.jitter_policy.a:g})"
    return run_bo(config.pool, config.objective, config.n_init, config.budget, family,
                  config.fit_cfg, seed, config.pool_minimum, method=method)


@dataclass
class ReplicationSummary:
    method: str
    n_trials: int
    hit_count: int
    aborted_count: int
    median: np.ndarray
    p95: np.ndarray

    def curve_rows(self):
        return [(k, float(self.median[k]), float(self.p95[k])) for k in range(len(self.median))]


def _summarize(method, records, budget):
    curves = []
    for r in records:
        c = r.best_curve()
        # aborted trials keep their last best for the remaining iterations
        if len(c) < budget + 1:
            c = np.concatenate([c, np.full(budget + 1 - len(c), c[-1])])
        curves.append(c)
    curves = np.array(curves)
    return ReplicationSummary(
        method=method,
        n_trials=len(records),
        hit_count=int(sum(r.found_optimum for r in records)),
        aborted_count=int(sum(r.aborted for r in records)),
        median=np.percentile(curves, 50, axis=0),
        p95=np.percentile(curves, 95, axis=0),
    )


def _run_indexed(args):
    config, seed = args
    return run_trial(config, seed)


def replicate(config: BOConfig, n_trials: int, base_seed: int = 0, threads: int = 1):
    """Run trials with seeds ``base_seed + t`` and summarize them.

    Returns ``(records, summary)``; records are ordered by trial index
    whatever the number of worker processes.
    """
    if n_trials < 1:
        raise InputError("n_trials must be at least 1")
    jobs = [(config, base_seed + t) for t in range(n_trials)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(_run_indexed, jobs))
    else:
        records = [_run_indexed(j) for j in jobs]
    return records, _summarize(config.method, records, config.budget)
