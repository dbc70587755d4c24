"""Maximum-likelihood search over the kernel ranges.

A small real-coded genetic algorithm explores the log-ranges inside their
bounds, then the best individual is polished by projected gradient descent
on the concentrated negative log-likelihood.  Everything is driven by one
seeded generator, so a given (data, config) pair always yields the same
report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ExhaustiveSingularityError, InputError, NumericalError
from .gp import GPModel, Likelihood, SetDataset
from .kernels import JitterPolicy, KernelFamily

__all__ = ["FitConfig", "FitReport", "fit_hyperparams", "default_bounds"]


def default_bounds(dimension: int):
    """Default ``(theta_X, theta_H)`` bounds for points in ``[0, 1]^d``.

    ``theta_X`` spans ``[0.01, 2] * sqrt(d)``.  Embedding distances of
    unit-variance Gaussian correlations never exceed ``sqrt(2)``, so
    ``theta_H`` is capped there.
    """
    rd = math.sqrt(dimension)
    r2 = math.sqrt(2.0)
    return (1e-2 * rd, 2.0 * rd), (1e-2 * r2, r2)


@dataclass(frozen=True)
class FitConfig:
    bounds_theta_X: tuple[float, float]
    bounds_theta_H: tuple[float, float]
    population: int = 40
    generations: int = 25
    refinement_steps: int = 50
    seed: int = 0
    jitter_policy: JitterPolicy = JitterPolicy()
    warm_start: tuple[float | None, float] | None = None
    tournament: int = 2
    crossover_alpha: float = 0.5
    mutation_rate: float = 0.3
    mutation_scale: float = 0.15
    elite: int = 2

    def __post_init__(self):
        for name in ("bounds_theta_X", "bounds_theta_H"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise InputError(f"{name} must satisfy 0 < low <= high, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.population < 4:
            raise InputError("population must be at least 4")
        if self.generations < 1:
            raise InputError("generations must be at least 1")
        if self.refinement_steps < 0:
            raise InputError("refinement_steps must be nonnegative")

    @classmethod
    def for_dimension(cls, dimension: int, **kwargs) -> "FitConfig":
        bx, bh = default_bounds(dimension)
        kwargs.setdefault("bounds_theta_X", bx)
        kwargs.setdefault("bounds_theta_H", bh)
        return cls(**kwargs)

    def reduced(self, warm_start=None, seed=None) -> "FitConfig":
        """Half population and half generations, optionally warm-started."""
        return replace(
            self,
            population=max(4, self.population // 2),
            generations=max(1, self.generations // 2),
            warm_start=warm_start if warm_start is not None else self.warm_start,
            seed=self.seed if seed is None else seed,
        )


@dataclass(frozen=True)
class FitReport:
    """Outcome of a hyperparameter search.

    ``best_theta_H`` is ``None`` for the DS family, which has no outer range.
    """

    family: KernelFamily
    best_theta_H: float | None
    best_theta_X: float
    best_sigma2_H: float
    best_nll: float
    evaluations: int
    trace: list = field(default_factory=list)
    model: GPModel | None = field(default=None, compare=False, repr=False)


class _Objective:
    """Log-space wrapper around a :class:`Likelihood`; singular points cost ``inf``."""

    def __init__(self, lik: Likelihood, family: KernelFamily, cfg: FitConfig):
        self.lik = lik
        self.family = family
        self.fixed_H = cfg.bounds_theta_H[1]
        self.bx = cfg.bounds_theta_X
        self.bh = cfg.bounds_theta_H

    def thetas(self, z):
        # clamp: exp(log(b)) may land one ulp outside b
        if self.family is KernelFamily.DE:
            th = min(max(math.exp(z[0]), self.bh[0]), self.bh[1])
            tx = min(max(math.exp(z[1]), self.bx[0]), self.bx[1])
            return th, tx
        return None, min(max(math.exp(z[0]), self.bx[0]), self.bx[1])

    def value(self, z) -> float:
        th, tx = self.thetas(z)
        try:
            v = self.lik.value(th if th is not None else self.fixed_H, tx)
        except NumericalError:
            return math.inf
        return v if math.isfinite(v) else math.inf

    def value_and_grad(self, z):
        th, tx = self.thetas(z)
        try:
            v, (gh, gx) = self.lik.value_and_grad(th if th is not None else self.fixed_H, tx)
        except NumericalError:
            return math.inf, None
        if not math.isfinite(v):
            return math.inf, None
        # chain rule to log-ranges
        if self.family is KernelFamily.DE:
            g = np.array([gh * th, gx * tx])
        else:
            g = np.array([gx * tx])
        if not np.all(np.isfinite(g)):
            return v, None
        return v, g


def _refine(obj: _Objective, z0, f0, lo, hi, steps):
    """Projected gradient descent with backtracking; only improving moves are kept."""
    z, f = z0.copy(), f0
    free = hi > lo
    step = 0.25
    for _ in range(steps):
        _, g = obj.value_and_grad(z)
        if g is None:
            break
        g = np.where(free, g, 0.0)
        # drop components pushing against an active bound
        g[(z <= lo) & (g > 0)] = 0.0
        g[(z >= hi) & (g < 0)] = 0.0
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            break
        direction = g / gn
        accepted = False
        t = step
        for _ in range(12):
            cand = np.clip(z - t * direction, lo, hi)
            if np.array_equal(cand, z):
                break
            fc = obj.value(cand)
            if fc < f:
                z, f = cand, fc
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        step = min(2.0 * t, 1.0)
    return z, f


def fit_hyperparams(data: SetDataset, spec_family, cfg: FitConfig) -> FitReport:
    """Minimize the concentrated NLL over the kernel ranges.

    Parameters
    ----------
    data : SetDataset
    spec_family : {"DS", "DE"} or KernelFamily
        For DS only ``theta_X`` is searched.
    cfg : FitConfig

    Raises
    ------
    ExhaustiveSingularityError
        Every evaluated candidate gave a singular correlation matrix.
    """
    family = KernelFamily.parse(spec_family)
    lik = Likelihood(data, family, cfg.jitter_policy)
    rng = np.random.default_rng(cfg.seed)

    bx = np.log(cfg.bounds_theta_X)
    bh = np.log(cfg.bounds_theta_H)
    if family is KernelFamily.DE:
        lo, hi = np.array([bh[0], bx[0]]), np.array([bh[1], bx[1]])
    else:
        lo, hi = np.array([bx[0]]), np.array([bx[1]])
    obj = _Objective(lik, family, cfg)
    trace = []

    if np.all(hi == lo):
        z = lo.copy()
        f = obj.value(z)
        if not math.isfinite(f):
            raise ExhaustiveSingularityError(_singular_message(family, cfg))
        trace.append((0, f))
        return _report(lik, obj, family, z, f, trace)

    dim = lo.shape[0]
    span = hi - lo
    pop = lo + rng.random((cfg.population, dim)) * span
    if cfg.warm_start is not None:
        wh, wx = cfg.warm_start
        if family is KernelFamily.DE and wh is not None:
            pop[0] = np.clip(np.log([wh, wx]), lo, hi)
        elif family is KernelFamily.DS:
            pop[0] = np.clip(np.log([wx]), lo, hi)
    fit = np.array([obj.value(z) for z in pop])
    best = int(np.argmin(fit))
    best_z, best_f = pop[best].copy(), float(fit[best])
    trace.append((0, best_f))

    n_elite = min(cfg.elite, cfg.population)
    for gen in range(1, cfg.generations + 1):
        order = np.argsort(fit, kind="stable")
        children = [pop[i].copy() for i in order[:n_elite]]
        child_fit = [fit[i] for i in order[:n_elite]]
        while len(children) < cfg.population:
            p1 = _tournament(rng, fit, cfg.tournament)
            p2 = _tournament(rng, fit, cfg.tournament)
            a, b = pop[p1], pop[p2]
            lo_c = np.minimum(a, b)
            hi_c = np.maximum(a, b)
            ext = cfg.crossover_alpha * (hi_c - lo_c)
            child = lo_c - ext + rng.random(dim) * (hi_c - lo_c + 2 * ext)
            mutate = rng.random(dim) < cfg.mutation_rate
            child = child + mutate * rng.normal(0.0, cfg.mutation_scale, dim) * span
            child = np.clip(child, lo, hi)
            children.append(child)
            child_fit.append(obj.value(child))
        pop = np.array(children)
        fit = np.array(child_fit)
        i = int(np.argmin(fit))
        if fit[i] < best_f:
            best_z, best_f = pop[i].copy(), float(fit[i])
        trace.append((gen, best_f))

    if not math.isfinite(best_f):
        raise ExhaustiveSingularityError(_singular_message(family, cfg))

    if cfg.refinement_steps:
        z, f = _refine(obj, best_z, best_f, lo, hi, cfg.refinement_steps)
        if f < best_f:
            best_z, best_f = z, f
            trace.append((cfg.generations + 1, best_f))
    return _report(lik, obj, family, best_z, best_f, trace)


def _tournament(rng, fit, size):
    idx = rng.integers(0, fit.shape[0], size)
    return int(idx[np.argmin(fit[idx])])


def _report(lik, obj, family, z, f, trace):
    th, tx = obj.thetas(z)
    model = lik.model(th if th is not None else obj.fixed_H, tx)
    return FitReport(
        family=family,
        best_theta_H=th,
        best_theta_X=tx,
        best_sigma2_H=model.sigma2_H,
        best_nll=float(f),
        evaluations=lik.evaluations,
        trace=trace,
        model=model,
    )


def _singular_message(family, cfg):
    msg = f"every candidate {family.value} fit was singular"
    if not cfg.jitter_policy.enabled:
        msg += "; use a jitter policy such as JitterPolicy.bound(5)"
    return msg
