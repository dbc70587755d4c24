"""Ordinary-kriging Gaussian process over point-set inputs.

The model is noiseless with an unknown constant trend.  Trend and process
variance are concentrated out of the likelihood, so a fit for fixed ranges
is closed form.  The only diagonal perturbation ever added is the
conditioning jitter controlled by :class:`~setgp.kernels.JitterPolicy`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .conditioning import cholesky, conditioning_jitter
from .errors import InputError, NumericalError, SingularMatrixError, UndefinedError
from .kernels import (
    JitterPolicy,
    KernelFamily,
    KernelSpec,
    PointSet,
    SetCollection,
    as_pointset,
    correlation_and_grads,
    cross_gram,
    self_kernel,
)

__all__ = [
    "SetDataset",
    "GPModel",
    "PredictionResult",
    "LOOResidual",
    "fit",
    "predict",
    "concentrated_nll",
    "Likelihood",
    "q2",
    "loo_residuals",
]


class SetDataset:
    """Point sets paired with scalar responses.

    Parameters
    ----------
    sets : sequence of PointSet or array_like
    responses : array_like
        One finite response per set.
    dimension : int, optional
        Ambient dimension; inferred from the sets when omitted.
    """

    def __init__(self, sets, responses, dimension=None):
        self.sets = [as_pointset(s) for s in sets]
        self.responses = np.asarray(responses, dtype=float).reshape(-1)
        if len(self.sets) != self.responses.shape[0]:
            raise InputError(f"{len(self.sets)} sets but {self.responses.shape[0]} responses")
        if not np.all(np.isfinite(self.responses)):
            raise InputError("responses must be finite")
        dims = {s.dim for s in self.sets}
        if dimension is None:
            if len(dims) > 1:
                raise InputError(f"point sets of mixed dimensions {sorted(dims)}")
            dimension = dims.pop() if dims else 0
        elif dims and dims != {dimension}:
            raise InputError(f"expected dimension {dimension}, found {sorted(dims)}")
        self.dimension = int(dimension)
        self.responses.setflags(write=False)

    @classmethod
    def from_records(cls, records, dimension=None):
        records = list(records)
        return cls([r[0] for r in records], [r[1] for r in records], dimension)

    @property
    def records(self):
        return list(zip(self.sets, self.responses.tolist()))

    def __len__(self):
        return len(self.sets)

    def subset(self, indices) -> "SetDataset":
        idx = [int(i) for i in indices]
        return SetDataset([self.sets[i] for i in idx], self.responses[idx], self.dimension)

    def deduplicated(self) -> "SetDataset":
        """Collapse records whose sets are identical.

        Identical sets must carry identical responses, since the model
        interpolates.
        """
        seen: dict[PointSet, int] = {}
        keep = []
        for i, s in enumerate(self.sets):
            j = seen.get(s)
            if j is None:
                seen[s] = i
                keep.append(i)
            elif self.responses[j] != self.responses[i]:
                raise InputError(
                    f"records {j} and {i} share a point set but have different responses; "
                    "a noiseless model cannot interpolate both"
                )
        if len(keep) == len(self.sets):
            return self
        return self.subset(keep)

    def __eq__(self, other):
        if not isinstance(other, SetDataset):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.sets == other.sets
            and np.array_equal(self.responses, other.responses)
        )

    def __repr__(self):
        return f"SetDataset(n={len(self)}, d={self.dimension})"


@dataclass(frozen=True)
class PredictionResult:
    mean: float | np.ndarray
    variance: float | np.ndarray

    @property
    def sd(self):
        return np.sqrt(self.variance)


@dataclass(frozen=True)
class LOOResidual:
    raw: float
    standardized: float
    mean: float
    sd: float
    flagged: bool = False


@dataclass(frozen=True, eq=False)
class GPModel:
    """A fitted ordinary-kriging model.  Immutable; prediction is read-only."""

    designs: list
    responses: np.ndarray
    spec: KernelSpec
    beta: float
    sigma2_H: float
    chol: np.ndarray
    jitter_applied: float
    conditioning_target_a: float | None
    log_det: float
    collection: SetCollection = field(repr=False)
    rinv_one: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    one_rinv_one: float = 0.0

    @property
    def n(self) -> int:
        return len(self.designs)

    def correlation(self) -> np.ndarray:
        """The (jittered) correlation matrix reproduced from its factor."""
        return self.chol @ self.chol.T

    def nll(self) -> float:
        """Concentrated negative log-likelihood, constants dropped."""
        return 0.5 * self.n * math.log(self.sigma2_H) + 0.5 * self.log_det


def _factor(R, policy: JitterPolicy):
    """Cholesky of ``R`` under a jitter policy; returns ``(L, delta)``.

    The plain factorization is tried first.  Only when it fails and the
    policy is ``bound(a)`` is the diagonal lifted, by the smallest shift
    bringing the condition number to ``exp(a)``, and the factorization
    retried once.
    """
    try:
        return cholesky(R), 0.0
    except SingularMatrixError:
        if not policy.enabled:
            raise
    delta = conditioning_jitter(R, policy.a)
    Rd = R + delta * np.eye(R.shape[0])
    try:
        return cholesky(Rd), delta
    except SingularMatrixError as exc:
        raise NumericalError(f"Cholesky failed even after jitter {delta:.3e}: {exc}") from exc


def _concentrate(L, y):
    one = np.ones_like(y)
    rinv_one = cho_solve((L, True), one)
    rinv_y = cho_solve((L, True), y)
    one_rinv_one = float(one @ rinv_one)
    beta = float(one @ rinv_y) / one_rinv_one
    alpha = rinv_y - beta * rinv_one
    resid = y - beta
    sigma2 = float(resid @ alpha) / y.shape[0]
    if not sigma2 > 0:
        sigma2 = np.finfo(float).tiny
    return beta, sigma2, alpha, rinv_one, one_rinv_one


def fit(data: SetDataset, spec: KernelSpec, jitter_policy: JitterPolicy | None = None) -> GPModel:
    """Fit trend and variance for fixed ranges.

    Parameters
    ----------
    data : SetDataset
        At least two records.  Exact duplicate records are merged.
    spec : KernelSpec
        Family and ranges; ``spec.sigma2`` is ignored and replaced by its
        concentrated estimate.
    jitter_policy : JitterPolicy, optional
        Overrides ``spec.jitter``.

    Raises
    ------
    SingularMatrixError
        Policy ``none`` and a numerically singular correlation matrix.
    NumericalError
        Factorization failed even after jitter.
    """
    policy = spec.jitter if jitter_policy is None else jitter_policy
    data = data.deduplicated()
    if len(data) < 2:
        raise InputError("fitting needs at least two distinct records")
    coll = SetCollection(data.sets)
    R, _ = correlation_and_grads(coll, spec.family, spec.theta_X, spec.theta_H)
    return _fit_from_correlation(data, coll, R, spec, policy)


def _fit_from_correlation(data, coll, R, spec, policy):
    L, delta = _factor(R, policy)
    y = np.array(data.responses, dtype=float)
    beta, sigma2, alpha, rinv_one, one_rinv_one = _concentrate(L, y)
    log_det = 2.0 * float(np.sum(np.log(np.diag(L))))
    L.setflags(write=False)
    return GPModel(
        designs=list(data.sets),
        responses=data.responses,
        spec=spec.with_params(sigma2=sigma2, jitter=policy),
        beta=beta,
        sigma2_H=sigma2,
        chol=L,
        jitter_applied=float(delta),
        conditioning_target_a=policy.a,
        log_det=log_det,
        collection=coll,
        rinv_one=rinv_one,
        alpha=alpha,
        one_rinv_one=one_rinv_one,
    )


def predict(model: GPModel, S) -> PredictionResult:
    """Ordinary-kriging mean and variance.

    ``S`` may be one point set (scalar result) or a sequence of point sets
    (array result).  Variances are clamped at zero.
    """
    single = isinstance(S, PointSet) or (isinstance(S, np.ndarray) and S.ndim <= 2)
    sets = [as_pointset(S)] if single else [as_pointset(s) for s in S]
    if not sets:
        return PredictionResult(np.empty(0), np.empty(0))
    dims = {s.dim for s in sets}
    if dims != {model.collection.dim}:
        raise InputError(f"expected dimension {model.collection.dim}, got {sorted(dims)}")
    cspec = model.spec.with_params(sigma2=1.0)
    target = SetCollection(sets)
    r = cross_gram(model.collection, target, cspec)
    prior = self_kernel(target, cspec)
    mean = model.beta + r.T @ model.alpha
    v = solve_triangular(model.chol, r, lower=True, check_finite=False)
    quad = np.einsum("ij,ij->j", v, v)
    trend = 1.0 - model.rinv_one @ r
    var = model.sigma2_H * (prior - quad + trend**2 / model.one_rinv_one)
    var = np.maximum(var, 0.0)
    if single:
        return PredictionResult(float(mean[0]), float(var[0]))
    return PredictionResult(mean, var)


class Likelihood:
    """Concentrated negative log-likelihood of one dataset.

    Keeps the packed point sets (and, when affordable, their squared
    distances) so that repeated evaluations only redo the exponentials and
    the factorization.  The jitter, when the policy applies one, is
    recomputed at every evaluation and treated as a constant when
    differentiating.
    """

    # pairwise distances are cached below this many point pairs
    CACHE_PAIRS = 7 * 10**7

    def __init__(self, data: SetDataset, family=KernelFamily.DE, jitter_policy=None):
        self.data = data.deduplicated()
        if len(self.data) < 2:
            raise InputError("the likelihood needs at least two distinct records")
        self.family = KernelFamily.parse(family)
        self.policy = jitter_policy if jitter_policy is not None else JitterPolicy.none()
        npts = sum(len(s) for s in self.data.sets)
        self.collection = SetCollection(self.data.sets, cache_distances=npts * npts <= self.CACHE_PAIRS)
        self.y = np.array(self.data.responses, dtype=float)
        self.n = len(self.data)
        self.evaluations = 0

    def _spec(self, theta_H, theta_X):
        if self.family is KernelFamily.DS:
            return KernelSpec(KernelFamily.DS, theta_X, jitter=self.policy)
        return KernelSpec(KernelFamily.DE, theta_X, theta_H, jitter=self.policy)

    def model(self, theta_H, theta_X) -> GPModel:
        spec = self._spec(theta_H, theta_X)
        R, _ = correlation_and_grads(self.collection, self.family, theta_X, theta_H)
        return _fit_from_correlation(self.data, self.collection, R, spec, self.policy)

    def value(self, theta_H, theta_X) -> float:
        self._spec(theta_H, theta_X)
        self.evaluations += 1
        R, _ = correlation_and_grads(self.collection, self.family, theta_X, theta_H)
        L, _ = _factor(R, self.policy)
        _, sigma2, _, _, _ = _concentrate(L, self.y)
        return 0.5 * self.n * math.log(sigma2) + float(np.sum(np.log(np.diag(L))))

    def value_and_grad(self, theta_H, theta_X, fd_step=1e-6):
        """NLL and its gradient with respect to ``(theta_H, theta_X)``.

        DE gradients are analytic.  DS has no ``theta_H`` (its component
        is zero) and its ``theta_X`` component is a central finite
        difference with relative step ``fd_step``.
        """
        self._spec(theta_H, theta_X)
        if self.family is KernelFamily.DS:
            val = self.value(theta_H, theta_X)
            h = fd_step * theta_X
            g = (self.value(theta_H, theta_X + h) - self.value(theta_H, theta_X - h)) / (2 * h)
            return val, (0.0, g)
        self.evaluations += 1
        R, (dR_h, dR_x) = correlation_and_grads(
            self.collection, self.family, theta_X, theta_H, with_grad=True
        )
        L, _ = _factor(R, self.policy)
        _, sigma2, alpha, _, _ = _concentrate(L, self.y)
        val = 0.5 * self.n * math.log(sigma2) + float(np.sum(np.log(np.diag(L))))
        rinv = cho_solve((L, True), np.eye(self.n))
        grad = []
        for dR in (dR_h, dR_x):
            tr = float(np.sum(rinv * dR))
            quad = float(alpha @ dR @ alpha)
            grad.append(0.5 * tr - 0.5 * quad / sigma2)
        return val, (grad[0], grad[1])


def concentrated_nll(data: SetDataset, theta_H, theta_X, jitter_policy=None, family=KernelFamily.DE):
    """Concentrated NLL ``(n/2) log sigma2_hat + (1/2) log det R`` and its gradient.

    Returns ``(value, (d/d theta_H, d/d theta_X))``.
    """
    return Likelihood(data, family, jitter_policy).value_and_grad(theta_H, theta_X)


def q2(actual, predicted) -> float:
    """Predictive coefficient ``1 - SSE / sum((a - mean(a))^2)``."""
    a = np.asarray(actual, dtype=float).reshape(-1)
    p = np.asarray(predicted, dtype=float).reshape(-1)
    if a.shape != p.shape:
        raise InputError(f"length mismatch: {a.shape[0]} vs {p.shape[0]}")
    if a.shape[0] < 2:
        raise InputError("Q2 needs at least two values")
    denom = float(np.sum((a - a.mean()) ** 2))
    if denom == 0.0:
        raise UndefinedError("Q2 is undefined for constant actual values")
    return 1.0 - float(np.sum((a - p) ** 2)) / denom


def loo_residuals(model: GPModel) -> list[LOOResidual]:
    """Leave-one-out residuals without refitting.

    Hyperparameters and variance stay at their full-data values; the trend
    is re-estimated for each fold, which the closed form

        m_{-i} = y_i - (Q y)_i / Q_ii,   s_{-i}^2 = sigma2 / Q_ii,
        Q = R^-1 - R^-1 1 1^T R^-1 / (1^T R^-1 1)

    does implicitly.  Entries with a non-positive fold variance are
    returned with ``flagged=True`` and NaN standardized value.
    """
    if model.n < 3:
        raise InputError("leave-one-out needs at least three records")
    n = model.n
    rinv = cho_solve((model.chol, True), np.eye(n))
    Q = rinv - np.outer(model.rinv_one, model.rinv_one) / model.one_rinv_one
    y = np.asarray(model.responses, dtype=float)
    qy = Q @ y
    out = []
    for i in range(n):
        qii = Q[i, i]
        if not qii > 0:
            out.append(LOOResidual(math.nan, math.nan, math.nan, math.nan, True))
            continue
        raw = qy[i] / qii
        var = model.sigma2_H / qii
        sd = math.sqrt(var)
        out.append(LOOResidual(float(raw), float(raw / sd), float(y[i] - raw), sd))
    return out
