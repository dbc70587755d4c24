"""Kernels on finite point sets.

Two families are provided:

* the double sum (DS) kernel, the average of an isotropic Gaussian
  correlation over all cross pairs of two sets, which equals the inner
  product of the sets' kernel mean embeddings;
* the deep embedding (DE) kernel, a Gaussian radial kernel applied to the
  distance between those embeddings.

The inner variance is fixed to one, so the inner kernel is fully described
by its range ``theta_X``.  All Gram assembly goes through a block-sum
routine that packs every set's points into one array, so large collections
are evaluated with a handful of vectorized numpy calls.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError

__all__ = [
    "PointSet",
    "GroundSet",
    "InnerKernelParams",
    "DeepKernelParams",
    "KernelFamily",
    "JitterPolicy",
    "KernelSpec",
    "as_pointset",
    "inner_corr",
    "ds_kernel",
    "embed_distance",
    "de_kernel",
    "de_corr_grad",
    "gram",
    "cross_gram",
    "ds_gram_finite",
    "SetCollection",
]

# Upper bound on the number of point pairs materialized at once.
_BLOCK_PAIRS = 2**24


class PointSet:
    """A nonempty finite set of points in R^d.

    The constructor canonicalizes its input: exact duplicates are removed
    and the points are sorted lexicographically, so two equal sets always
    hold identical arrays.

    Parameters
    ----------
    points : array_like, shape (m, d) or (d,)
        Point coordinates.  A 1-d input is a single point.
    """

    __slots__ = ("_points", "_key")

    def __init__(self, points):
        arr = np.asarray(points, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise InputError(f"a point set needs shape (m>=1, d>=1), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InputError("point coordinates must be finite")
        # +0.0 folds -0.0 into 0.0 so that equal sets share one byte pattern
        arr = np.unique(arr + 0.0, axis=0)
        arr.setflags(write=False)
        self._points = arr
        self._key = None

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    @property
    def canonical(self) -> bool:
        return True

    def __len__(self):
        return self._points.shape[0]

    def __iter__(self):
        return iter(self._points)

    def _hash_key(self):
        if self._key is None:
            self._key = (self._points.shape, self._points.tobytes())
        return self._key

    def __eq__(self, other):
        if not isinstance(other, PointSet):
            return NotImplemented
        return self._hash_key() == other._hash_key()

    def __hash__(self):
        return hash(self._hash_key())

    def __repr__(self):
        return f"PointSet(n={len(self)}, d={self.dim})"


def as_pointset(obj) -> PointSet:
    """Return ``obj`` as a :class:`PointSet`, wrapping raw arrays."""
    if isinstance(obj, PointSet):
        return obj
    return PointSet(obj)


class GroundSet:
    """A finite base set ``X_c`` of distinct points, kept in the given order.

    Subsets are addressed by lists of positions into ``elements``.
    """

    def __init__(self, elements):
        arr = np.asarray(elements, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise InputError("a ground set needs at least one point")
        if not np.all(np.isfinite(arr)):
            raise InputError("ground set coordinates must be finite")
        arr = arr + 0.0
        if np.unique(arr, axis=0).shape[0] != arr.shape[0]:
            raise InputError("ground set elements must be pairwise distinct")
        arr.setflags(write=False)
        self.elements = arr
        self.index = {tuple(row): i for i, row in enumerate(arr)}

    def __len__(self):
        return self.elements.shape[0]

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    def check_indices(self, indices) -> list[int]:
        idx = [int(i) for i in indices]
        if not idx:
            raise InputError("subset index list is empty")
        c = len(self)
        for i in idx:
            if i < 0 or i >= c:
                raise InputError(f"index {i} out of range for a ground set of size {c}")
        if len(set(idx)) != len(idx):
            raise InputError(f"repeated index in subset {idx}")
        return idx

    def subset(self, indices) -> PointSet:
        return PointSet(self.elements[self.check_indices(indices)])


@dataclass(frozen=True)
class InnerKernelParams:
    """Isotropic Gaussian correlation on the base space, unit variance."""

    theta_X: float

    def __post_init__(self):
        if not (np.isfinite(self.theta_X) and self.theta_X > 0):
            raise InputError(f"theta_X must be positive, got {self.theta_X}")

    @property
    def sigma2_X(self) -> float:
        return 1.0


@dataclass(frozen=True)
class DeepKernelParams:
    """Outer Gaussian kernel on embedding distances."""

    inner: InnerKernelParams
    theta_H: float
    sigma2_H: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.theta_H) and self.theta_H > 0):
            raise InputError(f"theta_H must be positive, got {self.theta_H}")
        if not (np.isfinite(self.sigma2_H) and self.sigma2_H > 0):
            raise InputError(f"sigma2_H must be positive, got {self.sigma2_H}")

    @property
    def theta_X(self) -> float:
        return self.inner.theta_X


class KernelFamily(str, enum.Enum):
    DS = "DS"
    DE = "DE"

    @classmethod
    def parse(cls, value) -> "KernelFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InputError(f"unknown kernel family {value!r}; expected DS or DE") from None


@dataclass(frozen=True)
class JitterPolicy:
    """How to handle ill-conditioned correlation matrices.

    ``a=None`` means no jitter ever.  Otherwise, when the plain Cholesky
    factorization fails, the diagonal is lifted just enough to bring the
    condition number down to ``exp(a)`` and the factorization retried.
    """

    a: float | None = None

    def __post_init__(self):
        if self.a is not None and not self.a > 0:
            raise InputError(f"jitter target a must be positive, got {self.a}")

    @classmethod
    def none(cls) -> "JitterPolicy":
        return cls(None)

    @classmethod
    def bound(cls, a: float) -> "JitterPolicy":
        return cls(float(a))

    @property
    def enabled(self) -> bool:
        return self.a is not None

    def __str__(self):
        return "none" if self.a is None else f"bound(a={self.a:g})"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family with its hyperparameters.

    For the DS family ``theta_H`` is ignored and ``sigma2`` multiplies the
    double sum; for DE ``sigma2`` is the outer variance.
    """

    family: KernelFamily
    theta_X: float
    theta_H: float | None = None
    sigma2: float = 1.0
    jitter: JitterPolicy = JitterPolicy()

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily.parse(self.family))
        InnerKernelParams(self.theta_X)
        if self.family is KernelFamily.DE:
            if self.theta_H is None:
                raise InputError("the DE family needs theta_H")
            DeepKernelParams(InnerKernelParams(self.theta_X), self.theta_H, self.sigma2)
        elif not self.sigma2 > 0:
            raise InputError("sigma2 must be positive")

    @property
    def inner(self) -> InnerKernelParams:
        return InnerKernelParams(self.theta_X)

    @property
    def deep(self) -> DeepKernelParams:
        return DeepKernelParams(self.inner, self.theta_H, self.sigma2)

    def with_params(self, **changes) -> "KernelSpec":
        fields = dict(
            family=self.family,
            theta_X=self.theta_X,
            theta_H=self.theta_H,
            sigma2=self.sigma2,
            jitter=self.jitter,
        )
        fields.update(changes)
        return KernelSpec(**fields)


def _theta(p) -> float:
    if isinstance(p, (InnerKernelParams, DeepKernelParams, KernelSpec)):
        return float(p.theta_X)
    return float(InnerKernelParams(float(p)).theta_X)


# ---------------------------------------------------------------------------
# packed collections and block sums
# ---------------------------------------------------------------------------


class SetCollection:
    """Points of several sets packed into one array.

    Parameters
    ----------
    sets : sequence of PointSet or array_like
    cache_distances : bool
        Keep the full point-to-point squared distance matrix in memory.
        Worth it when the same collection is re-evaluated for many ranges,
        as during likelihood maximization.
    """

    def __init__(self, sets: Iterable, cache_distances: bool = False):
        self.sets = [as_pointset(s) for s in sets]
        if not self.sets:
            raise InputError("empty collection of point sets")
        dims = {s.dim for s in self.sets}
        if len(dims) != 1:
            raise InputError(f"point sets of mixed dimensions {sorted(dims)}")
        self.dim = dims.pop()
        self.sizes = np.array([len(s) for s in self.sets], dtype=np.intp)
        self.starts = np.concatenate(([0], np.cumsum(self.sizes)[:-1])).astype(np.intp)
        self.points = np.concatenate([s.points for s in self.sets], axis=0)
        self._sqdist = None
        if cache_distances:
            self._sqdist = cdist(self.points, self.points, "sqeuclidean")
        self._self_cache: dict[float, np.ndarray] = {}

    def __len__(self):
        return len(self.sets)

    def chunks(self):
        """Yield ``(first_set, stop_set)`` ranges bounding the pair count."""
        n = len(self.sets)
        total = self.points.shape[0]
        budget = max(1, _BLOCK_PAIRS // max(total, 1))
        i = 0
        while i < n:
            j = i
            pts = 0
            while j < n and (j == i or pts + self.sizes[j] <= budget):
                pts += self.sizes[j]
                j += 1
            yield i, j
            i = j

    def self_k0(self, theta_X: float) -> np.ndarray:
        """``k0(S, S)`` for every member set."""
        key = float(theta_X)
        cached = self._self_cache.get(key)
        if cached is None:
            cached = np.array([_block_sums(s.points, s.points, key)[0][0, 0] for s in self.sets])
            if len(self._self_cache) > 8:
                self._self_cache.clear()
            self._self_cache[key] = cached
        return cached


def _reduce_blocks(mat, starts_a, starts_b, sizes_a, sizes_b):
    # contiguous axis first: several times faster than the other order
    out = np.add.reduceat(mat, starts_b, axis=1)
    out = np.add.reduceat(out, starts_a, axis=0)
    out /= np.multiply.outer(sizes_a, sizes_b)
    return out


def _block_sums(xa, xb, theta_X, starts_a=None, starts_b=None, sizes_a=None, sizes_b=None,
                sqdist=None, with_grad=False):
    """Block means of the Gaussian correlation between two packed point arrays.

    Returns ``(K0, G)`` where ``K0[i, j]`` is the mean correlation between
    block ``i`` of ``xa`` and block ``j`` of ``xb`` and ``G`` (or ``None``)
    is the mean of ``corr * ||x - y||^2 / theta_X^3``, the derivative of
    ``K0`` with respect to ``theta_X``.
    """
    if starts_a is None:
        starts_a = np.zeros(1, dtype=np.intp)
        sizes_a = np.array([xa.shape[0]])
    if starts_b is None:
        starts_b = np.zeros(1, dtype=np.intp)
        sizes_b = np.array([xb.shape[0]])
    d2 = cdist(xa, xb, "sqeuclidean") if sqdist is None else sqdist
    buf = np.multiply(d2, -0.5 / (theta_X * theta_X))
    # exp is very slow when its result is subnormal; those terms are < 1e-304
    np.maximum(buf, -700.0, out=buf)
    np.exp(buf, out=buf)
    k0 = _reduce_blocks(buf, starts_a, starts_b, sizes_a, sizes_b)
    grad = None
    if with_grad:
        buf *= d2
        grad = _reduce_blocks(buf, starts_a, starts_b, sizes_a, sizes_b)
        grad /= theta_X**3
    return k0, grad


def _collection_gram(coll: SetCollection, theta_X: float, with_grad=False):
    """Symmetric DS Gram (and its ``theta_X`` derivative) of one collection."""
    n = len(coll)
    k0 = np.empty((n, n))
    grad = np.empty((n, n)) if with_grad else None
    for i, j in coll.chunks():
        lo, hi = coll.starts[i], coll.starts[i] + coll.sizes[i:j].sum()
        sq = coll._sqdist[lo:hi] if coll._sqdist is not None else None
        kb, gb = _block_sums(
            coll.points[lo:hi], coll.points, theta_X,
            coll.starts[i:j] - lo, coll.starts, coll.sizes[i:j], coll.sizes,
            sqdist=sq, with_grad=with_grad,
        )
        k0[i:j] = kb
        if with_grad:
            grad[i:j] = gb
    k0 = _mirror_upper(k0)
    if with_grad:
        grad = _mirror_upper(grad)
    return k0, grad


def _collection_cross(ca: SetCollection, cb: SetCollection, theta_X: float):
    if ca.dim != cb.dim:
        raise InputError(f"dimension mismatch: {ca.dim} vs {cb.dim}")
    out = np.empty((len(ca), len(cb)))
    # chunk on the larger packed side
    budget = max(1, _BLOCK_PAIRS // max(cb.points.shape[0], 1))
    i = 0
    n = len(ca)
    while i < n:
        j, pts = i, 0
        while j < n and (j == i or pts + ca.sizes[j] <= budget):
            pts += ca.sizes[j]
            j += 1
        lo = ca.starts[i]
        hi = lo + pts
        out[i:j] = _block_sums(
            ca.points[lo:hi], cb.points, theta_X,
            ca.starts[i:j] - lo, cb.starts, ca.sizes[i:j], cb.sizes,
        )[0]
        i = j
    return out


def _mirror_upper(mat):
    upper = np.triu(mat)
    return upper + np.triu(mat, 1).T


def _same_dim(s: PointSet, t: PointSet):
    if s.dim != t.dim:
        raise InputError(f"dimension mismatch: {s.dim} vs {t.dim}")


def _pair(S, T):
    """Both sets, checked and put in a fixed order so that k(S,T) == k(T,S) bitwise."""
    S, T = as_pointset(S), as_pointset(T)
    _same_dim(S, T)
    if S._hash_key() > T._hash_key():
        S, T = T, S
    return S, T


def _de_from_k0(k0_st, k0_ss, k0_tt):
    return np.maximum(k0_ss + k0_tt - 2.0 * k0_st, 0.0)


# ---------------------------------------------------------------------------
# pairwise kernels
# ---------------------------------------------------------------------------


def inner_corr(x, y, p) -> float:
    """Gaussian correlation ``exp(-||x - y||^2 / (2 theta_X^2))`` between two points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape or x.ndim != 1:
        raise InputError(f"points of different shapes {x.shape} and {y.shape}")
    theta = _theta(p)
    diff = x - y
    return float(np.exp(-0.5 * np.dot(diff, diff) / (theta * theta)))


def ds_kernel(S, T, p) -> float:
    """Double sum kernel: the mean of :func:`inner_corr` over ``S x T``."""
    S, T = _pair(S, T)
    return float(_block_sums(S.points, T.points, _theta(p))[0][0, 0])


def _k0_triplet(S, T, theta, with_grad=False):
    kst, gst = _block_sums(S.points, T.points, theta, with_grad=with_grad)
    kss, gss = _block_sums(S.points, S.points, theta, with_grad=with_grad)
    ktt, gtt = _block_sums(T.points, T.points, theta, with_grad=with_grad)
    vals = (kst[0, 0], kss[0, 0], ktt[0, 0])
    grads = (gst[0, 0], gss[0, 0], gtt[0, 0]) if with_grad else None
    return vals, grads


def embed_distance(S, T, p) -> float:
    """Distance between the mean embeddings of ``S`` and ``T``.

    Computed as ``sqrt(k0(S,S) + k0(T,T) - 2 k0(S,T))`` with the radicand
    clamped at zero.
    """
    S, T = _pair(S, T)
    (kst, kss, ktt), _ = _k0_triplet(S, T, _theta(p))
    return float(np.sqrt(_de_from_k0(kst, kss, ktt)))


def de_kernel(S, T, p: DeepKernelParams) -> float:
    """Deep embedding kernel ``sigma2_H * exp(-d_E(S,T)^2 / (2 theta_H^2))``."""
    S, T = _pair(S, T)
    (kst, kss, ktt), _ = _k0_triplet(S, T, p.theta_X)
    d2 = _de_from_k0(kst, kss, ktt)
    return float(p.sigma2_H * np.exp(-0.5 * d2 / p.theta_H**2))


def de_corr_grad(S, T, p: DeepKernelParams) -> tuple[float, float]:
    """Partial derivatives of the outer correlation ``r_H(S, T)``.

    Returns
    -------
    (d_theta_H, d_theta_X) : tuple of float
        ``r_H * d_E^2 / theta_H^3`` and
        ``-r_H / (2 theta_H^2) * d(d_E^2)/d theta_X``.
    """
    S, T = _pair(S, T)
    (kst, kss, ktt), (gst, gss, gtt) = _k0_triplet(S, T, p.theta_X, with_grad=True)
    d2 = _de_from_k0(kst, kss, ktt)
    r = np.exp(-0.5 * d2 / p.theta_H**2)
    dd2 = gss + gtt - 2.0 * gst if d2 > 0 else 0.0
    return float(r * d2 / p.theta_H**3), float(-0.5 / p.theta_H**2 * r * dd2)


# ---------------------------------------------------------------------------
# Gram matrices
# ---------------------------------------------------------------------------


def _as_collection(sets) -> SetCollection:
    return sets if isinstance(sets, SetCollection) else SetCollection(sets)


def gram(sets, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix of a list of point sets, exactly symmetric."""
    coll = _as_collection(sets)
    k0, _ = _collection_gram(coll, spec.theta_X)
    if spec.family is KernelFamily.DS:
        return spec.sigma2 * k0 if spec.sigma2 != 1.0 else k0
    diag = np.diag(k0).copy()
    d2 = _de_from_k0(k0, diag[:, None], diag[None, :])
    np.fill_diagonal(d2, 0.0)
    return spec.sigma2 * np.exp(-0.5 * d2 / spec.theta_H**2)


def correlation_and_grads(coll: SetCollection, family: KernelFamily, theta_X: float,
                          theta_H: float | None = None, with_grad: bool = False):
    """Unit-variance correlation matrix of a collection, optionally with derivatives.

    For the DE family the derivatives are with respect to ``(theta_H,
    theta_X)``; for DS only ``theta_X`` is returned.
    """
    k0, g = _collection_gram(coll, theta_X, with_grad=with_grad and family is KernelFamily.DE)
    if family is KernelFamily.DS:
        return k0, None
    diag = np.diag(k0).copy()
    d2 = _de_from_k0(k0, diag[:, None], diag[None, :])
    np.fill_diagonal(d2, 0.0)
    r = np.exp(-0.5 * d2 / theta_H**2)
    if not with_grad:
        return r, None
    gdiag = np.diag(g).copy()
    dd2 = gdiag[:, None] + gdiag[None, :] - 2.0 * g
    dd2[d2 == 0.0] = 0.0
    d_theta_H = r * d2 / theta_H**3
    d_theta_X = -0.5 / theta_H**2 * r * dd2
    return r, (d_theta_H, d_theta_X)


def cross_gram(sets_a, sets_b, spec: KernelSpec) -> np.ndarray:
    """Kernel values between two collections (rows ``sets_a``, columns ``sets_b``)."""
    ca, cb = _as_collection(sets_a), _as_collection(sets_b)
    k0 = _collection_cross(ca, cb, spec.theta_X)
    if spec.family is KernelFamily.DS:
        return spec.sigma2 * k0 if spec.sigma2 != 1.0 else k0
    d2 = _de_from_k0(k0, ca.self_k0(spec.theta_X)[:, None], cb.self_k0(spec.theta_X)[None, :])
    return spec.sigma2 * np.exp(-0.5 * d2 / spec.theta_H**2)


def self_kernel(sets, spec: KernelSpec) -> np.ndarray:
    """``k(S, S)`` for each set: ``sigma2 * k0(S, S)`` for DS, ``sigma2`` for DE."""
    coll = _as_collection(sets)
    if spec.family is KernelFamily.DE:
        return np.full(len(coll), float(spec.sigma2))
    return spec.sigma2 * coll.self_k0(spec.theta_X)


def membership_matrix(ground: GroundSet, subsets: Sequence[Sequence[int]]) -> np.ndarray:
    """The ``c x q`` matrix whose column ``j`` is ``1/#S_j`` on the members of ``S_j``."""
    u = np.zeros((len(ground), len(subsets)))
    for j, sub in enumerate(subsets):
        idx = ground.check_indices(sub)
        u[idx, j] = 1.0 / len(idx)
    return u


def ds_gram_finite(ground: GroundSet, subsets, p) -> np.ndarray:
    """DS Gram over subsets of a finite ground set as ``U^T K_X U``."""
    if not len(subsets):
        raise InputError("no subsets given")
    u = membership_matrix(ground, subsets)
    theta = _theta(p)
    kx = np.exp(-0.5 * cdist(ground.elements, ground.elements, "sqeuclidean") / theta**2)
    return _mirror_upper(u.T @ kx @ u)
