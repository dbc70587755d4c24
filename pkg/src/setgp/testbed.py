"""Objectives on point sets, dataset generation and CSV exchange."""

from __future__ import annotations

import csv
import enum
import io
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError, ParseError
from .gp import SetDataset
from .kernels import GroundSet, PointSet, as_pointset

__all__ = [
    "branin",
    "ObjectiveKind",
    "SetObjective",
    "CombinatorialProblem",
    "eval_set_objective",
    "eval_combinatorial",
    "generate_dataset",
    "generate_combinatorial_dataset",
    "load_csv",
    "write_csv",
    "split",
    "BRANIN_MINIMUM",
]

BRANIN_MINIMUM = 0.397887357729738


def branin(x) -> float | np.ndarray:
    """Branin-Hoo on the unit square.

    Inputs in ``[0, 1]^2`` are mapped affinely onto ``[-5, 10] x [0, 15]``
    before applying

    .. math::
        (x_2 - b x_1^2 + c x_1 - 6)^2 + 10 (1 - t) \\cos x_1 + 10

    with ``b = 5.1 / (4 pi^2)``, ``c = 5 / pi``, ``t = 1 / (8 pi)``.
    Accepts a single point or an ``(m, 2)`` array.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != 2:
        raise InputError(f"Branin takes 2-d points, got dimension {arr.shape[1]}")
    if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
        raise InputError("Branin inputs must lie in the unit square")
    x1 = 15.0 * arr[:, 0] - 5.0
    x2 = 15.0 * arr[:, 1]
    b = 5.1 / (4.0 * np.pi**2)
    c = 5.0 / np.pi
    t = 1.0 / (8.0 * np.pi)
    y = (x2 - b * x1**2 + c * x1 - 6.0) ** 2 + 10.0 * (1.0 - t) * np.cos(x1) + 10.0
    return float(y[0]) if single else y


class ObjectiveKind(str, enum.Enum):
    MAX = "MAX"
    MIN = "MIN"
    MEAN = "MEAN"
    COMBINATORIAL = "COMBINATORIAL"
    EXTERNAL = "EXTERNAL"


@dataclass(frozen=True)
class CombinatorialProblem:
    """Subset selection over a finite ground set of 2-d locations.

    The score of a subset at a grid location ``t`` is its distance to the
    nearest selected location; the objective sums, over the grid, the
    squared gap between that score and the score of the full ground set.
    """

    ground: GroundSet
    subset_size: int
    grid_resolution: int = 25
    target_grid: np.ndarray = field(init=False, repr=False)
    _full_score: np.ndarray = field(init=False, repr=False)
    _dist: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = len(self.ground)
        if not 1 <= self.subset_size <= m:
            raise InputError(f"subset size {self.subset_size} must be in [1, {m}]")
        if self.grid_resolution < 20:
            raise InputError("grid resolution must be at least 20")
        g = (np.arange(self.grid_resolution) + 0.5) / self.grid_resolution
        grid = np.array(list(itertools.product(g, g)))
        dist = cdist(grid, self.ground.elements)
        object.__setattr__(self, "target_grid", grid)
        object.__setattr__(self, "_dist", dist)
        object.__setattr__(self, "_full_score", dist.min(axis=1))

    @classmethod
    def random(cls, m: int, p: int, seed: int = 0, grid_resolution: int = 25):
        rng = np.random.default_rng(seed)
        return cls(GroundSet(rng.random((m, 2))), p, grid_resolution)

    def score(self, subset) -> np.ndarray:
        idx = self.ground.check_indices(subset)
        return self._dist[:, idx].min(axis=1)

    def all_subsets(self) -> list[tuple[int, ...]]:
        return list(itertools.combinations(range(len(self.ground)), self.subset_size))


@dataclass(frozen=True)
class SetObjective:
    """A deterministic function of a point set.

    ``MAX``, ``MIN`` and ``MEAN`` aggregate Branin over the set's points.
    ``COMBINATORIAL`` takes subset index lists of ``problem``.  ``EXTERNAL``
    looks responses up in ``table`` (a mapping from PointSet to value).
    """

    kind: ObjectiveKind
    problem: CombinatorialProblem | None = None
    table: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.kind, ObjectiveKind):
            try:
                object.__setattr__(self, "kind", ObjectiveKind(str(self.kind).upper()))
            except ValueError:
                raise InputError(f"unknown objective kind {self.kind!r}") from None
        if self.kind is ObjectiveKind.COMBINATORIAL and self.problem is None:
            raise InputError("a combinatorial objective needs a problem")
        if self.kind is ObjectiveKind.EXTERNAL and self.table is None:
            raise InputError("an external objective needs a lookup table")

    def __call__(self, item) -> float:
        if self.kind is ObjectiveKind.COMBINATORIAL:
            return eval_combinatorial(self.problem, item)
        return eval_set_objective(self, item)


def eval_set_objective(obj: SetObjective, S) -> float:
    """Evaluate a MAX / MIN / MEAN Branin objective (or an external lookup)."""
    if obj.kind is ObjectiveKind.COMBINATORIAL:
        raise InputError("combinatorial objectives take subset indices; use eval_combinatorial")
    S = as_pointset(S)
    if obj.kind is ObjectiveKind.EXTERNAL:
        try:
            return float(obj.table[S])
        except KeyError:
            raise InputError("point set not present in the external table") from None
    if S.dim != 2:
        raise InputError(f"Branin objectives need 2-d sets, got dimension {S.dim}")
    vals = branin(S.points)
    if obj.kind is ObjectiveKind.MAX:
        return float(np.max(vals))
    if obj.kind is ObjectiveKind.MIN:
        return float(np.min(vals))
    return float(np.mean(vals))


def eval_combinatorial(problem: CombinatorialProblem, subset) -> float:
    """Sum over the grid of squared score gaps between ``subset`` and the full set.

    ``subset`` must have ``problem.subset_size`` indices, or all of them.
    """
    idx = problem.ground.check_indices(subset)
    if len(idx) not in (problem.subset_size, len(problem.ground)):
        raise InputError(f"subset has {len(idx)} elements, expected {problem.subset_size}")
    gap = problem._full_score - problem.score(idx)
    return float(np.sum(gap * gap))


def generate_dataset(obj: SetObjective, n: int, p: int, seed: int = 0, dimension: int = 2) -> SetDataset:
    """``n`` sets of ``p`` i.i.d. uniform points in ``[0, 1]^d`` with their objective values."""
    if n < 1 or p < 1:
        raise InputError("n and p must be at least 1")
    if obj.kind in (ObjectiveKind.COMBINATORIAL, ObjectiveKind.EXTERNAL):
        raise InputError(f"cannot sample point sets for a {obj.kind.value} objective")
    rng = np.random.default_rng(seed)
    pts = rng.random((n, p, dimension))
    sets = [PointSet(pts[i]) for i in range(n)]
    return SetDataset(sets, [eval_set_objective(obj, s) for s in sets], dimension)


def split(data: SetDataset, ratio: float, seed: int = 0):
    """Seeded random train/test partition with ``floor(ratio * n)`` training records."""
    if not 0 < ratio < 1:
        raise InputError(f"ratio must be in (0, 1), got {ratio}")
    n = len(data)
    n_train = int(math.floor(ratio * n + 1e-9))
    perm = np.random.default_rng(seed).permutation(n)
    return data.subset(np.sort(perm[:n_train])), data.subset(np.sort(perm[n_train:]))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(data: SetDataset, path) -> None:
    """Write one row per point: ``set_id,point_idx,x1..xd,response``."""
    d = data.dimension
    header = ["set_id", "point_idx"] + [f"x{k + 1}" for k in range(d)] + ["response"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for sid, (s, y) in enumerate(zip(data.sets, data.responses)):
        for j, pt in enumerate(s.points):
            w.writerow([sid, j] + [_fmt(v) for v in pt] + [_fmt(y)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def load_csv(path) -> SetDataset:
    """Read a dataset written in the one-row-per-point layout.

    Rows of a set need not be contiguous; sets keep the order of their first
    appearance.  Sets may have different cardinalities.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file", 1) from None
    header = [h.strip() for h in header]
    d = len(header) - 3
    expected = ["set_id", "point_idx"] + [f"x{k + 1}" for k in range(d)] + ["response"]
    if d < 1 or header != expected:
        raise ParseError(f"bad header {header}; expected set_id,point_idx,x1,...,xd,response", 1)
    points: dict[str, list] = {}
    resp: dict[str, float] = {}
    seen_idx: dict[str, set] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        sid = row[0].strip()
        try:
            pidx = int(row[1])
            coords = [float(v) for v in row[2:2 + d]]
            y = float(row[-1])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not (all(math.isfinite(c) for c in coords) and math.isfinite(y)):
            raise ParseError("non-finite value", lineno)
        if sid in resp and resp[sid] != y:
            raise ParseError(f"response of set {sid} differs from its earlier rows", lineno)
        if pidx in seen_idx.setdefault(sid, set()):
            raise ParseError(f"duplicate point_idx {pidx} in set {sid}", lineno)
        seen_idx[sid].add(pidx)
        resp[sid] = y
        points.setdefault(sid, []).append((pidx, coords))
    if not points:
        raise ParseError("no data rows", 2)
    sets = [PointSet([c for _, c in sorted(pts)]) for pts in points.values()]
    return SetDataset(sets, [resp[k] for k in points], d)


def generate_combinatorial_dataset(problem: CombinatorialProblem, n: int, seed: int = 0) -> SetDataset:
    """``n`` distinct random subsets of the ground set, as point sets with their objective values."""
    subsets = problem.all_subsets()
    if not 1 <= n <= len(subsets):
        raise InputError(f"n must be in [1, {len(subsets)}]")
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(len(subsets), n, replace=False))
    chosen = [subsets[i] for i in picks]
    return SetDataset(
        [problem.ground.subset(s) for s in chosen],
        [eval_combinatorial(problem, s) for s in chosen],
        problem.ground.dim,
    )
