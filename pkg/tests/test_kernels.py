import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import naive_de, naive_k0, random_sets
from setgp.conditioning import condition_number
from setgp.errors import InputError
from setgp.kernels import (
    DeepKernelParams,
    GroundSet,
    InnerKernelParams,
    KernelSpec,
    PointSet,
    cross_gram,
    de_corr_grad,
    de_kernel,
    ds_gram_finite,
    ds_kernel,
    embed_distance,
    gram,
    inner_corr,
)

unit = st.floats(0.0, 1.0, allow_nan=False)
point_sets = arrays(np.float64, st.tuples(st.integers(1, 6), st.just(2)), elements=unit)
thetas = st.floats(0.05, 2.0)


def deep(theta_X, theta_H, sigma2=1.0):
    return DeepKernelParams(InnerKernelParams(theta_X), theta_H, sigma2)


# --- point sets -------------------------------------------------------------


def test_pointset_canonical_order_and_dedup():
    S = PointSet([[0.5, 0.1], [0.2, 0.9], [0.5, 0.1], [0.2, 0.3]])
    assert len(S) == 3
    np.testing.assert_array_equal(S.points, [[0.2, 0.3], [0.2, 0.9], [0.5, 0.1]])
    assert S.canonical
    assert S == PointSet([[0.2, 0.9], [0.5, 0.1], [0.2, 0.3]])


def test_pointset_rejects_empty_and_nonfinite():
    with pytest.raises(InputError):
        PointSet(np.empty((0, 2)))
    with pytest.raises(InputError):
        PointSet([[0.1, np.nan]])


def test_ground_set_rejects_duplicates_and_bad_indices():
    with pytest.raises(InputError):
        GroundSet([[0, 0], [0, 0]])
    g = GroundSet([[0, 0], [1, 1]])
    with pytest.raises(InputError):
        g.subset([2])
    with pytest.raises(InputError):
        g.subset([0, 0])


# --- inner correlation ------------------------------------------------------


def test_inner_corr_examples():
    assert inner_corr([0.3, 0.7], [0.3, 0.7], 0.2) == 1.0
    assert inner_corr([0, 0], [1, 1], 1.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert inner_corr([0.0], [0.5], 0.5) == pytest.approx(math.exp(-0.5), rel=1e-15)


def test_inner_corr_dimension_mismatch():
    with pytest.raises(InputError):
        inner_corr([0, 0], [0, 0, 0], 1.0)


# --- double sum -------------------------------------------------------------


def test_ds_kernel_examples():
    x, y = [0.2, 0.4], [0.9, 0.1]
    assert ds_kernel([x], [x], 0.3) == 1.0
    assert ds_kernel([x], [y], 0.3) == pytest.approx(inner_corr(x, y, 0.3), rel=1e-15)
    val = ds_kernel([[0, 0], [1, 1]], [[0, 0]], 1.0)
    assert val == pytest.approx((1 + math.exp(-1)) / 2, rel=1e-15)


def test_ds_kernel_matches_loops(rng):
    for S, T in zip(random_sets(rng, 10), random_sets(rng, 10)):
        theta = rng.uniform(0.05, 2)
        S_, T_ = PointSet(S), PointSet(T)
        assert ds_kernel(S_, T_, theta) == pytest.approx(naive_k0(S_.points, T_.points, theta), rel=1e-12)


def test_ds_kernel_dimension_mismatch():
    with pytest.raises(InputError):
        ds_kernel([[0, 0]], [[0, 0, 0]], 1.0)


# --- embedding distance -----------------------------------------------------


def test_embed_distance_examples():
    S = PointSet([[0.1, 0.2], [0.3, 0.3]])
    assert embed_distance(S, S, 0.4) == 0.0
    x, y = [0.1, 0.1], [0.6, 0.2]
    expect = math.sqrt(2 - 2 * inner_corr(x, y, 0.4))
    assert embed_distance([x], [y], 0.4) == pytest.approx(expect, rel=1e-12)


def test_embed_distance_diameter_limit():
    # the corners are the farthest singletons; d_E approaches sqrt(2) as theta shrinks
    prev = -1.0
    for theta in [10.0, 1.0, 0.3, 0.1, 0.03, 1e-2, 1e-3]:
        d = embed_distance([[0, 0]], [[1, 1]], theta)
        assert d >= prev
        prev = d
    assert abs(prev - math.sqrt(2)) < 1e-6


@settings(max_examples=60, deadline=None)
@given(point_sets, point_sets, point_sets, thetas)
def test_embed_distance_pseudometric(A, B, C, theta):
    dab = embed_distance(A, B, theta)
    dbc = embed_distance(B, C, theta)
    dac = embed_distance(A, C, theta)
    assert dab == embed_distance(B, A, theta)
    assert dac <= dab + dbc + 1e-10
    assert max(dab, dbc, dac) <= math.sqrt(2) + 1e-10


def test_embed_distance_positive_on_distinct_sets(rng):
    for S, T in zip(random_sets(rng, 50), random_sets(rng, 50)):
        assert embed_distance(S, T, 0.3) > 0


# --- deep embedding ---------------------------------------------------------


def test_de_kernel_examples():
    S = PointSet([[0.1, 0.2], [0.5, 0.5]])
    assert de_kernel(S, S, deep(0.3, 0.5)) == 1.0
    assert de_kernel(S, S, deep(0.3, 0.5, 2.5)) == 2.5
    x, y = [0.2, 0.2], [0.7, 0.4]
    got = de_kernel([x], [y], deep(0.35, 1.0))
    assert got == pytest.approx(math.exp(-(1 - inner_corr(x, y, 0.35))), rel=1e-12)


def test_de_kernel_matches_reference(rng):
    for _ in range(10):
        S, T = rng.random((10, 2)), rng.random((10, 2))
        tx, th, s2 = rng.uniform(0.05, 2), rng.uniform(0.05, 1.4), rng.uniform(0.5, 3)
        assert de_kernel(S, T, deep(tx, th, s2)) == pytest.approx(naive_de(S, T, tx, th, s2), rel=1e-10)


def _fd_grads(S, T, tx, th, h=1e-6):
    gh = (de_kernel(S, T, deep(tx, th + h)) - de_kernel(S, T, deep(tx, th - h))) / (2 * h)
    gx = (de_kernel(S, T, deep(tx + h, th)) - de_kernel(S, T, deep(tx - h, th))) / (2 * h)
    return gh, gx


def test_de_corr_grad_vanishes_on_equal_sets():
    S = PointSet([[0.1, 0.2], [0.4, 0.8]])
    assert de_corr_grad(S, S, deep(0.3, 0.7)) == (0.0, 0.0)


def test_de_corr_grad_singleton_closed_form():
    x, y, tx, th = np.array([0.1, 0.3]), np.array([0.6, 0.2]), 0.4, 0.8
    r = inner_corr(x, y, tx)
    dist2 = float(np.sum((x - y) ** 2))
    d2 = 2 - 2 * r
    rH = math.exp(-d2 / (2 * th**2))
    dd2 = -2 * r * dist2 / tx**3
    gh, gx = de_corr_grad([x], [y], deep(tx, th))
    assert gh == pytest.approx(rH * d2 / th**3, rel=1e-12)
    assert gx == pytest.approx(-rH * dd2 / (2 * th**2), rel=1e-12)


def test_de_corr_grad_matches_finite_differences(rng):
    for _ in range(100):
        S = rng.random((int(rng.integers(1, 8)), 2))
        T = rng.random((int(rng.integers(1, 8)), 2))
        tx, th = rng.uniform(0.05, 2), rng.uniform(0.05, 2)
        gh, gx = de_corr_grad(S, T, deep(tx, th))
        fh, fx = _fd_grads(S, T, tx, th)
        assert gh == pytest.approx(fh, rel=1e-5, abs=1e-9)
        assert gx == pytest.approx(fx, rel=1e-5, abs=1e-9)


# --- Gram matrices ----------------------------------------------------------


def test_gram_single_set():
    S = PointSet([[0.1, 0.1], [0.9, 0.2]])
    K = gram([S], KernelSpec("DS", 0.3))
    assert K.shape == (1, 1)
    assert K[0, 0] == pytest.approx(ds_kernel(S, S, 0.3), rel=1e-15)


def test_gram_entries_match_pairwise(rng):
    sets = random_sets(rng, 12)
    for spec in (KernelSpec("DS", 0.3), KernelSpec("DE", 0.3, 0.6, sigma2=2.0)):
        K = gram(sets, spec)
        assert np.array_equal(K, K.T)
        for i in range(len(sets)):
            for j in range(len(sets)):
                if spec.family == "DS":
                    ref = naive_k0(PointSet(sets[i]).points, PointSet(sets[j]).points, 0.3)
                else:
                    ref = naive_de(PointSet(sets[i]).points, PointSet(sets[j]).points, 0.3, 0.6, 2.0)
                assert K[i, j] == pytest.approx(ref, rel=1e-10, abs=1e-14)


def test_cross_gram_consistent_with_gram(rng):
    sets = random_sets(rng, 9)
    spec = KernelSpec("DE", 0.25, 0.4)
    np.testing.assert_allclose(cross_gram(sets[:4], sets, spec), gram(sets, spec)[:4], rtol=1e-12, atol=1e-15)


def test_gram_dimension_mismatch():
    with pytest.raises(InputError):
        gram([np.zeros((2, 2)), np.zeros((2, 3))], KernelSpec("DS", 0.3))


def test_ds_gram_singular_on_nested_triple(rng):
    for _ in range(20):
        xa, xb = rng.random(2), rng.random(2)
        theta = rng.uniform(0.05, 2)
        K = gram([[xa], [xb], [xa, xb]], KernelSpec("DS", theta))
        w = np.linalg.eigvalsh(K)
        assert w[0] <= 1e-10 * np.trace(K)
        assert abs(np.linalg.det(K)) <= 1e-12
        assert condition_number(K) == math.inf


def test_ds_quadratic_form_nonnegative(rng):
    for _ in range(20):
        sets = random_sets(rng, int(rng.integers(2, 31)))
        K = gram(sets, KernelSpec("DS", rng.uniform(0.05, 2)))
        a = rng.normal(size=len(sets))
        assert a @ K @ a >= -1e-10


def test_de_gram_positive_definite(rng):
    sets = [rng.random((5, 2)) for _ in range(20)]
    K = gram(sets, KernelSpec("DE", 0.3, 0.5))
    assert np.linalg.eigvalsh(K)[0] > 0
    np.linalg.cholesky(K)


@settings(max_examples=40, deadline=None)
@given(point_sets, point_sets, thetas, thetas, st.randoms(use_true_random=False))
def test_kernels_symmetric_and_order_invariant(A, B, tx, th, rnd):
    perm = list(range(len(A)))
    rnd.shuffle(perm)
    for f, p in ((ds_kernel, tx), (embed_distance, tx), (de_kernel, deep(tx, th))):
        assert f(A, B, p) == f(B, A, p)
        assert f(A[perm], B, p) == f(A, B, p)


# --- finite ground sets -----------------------------------------------------


def test_ds_gram_finite_matches_pairwise(rng):
    ground = GroundSet(rng.random((12, 2)))
    subsets = [list(rng.choice(12, int(rng.integers(1, 7)), replace=False)) for _ in range(15)]
    G = ds_gram_finite(ground, subsets, 0.3)
    assert np.array_equal(G, G.T)
    for i, a in enumerate(subsets):
        for j, b in enumerate(subsets):
            assert G[i, j] == pytest.approx(ds_kernel(ground.subset(a), ground.subset(b), 0.3), abs=1e-12)


def test_ds_gram_finite_nested_triple_singular():
    ground = GroundSet([[0.2, 0.3], [0.7, 0.6]])
    G = ds_gram_finite(ground, [[0], [1], [0, 1]], 0.5)
    assert np.linalg.matrix_rank(G) <= 2


def test_ds_gram_finite_singular_with_fewer_subsets_than_points(rng):
    # q = 4 subsets of c = 5 points whose membership vectors are dependent
    rows = np.array([[1, 1, 0, 0, 1], [0, 0, 1, 1, 1], [1, 0, 0, 1, 1], [0, 1, 1, 0, 1]])
    subsets = [list(np.flatnonzero(r)) for r in rows]
    for _ in range(5):
        ground = GroundSet(rng.random((5, 2)))
        G = ds_gram_finite(ground, subsets, rng.uniform(0.1, 1.0))
        assert np.linalg.eigvalsh(G)[0] <= 1e-10 * np.trace(G)


def test_ds_gram_finite_whole_ground_set(rng):
    X = rng.random((6, 2))
    G = ds_gram_finite(GroundSet(X), [list(range(6))], 0.4)
    assert G.shape == (1, 1)
    assert G[0, 0] == pytest.approx(naive_k0(X, X, 0.4), rel=1e-12)


def test_ds_gram_finite_bad_index():
    with pytest.raises(InputError):
        ds_gram_finite(GroundSet([[0, 0], [1, 1]]), [[0, 5]], 0.3)
