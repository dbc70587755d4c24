import math

import numpy as np
import pytest

from conftest import random_sets
from setgp.conditioning import condition_number
from setgp.errors import InputError, SingularMatrixError, UndefinedError
from setgp.gp import (
    Likelihood,
    SetDataset,
    concentrated_nll,
    fit,
    loo_residuals,
    predict,
    q2,
)
from setgp.kernels import JitterPolicy, KernelSpec, PointSet, cross_gram, gram, self_kernel

DE = KernelSpec("DE", 0.3, 0.5)
DS = KernelSpec("DS", 0.2)


def toy_data(rng, n=15, p=5):
    sets = [rng.random((p, 2)) for _ in range(n)]
    y = np.array([np.sin(4 * s[:, 0]).mean() + s[:, 1].max() ** 2 for s in sets])
    return SetDataset(sets, y)


def naive_predict(data, spec, S):
    """Ordinary kriging written with explicit inverses."""
    R = gram(data.sets, spec.with_params(sigma2=1.0))
    Ri = np.linalg.inv(R)
    y = np.asarray(data.responses)
    one = np.ones(len(y))
    beta = one @ Ri @ y / (one @ Ri @ one)
    sigma2 = (y - beta) @ Ri @ (y - beta) / len(y)
    r = cross_gram(data.sets, [S], spec.with_params(sigma2=1.0))[:, 0]
    c0 = self_kernel([S], spec.with_params(sigma2=1.0))[0]
    mean = beta + r @ Ri @ (y - beta)
    var = sigma2 * (c0 - r @ Ri @ r + (1 - one @ Ri @ r) ** 2 / (one @ Ri @ one))
    return mean, max(var, 0.0), sigma2


# --- dataset ----------------------------------------------------------------


def test_dataset_validation():
    with pytest.raises(InputError):
        SetDataset([np.zeros((1, 2))], [np.nan])
    with pytest.raises(InputError):
        SetDataset([np.zeros((1, 2)), np.zeros((1, 3))], [1.0, 2.0])
    with pytest.raises(InputError):
        SetDataset([np.zeros((1, 2))], [1.0, 2.0])


def test_dataset_deduplicated():
    a, b = [[0.1, 0.2]], [[0.3, 0.4]]
    d = SetDataset([a, b, a], [1.0, 2.0, 1.0]).deduplicated()
    assert len(d) == 2
    with pytest.raises(InputError):
        SetDataset([a, b, a], [1.0, 2.0, 1.5]).deduplicated()


# --- fit --------------------------------------------------------------------


def test_fit_two_sets_no_jitter():
    data = SetDataset([[[0.1, 0.1]], [[0.8, 0.6]]], [1.0, 3.0])
    m = fit(data, DE)
    assert m.jitter_applied == 0.0
    assert m.sigma2_H > 0
    np.testing.assert_allclose(m.chol @ m.chol.T, gram(data.sets, DE), atol=1e-10)


def test_fit_ds_nested_triple_singular():
    xa, xb = [0.2, 0.3], [0.7, 0.9]
    data = SetDataset([[xa], [xb], [xa, xb]], [1.0, 2.0, 1.2])
    with pytest.raises(SingularMatrixError) as exc:
        fit(data, DS, JitterPolicy.none())
    assert exc.value.minor == 3


def test_fit_ds_nested_triple_with_jitter():
    xa, xb = [0.2, 0.3], [0.7, 0.9]
    data = SetDataset([[xa], [xb], [xa, xb]], [1.0, 2.0, 1.2])
    m = fit(data, DS, JitterPolicy.bound(5))
    assert m.jitter_applied > 0
    Rd = gram(data.sets, DS) + m.jitter_applied * np.eye(3)
    assert condition_number(Rd) <= math.exp(5) * (1 + 1e-10)
    np.testing.assert_allclose(m.chol @ m.chol.T, Rd, atol=1e-10)


def test_jitter_not_applied_when_plain_cholesky_succeeds(rng):
    # ill-conditioned (kappa ~ 1e12) but factorizable: no jitter at any target
    data = toy_data(rng, n=30)
    spec = KernelSpec("DS", 0.8)
    assert condition_number(gram(data.sets, spec)) > math.exp(7)
    m0 = fit(data, spec)
    for a in (1, 4, 7):
        m = fit(data, spec, JitterPolicy.bound(a))
        assert m.jitter_applied == 0.0
        assert m.beta == m0.beta and m.sigma2_H == m0.sigma2_H


@pytest.mark.parametrize("a", [1, 2, 3, 4, 5, 6, 7])
def test_jitter_guarantee_on_fits(rng, a):
    data = toy_data(rng, n=30)
    spec = KernelSpec("DS", 2.0)
    with pytest.raises(SingularMatrixError):
        fit(data, spec)
    m = fit(data, spec, JitterPolicy.bound(a))
    assert m.jitter_applied > 0
    Rd = gram(data.sets, spec) + m.jitter_applied * np.eye(len(data))
    assert condition_number(Rd) <= math.exp(a) * (1 + 1e-10)
    np.testing.assert_allclose(m.chol @ m.chol.T, Rd, atol=1e-10)


# --- predict ----------------------------------------------------------------


@pytest.mark.parametrize("spec", [DE, DS])
def test_predict_interpolates(rng, spec):
    data = toy_data(rng, n=12)
    m = fit(data, spec)
    res = predict(m, data.sets)
    np.testing.assert_allclose(res.mean, data.responses, rtol=1e-8, atol=1e-8)
    assert np.all(res.variance <= 1e-8 * m.sigma2_H)


@pytest.mark.parametrize("spec", [DE, DS])
def test_predict_matches_naive_inverse(rng, spec):
    data = toy_data(rng, n=12)
    m = fit(data, spec)
    for T in random_sets(rng, 8, p_max=6):
        mean, var, s2 = naive_predict(data, spec, PointSet(T))
        res = predict(m, T)
        assert m.sigma2_H == pytest.approx(s2, rel=1e-8)
        assert res.mean == pytest.approx(mean, rel=1e-8, abs=1e-8)
        assert res.variance == pytest.approx(var, rel=1e-8, abs=1e-8 * s2)
        assert res.sd == pytest.approx(math.sqrt(res.variance))


def test_predict_far_limit(rng):
    data = toy_data(rng, n=8, p=1)
    spec = KernelSpec("DE", 0.01, 0.01)
    m = fit(data, spec)
    res = predict(m, [[0.5, 0.5], [0.55, 0.45]])
    assert res.mean == pytest.approx(m.beta, abs=1e-12)
    assert res.variance == pytest.approx(m.sigma2_H * (1 + 1 / m.one_rinv_one), rel=1e-10)


def test_predict_dimension_mismatch(rng):
    m = fit(toy_data(rng, n=5), DE)
    with pytest.raises(InputError):
        predict(m, np.zeros((2, 3)))


def test_affine_response_transforms(rng):
    data = toy_data(rng, n=14)
    tests = random_sets(rng, 5)
    base = fit(data, DE)
    p0 = predict(base, tests)
    shifted = fit(SetDataset(data.sets, data.responses + 7.5), DE)
    p1 = predict(shifted, tests)
    np.testing.assert_allclose(p1.mean, p0.mean + 7.5, rtol=1e-10)
    np.testing.assert_allclose(p1.variance, p0.variance, rtol=1e-8)
    scaled = fit(SetDataset(data.sets, 3.0 * data.responses - 2.0), DE)
    assert scaled.sigma2_H == pytest.approx(9.0 * base.sigma2_H, rel=1e-10)
    p2 = predict(scaled, tests)
    np.testing.assert_allclose(p2.mean, 3.0 * p0.mean - 2.0, rtol=1e-10)
    np.testing.assert_allclose(p2.variance, 9.0 * p0.variance, rtol=1e-8)
    z0 = [r.standardized for r in loo_residuals(base)]
    z2 = [r.standardized for r in loo_residuals(scaled)]
    np.testing.assert_allclose(z2, z0, rtol=1e-8)


# --- likelihood -------------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_nll_gradient_matches_finite_differences(seed):
    data = toy_data(np.random.default_rng(seed), n=15, p=5)
    lik = Likelihood(data, "DE")
    for th in np.geomspace(0.1, 1.2, 5):
        for tx in np.geomspace(0.05, 0.8, 5):
            _, (gh, gx) = lik.value_and_grad(th, tx)
            h = 1e-6
            fh = (lik.value(th * (1 + h), tx) - lik.value(th * (1 - h), tx)) / (2 * h * th)
            fx = (lik.value(th, tx * (1 + h)) - lik.value(th, tx * (1 - h))) / (2 * h * tx)
            assert gh == pytest.approx(fh, rel=1e-4, abs=1e-6)
            assert gx == pytest.approx(fx, rel=1e-4, abs=1e-6)


def test_nll_value_matches_model(rng):
    data = toy_data(rng, n=10)
    val, _ = concentrated_nll(data, 0.5, 0.3)
    m = fit(data, DE)
    assert val == pytest.approx(m.nll(), rel=1e-12)
    R = gram(data.sets, DE)
    ref = 0.5 * len(data) * math.log(m.sigma2_H) + 0.5 * np.linalg.slogdet(R)[1]
    assert val == pytest.approx(ref, rel=1e-9)


def test_nll_permutation_invariant(rng):
    data = toy_data(rng, n=15)
    perm = rng.permutation(15)
    a, _ = concentrated_nll(data, 0.4, 0.25)
    b, _ = concentrated_nll(data.subset(perm), 0.4, 0.25)
    assert a == pytest.approx(b, rel=1e-10)


def test_nll_duplicated_dataset_same_argmin(rng):
    data = toy_data(rng, n=12)
    doubled = SetDataset(data.sets + data.sets, np.concatenate([data.responses, data.responses]))
    grid = [(th, tx) for th in np.geomspace(0.1, 1.4, 6) for tx in np.geomspace(0.05, 1.0, 6)]
    v1 = [concentrated_nll(data, th, tx)[0] for th, tx in grid]
    v2 = [concentrated_nll(doubled, th, tx)[0] for th, tx in grid]
    assert int(np.argmin(v1)) == int(np.argmin(v2))


def test_nll_ds_gradient_has_no_theta_H_component(rng):
    data = toy_data(rng, n=10)
    _, (gh, gx) = concentrated_nll(data, 1.0, 0.15, family="DS")
    assert gh == 0.0 and math.isfinite(gx)


# --- Q2 ---------------------------------------------------------------------


def test_q2_examples():
    a = np.array([0.0, 1.0, 2.0, 5.0])
    assert q2(a, a) == 1.0
    assert q2(a, np.full(4, a.mean())) == 0.0
    assert q2([0, 1, 2], [0, 1, 1]) == pytest.approx(0.5)


def test_q2_errors():
    with pytest.raises(UndefinedError):
        q2([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(InputError):
        q2([1.0, 2.0], [1.0])


# --- leave-one-out ----------------------------------------------------------


def naive_loo(data, spec, sigma2):
    out = []
    for i in range(len(data)):
        keep = [j for j in range(len(data)) if j != i]
        m = fit(data.subset(keep), spec)
        res = predict(m, data.sets[i])
        # hyperparameters fixed: reuse the full-data process variance
        var = res.variance * sigma2 / m.sigma2_H
        out.append((data.responses[i] - res.mean, math.sqrt(var)))
    return out


@pytest.mark.parametrize("n", [3, 10])
@pytest.mark.parametrize("spec", [DE, DS])
def test_loo_matches_refits(rng, n, spec):
    data = toy_data(rng, n=n)
    m = fit(data, spec)
    got = loo_residuals(m)
    for r, (raw, sd) in zip(got, naive_loo(data, spec, m.sigma2_H)):
        assert not r.flagged
        assert r.raw == pytest.approx(raw, rel=1e-6, abs=1e-9)
        assert r.sd == pytest.approx(sd, rel=1e-6)
        assert r.standardized == pytest.approx(raw / sd, rel=1e-6, abs=1e-9)


def test_loo_needs_three_records(rng):
    with pytest.raises(InputError):
        loo_residuals(fit(toy_data(rng, n=2), DE))


def test_loo_permutation_equivariant(rng):
    data = toy_data(rng, n=9)
    perm = rng.permutation(9)
    a = [r.raw for r in loo_residuals(fit(data, DE))]
    b = [r.raw for r in loo_residuals(fit(data.subset(perm), DE))]
    np.testing.assert_allclose(np.array(a)[perm], b, rtol=1e-8, atol=1e-12)


def test_loo_standardized_on_prior_samples():
    rng = np.random.default_rng(5)
    spec = KernelSpec("DE", 0.3, 0.5)
    variances = []
    for _ in range(5):
        sets = [rng.random((5, 2)) for _ in range(50)]
        L = np.linalg.cholesky(gram(sets, spec) + 1e-12 * np.eye(50))
        y = 2.0 + 1.5 * L @ rng.normal(size=50)
        z = [r.standardized for r in loo_residuals(fit(SetDataset(sets, y), spec))]
        variances.append(np.var(z))
    assert all(0.3 <= v <= 3 for v in variances)
