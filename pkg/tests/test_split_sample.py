import numpy as np
import pytest
from hypothesis import given, strategies as st

from deepiv.data import Dataset
from deepiv.errors import DomainError, SingularMatrix
from deepiv.first_stage import LinearModel, fit_dnn, fit_linear
from deepiv.inference import estimate_beta
from deepiv.mlp import TrainConfig
from deepiv.simlab import DgpSpec, gen_dgp
from deepiv.split_sample import combine, cross_fit, fit_split_estimator, split, split_vcov


@given(st.integers(4, 500), st.integers(0, 2**31))
def test_split_partition(n, seed):
    plan = split(n, seed)
    assert plan.indices_a.size == n // 2 and plan.indices_b.size == n - n // 2
    both = np.concatenate([plan.indices_a, plan.indices_b])
    np.testing.assert_array_equal(np.sort(both), np.arange(n))
    np.testing.assert_array_equal(split(n, seed).indices_a, plan.indices_a)


def test_split_small_n():
    with pytest.raises(DomainError):
        split(3)


def test_split_seed_changes_partition():
    assert not np.array_equal(split(100, 1).indices_a, split(100, 2).indices_a)


def hand_problem(seed, n=6, q=1):
    g = np.random.default_rng(seed)
    x = g.normal(size=(n, q))
    return x + g.normal(size=(n, q)), x, x @ np.full(q, 2.0) + g.normal(size=n)


def test_identical_models_hand_case():
    z_hat, x, y = hand_problem(0)
    a, b = slice(0, 3), slice(3, 6)
    est = combine(z_hat[a], x[a], y[a], z_hat[b], x[b], y[b])
    ba = np.sum(z_hat[a, 0] * y[a]) / np.sum(z_hat[a, 0] * x[a, 0])
    bb = np.sum(z_hat[b, 0] * y[b]) / np.sum(z_hat[b, 0] * x[b, 0])
    ma, mb = np.sum(z_hat[a, 0] * x[a, 0]), np.sum(z_hat[b, 0] * x[b, 0])
    assert est.beta_a[0] == pytest.approx(ba, rel=1e-13)
    assert est.beta_b[0] == pytest.approx(bb, rel=1e-13)
    assert est.beta_ab[0] == pytest.approx((ma * ba + mb * bb) / (ma + mb), rel=1e-12)
    # pooling the moments is the same as one full-sample estimate
    assert est.beta_ab[0] == pytest.approx(estimate_beta(z_hat, x, y)[0], rel=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_combination_identity(seed, q):
    z_hat, x, y = hand_problem(seed, n=40, q=q)
    a, b = slice(0, 20), slice(20, 40)
    est = combine(z_hat[a], x[a], y[a], z_hat[b], x[b], y[b])
    lhs = (est.m_a + est.m_b) @ est.beta_ab
    rhs = est.m_a @ est.beta_a + est.m_b @ est.beta_b
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * (1 + np.max(np.abs(rhs)))


@given(st.integers(0, 10_000))
def test_group_swap_symmetry(seed):
    z_hat, x, y = hand_problem(seed, n=40, q=2)
    a, b = slice(0, 20), slice(20, 40)
    e1 = combine(z_hat[a], x[a], y[a], z_hat[b], x[b], y[b])
    e2 = combine(z_hat[b], x[b], y[b], z_hat[a], x[a], y[a])
    np.testing.assert_allclose(e1.beta_ab, e2.beta_ab, atol=1e-10, rtol=0)
    np.testing.assert_allclose(e1.vcov_ab, e2.vcov_ab, atol=1e-10, rtol=1e-12)


def test_split_vcov_cases():
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    assert np.all(split_vcov(np.array([[5.0]]), x[:2], 2 * x[:2, 0], x[2:], 2 * x[2:, 0], np.array([2.0]))[0] == 0)
    z_hat, x, y = hand_problem(3, n=10)
    m = float(z_hat[:, 0] @ x[:, 0])
    v2, s2 = split_vcov(np.array([[m]]), x[:5], y[:5], x[5:], y[5:], np.array([1.5]))
    sse = np.sum((y - 1.5 * x[:, 0]) ** 2)
    assert v2[0, 0] == pytest.approx(sse / m, rel=1e-12)
    assert s2 == pytest.approx(sse / 10, rel=1e-12)


def test_truncation_below_all_predictions_is_singular():
    data, _ = gen_dgp(DgpSpec("dgp2", n=40), 0)
    big = LinearModel(4, 1, coef=np.array([[50.0], [0.0], [0.0], [0.0], [0.0]]))
    with pytest.raises(SingularMatrix):
        cross_fit(data, split(data, 0), big, big, 10.0)


def test_cross_fit_uses_other_group():
    data, _ = gen_dgp(DgpSpec("dgp2", n=200), 1)
    plan = split(data, 5)
    ma = fit_linear(data.subset(plan.indices_a))
    mb = fit_linear(data.subset(plan.indices_b))
    est = cross_fit(data, plan, ma, mb, 1e6)
    da = data.subset(plan.indices_a)
    assert est.beta_a[0] == pytest.approx(estimate_beta(mb.predict(da.z), da.x, da.y)[0], rel=1e-12)


def test_cross_fit_independence():
    data, _ = gen_dgp(DgpSpec("dgp1", n=120), 2)
    cfg = TrainConfig(max_epochs=5)
    _, plan, _, mb = fit_split_estimator(data, 2, 4, c_n=1e6, cfg=cfg, seed=3, return_models=True)
    x = data.x.copy()
    x[plan.indices_a] += 1.0
    perturbed = Dataset(data.y, x, data.z)
    _, plan2, ma2, mb2 = fit_split_estimator(perturbed, 2, 4, c_n=1e6, cfg=cfg, seed=3, return_models=True)
    np.testing.assert_array_equal(plan.indices_a, plan2.indices_a)
    np.testing.assert_array_equal(mb.network.to_flat(), mb2.network.to_flat())


def test_fit_split_determinism_and_default_cn():
    data, _ = gen_dgp(DgpSpec("dgp2", n=200), 4)
    cfg = TrainConfig(max_epochs=10)
    a = fit_split_estimator(data, 2, 5, cfg=cfg, seed=1)
    b = fit_split_estimator(data, 2, 5, cfg=cfg, seed=1)
    np.testing.assert_array_equal(a.beta_ab, b.beta_ab)
    assert a.c_n == pytest.approx(3 * np.log(200))
    d = a.to_dict()
    assert {"beta_a", "beta_b", "c_n", "split_seed", "beta", "se", "ci"} <= set(d)


def test_agrees_with_full_sample_estimate():
    diffs = []
    for rep in range(8):
        data, _ = gen_dgp(DgpSpec("dgp2", n=2000), 500 + rep)
        cfg = TrainConfig(seed=rep)
        full = estimate_beta(fit_dnn(data, 3, 10, cfg).predict(data.z), data.x, data.y)[0]
        diffs.append(fit_split_estimator(data, 3, 10, cfg=cfg).beta_ab[0] - full)
    assert np.max(np.abs(diffs)) <= 0.05
