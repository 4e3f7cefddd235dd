"""Acceptance gate: one test per criterion, each at its stated tolerance.

Every test reports a ``criterion N: PASS/FAIL`` line, collected in the
terminal summary. The Monte Carlo criteria are slow (about 40 minutes in
total on one core); select them with ``-k`` when iterating.
"""

import json
import math
import time

import numpy as np
import pytest

from deepiv.cli import main
from deepiv.inference import estimate_beta
from deepiv.lasso import lasso_coordinate_descent
from deepiv.mlp import gradient, init_network, loss
from deepiv.numerics import RngStream
from deepiv.simlab import (ARCHITECTURE_GRID, DgpSpec, McConfig, gen_dgp, gen_hausman_design, ols_estimator,
                           run_monte_carlo)
from deepiv.spec_test import HAUSMAN_TRAIN, hausman_test
from deepiv.errors import NonPositiveInner
from deepiv.split_sample import fit_split_estimator
from deepiv.theory import CompositionalSpec, intrinsic_summary, rate

INF = math.inf
# frozen from tests/oracles/compute_oracles.py
OLS_PLIM_DGP1 = 4.728630302236928
ORACLE_SD_DGP2_N2000 = 0.04714045207910317


def _flat(g):
    return np.concatenate([np.concatenate([a.ravel(), v.ravel()]) for a, v in zip(g.weights, g.shifts)])


def test_c01_gradient_matches_finite_differences(criterion):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(25):
        d, q, L, W = (int(rng.integers(1, k + 1)) for k in (4, 2, 3, 6))
        net = init_network(d, q, L, W, int(rng.integers(1 << 30)))
        net = net.with_flat(net.to_flat() + 0.1 * rng.normal(size=net.n_trainable))
        Z, X = rng.normal(size=(12, d)), rng.normal(size=(12, q))
        an = _flat(gradient(net, X, Z))
        theta, h = net.to_flat(), 1e-6
        fd = np.empty_like(theta)
        for k in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += h
            tm[k] -= h
            fd[k] = (loss(net.with_flat(tp), X, Z) - loss(net.with_flat(tm), X, Z)) / (2 * h)
        # relative error, floored so exactly-zero gradients (dead units) compare absolutely
        worst = max(worst, float(np.max(np.abs(an - fd) / np.maximum(np.abs(fd), 1e-3))))
    elapsed = time.perf_counter() - start
    criterion(1, worst <= 1e-5 and elapsed < 10, f"max rel err {worst:.2e}, {elapsed:.1f}s")


def test_c02_second_stage_closed_form(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        x, y = rng.normal(size=(50, 3)), rng.normal(size=50)
        oracle = np.linalg.inv(x.T @ x) @ (x.T @ y)
        worst = max(worst, float(np.max(np.abs(estimate_beta(x, x, y) - oracle))))
    hand = estimate_beta([1.0, 2.0, 1.0], [1.0, 2.0, 3.0], [2.0, 4.0, 6.0])
    criterion(2, worst <= 1e-9 and hand[0] == 2.0, f"max |diff| {worst:.1e}, hand case {hand[0]!r}")


def test_c03_oracle_asymptotics(criterion):
    start = time.perf_counter()
    res = run_monte_carlo(McConfig(DgpSpec("dgp2"), (2000,), 500, ("oracle",), master_seed=3))
    cell = res.cell("oracle", 2000)
    elapsed = time.perf_counter() - start
    ok = (abs(cell["beta_mean"] - 3) <= 0.01
          and abs(cell["beta_sd"] / ORACLE_SD_DGP2_N2000 - 1) <= 0.15
          and 0.93 <= cell["coverage"] <= 0.97 and elapsed < 120)
    criterion(3, ok, f"mean {cell['beta_mean']:.4f}, sd {cell['beta_sd']:.4f}, "
                     f"coverage {cell['coverage']:.3f}, {elapsed:.0f}s")


@pytest.fixture(scope="module")
def dgp1_campaign():
    cfg = McConfig(DgpSpec("dgp1"), (500, 2000), 200, ("dnn", "aspline", "lr"), master_seed=4)
    return run_monte_carlo(cfg)


def test_c04_endogeneity_bias(criterion, dgp1_campaign):
    data, _ = gen_dgp(DgpSpec("dgp1", n=100_000), 44)
    ols = float(ols_estimator(data).beta[0])
    dnn, lr = dgp1_campaign.cell("dnn", 2000, 3, 10), dgp1_campaign.cell("lr", 2000)
    ok = (abs(ols - OLS_PLIM_DGP1) <= 0.05 and abs(dnn["beta_mean"] - 3) <= 0.15
          and dnn["beta_rmse"] <= lr["beta_rmse"] / 3)
    criterion(4, ok, f"OLS {ols:.3f} (plim {OLS_PLIM_DGP1:.3f}); DNN mean {dnn['beta_mean']:.3f}, "
                     f"RMSE {dnn['beta_rmse']:.3f} vs LR {lr['beta_rmse']:.3f}")


def test_c05_weak_iv_first_stage(criterion, dgp1_campaign):
    change = {e: dgp1_campaign.cell(e, 2000)["fs_rmse"] / dgp1_campaign.cell(e, 500)["fs_rmse"] - 1
              for e in ("lr", "aspline")}
    change["dnn"] = dgp1_campaign.cell("dnn", 2000, 3, 10)["fs_rmse"] / dgp1_campaign.cell("dnn", 500, 3, 10)["fs_rmse"] - 1
    ok = change["lr"] >= -0.10 and change["aspline"] >= -0.10 and change["dnn"] <= -0.25
    criterion(5, ok, ", ".join(f"{e} {100 * v:+.1f}%" for e, v in change.items()))


def test_c06_dnn_coverage(criterion, dgp1_campaign):
    cov = dgp1_campaign.cell("dnn", 2000, 3, 10)["coverage"]
    criterion(6, 0.91 <= cov <= 0.98, f"coverage {cov:.3f}")


def test_c07_architecture_stability(criterion):
    res = run_monte_carlo(McConfig(DgpSpec("dgp2"), (2000,), 200, ("dnn",), ARCHITECTURE_GRID, master_seed=7))
    cov = {(L, W): res.cell("dnn", 2000, L, W)["coverage"] for L, W in ARCHITECTURE_GRID}
    spread = max(cov.values()) - min(cov.values())
    criterion(7, spread <= 0.04, f"spread {spread:.3f} over " + " ".join(
        f"W{W}L{L}={c:.3f}" for (L, W), c in cov.items()))


def test_c08_split_sample(criterion):
    betas, covered = [], []
    for rep in range(200):
        data, _ = gen_dgp(DgpSpec("dgp2", n=2000), RngStream(8, rep))
        est = fit_split_estimator(data, seed=rep)
        betas.append(est.beta_ab[0])
        covered.append(bool(est.confidence_interval(0.05).contains(3.0)[0]))
    mean, cov = float(np.mean(betas)), float(np.mean(covered))
    criterion(8, abs(mean - 3) <= 0.02 and 0.91 <= cov <= 0.98, f"mean {mean:.4f}, coverage {cov:.3f}")


def _rejection_rate(valid, reps, master):
    rejects, aborted = 0, 0
    for rep in range(reps):
        data = gen_hausman_design(2000, valid, RngStream(master, rep))
        try:
            rejects += hausman_test(data, 4, cfg=HAUSMAN_TRAIN.with_seed(rep)).reject
        except NonPositiveInner:
            aborted += 1  # no evidence against validity: counted as not rejecting
    return rejects / reps, aborted


def test_c09_specification_test(criterion):
    size, a0 = _rejection_rate(True, 300, 9)
    power, a1 = _rejection_rate(False, 100, 90)
    criterion(9, 0.02 <= size <= 0.08 and power >= 0.8,
              f"size {size:.3f} (300 reps, {a0} aborted), power {power:.2f} (100 reps, {a1} aborted)")


def test_c10_theory_calculator(criterion):
    checks = []
    for p, d in ((1.0, 3), (2.5, 4)):
        s = intrinsic_summary(CompositionalSpec(0, (d, 1), (d,), (p,)))
        checks.append(s.p_star == p and s.t_star == d)
    for p_h, p_g in ((2.0, 3.0), (3.0, 1.5)):
        s = intrinsic_summary(CompositionalSpec(2, (5, 5, 1, 1), (1, 5, 1), (p_h, INF, p_g)))
        checks.append(s.p_star == min(p_g, p_h) and s.t_star == 1)
    s = intrinsic_summary(CompositionalSpec(1, (5, 5, 1), (1, 5), (INF, INF)))
    checks.append(s.p_star == INF and s.t_star == 1)
    s = intrinsic_summary(CompositionalSpec(0, (1, 1), (1,), (1.0,)), q=1)
    checks.append(s.min_depth == 217 and s.min_width == 11664)
    checks.append(rate(2, 1)[0] == 0.4)
    criterion(10, all(checks), f"{sum(checks)}/{len(checks)} exact matches")


def _kkt(X, y, lam, coef):
    """Subgradient residual on the standardised problem, computed independently."""
    Xc = X - X.mean(axis=0)
    scale = np.sqrt(np.mean(Xc ** 2, axis=0))
    Xs = Xc / scale
    b = coef * scale
    g = -Xs.T @ (y - y.mean() - Xs @ b) / len(y)
    active = b != 0
    viol = np.where(active, np.abs(g + lam * np.sign(b)), np.maximum(np.abs(g) - lam, 0.0))
    return float(viol.max())


def test_c11_lasso_optimality(criterion):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        n, p = int(rng.integers(20, 200)), int(rng.integers(2, 30))
        X = rng.normal(size=(n, p)) * rng.uniform(0.1, 10, size=p)
        y = X[:, :3] @ rng.normal(size=3) + rng.normal(size=n)
        lam = float(rng.uniform(0.01, 0.5))
        fit = lasso_coordinate_descent(X, y, lam)
        worst = max(worst, _kkt(X, y, lam, fit.coefficients)) if fit.converged else math.inf
    X, y = rng.normal(size=(100, 5)), rng.normal(size=100)
    A = np.column_stack([np.ones(100), X])
    ols = np.linalg.lstsq(A, y, rcond=None)[0]
    fit = lasso_coordinate_descent(X, y, 0.0, tol=1e-10)
    gap = float(max(np.max(np.abs(fit.coefficients - ols[1:])), abs(fit.intercept - ols[0])))
    criterion(11, worst <= 1e-6 and gap <= 1e-6, f"max KKT {worst:.1e}, lambda=0 vs OLS {gap:.1e}")


def test_c12_simulate_determinism(criterion, tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"dgps": ["dgp1", "dgp2"], "sample_sizes": [100, 200], "replications": 4,
                               "estimators": ["dnn", "aspline", "lr", "ols", "oracle"],
                               "network_grid": [[2, 5], [3, 10]], "master_seed": 12,
                               "eval_points": 1000, "train": {"max_epochs": 40}}))
    outputs = []
    for workers in (1, 3):
        out = tmp_path / f"w{workers}"
        assert main(["simulate", str(cfg), "--out", str(out), "--workers", str(workers), "--svg", "--quiet"]) == 0
        outputs.append(out)

    def snapshot(d):
        return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}

    first = snapshot(outputs[0])
    assert main(["replay", str(outputs[0] / "manifest.json")]) == 0
    capsys.readouterr()
    same = first == snapshot(outputs[1]) == snapshot(outputs[0])
    criterion(12, same and len(first) > 3, f"{len(first)} files identical across 1/3 workers and replay")
