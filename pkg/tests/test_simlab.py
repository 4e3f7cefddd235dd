import math

import numpy as np
import pytest

from deepiv.data import Dataset
from deepiv.errors import DomainError, SingularMatrix
from deepiv.first_stage import LinearModel, OracleModel
from deepiv.inference import deep_iv
from deepiv.numerics import RngStream
from deepiv.simlab import (DgpSpec, McConfig, builtin_f0, config_from_dict, config_to_dict, draw_instruments,
                           first_stage_rmse, gen_dgp, gen_hausman_design, ols_estimator, oracle_estimator,
                           run_monte_carlo, run_replication)

# tests/oracles/compute_oracles.py
VAR_X_DGP1 = 11.569853874549732
OLS_PLIM_DGP1 = 4.728630302236928
ORACLE_SE_DGP2 = 0.04714045207910317


def test_dgp2_moments():
    data, truth = gen_dgp(DgpSpec("dgp2", n=100_000), 1)
    f = truth.f0(data.z)
    assert abs(f.mean()) < 0.1
    assert np.mean(f**2) == pytest.approx(90.0, rel=0.01)


def test_dgp1_moments():
    data, truth = gen_dgp(DgpSpec("dgp1", n=100_000), 2)
    assert abs(truth.f0(data.z).mean()) < 0.05
    assert data.x[:, 0].var() == pytest.approx(VAR_X_DGP1, rel=0.02)


def test_shared_error_wiring():
    data, _ = gen_dgp(DgpSpec("dgp1", n=100_000), 3)
    x = data.x[:, 0]
    u = data.y - 3 * x
    assert np.cov(x, u)[0, 1] / 20 == pytest.approx(1.0, rel=0.02)


def test_ols_plim_dgp1():
    data, _ = gen_dgp(DgpSpec("dgp1", n=100_000), 4)
    assert ols_estimator(data).beta[0] == pytest.approx(OLS_PLIM_DGP1, abs=0.05)


def test_ols_consistent_without_endogeneity():
    g = np.random.default_rng(5)
    x = g.normal(size=20_000)
    data = Dataset(3 * x + g.normal(size=20_000), x, g.normal(size=(20_000, 1)))
    assert ols_estimator(data).beta[0] == pytest.approx(3.0, abs=0.03)


def test_ols_degenerate():
    with pytest.raises(SingularMatrix):
        ols_estimator(Dataset(np.ones(1), np.ones(1), np.ones((1, 1))))


def test_oracle_se():
    data, _ = gen_dgp(DgpSpec("dgp2", n=2000), 6)
    est = oracle_estimator(data, builtin_f0("dgp2"))
    assert est.se[0] == pytest.approx(ORACLE_SE_DGP2, rel=0.1)


def test_oracle_matches_exact_first_stage_path():
    data, truth = gen_dgp(DgpSpec("dgp1", n=300), 7)
    a = oracle_estimator(data, truth.f0)
    b = deep_iv(data, OracleModel(4, 1, f0=truth.f0))
    np.testing.assert_array_equal(a.beta, b.beta)


def test_first_stage_rmse_cases():
    f0 = builtin_f0("dgp2")
    ez = draw_instruments(DgpSpec(), 100, 0)
    assert first_stage_rmse(OracleModel(4, 1, f0=f0), f0, ez) == 0.0
    shifted = OracleModel(4, 1, f0=lambda z: f0(z) + 0.7)
    assert first_stage_rmse(shifted, f0, ez) == pytest.approx(0.7, rel=1e-12)
    z = np.array([[0.0], [1.0], [2.0]])
    m = LinearModel(1, 1, coef=np.array([[1.0], [0.0]]))
    # residuals (1, 0, -1): sqrt(2/3)
    assert first_stage_rmse(m, lambda z: z[:, 0], z) == pytest.approx(math.sqrt(2 / 3), rel=1e-15)


def test_hausman_design():
    v = gen_hausman_design(50_000, True, 0)
    iv = gen_hausman_design(50_000, False, 0)
    assert v.d == iv.d == 5
    u_v = v.y - 3 * v.x[:, 0]
    u_iv = iv.y - 3 * iv.x[:, 0]
    assert abs(np.corrcoef(v.z[:, 4], u_v)[0, 1]) < 0.02
    assert np.corrcoef(iv.z[:, 4], u_iv)[0, 1] == pytest.approx(1 / math.sqrt(2), abs=0.02)


def test_config_validation():
    with pytest.raises(DomainError):
        McConfig(estimators=())
    with pytest.raises(DomainError):
        McConfig(estimators=("kernel",))
    with pytest.raises(DomainError):
        McConfig(sample_sizes=(200, 100))
    with pytest.raises(DomainError):
        McConfig(replications=0)
    with pytest.raises(DomainError):
        config_from_dict({"dgp": "dgp2", "reps": 3})


def test_config_round_trip():
    cfg = McConfig(dgp=DgpSpec("dgp1"), sample_sizes=(100, 200), replications=3, network_grid=((3, 5), (5, 10)))
    assert config_from_dict(config_to_dict(cfg)) == cfg


def small_cfg(**kw):
    base = dict(dgp=DgpSpec("dgp2"), sample_sizes=(100, 200), replications=3,
                estimators=("dnn", "lr", "ols", "oracle"), network_grid=((2, 5),), eval_points=500)
    base.update(kw)
    from deepiv.mlp import TrainConfig

    base.setdefault("train", TrainConfig(max_epochs=20))
    return McConfig(**base)


def test_single_replication_matches_hand_pipeline():
    cfg = small_cfg(sample_sizes=(150,), replications=1, estimators=("lr", "oracle"))
    res = run_monte_carlo(cfg)
    stream = RngStream(cfg.master_seed, 0).spawn(0)
    data, truth = gen_dgp(DgpSpec("dgp2", n=150), stream.spawn(0))
    from deepiv.first_stage import fit_linear

    beta_lr = deep_iv(data, fit_linear(data)).beta[0]
    assert res.cell("lr", 150)["beta_mean"] == beta_lr
    assert res.cell("oracle", 150)["beta_mean"] == oracle_estimator(data, truth.f0).beta[0]


def test_monte_carlo_deterministic_across_workers():
    cfg = small_cfg()
    a = run_monte_carlo(cfg, workers=1)
    b = run_monte_carlo(cfg, workers=2)
    assert a.to_csv() == b.to_csv()


def test_cells_complete_and_bounded():
    res = run_monte_carlo(small_cfg(network_grid=((2, 5), (1, 3))))
    assert len(res.cells) == 2 * (2 + 3)
    for c in res.cells:
        assert 0 <= c["coverage"] <= 1 and c["beta_rmse"] >= 0 and c["rep_count"] == 3
        assert c["coverage_se"] == pytest.approx(math.sqrt(c["coverage"] * (1 - c["coverage"]) / 3))
    lines = res.to_csv().splitlines()
    assert lines[0] == "dgp,estimator,n,L,W,rep_count,beta_mean,beta_rmse,fs_rmse,coverage,coverage_se,failures"
    order = [(r.split(",")[1], int(r.split(",")[2])) for r in lines[1:]]
    assert [e for e, _ in order] == sorted(e for e, _ in order)


def test_failures_recorded_not_raised():
    res = run_monte_carlo(small_cfg(sample_sizes=(1,), replications=2, estimators=("ols",)))
    cell = res.cell("ols", 1)
    assert cell["failures"] == 2 and cell["rep_count"] == 0
    assert all(r.failure == "SingularMatrix" for r in res.records)


def test_lr_rmse_does_not_shrink_on_dgp1():
    cfg = small_cfg(dgp=DgpSpec("dgp1"), sample_sizes=(500, 1000, 2000), replications=200, estimators=("lr",))
    res = run_monte_carlo(cfg)
    r = [res.cell("lr", n)["beta_rmse"] for n in (500, 1000, 2000)]
    # a consistent estimator would shrink by half from 500 to 2000
    assert r[2] >= 0.9 * r[0] and r[1] >= 0.9 * r[0]


def test_replication_records_every_estimator():
    recs = run_replication(small_cfg(network_grid=((2, 5), (1, 3))), 0, 0)
    assert [(r.estimator, r.L) for r in recs] == [("dnn", 2), ("dnn", 1), ("lr", None), ("ols", None),
                                                  ("oracle", None)]
