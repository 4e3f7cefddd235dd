"""Simulation designs and the Monte Carlo driver.

Both built-in designs draw ``Z ~ U[-3, 3]^4`` and ``eps ~ N(0, 1)`` and set

    X = f0(Z) + eps,    Y = 3 X + 20 eps,

so the same ``eps`` drives the endogeneity. ``dgp1`` uses
``f0 = Z1 sin(Z2) + Z3 Z4`` (no linear or additive signal, a weak-IV case
for linear and additive first stages); ``dgp2`` uses the linear
``f0 = 3 Z1 + 4 Z2 - 2 Z3 + Z4``.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .data import Dataset
from .errors import DeepIVError, DomainError, SingularMatrix
from .first_stage import SplineSpec, fit_dnn, fit_linear, fit_spline_lasso, OracleModel
from .inference import BetaEstimate, confidence_interval, deep_iv, second_stage
from .mlp import TrainConfig
from .numerics import RngStream, as_rng

ESTIMATORS = ("dnn", "pspline", "aspline", "lr", "ols", "oracle")
DEFAULT_SAMPLE_SIZES = (100, 200, 500, 1000, 2000)
ARCHITECTURE_GRID = tuple((L, W) for W in (5, 10, 20) for L in (3, 5, 10))


def _f0_dgp1(Z):
    Z = np.atleast_2d(Z)
    return Z[:, 0] * np.sin(Z[:, 1]) + Z[:, 2] * Z[:, 3]


def _f0_dgp2(Z):
    Z = np.atleast_2d(Z)
    return 3.0 * Z[:, 0] + 4.0 * Z[:, 1] - 2.0 * Z[:, 2] + Z[:, 3]


_f0_dgp1.builtin_name = "dgp1"
_f0_dgp2.builtin_name = "dgp2"
_BUILTIN = {"dgp1": _f0_dgp1, "dgp2": _f0_dgp2}


def builtin_f0(name: str) -> Callable:
    try:
        return _BUILTIN[name]
    except KeyError:
        raise DomainError(f"no built-in conditional mean named {name!r}") from None


@dataclass(frozen=True)
class DgpSpec:
    kind: str = "dgp2"
    n: int = 1000
    beta0: float = 3.0
    noise_scale: float = 20.0
    d: int = 4
    z_low: float = -3.0
    z_high: float = 3.0
    f0: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("dgp1", "dgp2", "custom"):
            raise DomainError(f"unknown design {self.kind!r}")
        if self.kind == "custom" and self.f0 is None:
            raise DomainError("custom designs need f0")
        if self.kind != "custom" and self.d != 4:
            raise DomainError("built-in designs have d = 4")
        if self.n < 1:
            raise DomainError("n must be positive")

    def conditional_mean(self) -> Callable:
        return self.f0 if self.kind == "custom" else builtin_f0(self.kind)


@dataclass(frozen=True)
class Truth:
    f0: Callable
    beta0: float


def gen_dgp(spec: DgpSpec, rng=None):
    """Draw one sample; returns ``(Dataset, Truth)``."""
    rng = as_rng(rng)
    f0 = spec.conditional_mean()
    Z = rng.uniform(spec.z_low, spec.z_high, size=(spec.n, spec.d))
    eps = rng.normal(size=spec.n)
    X = f0(Z) + eps
    Y = spec.beta0 * X + spec.noise_scale * eps
    return Dataset(Y, X, Z), Truth(f0, spec.beta0)


def draw_instruments(spec: DgpSpec, m: int, rng) -> np.ndarray:
    return as_rng(rng).uniform(spec.z_low, spec.z_high, size=(m, spec.d))


def gen_hausman_design(n: int, valid: bool, rng=None, relevance: float = 2.0):
    """``dgp2`` with a fifth instrument appended.

    With ``valid`` the extra instrument ``Z5 ~ U[-3, 3]`` is exogenous and
    enters the reduced form as ``relevance * Z5``; otherwise
    ``Z5 = eps + N(0, 1)`` is correlated with the structural error.
    Baseline instruments are the first four columns in both cases.
    """
    rng = as_rng(rng)
    Z = rng.uniform(-3.0, 3.0, size=(n, 4))
    eps = rng.normal(size=n)
    if valid:
        z5 = rng.uniform(-3.0, 3.0, size=n)
        X = _f0_dgp2(Z) + relevance * z5 + eps
    else:
        z5 = eps + rng.normal(size=n)
        X = _f0_dgp2(Z) + eps
    Y = 3.0 * X + 20.0 * eps
    return Dataset(Y, X, np.column_stack([Z, z5]))


def ols_estimator(data: Dataset) -> BetaEstimate:
    """Regress Y on X directly (no instruments)."""
    if data.n <= data.q:
        raise SingularMatrix("OLS needs more observations than regressors")
    return second_stage(data.x, data.x, data.y)


def oracle_estimator(data: Dataset, f0: Callable) -> BetaEstimate:
    """Second stage with the true conditional mean as instrument."""
    fz = np.asarray(f0(data.z), dtype=np.float64).reshape(data.n, -1)
    return second_stage(fz, data.x, data.y)


def first_stage_rmse(model, f0: Callable, eval_z) -> float:
    """RMSE of the fitted conditional mean against ``f0`` on ``eval_z``,
    averaged over output coordinates."""
    eval_z = np.atleast_2d(np.asarray(eval_z, dtype=np.float64))
    pred = np.asarray(model.predict(eval_z)).reshape(eval_z.shape[0], -1)
    truth = np.asarray(f0(eval_z), dtype=np.float64).reshape(eval_z.shape[0], -1)
    return float(np.mean(np.sqrt(np.mean((pred - truth) ** 2, axis=0))))


# --------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class McConfig:
    dgp: DgpSpec = DgpSpec()
    sample_sizes: tuple = DEFAULT_SAMPLE_SIZES
    replications: int = 200
    estimators: tuple = ("dnn", "lr", "ols", "oracle")
    network_grid: tuple = ((3, 10),)
    ci_level: float = 0.95
    master_seed: int = 0
    eval_points: int = 10_000
    train: TrainConfig = TrainConfig()
    aspline_knots: int = 20
    pspline_knots: int = 5
    profile: str = "desk"

    def __post_init__(self):
        if self.replications < 1:
            raise DomainError("replications must be >= 1")
        if not self.estimators:
            raise DomainError("at least one estimator is required")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise DomainError(f"unknown estimators {bad}; choose from {ESTIMATORS}")
        sizes = list(self.sample_sizes)
        if not sizes or any(n < 1 for n in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise DomainError("sample sizes must be positive and strictly increasing")
        if not 0.0 < self.ci_level < 1.0:
            raise DomainError("ci_level must lie in (0, 1)")
        if not self.network_grid:
            raise DomainError("network grid is empty")
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in sizes))
        object.__setattr__(self, "network_grid", tuple((int(L), int(W)) for L, W in self.network_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))


@dataclass(frozen=True)
class Record:
    """Outcome of one estimator on one replication."""

    estimator: str
    n: int
    rep: int
    L: int | None
    W: int | None
    beta: float
    se: float
    covered: bool
    fs_rmse: float
    failure: str | None = None


@dataclass
class McResult:
    dgp: str
    cells: list
    records: list
    config: McConfig

    def cell(self, estimator, n, L=None, W=None) -> dict:
        for c in self.cells:
            if c["estimator"] == estimator and c["n"] == n and (L is None or (c["L"] == L and c["W"] == W)):
                return c
        raise KeyError((estimator, n, L, W))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in self.cells:
            w.writerow([_fmt(c[k]) for k in CSV_COLUMNS])
        return buf.getvalue()


CSV_COLUMNS = ("dgp", "estimator", "n", "L", "W", "rep_count", "beta_mean", "beta_rmse",
               "fs_rmse", "coverage", "coverage_se", "failures")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _eval_estimator(name, data, truth, eval_z, cfg: McConfig, seed, L=None, W=None):
    alpha = 1.0 - cfg.ci_level
    model = None
    if name == "ols":
        est = ols_estimator(data)
    elif name == "oracle":
        model = OracleModel(data.d, data.q, f0=truth.f0)
        est = deep_iv(data, model)
    else:
        if name == "dnn":
            model = fit_dnn(data, L, W, cfg.train.with_seed(seed))
        elif name == "lr":
            model = fit_linear(data)
        elif name == "aspline":
            model = fit_spline_lasso(data, SplineSpec.equally_spaced(cfg.aspline_knots, interaction="additive"),
                                     seed=seed)
        elif name == "pspline":
            model = fit_spline_lasso(data, SplineSpec.equally_spaced(cfg.pspline_knots, interaction="tensor"),
                                     seed=seed)
        est = deep_iv(data, model)
    ci = confidence_interval(est, alpha)
    fs = first_stage_rmse(model, truth.f0, eval_z) if model is not None else float("nan")
    return float(est.beta[0]), float(est.se[0]), bool(ci.contains(truth.beta0)[0]), fs


def run_replication(cfg: McConfig, n_index: int, rep: int) -> list:
    """All requested estimators on replication ``rep`` at ``sample_sizes[n_index]``.

    Data, evaluation points and training seeds come from stream ``rep`` of
    ``master_seed``, so the result does not depend on scheduling.
    """
    n = cfg.sample_sizes[n_index]
    stream = RngStream(cfg.master_seed, rep).spawn(n_index)
    data, truth = gen_dgp(replace(cfg.dgp, n=n), stream.spawn(0))
    eval_z = draw_instruments(cfg.dgp, cfg.eval_points, stream.spawn(1))
    seed = int(stream.spawn(2).integers(0, 2**62))
    out = []
    for name in cfg.estimators:
        grid = cfg.network_grid if name == "dnn" else ((None, None),)
        for L, W in grid:
            try:
                beta, se, covered, fs = _eval_estimator(name, data, truth, eval_z, cfg, seed, L, W)
                out.append(Record(name, n, rep, L, W, beta, se, covered, fs))
            except DeepIVError as exc:
                out.append(Record(name, n, rep, L, W, float("nan"), float("nan"), False, float("nan"),
                                  type(exc).__name__))
    return out


def _run_unit(args):
    cfg, n_index, rep = args
    return run_replication(cfg, n_index, rep)


def worker_count(workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("DEEPIV_THREADS")
    return max(1, int(env)) if env else 1


def aggregate(cfg: McConfig, records: list) -> list:
    """Fold records into one cell per (estimator, L, W, n), in deterministic order."""
    beta0 = cfg.dgp.beta0
    keys = []
    for name in sorted(cfg.estimators):
        grid = cfg.network_grid if name == "dnn" else ((None, None),)
        for L, W in sorted(grid, key=lambda t: (t[1] or 0, t[0] or 0)):
            for n in cfg.sample_sizes:
                keys.append((name, L, W, n))
    groups = {k: [] for k in keys}
    for r in records:
        groups[(r.estimator, r.L, r.W, r.n)].append(r)
    cells = []
    for key in keys:
        name, L, W, n = key
        recs = sorted(groups[key], key=lambda r: r.rep)
        ok = [r for r in recs if r.failure is None]
        betas = np.array([r.beta for r in ok])
        fs = np.array([r.fs_rmse for r in ok])
        cov = np.array([r.covered for r in ok], dtype=float)
        k = len(ok)
        coverage = float(cov.mean()) if k else float("nan")
        cells.append({
            "dgp": cfg.dgp.kind,
            "estimator": name,
            "n": n,
            "L": L,
            "W": W,
            "rep_count": k,
            "beta_mean": float(betas.mean()) if k else float("nan"),
            "beta_sd": float(betas.std(ddof=1)) if k > 1 else float("nan"),
            "beta_rmse": float(np.sqrt(np.mean((betas - beta0) ** 2))) if k else float("nan"),
            "fs_rmse": float(fs.mean()) if k else float("nan"),
            "fs_rmse_sd": float(fs.std(ddof=1)) if k > 1 else float("nan"),
            "coverage": coverage,
            "coverage_se": float(math.sqrt(coverage * (1 - coverage) / k)) if k else float("nan"),
            "failures": len(recs) - k,
        })
    return cells


def run_monte_carlo(cfg: McConfig, workers: int | None = None, progress: Callable | None = None) -> McResult:
    """Run every (sample size, replication) unit and aggregate.

    ``workers`` (default: env ``DEEPIV_THREADS`` or 1) only changes
    wall-clock time; results are identical for any worker count.
    """
    units = [(cfg, i, r) for i in range(len(cfg.sample_sizes)) for r in range(cfg.replications)]
    workers = worker_count(workers)
    records = []
    if workers == 1:
        for k, u in enumerate(units):
            records.extend(_run_unit(u))
            if progress:
                progress(k + 1, len(units))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, recs in enumerate(pool.map(_run_unit, units, chunksize=1)):
                records.extend(recs)
                if progress:
                    progress(k + 1, len(units))
    return McResult(cfg.dgp.kind, aggregate(cfg, records), records, cfg)


def config_to_dict(cfg: McConfig) -> dict:
    d = asdict(replace(cfg, dgp=replace(cfg.dgp, f0=None)))
    d["dgp"].pop("f0", None)
    d["sample_sizes"] = list(cfg.sample_sizes)
    d["network_grid"] = [list(t) for t in cfg.network_grid]
    d["estimators"] = list(cfg.estimators)
    return d


def config_from_dict(obj: dict) -> McConfig:
    obj = dict(obj)
    dgp = obj.pop("dgp", {})
    dgp = DgpSpec(**dgp) if isinstance(dgp, dict) else DgpSpec(kind=str(dgp))
    train = obj.pop("train", {})
    fields = {f for f in McConfig.__dataclass_fields__}
    unknown = set(obj) - fields
    if unknown:
        raise DomainError(f"unknown config keys {sorted(unknown)}")
    for key in ("sample_sizes", "estimators"):
        if key in obj:
            obj[key] = tuple(obj[key])
    if "network_grid" in obj:
        obj["network_grid"] = tuple(tuple(t) for t in obj["network_grid"])
    return McConfig(dgp=dgp, train=TrainConfig(**train), **obj)
