"""Cross-fitted (split-sample) estimator with truncated network first stages.

The sample is split at random into halves ``a`` and ``b``. A network is
fitted on each half, truncated at ``c_n``, and used to predict the
instruments for the *other* half. Per-group estimates are combined with
their moment matrices as weights, and the covariance pools residuals from
both halves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import DomainError
from .first_stage import FirstStageModel, default_truncation, fit_dnn, truncate_model
from .inference import BetaEstimate, confidence_interval
from .mlp import TrainConfig
from .numerics import RngStream, solve_linear


@dataclass(frozen=True)
class SplitPlan:
    indices_a: np.ndarray
    indices_b: np.ndarray
    seed: int


def split(data_or_n, seed: int = 0) -> SplitPlan:
    """Uniform random partition into ``floor(n/2)`` and ``n - floor(n/2)`` rows."""
    n = data_or_n.n if isinstance(data_or_n, Dataset) else int(data_or_n)
    if n < 4:
        raise DomainError("the split-sample estimator needs n >= 4")
    perm = RngStream(seed, 3).permutation(n)
    n_a = n // 2
    return SplitPlan(np.sort(perm[:n_a]), np.sort(perm[n_a:]), int(seed))


@dataclass(frozen=True)
class SplitEstimate:
    beta_a: np.ndarray
    beta_b: np.ndarray
    beta_ab: np.ndarray
    vcov_ab: np.ndarray
    n: int
    c_n: float
    split_seed: int
    m_a: np.ndarray = field(repr=False)
    m_b: np.ndarray = field(repr=False)
    residual_variance: float = float("nan")

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.vcov_ab), 0.0) / self.n)

    def as_beta_estimate(self) -> BetaEstimate:
        return BetaEstimate(self.beta_ab, self.vcov_ab, self.n, self.residual_variance)

    def confidence_interval(self, alpha=0.05):
        return confidence_interval(self.as_beta_estimate(), alpha)

    def to_dict(self, alpha=0.05) -> dict:
        out = self.as_beta_estimate().to_dict(alpha)
        out.update(beta_a=self.beta_a.tolist(), beta_b=self.beta_b.tolist(),
                   c_n=self.c_n, split_seed=self.split_seed)
        return out

    def to_json(self, alpha=0.05) -> str:
        return json.dumps(self.to_dict(alpha))


def _cols(a):
    a = np.asarray(a, dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


def combine(xc_a, x_a, y_a, xc_b, x_b, y_b, c_n=float("nan"), split_seed=-1) -> SplitEstimate:
    """Stages 3 and 4 from cross-predicted instruments ``xc_a``, ``xc_b``."""
    xc_a, x_a, xc_b, x_b = (_cols(a) for a in (xc_a, x_a, xc_b, x_b))
    y_a = np.asarray(y_a, dtype=np.float64).reshape(-1)
    y_b = np.asarray(y_b, dtype=np.float64).reshape(-1)
    m_a = xc_a.T @ x_a
    m_b = xc_b.T @ x_b
    beta_a = solve_linear(m_a / y_a.size, xc_a.T @ y_a / y_a.size)
    beta_b = solve_linear(m_b / y_b.size, xc_b.T @ y_b / y_b.size)
    m_ab = m_a + m_b
    beta_ab = solve_linear(m_ab, m_a @ beta_a + m_b @ beta_b)
    vcov, sigma2 = split_vcov(m_ab, x_a, y_a, x_b, y_b, beta_ab)
    return SplitEstimate(beta_a, beta_b, beta_ab, vcov, y_a.size + y_b.size, float(c_n), int(split_seed),
                         m_a, m_b, sigma2)


def split_vcov(m_ab, x_a, y_a, x_b, y_b, beta_ab):
    """Pooled covariance ``(M_a + M_b)^{-1} (sum |e_a|^2 + sum |e_b|^2)`` and sigma^2."""
    e_a = np.asarray(y_a).reshape(-1) - _cols(x_a) @ beta_ab
    e_b = np.asarray(y_b).reshape(-1) - _cols(x_b) @ beta_ab
    sse = float(e_a @ e_a + e_b @ e_b)
    m_ab = np.asarray(m_ab, dtype=np.float64)
    v2 = solve_linear(m_ab, np.eye(m_ab.shape[0])) * sse
    return 0.5 * (v2 + v2.T), sse / (e_a.size + e_b.size)


def cross_fit(data: Dataset, plan: SplitPlan, model_a: FirstStageModel, model_b: FirstStageModel,
              c_n: float) -> SplitEstimate:
    """Truncate both group models and cross-predict: group ``a`` uses ``model_b``."""
    ta, tb = truncate_model(model_a, c_n), truncate_model(model_b, c_n)
    da, db = data.subset(plan.indices_a), data.subset(plan.indices_b)
    return combine(tb.predict(da.z), da.x, da.y, ta.predict(db.z), db.x, db.y, c_n, plan.seed)


def fit_split_estimator(data: Dataset, L: int = 3, W: int = 10, c_n: float | None = None,
                        cfg: TrainConfig = TrainConfig(), seed: int | None = None,
                        return_models: bool = False):
    """Four-stage split-sample estimate with network first stages.

    ``c_n`` defaults to ``3 log(n)``. The two networks share ``(L, W, cfg)``
    but train on independent seeds derived from the split seed.
    """
    seed = cfg.seed if seed is None else int(seed)
    plan = split(data, seed)
    if c_n is None:
        c_n = default_truncation(data.n)
    stream = RngStream(seed, 4)
    seed_a, seed_b = stream.child_seed(), stream.child_seed()
    model_a = fit_dnn(data.subset(plan.indices_a), L, W, cfg.with_seed(seed_a))
    model_b = fit_dnn(data.subset(plan.indices_b), L, W, cfg.with_seed(seed_b))
    est = cross_fit(data, plan, model_a, model_b, c_n)
    if return_models:
        return est, plan, model_a, model_b
    return est
