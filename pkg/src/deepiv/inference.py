"""Second-stage estimation, covariance, confidence intervals.

Given first-stage fitted values ``Xhat_i`` the coefficient estimate is

    beta = (sum Xhat_i X_i^T)^{-1} sum Xhat_i Y_i

and its asymptotic covariance is estimated by

    V^2 = (sum Xhat_i X_i^T)^{-1} * sum eps_i^2,   eps_i = Y_i - beta^T X_i,

so that ``sqrt(n) (beta - beta0)`` is approximately N(0, V^2).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DomainError, MissingExogenous, ShapeMismatch
from .numerics import normal_quantile, solve_linear


def _as_matrix(a, n=None, name="array"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if n is not None and a.shape[0] != n:
        raise ShapeMismatch(f"{name} has {a.shape[0]} rows, expected {n}")
    return a


@dataclass(frozen=True)
class ConfidenceInterval:
    level: float
    lower: np.ndarray
    upper: np.ndarray

    def contains(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=np.float64)
        return (self.lower <= value) & (value <= self.upper)

    def to_dict(self) -> dict:
        return {"level": self.level, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class BetaEstimate:
    """Point estimate with ``vcov`` estimating the covariance of sqrt(n)(beta - beta0)."""

    beta: np.ndarray
    vcov: np.ndarray
    n: int
    residual_variance: float

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.vcov), 0.0) / self.n)

    def confidence_interval(self, alpha: float = 0.05) -> ConfidenceInterval:
        return confidence_interval(self, alpha)

    def to_dict(self, alpha: float | None = 0.05) -> dict:
        out = {
            "beta": self.beta.tolist(),
            "se": self.se.tolist(),
            "vcov": self.vcov.tolist(),
            "n": self.n,
            "sigma2": self.residual_variance,
        }
        if alpha is not None:
            out["ci"] = confidence_interval(self, alpha).to_dict()
        return out

    def to_json(self, alpha: float | None = 0.05) -> str:
        return json.dumps(self.to_dict(alpha))


def moment_matrix(x_hat, x) -> np.ndarray:
    """``(1/n) sum Xhat_i X_i^T``."""
    x_hat = _as_matrix(x_hat, name="x_hat")
    x = _as_matrix(x, x_hat.shape[0], "x")
    if x.shape[1] != x_hat.shape[1]:
        raise ShapeMismatch(f"x_hat has {x_hat.shape[1]} columns, x has {x.shape[1]}")
    return x_hat.T @ x / x_hat.shape[0]


def estimate_beta(x_hat, x, y) -> np.ndarray:
    """Second-stage estimate using ``x_hat`` as instruments for ``x``.

    Raises
    ------
    SingularMatrix
        When the moment matrix cannot be inverted, i.e. the fitted
        instruments carry (numerically) no information about ``x``.
    """
    x_hat = _as_matrix(x_hat, name="x_hat")
    n = x_hat.shape[0]
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != n:
        raise ShapeMismatch(f"y has {y.shape[0]} rows, expected {n}")
    m = moment_matrix(x_hat, x)
    return solve_linear(m, x_hat.T @ y / n)


def estimate_vcov(x_hat, x, y, beta):
    """Return ``(V^2, sigma2)`` with ``V^2`` symmetrised."""
    x_hat = _as_matrix(x_hat, name="x_hat")
    x = _as_matrix(x, x_hat.shape[0], "x")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = x_hat.shape[0]
    resid = y - x @ np.asarray(beta, dtype=np.float64)
    sse = float(resid @ resid)
    v2 = solve_linear(x_hat.T @ x, np.eye(x.shape[1])) * sse
    return 0.5 * (v2 + v2.T), sse / n


def second_stage(x_hat, x, y) -> BetaEstimate:
    beta = estimate_beta(x_hat, x, y)
    vcov, sigma2 = estimate_vcov(x_hat, x, y, beta)
    return BetaEstimate(beta, vcov, int(np.asarray(y).size), sigma2)


def confidence_interval(est: BetaEstimate, alpha: float = 0.05) -> ConfidenceInterval:
    """``beta_j +/- z_{alpha/2} sqrt(V^2_jj) / sqrt(n)`` per coordinate."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    half = normal_quantile(1.0 - alpha / 2.0) * est.se
    return ConfidenceInterval(1.0 - alpha, est.beta - half, est.beta + half)


def deep_iv(data: Dataset, first_stage) -> BetaEstimate:
    """Second stage on top of an already fitted first-stage model."""
    return second_stage(first_stage.predict(data.z), data.x, data.y)


def fit_deep_iv(data: Dataset, family: str = "dnn", **kw):
    """Fit the first stage of ``family`` and return ``(estimate, model)``."""
    from .first_stage import fit_first_stage

    model = fit_first_stage(family, data, **kw)
    return deep_iv(data, model), model


def estimate_with_exogenous(data: Dataset, family: str = "dnn", **kw):
    """Coefficients on ``(X, R)`` when ``R`` is exogenous.

    ``R`` joins the instrument set, the first stage predicts ``X`` from
    ``(R, Z)``, and the second stage instruments ``(X, R)`` with
    ``(Xhat, R)``. Returns ``(estimate, model)``; ``estimate.beta`` stacks
    the ``q1`` endogenous coefficients before the ``q2`` exogenous ones.
    """
    if data.r is None:
        raise MissingExogenous("exogenous regressors r are required")
    from .first_stage import fit_first_stage

    z_aug = np.hstack([data.r, data.z])
    model = fit_first_stage(family, data.with_instruments(z_aug), **kw)
    d_hat = np.hstack([model.predict(z_aug), data.r])
    d = np.hstack([data.x, data.r])
    return second_stage(d_hat, d, data.y), model
