"""First-stage estimators of the conditional mean E(X | Z = z).

Four families are available: a multi-output ReLU network, lasso on a
tensor-product or additive cubic truncated-power spline basis, and linear
regression. An ``oracle`` family wraps a known conditional mean for
benchmarking. Every fitted model can be truncated, which zeroes each output
whose magnitude exceeds the truncation level.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .data import Dataset
from .errors import BasisTooLarge, DomainError, ShapeMismatch
from .lasso import LassoFit, cv_lasso, lasso_coordinate_descent
from .mlp import MlpNetwork, TrainConfig, TrainReport, forward, init_network, train
from .numerics import RngStream, solve_linear

DEFAULT_BASIS_CAP = 200_000


# --------------------------------------------------------------------------
# spline bases


@dataclass(frozen=True)
class SplineSpec:
    """Cubic truncated-power basis ``(1, z, z^2, z^3, (z - t_k)^3_+)``."""

    knots: tuple
    lo: float = -3.0
    hi: float = 3.0
    interaction: str = "additive"
    degree: int = 3
    cap: int = DEFAULT_BASIS_CAP

    def __post_init__(self):
        knots = tuple(float(t) for t in self.knots)
        if self.degree != 3:
            raise DomainError("only cubic bases are supported")
        if self.interaction not in ("tensor", "additive"):
            raise DomainError(f"unknown interaction {self.interaction!r}")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise DomainError("knots must be strictly increasing")
        if knots and not (self.lo < knots[0] and knots[-1] < self.hi):
            raise DomainError("knots must lie strictly inside (lo, hi)")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def equally_spaced(cls, n_knots=20, lo=-3.0, hi=3.0, interaction="additive", **kw):
        """``n_knots`` interior knots splitting [lo, hi] into equal pieces."""
        knots = np.linspace(lo, hi, n_knots + 2)[1:-1]
        return cls(tuple(knots), lo, hi, interaction, **kw)

    @property
    def size_1d(self) -> int:
        return 4 + len(self.knots)

    def n_columns(self, d: int) -> int:
        return self.size_1d ** d if self.interaction == "tensor" else d * self.size_1d


def spline_basis_1d(z, spec: SplineSpec) -> np.ndarray:
    """Basis at scalar ``z`` (shape (4+K,)) or at a vector of points (shape (m, 4+K))."""
    z_arr = np.asarray(z, dtype=np.float64)
    zz = np.atleast_1d(z_arr)[:, None]
    knots = np.asarray(spec.knots)[None, :]
    hinge = np.maximum(zz - knots, 0.0) ** 3
    out = np.hstack([np.ones_like(zz), zz, zz**2, zz**3, hinge])
    return out[0] if z_arr.ndim == 0 else out


def tensor_basis(zrow, spec: SplineSpec) -> np.ndarray:
    """Row-wise tensor product of the univariate bases; first coordinate varies slowest."""
    Z = np.asarray(zrow, dtype=np.float64)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    d = Z.shape[1]
    ncol = spec.size_1d ** d
    if ncol > spec.cap:
        raise BasisTooLarge(f"tensor basis needs {ncol} columns, cap is {spec.cap}")
    out = spline_basis_1d(Z[:, 0], spec)
    for k in range(1, d):
        b = spline_basis_1d(Z[:, k], spec)
        out = (out[:, :, None] * b[:, None, :]).reshape(Z.shape[0], -1)
    return out[0] if single else out


def additive_basis(zrow, spec: SplineSpec) -> np.ndarray:
    """Concatenation of the univariate bases in coordinate order."""
    Z = np.asarray(zrow, dtype=np.float64)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    out = np.hstack([spline_basis_1d(Z[:, k], spec) for k in range(Z.shape[1])])
    return out[0] if single else out


def spline_design(Z, spec: SplineSpec) -> np.ndarray:
    if spec.interaction == "tensor":
        return tensor_basis(np.atleast_2d(Z), spec)
    return additive_basis(np.atleast_2d(Z), spec)


# --------------------------------------------------------------------------
# fitted models


@dataclass(frozen=True)
class FirstStageModel:
    """A fitted map R^d -> R^q. ``c_n`` set means predictions are truncated."""

    d: int
    q: int
    c_n: float | None = field(default=None, kw_only=True)

    family = "abstract"

    def _raw_predict(self, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, Z) -> np.ndarray:
        Z_arr = np.asarray(Z, dtype=np.float64)
        single = Z_arr.ndim == 1
        Z2 = np.atleast_2d(Z_arr)
        if Z2.ndim != 2 or Z2.shape[1] != self.d:
            raise ShapeMismatch(f"model expects {self.d} instrument columns, got shape {Z_arr.shape}")
        out = np.asarray(self._raw_predict(Z2), dtype=np.float64).reshape(Z2.shape[0], self.q)
        if self.c_n is not None:
            out = np.where(np.abs(out) <= self.c_n, out, 0.0)
        return out[0] if single else out

    def payload(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"family": self.family, "d": self.d, "q": self.q, "c_n": self.c_n, "payload": self.payload()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class DnnModel(FirstStageModel):
    network: MlpNetwork = None
    report: TrainReport | None = field(default=None, compare=False, repr=False)

    family = "dnn"

    def _raw_predict(self, Z):
        return forward(self.network, Z)

    def payload(self):
        return self.network.to_dict()


@dataclass(frozen=True)
class SplineModel(FirstStageModel):
    spec: SplineSpec = None
    coef: np.ndarray = None  # (p, q)
    intercept: np.ndarray = None  # (q,)
    fits: tuple = field(default=(), compare=False, repr=False)

    @property
    def family(self):
        return "tensor_spline" if self.spec.interaction == "tensor" else "additive_spline"

    def _raw_predict(self, Z):
        return spline_design(Z, self.spec) @ self.coef + self.intercept

    def payload(self):
        return {
            "knots": list(self.spec.knots),
            "degree": self.spec.degree,
            "lo": self.spec.lo,
            "hi": self.spec.hi,
            "interaction": self.spec.interaction,
            "coef": self.coef.tolist(),
            "intercept": self.intercept.tolist(),
        }


@dataclass(frozen=True)
class LinearModel(FirstStageModel):
    coef: np.ndarray = None  # (d + 1, q), intercept first

    family = "linear"

    def _raw_predict(self, Z):
        return Z @ self.coef[1:] + self.coef[0]

    def payload(self):
        return {"coef": self.coef.tolist()}


@dataclass(frozen=True)
class OracleModel(FirstStageModel):
    f0: Callable = None
    name: str | None = None

    family = "oracle"

    def _raw_predict(self, Z):
        return np.asarray(self.f0(Z), dtype=np.float64).reshape(Z.shape[0], self.q)

    def payload(self):
        if self.name is None:
            raise DomainError("an oracle without a registered name cannot be serialised")
        return {"name": self.name}


def model_from_dict(obj: dict) -> FirstStageModel:
    family, d, q, c_n, p = obj["family"], obj["d"], obj["q"], obj.get("c_n"), obj["payload"]
    if family == "dnn":
        return DnnModel(d, q, c_n=c_n, network=MlpNetwork.from_dict(p))
    if family in ("tensor_spline", "additive_spline"):
        spec = SplineSpec(tuple(p["knots"]), p["lo"], p["hi"], p["interaction"], p["degree"])
        return SplineModel(d, q, c_n=c_n, spec=spec, coef=np.array(p["coef"]).reshape(-1, q),
                           intercept=np.array(p["intercept"], dtype=np.float64))
    if family == "linear":
        return LinearModel(d, q, c_n=c_n, coef=np.array(p["coef"]).reshape(d + 1, q))
    if family == "oracle":
        from .simlab import builtin_f0

        return OracleModel(d, q, c_n=c_n, f0=builtin_f0(p["name"]), name=p["name"])
    raise DomainError(f"unknown first-stage family {family!r}")


def model_from_json(text: str) -> FirstStageModel:
    return model_from_dict(json.loads(text))


def predict(model: FirstStageModel, Z) -> np.ndarray:
    """Row ``i`` of the result is the fitted conditional mean at ``Z[i]``."""
    return model.predict(Z)


def truncate_model(model: FirstStageModel, c_n: float) -> FirstStageModel:
    """Zero every output whose magnitude exceeds ``c_n``."""
    if not c_n > 0:
        raise DomainError("truncation level must be positive")
    return replace(model, c_n=float(c_n))


def default_truncation(n: int, c: float = 3.0) -> float:
    """``c * log(n)``."""
    return c * math.log(n)


# --------------------------------------------------------------------------
# fitting


def _affine_fold(net: MlpNetwork, z_mean, z_scale, x_mean, x_scale) -> MlpNetwork:
    """Absorb input/output standardisation into the first and last layers.

    The network was trained on ``(z - z_mean) / z_scale`` with targets
    ``(x - x_mean) / x_scale``; the returned network acts on raw ``z`` and
    predicts raw ``x``.
    """
    weights = list(net.weights)
    shifts = list(net.shifts)
    a1 = weights[0] / z_scale[None, :]
    shifts[0] = shifts[0] + a1 @ z_mean
    weights[0] = a1
    weights[-1] = weights[-1] * x_scale[:, None]
    shifts[-1] = shifts[-1] * x_scale + x_mean
    return MlpNetwork(tuple(weights), tuple(shifts))


def fit_dnn(data: Dataset, L: int = 3, W: int = 10, cfg: TrainConfig = TrainConfig(),
            standardize: bool = True, init: MlpNetwork | None = None) -> DnnModel:
    """Fit one network with q outputs to all endogenous columns jointly.

    With ``standardize`` the network is trained on centred, unit-variance
    inputs and targets and the affine maps are folded back into the
    weights, so the stored network acts on the raw data. ``init`` overrides
    the random starting network (it acts on standardised inputs).
    """
    Z, X = data.z, data.x
    if standardize:
        z_mean, z_scale = Z.mean(axis=0), Z.std(axis=0)
        x_mean, x_scale = X.mean(axis=0), X.std(axis=0)
        z_scale = np.where(z_scale > 0, z_scale, 1.0)
        x_scale = np.where(x_scale > 0, x_scale, 1.0)
        Zt, Xt = (Z - z_mean) / z_scale, (X - x_mean) / x_scale
    else:
        Zt, Xt = Z, X
    if init is None:
        net = init_network(data.d, data.q, L, W, RngStream(cfg.seed, 1))
    else:
        if (init.d, init.q, init.depth, init.width) != (data.d, data.q, L, W):
            raise ShapeMismatch("initial network does not match data and architecture")
        net = init
    net, report = train(net, Xt, Zt, cfg)
    if standardize:
        net = _affine_fold(net, z_mean, z_scale, x_mean, x_scale)
    return DnnModel(data.d, data.q, network=net, report=report)


def fit_linear(data: Dataset) -> LinearModel:
    """Per-output OLS of X on (1, Z)."""
    Z1 = np.hstack([np.ones((data.n, 1)), data.z])
    coef = solve_linear(Z1.T @ Z1, Z1.T @ data.x)
    return LinearModel(data.d, data.q, coef=coef)


def fold_labels(n: int, k: int, seed: int) -> np.ndarray:
    labels = np.arange(n) % k
    return RngStream(seed, 2).permutation(labels)


def fit_spline_lasso(data: Dataset, spec: SplineSpec, cv_folds: int = 5, n_lambdas: int = 50,
                     min_ratio: float = 1e-4, seed: int = 0, lam: float | None = None) -> SplineModel:
    """Lasso on the spline design, one fit per endogenous column.

    The penalty is chosen by ``cv_folds``-fold cross-validation over a
    log-spaced grid unless a fixed ``lam`` is given.
    """
    B = spline_design(data.z, spec)
    coefs, intercepts, fits = [], [], []
    if lam is None:
        folds = fold_labels(data.n, cv_folds, seed)
    for s in range(data.q):
        if lam is None:
            fit, _, _ = cv_lasso(B, data.x[:, s], folds, n_lambdas, min_ratio)
        else:
            fit = lasso_coordinate_descent(B, data.x[:, s], lam)
        coefs.append(fit.coefficients)
        intercepts.append(fit.intercept)
        fits.append(fit)
    return SplineModel(data.d, data.q, spec=spec, coef=np.column_stack(coefs),
                       intercept=np.array(intercepts), fits=tuple(fits))


def fit_first_stage(family: str, data: Dataset, *, L=3, W=10, cfg: TrainConfig = TrainConfig(),
                    spec: SplineSpec | None = None, f0=None, seed: int = 0) -> FirstStageModel:
    """Dispatch on family name: dnn, tensor_spline, additive_spline, linear, oracle."""
    if family == "dnn":
        return fit_dnn(data, L, W, cfg)
    if family == "linear":
        return fit_linear(data)
    if family in ("tensor_spline", "additive_spline"):
        interaction = "tensor" if family == "tensor_spline" else "additive"
        if spec is None:
            spec = SplineSpec.equally_spaced(5 if interaction == "tensor" else 20, interaction=interaction)
        elif spec.interaction != interaction:
            spec = replace(spec, interaction=interaction)
        return fit_spline_lasso(data, spec, seed=seed)
    if family == "oracle":
        if f0 is None:
            raise DomainError("the oracle first stage needs the true conditional mean f0")
        return OracleModel(data.d, data.q, f0=f0, name=getattr(f0, "builtin_name", None))
    raise DomainError(f"unknown first-stage family {family!r}")
