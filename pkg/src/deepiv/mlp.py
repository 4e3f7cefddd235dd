"""Fully connected ReLU networks with shift activations.

A network of depth ``L`` and width ``W`` maps ``z`` in R^d to

    f(z) = v_{L+1} + A_{L+1} s_{v_L}( A_L s_{v_{L-1}}( ... A_2 s_{v_1}(A_1 z) ) )

where ``s_v(a) = max(a - v, 0)`` elementwise. Training minimises the mean
squared residual norm with minibatch SGD or Adam and early stopping on a
held-out split.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import DomainError, ShapeMismatch
from .numerics import RngStream, as_rng


@dataclass(frozen=True)
class MlpNetwork:
    """Weights ``[A_1, ..., A_{L+1}]`` and shifts ``[v_1, ..., v_{L+1}]``."""

    weights: tuple
    shifts: tuple

    def __post_init__(self):
        weights = tuple(np.asarray(a, dtype=np.float64) for a in self.weights)
        shifts = tuple(np.asarray(v, dtype=np.float64).reshape(-1) for v in self.shifts)
        if len(weights) < 2 or len(weights) != len(shifts):
            raise ShapeMismatch("need L+1 >= 2 weight matrices and as many shift vectors")
        for l, (a, v) in enumerate(zip(weights, shifts)):
            if a.ndim != 2 or a.shape[0] != v.shape[0]:
                raise ShapeMismatch(f"layer {l + 1}: weight {a.shape} vs shift {v.shape}")
            if l > 0 and a.shape[1] != weights[l - 1].shape[0]:
                raise ShapeMismatch(f"layer {l + 1}: input width {a.shape[1]} != {weights[l - 1].shape[0]}")
        hidden = {a.shape[0] for a in weights[:-1]}
        if len(hidden) != 1:
            raise ShapeMismatch("hidden layers must share one width")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "shifts", shifts)

    @property
    def d(self) -> int:
        return self.weights[0].shape[1]

    @property
    def q(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    @property
    def width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([self.d] + [self.width] * self.depth + [self.q], dtype=np.int64)

    def parameter_count(self) -> int:
        """Size of the network class as usually quoted: ``W(L+d+q) + (L-1)W^2``.

        This counts every weight and every hidden shift. The q output shifts
        are not included; :attr:`n_trainable` includes them.
        """
        L, W = self.depth, self.width
        return W * (L + self.d + self.q) + (L - 1) * W * W

    @property
    def n_trainable(self) -> int:
        return sum(a.size + v.size for a, v in zip(self.weights, self.shifts))

    def to_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([a.ravel(), v]) for a, v in zip(self.weights, self.shifts)])

    def with_flat(self, theta) -> "MlpNetwork":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_trainable,):
            raise ShapeMismatch(f"expected {self.n_trainable} parameters, got {theta.shape}")
        weights, shifts, off = [], [], 0
        for a, v in zip(self.weights, self.shifts):
            weights.append(theta[off:off + a.size].reshape(a.shape).copy())
            off += a.size
            shifts.append(theta[off:off + v.size].copy())
            off += v.size
        return MlpNetwork(tuple(weights), tuple(shifts))

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "q": self.q,
            "L": self.depth,
            "W": self.width,
            "weights": [a.tolist() for a in self.weights],
            "shifts": [v.tolist() for v in self.shifts],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MlpNetwork":
        net = cls(tuple(np.array(a, dtype=np.float64).reshape(len(a), -1) for a in obj["weights"]),
                  tuple(np.array(v, dtype=np.float64) for v in obj["shifts"]))
        if (net.d, net.q, net.depth, net.width) != (obj["d"], obj["q"], obj["L"], obj["W"]):
            raise ShapeMismatch("serialised header disagrees with weight shapes")
        return net

    def to_json(self) -> str:
        # repr of a Python float is the shortest round-tripping form (<= 17 digits)
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MlpNetwork":
        return cls.from_dict(json.loads(text))


class NetworkGrad(NamedTuple):
    weights: list
    shifts: list


def init_network(d: int, q: int, L: int, W: int, rng=None) -> MlpNetwork:
    """Glorot-uniform weights, zero shifts."""
    for name, val in (("d", d), ("q", q), ("L", L), ("W", W)):
        if int(val) != val or val < 1:
            raise DomainError(f"{name} must be a positive integer, got {val}")
    rng = as_rng(rng)
    sizes = [d] + [W] * L + [q]
    weights, shifts = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        shifts.append(np.zeros(n_out))
    return MlpNetwork(tuple(weights), tuple(shifts))


def _check_inputs(net: MlpNetwork, Z, X=None):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.ndim != 2 or Z.shape[1] != net.d:
        raise ShapeMismatch(f"expected inputs with {net.d} columns, got shape {Z.shape}")
    if X is None:
        return np.ascontiguousarray(Z)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None] if net.q == 1 else X[None, :]
    if X.ndim != 2 or X.shape[1] != net.q or X.shape[0] != Z.shape[0]:
        raise ShapeMismatch(f"targets {X.shape} do not match inputs {Z.shape} and q={net.q}")
    return np.ascontiguousarray(Z), np.ascontiguousarray(X)


def forward(net: MlpNetwork, z) -> np.ndarray:
    """Evaluate the network at one input vector (returns shape (q,)) or at
    each row of a matrix (returns shape (m, q))."""
    z_arr = np.asarray(z, dtype=np.float64)
    Z = _check_inputs(net, z_arr)
    out = _kernels.forward_batch(net.to_flat(), net.sizes, Z)
    return out[0] if z_arr.ndim == 1 else out


def loss(net: MlpNetwork, X, Z) -> float:
    """Mean over rows of ``||X_i - f(Z_i)||^2``."""
    Z, X = _check_inputs(net, Z, X)
    if Z.shape[0] == 0:
        raise DomainError("empty data")
    idx = np.arange(Z.shape[0], dtype=np.int64)
    return float(_kernels.mse(net.to_flat(), net.sizes, Z, X, idx))


def gradient(net: MlpNetwork, X_batch, Z_batch) -> NetworkGrad:
    """Backpropagated gradient of :func:`loss` on a batch."""
    Z, X = _check_inputs(net, Z_batch, X_batch)
    if Z.shape[0] == 0:
        raise DomainError("empty batch")
    grad = np.zeros(net.n_trainable)
    idx = np.arange(Z.shape[0], dtype=np.int64)
    _kernels.loss_grad(net.to_flat(), net.sizes, Z, X, idx, grad)
    g = net.with_flat(grad)
    return NetworkGrad(list(g.weights), list(g.shifts))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 500
    patience: int = 25
    train_fraction: float = 0.8
    optimizer: str = "adam"
    seed: int = 0
    restore_best: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise DomainError("train_fraction must lie in (0, 1]")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if not self.learning_rate > 0.0:
            raise DomainError("learning_rate must be positive")
        if self.max_epochs < 0 or self.patience < 1:
            raise DomainError("max_epochs must be >= 0 and patience >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=int(seed))


@dataclass
class TrainReport:
    epochs_run: int
    final_train_loss: float
    final_test_loss: float
    initial_test_loss: float
    best_epoch: int
    loss_history: list = field(default_factory=list)

    @property
    def best_test_loss(self) -> float:
        return min(te for _, te in self.loss_history)


def split_indices(n: int, train_fraction: float, rng: RngStream):
    """Random train/test split with ``floor(train_fraction * n)`` training rows."""
    if train_fraction >= 1.0:
        idx = np.arange(n, dtype=np.int64)
        return idx, idx[:0]
    if n < 2:
        raise DomainError("need n >= 2 for a train/test split")
    n_train = min(max(int(math.floor(train_fraction * n)), 1), n - 1)
    perm = rng.permutation(n).astype(np.int64)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def train(net: MlpNetwork, X, Z, cfg: TrainConfig = TrainConfig()):
    """Fit ``net`` to ``(Z, X)``.

    The split permutation and the minibatch order come from separate child
    streams of ``cfg.seed``. With ``restore_best`` the returned network is
    the snapshot (initial network included) with the lowest held-out loss;
    when ``train_fraction == 1`` the training loss plays that role.

    Returns
    -------
    (MlpNetwork, TrainReport)
    """
    Z, X = _check_inputs(net, Z, X)
    n = Z.shape[0]
    if n == 0:
        raise DomainError("empty data")
    rng = RngStream(cfg.seed)
    train_idx, test_idx = split_indices(n, cfg.train_fraction, rng.spawn(0))
    order_rng = rng.spawn(1)
    sel_idx = test_idx if test_idx.size else train_idx
    sizes = net.sizes
    theta = net.to_flat()

    tr0 = float(_kernels.mse(theta, sizes, Z, X, train_idx))
    te0 = float(_kernels.mse(theta, sizes, Z, X, sel_idx))
    best_theta, best_loss, best_epoch, best_train = theta.copy(), te0, 0, tr0
    history = [(tr0, te0)]
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    step = 0
    wait = 0
    epochs = 0
    use_adam = cfg.optimizer == "adam"
    for epoch in range(1, cfg.max_epochs + 1):
        order = train_idx[order_rng.permutation(train_idx.size)]
        step = _kernels.run_epoch(theta, sizes, Z, X, order, cfg.batch_size, cfg.learning_rate,
                                  use_adam, cfg.beta1, cfg.beta2, cfg.eps, m1, m2, step)
        epochs = epoch
        tr = float(_kernels.mse(theta, sizes, Z, X, train_idx))
        te = float(_kernels.mse(theta, sizes, Z, X, sel_idx))
        if not (math.isfinite(tr) and math.isfinite(te)):
            break
        history.append((tr, te))
        if te < best_loss:
            best_theta, best_loss, best_epoch, best_train = theta.copy(), te, epoch, tr
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break

    if cfg.restore_best or not np.all(np.isfinite(theta)):
        out, tr_f, te_f = best_theta, best_train, best_loss
    else:
        out, (tr_f, te_f) = theta, history[-1]
    report = TrainReport(
        epochs_run=epochs,
        final_train_loss=tr_f,
        final_test_loss=te_f,
        initial_test_loss=te0,
        best_epoch=best_epoch,
        loss_history=history,
    )
    return net.with_flat(out), report
