"""Network architectures, the Adam optimizer and the mini-batch training loop."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .layers import Dense, Dropout, LSTM, Sequential


class TrainingError(ArithmeticError):
    pass


@dataclass
class NetworkSpec:
    """Architecture description.

    ``kind`` is ``dense``, ``lstm_flat`` or ``lstm_multi``. Dense nets use
    ``widths`` hidden layers with ``activation``; LSTM nets use ``units`` per
    recurrent layer, ``dropout`` after every recurrent layer but the last, and
    windows of ``sequence_length`` rows.
    """

    kind: str = "dense"
    n_in: int = 52
    widths: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    units: tuple[int, ...] = (1000,)
    dropout: float = 0.0
    sequence_length: int = 10
    seed: int = 0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.units = tuple(int(u) for u in self.units)
        if self.kind not in ("dense", "lstm_flat", "lstm_multi"):
            raise ValueError(f"unknown network kind {self.kind!r}")
        if self.kind == "dense" and not self.widths:
            raise ValueError("dense network needs at least one hidden layer")
        if self.kind != "dense" and not self.units:
            raise ValueError("lstm network needs at least one recurrent layer")
        if self.kind == "lstm_flat" and len(self.units) != 1:
            raise ValueError("flat lstm has exactly one recurrent layer")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.sequence_length < 1:
            raise ValueError("sequence_length must be >= 1")

    @property
    def recurrent(self) -> bool:
        return self.kind != "dense"

    def to_dict(self) -> dict:
        return asdict(self)


def build_network(spec: NetworkSpec) -> Sequential:
    rng = np.random.default_rng(spec.seed)
    layers = []
    if spec.kind == "dense":
        n = spec.n_in
        for w in spec.widths:
            layers.append(Dense(n, w, spec.activation, rng))
            n = w
        layers.append(Dense(n, 1, "linear", rng))
        return Sequential(layers)
    n = spec.n_in
    for k, u in enumerate(spec.units):
        last = k == len(spec.units) - 1
        layers.append(LSTM(n, u, return_sequences=not last, rng=rng))
        if not last and spec.dropout > 0:
            layers.append(Dropout(spec.dropout, np.random.default_rng(rng.integers(2**63))))
        n = u
    layers.append(Dense(n, 1, "linear", rng))
    return Sequential(layers)


def model1_spec(n_in: int = 52, seed: int = 0) -> NetworkSpec:
    return NetworkSpec("dense", n_in, (64, 64), seed=seed)


def model2_spec(n_in: int = 156, seed: int = 0) -> NetworkSpec:
    return NetworkSpec("dense", n_in, (128, 128, 128, 128), seed=seed)


def lstm_flat_spec(n_in: int = 52, units: int = 1000, seed: int = 0) -> NetworkSpec:
    return NetworkSpec("lstm_flat", n_in, units=(units,), seed=seed)


def lstm_multi_spec(n_in: int = 52, units=(500, 500, 500), dropout: float = 0.3,
                    seed: int = 0) -> NetworkSpec:
    return NetworkSpec("lstm_multi", n_in, units=tuple(units), dropout=dropout, seed=seed)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place bias-corrected Adam update of ``params``."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for k, p in params.items():
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 300
    batch_size: int = 32
    patience: int | None = 20
    patience_unit: str = "epoch"
    validation_fraction: float = 0.2
    k: int = 5
    seed: int = 0
    restore_best: bool = True

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.patience is not None and self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.patience_unit not in ("epoch", "step"):
            raise ValueError("patience_unit must be 'epoch' or 'step'")

    def to_dict(self) -> dict:
        return asdict(self)


def mse_loss(pred: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    d = pred.reshape(-1) - y.reshape(-1)
    return float(np.mean(d * d)), (2.0 / d.size * d).reshape(pred.shape)


def fit(net: Sequential, X: np.ndarray, y: np.ndarray, config: TrainConfig,
        X_val: np.ndarray | None = None, y_val: np.ndarray | None = None
        ) -> list[tuple[int, float, float]]:
    """Train ``net`` in place; returns ``(epoch, train_loss, val_loss)`` rows.

    Train loss is the mean of the epoch's batch losses. Early stopping watches
    validation loss once per epoch; ``config.patience`` counts epochs, or
    optimizer steps when ``patience_unit == "step"``.
    """
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    params = net.named_params()
    history = []
    best, best_epoch, best_weights = math.inf, 0, None
    n = len(X)
    per_epoch = 1 if config.patience_unit == "epoch" else math.ceil(n / config.batch_size)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses, sizes = [], []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            pred = net.forward(X[idx], training=True)
            loss, dpred = mse_loss(pred, y[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            net.backward(dpred)
            adam_step(params, net.named_grads(), state, config.lr)
            losses.append(loss)
            sizes.append(len(idx))
        train_loss = float(np.average(losses, weights=sizes))
        val_loss = math.nan
        if X_val is not None and len(X_val):
            val_loss, _ = mse_loss(net.forward(X_val), y_val)
            if not math.isfinite(val_loss):
                raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        history.append((epoch, train_loss, val_loss))
        if X_val is None or not len(X_val):
            continue
        if val_loss < best:
            best, best_epoch = val_loss, epoch
            if config.restore_best:
                best_weights = net.get_weights()
        elif config.patience is not None and (epoch - best_epoch) * per_epoch > config.patience:
            break
    if best_weights is not None:
        net.set_weights(best_weights)
    return history
