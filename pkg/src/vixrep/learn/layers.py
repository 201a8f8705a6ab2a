"""Numpy layers with hand-written backward passes.

Every layer keeps its parameters in ``params`` and, after ``backward``, the
matching gradients in ``grads`` (same keys). ``backward`` returns the gradient
with respect to the layer input so layers chain in :class:`Sequential`.
"""

from __future__ import annotations

import numpy as np


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = np.sqrt(1.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def config(self) -> dict:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, activation: str = "linear",
                 rng: np.random.Generator | None = None):
        if activation not in ("linear", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        self.params = {"W": _uniform(rng, n_in, (n_in, n_out)), "b": np.zeros(n_out)}
        self.grads = {}

    def forward(self, x, training=False):
        z = x @ self.params["W"] + self.params["b"]
        self._x = x
        if self.activation == "relu":
            self._mask = z > 0
            return z * self._mask
        return z

    def backward(self, dy):
        if self.activation == "relu":
            dy = dy * self._mask
        x = self._x
        # fold any leading batch/time axes together
        x2 = x.reshape(-1, self.n_in)
        d2 = dy.reshape(-1, self.n_out)
        self.grads = {"W": x2.T @ d2, "b": d2.sum(axis=0)}
        return dy @ self.params["W"].T

    def config(self):
        return {"type": "dense", "n_in": self.n_in, "n_out": self.n_out,
                "activation": self.activation}


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng or np.random.default_rng(0)
        self.params, self.grads = {}, {}

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask

    def config(self):
        return {"type": "dropout", "rate": self.rate}


class LSTM(Layer):
    """LSTM over ``(batch, time, features)`` input.

    Gate blocks in ``W`` (input kernel), ``U`` (recurrent kernel) and ``b``
    are ordered input, forget, candidate, output. Returns the full hidden
    sequence or only the last step.
    """

    def __init__(self, n_in: int, units: int, return_sequences: bool = False,
                 rng: np.random.Generator | None = None, forget_bias: float = 1.0):
        rng = rng or np.random.default_rng(0)
        self.n_in, self.units, self.return_sequences = n_in, units, return_sequences
        b = np.zeros(4 * units)
        b[units:2 * units] = forget_bias
        self.params = {"W": _uniform(rng, n_in, (n_in, 4 * units)),
                       "U": _uniform(rng, units, (units, 4 * units)),
                       "b": b}
        self.grads = {}

    def forward(self, x, training=False):
        B, L, _ = x.shape
        u = self.units
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        h = np.zeros((B, u))
        c = np.zeros((B, u))
        xw = x @ W + b
        hs = np.empty((B, L, u))
        cache = []
        for t in range(L):
            z = xw[:, t] + h @ U
            i = sigmoid(z[:, :u])
            f = sigmoid(z[:, u:2 * u])
            g = np.tanh(z[:, 2 * u:3 * u])
            o = sigmoid(z[:, 3 * u:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            hs[:, t] = h
            cache.append((i, f, g, o, c_prev, h_prev, tc))
        self._x, self._cache = x, cache
        return hs if self.return_sequences else h

    def backward(self, dy):
        x, cache = self._x, self._cache
        B, L, _ = x.shape
        u = self.units
        W, U = self.params["W"], self.params["U"]
        if self.return_sequences:
            dhs = dy
        else:
            dhs = np.zeros((B, L, u))
            dhs[:, -1] = dy
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        db = np.zeros(4 * u)
        dx = np.empty_like(x)
        dh_next = np.zeros((B, u))
        dc_next = np.zeros((B, u))
        for t in reversed(range(L)):
            i, f, g, o, c_prev, h_prev, tc = cache[t]
            dh = dhs[:, t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                                 dg * (1 - g * g), do * o * (1 - o)], axis=1)
            dW += x[:, t].T @ dz
            dU += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, t] = dz @ W.T
            dh_next = dz @ U.T
            dc_next = dc * f
        self.grads = {"W": dW, "U": dU, "b": db}
        return dx

    def config(self):
        return {"type": "lstm", "n_in": self.n_in, "units": self.units,
                "return_sequences": self.return_sequences}


class Sequential:
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def named_params(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers)
                for k, v in layer.params.items()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers)
                for k, v in layer.grads.items()}

    def count_params(self) -> int:
        return sum(v.size for v in self.named_params().values())

    def config(self) -> list[dict]:
        return [layer.config() for layer in self.layers]

    def get_weights(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.named_params().items()}

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        for i, layer in enumerate(self.layers):
            for k in layer.params:
                layer.params[k][...] = weights[f"{i}.{k}"]


def from_config(config: list[dict], seed: int = 0) -> Sequential:
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    for c in config:
        kind = c["type"]
        if kind == "dense":
            layers.append(Dense(c["n_in"], c["n_out"], c.get("activation", "linear"), rng))
        elif kind == "lstm":
            layers.append(LSTM(c["n_in"], c["units"], c.get("return_sequences", False), rng))
        elif kind == "dropout":
            layers.append(Dropout(c["rate"], np.random.default_rng(rng.integers(2**63))))
        else:
            raise ValueError(f"unknown layer type {kind!r}")
    return Sequential(layers)


def lstm_param_count(n_in: int, units: int) -> int:
    return 4 * (units * (n_in + units) + units)


def dense_param_count(n_in: int, n_out: int) -> int:
    return n_in * n_out + n_out
