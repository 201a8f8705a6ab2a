"""Trained-model container, training entry points and JSON serialization."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .. import metrics
from .data import Dataset, MinMaxScaler, minmax_apply, minmax_fit, split_random
from .layers import Sequential, from_config
from .nets import NetworkSpec, TrainConfig, build_network, fit
from .tree import RandomForest, RegressionTree, forest_fit, tree_fit

FORMAT_VERSION = 1
KINDS = ("dense", "lstm_flat", "lstm_multi", "tree", "forest")


@dataclass
class Model:
    kind: str
    net: Sequential | None = None
    estimator: RegressionTree | RandomForest | None = None
    x_scaler: MinMaxScaler | None = None
    y_scaler: MinMaxScaler | None = None
    spec: NetworkSpec | None = None
    config: TrainConfig | None = None
    history: list[tuple[int, float, float]] = field(default_factory=list)
    n_features: int = 0

    def predict(self, X) -> np.ndarray:
        """Inference on raw rows (or ``(n, length, width)`` windows for LSTMs)."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[-1]}")
        if self.estimator is not None:
            return self.estimator.predict(X)
        Z = minmax_apply(self.x_scaler, X)
        out = self.net.forward(Z, training=False).reshape(-1)
        return self.y_scaler.invert(out)

    def evaluate(self, X, y) -> metrics.MetricsReport:
        return metrics.report(self.predict(X), y)

    def count_params(self) -> int:
        return self.net.count_params() if self.net is not None else 0

    def write_history(self, sink: IO[str]) -> None:
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, tr, va in self.history:
            w.writerow([epoch, repr(tr), repr(va)])

    def to_dict(self) -> dict:
        d = {"format": "vixrep-model", "version": FORMAT_VERSION, "kind": self.kind,
             "n_features": self.n_features,
             "history": [list(h) for h in self.history]}
        if self.spec is not None:
            d["spec"] = self.spec.to_dict()
        if self.config is not None:
            d["config"] = self.config.to_dict()
        if self.net is not None:
            d["layers"] = self.net.config()
            d["weights"] = {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                            for k, v in self.net.named_params().items()}
            d["x_scaler"] = self.x_scaler.to_dict()
            d["y_scaler"] = self.y_scaler.to_dict()
        else:
            d["estimator"] = self.estimator.to_dict()
        return d

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        if d.get("format") != "vixrep-model" or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a supported model file")
        kind = d["kind"]
        model = cls(kind, n_features=d["n_features"],
                    history=[tuple(h) for h in d.get("history", [])])
        if "spec" in d:
            model.spec = NetworkSpec(**d["spec"])
        if "config" in d:
            model.config = TrainConfig(**d["config"])
        if kind == "tree":
            model.estimator = RegressionTree.from_dict(d["estimator"])
        elif kind == "forest":
            model.estimator = RandomForest.from_dict(d["estimator"])
        else:
            net = from_config(d["layers"])
            net.set_weights({k: np.array(v["data"], dtype=float).reshape(v["shape"])
                             for k, v in d["weights"].items()})
            model.net = net
            model.x_scaler = MinMaxScaler.from_dict(d["x_scaler"])
            model.y_scaler = MinMaxScaler.from_dict(d["y_scaler"])
        return model

    @classmethod
    def load(cls, path) -> "Model":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _train_net(kind: str, spec: NetworkSpec, config: TrainConfig, X, y, X_val, y_val) -> Model:
    if X.shape[-1] != spec.n_in:
        raise ValueError(f"network expects {spec.n_in} inputs, data has {X.shape[-1]}")
    # scalers see training rows only
    xs, ys = minmax_fit(X), minmax_fit(y)
    net = build_network(spec)
    Zv = minmax_apply(xs, X_val) if X_val is not None and len(X_val) else None
    yv = minmax_apply(ys, y_val) if Zv is not None else None
    history = fit(net, minmax_apply(xs, X), minmax_apply(ys, y), config, Zv, yv)
    return Model(kind, net=net, x_scaler=xs, y_scaler=ys, spec=spec, config=config,
                 history=history, n_features=X.shape[-1])


def dense_train(spec: NetworkSpec, config: TrainConfig, train: Dataset,
                val: Dataset | None = None) -> Model:
    """Mini-batch Adam on MSE. Without ``val`` a ``validation_fraction`` holdout of ``train`` is used."""
    if spec.kind != "dense":
        raise ValueError("dense_train needs a dense NetworkSpec")
    X, y = train.X, train.y
    if val is None:
        X, y, Xv, yv = holdout_split(X, y, config)
    else:
        Xv, yv = val.X, val.y
    return _train_net("dense", spec, config, X, y, Xv, yv)


def lstm_train(spec: NetworkSpec, config: TrainConfig, train, val=None) -> Model:
    """Train a recurrent net on pre-windowed ``(X, y)`` arrays of shape ``(n, length, width)``."""
    if not spec.recurrent:
        raise ValueError("lstm_train needs an lstm NetworkSpec")
    X, y = train
    if X.ndim != 3 or X.shape[1] != spec.sequence_length:
        raise ValueError(f"expected windows of length {spec.sequence_length}")
    if val is None:
        X, y, Xv, yv = holdout_split(X, y, config)
    else:
        Xv, yv = val
    return _train_net(spec.kind, spec, config, X, y, Xv, yv)


def holdout_split(X, y, config: TrainConfig):
    """Seeded random holdout of ``config.validation_fraction`` of the rows."""
    n = len(y)
    if config.validation_fraction <= 0 or n < 2:
        return X, y, None, None
    order = np.random.default_rng(config.seed).permutation(n)
    n_val = max(1, int(round(config.validation_fraction * n)))
    va, tr = np.sort(order[:n_val]), np.sort(order[n_val:])
    return X[tr], y[tr], X[va], y[va]


def train_tree(train: Dataset, max_leaf_nodes: int = 8) -> Model:
    return Model("tree", estimator=tree_fit(train.X, train.y, max_leaf_nodes),
                 n_features=train.width)


def train_forest(train: Dataset, trees: int = 10, max_leaf_nodes: int = 8, seed: int = 0,
                 bootstrap: bool = True) -> Model:
    return Model("forest", estimator=forest_fit(train.X, train.y, trees, max_leaf_nodes, seed,
                                                bootstrap), n_features=train.width)


def predict(model: Model, rows) -> np.ndarray:
    return model.predict(rows)


def evaluate(model: Model, X, y) -> metrics.MetricsReport:
    return model.evaluate(X, y)
