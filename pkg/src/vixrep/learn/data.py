"""Feature construction, scaling, splitting and sequence windowing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import IO, Sequence

import numpy as np

from ..engine import ATM, TermSelection, _local, index_from_selections, select_terms
from ..ingest import (CALL, DEFAULT_ZONE, PUT, DataError, OptionChain, ReferenceSeries,
                      align_series)
from ..subset import every_third, in_order
from ..synth import bs_greeks, bs_price

IN_ORDER = "in_order"
EVERY_THIRD = "every_third"


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    timestamps: list[datetime] = field(default_factory=list)
    columns: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise ValueError("X must be 2-D with one row per target")
        if not np.all(np.isfinite(self.X)) or not np.all(np.isfinite(self.y)):
            raise ValueError("dataset contains missing or non-finite cells")
        if self.timestamps and len(self.timestamps) != len(self.y):
            raise ValueError("timestamps and rows differ in length")

    def __len__(self):
        return len(self.y)

    @property
    def width(self) -> int:
        return self.X.shape[1]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        ts = [self.timestamps[i] for i in idx] if self.timestamps else []
        return Dataset(self.X[idx], self.y[idx], ts, list(self.columns))

    def write_csv(self, sink: IO[str], zone: str = DEFAULT_ZONE) -> None:
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["timestamp", *self.columns, "target"])
        for i in range(len(self)):
            t = _local(self.timestamps[i], zone).isoformat() if self.timestamps else i
            w.writerow([t, *map(repr, self.X[i].tolist()), repr(float(self.y[i]))])


def implied_vols(prices, rights, forward: float, strikes, rate: float, T: float,
                 lo: float = 1e-4, hi: float = 5.0, iters: int = 80) -> np.ndarray:
    """Vectorised bisection for Black-Scholes implied vol.

    ``rights`` entries may be ``"C"``, ``"P"`` or ``"PC"`` (call/put average).
    Prices outside the attainable range clamp to ``lo`` or ``hi``.
    """
    prices = np.asarray(prices, dtype=float)
    strikes = np.asarray(strikes, dtype=float)
    rights = np.asarray(rights)
    spot = forward * math.exp(-rate * T)

    def value(vol):
        c = bs_price(CALL, spot, strikes, rate, T, vol)
        p = bs_price(PUT, spot, strikes, rate, T, vol)
        return np.where(rights == CALL, c, np.where(rights == PUT, p, 0.5 * (c + p)))

    a = np.full(prices.shape, lo)
    b = np.full(prices.shape, hi)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        high = value(mid) > prices
        b = np.where(high, mid, b)
        a = np.where(high, a, mid)
    return 0.5 * (a + b)


def _greeks(sel: TermSelection) -> tuple[np.ndarray, np.ndarray]:
    strikes = np.array(sel.strikes)
    rights = np.array([e.right for e in sel.strip])
    prices = np.array([e.mid for e in sel.strip])
    vols = implied_vols(prices, rights, sel.forward, strikes, sel.rate, sel.T)
    spot = sel.forward * math.exp(-sel.rate * sel.T)
    tc, vc = bs_greeks(CALL, spot, strikes, sel.rate, sel.T, vols)
    tp, _ = bs_greeks(PUT, spot, strikes, sel.rate, sel.T, vols)
    theta = np.where(rights == CALL, tc, np.where(rights == PUT, tp, 0.5 * (tc + tp)))
    return theta, vc


def feature_row(near: TermSelection, next_: TermSelection, include_greeks: bool) -> np.ndarray:
    """Near-term strip then next-term strip, each ascending by strike.

    With greeks each option contributes ``(price, theta, vega)`` consecutively.
    """
    parts = []
    for sel in (near, next_):
        prices = np.array([e.mid for e in sel.strip])
        if include_greeks:
            theta, vega = _greeks(sel)
            parts.append(np.column_stack([prices, theta, vega]).ravel())
        else:
            parts.append(prices)
    return np.concatenate(parts)


def _columns(total: int, include_greeks: bool) -> list[str]:
    if include_greeks:
        return [f"{name}_{i}" for i in range(total) for name in ("price", "theta", "vega")]
    return [f"price_{i}" for i in range(total)]


def build_features(chains: Sequence[OptionChain], total: int = 52, include_greeks: bool = False,
                   ordering: str = EVERY_THIRD, target: ReferenceSeries | None = None,
                   rate: float = 0.013, zone: str = DEFAULT_ZONE,
                   tolerance: float = 60.0) -> Dataset:
    """One row of ``total`` option features per chain, aligned with ``target``.

    Without ``target`` the full-strip index of each chain is the target.
    """
    if ordering not in (IN_ORDER, EVERY_THIRD):
        raise ValueError(f"unknown ordering {ordering!r}")
    pick = every_third if ordering == EVERY_THIRD else in_order
    rows, times, own = [], [], []
    for chain in sorted(chains, key=lambda c: c.quote_time):
        near, next_ = select_terms(chain, rate, zone)
        try:
            a, b = pick(near, next_, total)
        except ArithmeticError as exc:
            raise DataError(f"{chain.quote_time.isoformat()}: {exc}") from None
        rows.append(feature_row(a, b, include_greeks))
        times.append(chain.quote_time)
        if target is None:
            own.append(index_from_selections(chain.quote_time, near, next_).value)
    if not rows:
        raise DataError("no chains")
    X = np.vstack(rows)
    columns = _columns(total, include_greeks)
    if target is None:
        return Dataset(X, np.array(own), times, columns)
    row_of = {t: i for i, t in enumerate(times)}
    # the feature matrix is indexed by time, so align on a placeholder positive series
    placeholder = ReferenceSeries(tuple(times), tuple(float(i + 1) for i in range(len(times))))
    pairs = align_series(placeholder, target, tolerance)
    idx = [row_of[t] for _, _, t in pairs]
    return Dataset(X[idx], np.array([v for _, v, _ in pairs]), [times[i] for i in idx], columns)


@dataclass
class MinMaxScaler:
    lo: np.ndarray
    span: np.ndarray

    def apply(self, X) -> np.ndarray:
        return minmax_apply(self, X)

    def invert(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.span + self.lo

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "span": self.span.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        return cls(np.array(d["lo"], dtype=float), np.array(d["span"], dtype=float))


def minmax_fit(X) -> MinMaxScaler:
    """Per-column min/max of the training rows (last axis is the column axis)."""
    X = np.asarray(X, dtype=float)
    flat = X.reshape(-1, X.shape[-1]) if X.ndim > 1 else X.reshape(-1, 1)
    lo = flat.min(axis=0)
    span = flat.max(axis=0) - lo
    if X.ndim == 1:
        lo, span = lo[0], span[0]
    return MinMaxScaler(np.asarray(lo), np.asarray(span))


def minmax_apply(scaler: MinMaxScaler, X) -> np.ndarray:
    """Map to ``(x - min) / (max - min)``; constant columns map to 0."""
    X = np.asarray(X, dtype=float)
    span = np.where(scaler.span > 0, scaler.span, 1.0)
    out = (X - scaler.lo) / span
    return np.where(scaler.span > 0, out, 0.0)


def split_random(ds: Dataset, train_fraction: float = 0.7, seed: int = 0
                 ) -> tuple[Dataset, Dataset]:
    if not 0 <= train_fraction <= 1:
        raise ValueError("train_fraction must be in [0, 1]")
    order = np.random.default_rng(seed).permutation(len(ds))
    n_train = int(round(train_fraction * len(ds)))
    return ds.take(np.sort(order[:n_train])), ds.take(np.sort(order[n_train:]))


def kfold(ds: Dataset, k: int = 5, seed: int = 0) -> list[tuple[Dataset, Dataset]]:
    n = len(ds)
    if k < 2 or k > n:
        raise ValueError(f"k must be in [2, {n}]")
    order = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(order, k)
    out = []
    for i in range(k):
        val = np.sort(folds[i])
        train = np.sort(np.concatenate([folds[j] for j in range(k) if j != i]))
        out.append((ds.take(train), ds.take(val)))
    return out


def make_windows(ds: Dataset, length: int = 10, zone: str = DEFAULT_ZONE,
                 max_gap_seconds: float = 60.0) -> tuple[np.ndarray, np.ndarray, list[datetime]]:
    """Contiguous windows of ``length`` rows, each labelled with its last row's target.

    A window never spans two trading days or a gap longer than ``max_gap_seconds``.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    ts = ds.timestamps or [None] * len(ds)
    starts = []
    run = 0
    for i in range(len(ds)):
        if i > 0 and ts[i] is not None:
            same_day = _local(ts[i], zone).date() == _local(ts[i - 1], zone).date()
            close = (ts[i] - ts[i - 1]).total_seconds() <= max_gap_seconds
            run = run + 1 if same_day and close else 1
        else:
            run = run + 1 if i > 0 else 1
        if run >= length:
            starts.append(i - length + 1)
    if not starts:
        raise DataError(f"no contiguous window of {length} rows")
    X = np.stack([ds.X[s:s + length] for s in starts])
    y = ds.y[[s + length - 1 for s in starts]]
    times = [ts[s + length - 1] for s in starts]
    return X, y, times
