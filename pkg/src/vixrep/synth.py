"""Synthetic Black-Scholes option chains and a quadrature variance oracle.

The generator produces internally consistent chains (exact put-call parity
when ``spread == 0``) that stand in for licensed quote data. The oracle
evaluates the continuous model-free variance integral directly, so it shares
no code path with the discrete strip sum in :mod:`vixrep.engine`.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtr

from .ingest import CALL, PUT, OptionChain, OptionQuote

MINUTES_PER_YEAR = 525600

VolFn = Callable[[float, float], float]


def _check_finite(*xs):
    for x in xs:
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input")


def bs_price(right, spot, strike, rate, T, vol):
    """Black-Scholes value of a European call (``"C"``) or put (``"P"``).

    Broadcasts over array inputs. ``vol == 0`` gives the discounted intrinsic
    value.
    """
    _check_finite(spot, strike, rate, T, vol)
    spot, strike, T, vol = (np.asarray(x, dtype=float) for x in (spot, strike, T, vol))
    if np.any(T <= 0):
        raise ValueError("T must be positive")
    if np.any(vol < 0) or np.any(spot <= 0) or np.any(strike <= 0):
        raise ValueError("need vol >= 0, spot > 0, strike > 0")
    disc_k = strike * np.exp(-rate * T)
    sig = vol * np.sqrt(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(spot / disc_k) + 0.5 * sig**2) / sig
    d2 = d1 - sig
    if right == CALL:
        price = spot * ndtr(d1) - disc_k * ndtr(d2)
        intrinsic = np.maximum(spot - disc_k, 0.0)
    elif right == PUT:
        price = disc_k * ndtr(-d2) - spot * ndtr(-d1)
        intrinsic = np.maximum(disc_k - spot, 0.0)
    else:
        raise ValueError(f"right must be C or P, got {right!r}")
    price = np.where(sig > 0, price, intrinsic)
    return price[()] if price.ndim == 0 else price


def bs_greeks(right, spot, strike, rate, T, vol):
    """Return ``(theta, vega)``: theta is value change per year of calendar time."""
    _check_finite(spot, strike, rate, T, vol)
    spot, strike, T, vol = (np.asarray(x, dtype=float) for x in (spot, strike, T, vol))
    if np.any(T <= 0) or np.any(vol <= 0):
        raise ValueError("greeks need T > 0 and vol > 0")
    sqrt_t = np.sqrt(T)
    disc_k = strike * np.exp(-rate * T)
    d1 = (np.log(spot / disc_k) + 0.5 * vol**2 * T) / (vol * sqrt_t)
    d2 = d1 - vol * sqrt_t
    pdf = np.exp(-0.5 * d1**2) / math.sqrt(2 * math.pi)
    decay = -spot * pdf * vol / (2 * sqrt_t)
    if right == CALL:
        theta = decay - rate * disc_k * ndtr(d2)
    elif right == PUT:
        theta = decay + rate * disc_k * ndtr(-d2)
    else:
        raise ValueError(f"right must be C or P, got {right!r}")
    vega = spot * pdf * sqrt_t
    if theta.ndim == 0:
        return theta[()], vega[()]
    return theta, vega


def implied_vol(price, right, spot, strike, rate, T, lo=1e-6, hi=5.0):
    """Invert :func:`bs_price` for volatility; returns nan when no root is bracketed."""
    f = lambda v: bs_price(right, spot, strike, rate, T, v) - price
    flo, fhi = f(lo), f(hi)
    if not (flo <= 0 <= fhi):
        return math.nan
    return optimize.brentq(f, lo, hi, xtol=1e-12)


def flat_vol(sigma: float) -> VolFn:
    return lambda strike, T: sigma


def linear_skew(sigma0: float, skew: float, forward: float, floor: float = 0.01) -> VolFn:
    """``vol(K) = sigma0 + skew * ln(K / forward)``, floored at ``floor``."""
    if skew == 0:
        return flat_vol(sigma0)

    def vol(strike, T):
        return np.maximum(sigma0 + skew * np.log(np.asarray(strike) / forward), floor)

    return vol


@dataclass
class ChainSpec:
    """Parameters of a synthetic chain.

    ``strike_grid`` is ``(min, max, step)`` in price units. ``zero_bid_tail``
    outermost strikes on each wing listed in ``zero_bid_wings`` get a zero
    bid. ``noise`` is a relative standard deviation applied to each mid,
    seeded by ``seed`` and the quote minute.
    """

    spot: float = 100.0
    rate: float = 0.01
    vol: float = 0.2
    skew: float = 0.0
    strike_grid: tuple[float, float, float] = (50.0, 200.0, 0.5)
    expirations: tuple[float, ...] = (24 / 365, 36 / 365)
    spread: float = 0.0
    zero_bid_tail: int = 0
    zero_bid_wings: tuple[str, ...] = ("put", "call")
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.strike_grid = tuple(float(x) for x in self.strike_grid)
        self.expirations = tuple(float(t) for t in self.expirations)
        self.zero_bid_wings = tuple(self.zero_bid_wings)
        lo, hi, step = self.strike_grid
        if not (0 < lo < hi and step > 0):
            raise ValueError("strike grid needs 0 < min < max and step > 0")
        if not self.expirations or min(self.expirations) <= 0:
            raise ValueError("expirations must be positive year fractions")
        if self.spot <= 0 or self.vol < 0 or self.spread < 0 or self.noise < 0:
            raise ValueError("spot > 0, vol >= 0, spread >= 0, noise >= 0 required")
        if self.zero_bid_tail < 0:
            raise ValueError("zero_bid_tail must be >= 0")
        if set(self.zero_bid_wings) - {"put", "call"}:
            raise ValueError("zero_bid_wings entries must be 'put' or 'call'")
        for T in self.expirations:
            v = np.asarray(self.vol_fn(T)(self.strikes(), T))
            if np.any(v <= 0) and self.vol > 0:
                raise ValueError("volatility must be positive on the strike grid")

    def strikes(self) -> np.ndarray:
        lo, hi, step = self.strike_grid
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return np.round(lo + step * np.arange(n), 2)

    def forward(self, T: float) -> float:
        return self.spot * math.exp(self.rate * T)

    def vol_fn(self, T: float) -> VolFn:
        return linear_skew(self.vol, self.skew, self.forward(T))

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ChainSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown ChainSpec keys: {sorted(unknown)}")
        return cls(**d)


def _term_prices(spec: ChainSpec, T: float, rng: np.random.Generator | None):
    strikes = spec.strikes()
    vols = np.broadcast_to(np.asarray(spec.vol_fn(T)(strikes, T), dtype=float), strikes.shape)
    calls = bs_price(CALL, spec.spot, strikes, spec.rate, T, vols)
    puts = bs_price(PUT, spec.spot, strikes, spec.rate, T, vols)
    if rng is not None and spec.noise > 0:
        calls = np.maximum(calls * (1 + spec.noise * rng.standard_normal(calls.shape)), 0.0)
        puts = np.maximum(puts * (1 + spec.noise * rng.standard_normal(puts.shape)), 0.0)
    return strikes, calls, puts


def generate_chain(spec: ChainSpec, quote_time: datetime) -> OptionChain:
    """Price every grid strike for every expiration in ``spec``.

    Expiration instants are ``quote_time`` plus ``T`` rounded to whole minutes.
    """
    rng = None
    if spec.noise > 0:
        rng = np.random.default_rng([spec.seed, int(quote_time.timestamp())])
    terms = {}
    tail = spec.zero_bid_tail
    for T in spec.expirations:
        minutes = round(T * MINUTES_PER_YEAR)
        expiration = quote_time + timedelta(minutes=minutes)
        strikes, calls, puts = _term_prices(spec, minutes / MINUTES_PER_YEAR, rng)
        n = len(strikes)
        quotes = []
        for i in range(n):
            for right, mid in ((CALL, calls[i]), (PUT, puts[i])):
                mid = float(mid)
                bid = max(mid - spec.spread, 0.0)
                ask = mid + spec.spread
                if tail and right == PUT and "put" in spec.zero_bid_wings and i < tail:
                    bid = 0.0
                if tail and right == CALL and "call" in spec.zero_bid_wings and i >= n - tail:
                    bid = 0.0
                quotes.append(OptionQuote(quote_time, expiration, right, float(strikes[i]), bid, ask))
        terms[expiration] = quotes
    return OptionChain(quote_time, terms)


def day_specs(spec: ChainSpec, open_time: datetime, spots: Sequence[float],
              vols: Sequence[float] | None = None) -> list[tuple[datetime, ChainSpec]]:
    """Per-minute ``(quote_time, spec)`` pairs with settlement instants held fixed.

    ``spots[i]`` (and ``vols[i]`` if given) drive minute ``i``; time to
    expiration shrinks by one minute per step.
    """
    if vols is not None and len(vols) != len(spots):
        raise ValueError("spots and vols differ in length")
    settle_minutes = [round(T * MINUTES_PER_YEAR) for T in spec.expirations]
    out = []
    for i, s in enumerate(spots):
        remaining = tuple((m - i) / MINUTES_PER_YEAR for m in settle_minutes)
        out.append((open_time + timedelta(minutes=i),
                    replace(spec, spot=float(s), expirations=remaining,
                            vol=float(vols[i]) if vols is not None else spec.vol)))
    return out


def generate_day(spec: ChainSpec, open_time: datetime, spots: Sequence[float],
                 vols: Sequence[float] | None = None) -> list[OptionChain]:
    """One chain per minute from ``open_time``; see :func:`day_specs`."""
    return [generate_chain(s, t) for t, s in day_specs(spec, open_time, spots, vols)]


def simulate_paths(n: int, spot0: float = 100.0, vol0: float = 0.2, *, spot_vol: float = 0.2,
                   drift: float = 0.0, vol_of_vol: float = 1.0, leverage: float = -0.7,
                   vol_floor: float = 0.05, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per-minute spot and ATM-vol paths with negatively correlated shocks.

    ``drift`` and ``spot_vol`` are annualized; minutes are ``1 / 525600`` years.
    """
    rng = np.random.default_rng(seed)
    dt = 1.0 / MINUTES_PER_YEAR
    z1 = rng.standard_normal(n - 1)
    z2 = leverage * z1 + math.sqrt(1 - leverage**2) * rng.standard_normal(n - 1)
    log_s = np.concatenate([[0.0], np.cumsum((drift - 0.5 * spot_vol**2) * dt
                                             + spot_vol * math.sqrt(dt) * z1)])
    log_v = np.concatenate([[0.0], np.cumsum(vol_of_vol * math.sqrt(dt) * z2)])
    spots = spot0 * np.exp(log_s)
    vols = np.maximum(vol0 * np.exp(log_v), vol_floor)
    return spots, vols


def synthetic_specs(spec: ChainSpec, start: datetime, days: int = 1, minutes: int = 390,
                    *, spot_vol: float = 0.2, drift: float = 0.0, vol_of_vol: float = 1.0,
                    seed: int = 0) -> list[tuple[datetime, ChainSpec]]:
    """Per-minute specs for ``days`` consecutive days driven by one seeded path.

    Each day opens at ``start``'s wall time on successive calendar days with
    the expirations of ``spec`` measured from that open; spot and ATM vol
    carry over from the previous close.
    """
    spots, vols = simulate_paths(days * minutes, spec.spot, spec.vol, spot_vol=spot_vol,
                                 drift=drift, vol_of_vol=vol_of_vol, seed=seed)
    out = []
    for d in range(days):
        sl = slice(d * minutes, (d + 1) * minutes)
        out += day_specs(spec, start + timedelta(days=d), spots[sl], vols[sl])
    return out


def synthetic_days(spec: ChainSpec, start: datetime, days: int = 1, minutes: int = 390,
                   **path_kw) -> list[OptionChain]:
    return [generate_chain(s, t) for t, s in synthetic_specs(spec, start, days, minutes, **path_kw)]


def oracle_index(spec: ChainSpec) -> float:
    """Index level implied by the first two expirations of ``spec`` via :func:`oracle_variance`."""
    from .engine import index_from_terms

    t1, t2 = spec.expirations[:2]
    v1 = oracle_variance(spec.vol_fn(t1), spec.forward(t1), spec.rate, t1)
    v2 = oracle_variance(spec.vol_fn(t2), spec.forward(t2), spec.rate, t2)
    return index_from_terms(v1, v2, t1 * MINUTES_PER_YEAR, t2 * MINUTES_PER_YEAR)


def oracle_variance(vol_fn: VolFn, forward: float, rate: float, T: float,
                    lower: float | None = None, upper: float | None = None) -> float:
    """Continuous model-free variance by adaptive quadrature over ``[F/20, 20F]``.

    Evaluates ``2 e^{rT}/T [int_0^F P(K)/K^2 dK + int_F^inf C(K)/K^2 dK]``
    with Black-Scholes prices from ``vol_fn``.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    lower = forward / 20 if lower is None else lower
    upper = forward * 20 if upper is None else upper
    spot = forward * math.exp(-rate * T)

    def integrand(x, right):
        # x = ln K; dK / K^2 = e^{-x} dx
        k = math.exp(x)
        v = float(np.asarray(vol_fn(k, T)))
        return float(bs_price(right, spot, k, rate, T, v)) / k

    lf = math.log(forward)
    width = max(float(np.asarray(vol_fn(forward, T))) * math.sqrt(T), 1e-4)
    breaks = [lf + c * width for c in (-8, -4, -2, -1, 1, 2, 4, 8)]
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            for right, a, b in ((PUT, math.log(lower), lf), (CALL, lf, math.log(upper))):
                pts = [x for x in breaks if a < x < b] or None
                val, _ = integrate.quad(integrand, a, b, args=(right,), epsabs=1e-13,
                                        epsrel=1e-11, limit=500, points=pts)
                total += val
        except integrate.IntegrationWarning as exc:
            raise ArithmeticError(f"quadrature did not converge: {exc}") from None
    return 2.0 * math.exp(rate * T) / T * total
