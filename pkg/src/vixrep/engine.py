"""30-day volatility index from an option chain.

Per timestamp: pick the two expirations inside the 23-37 day window, derive
each term's forward and ``K0`` from put-call parity, select the out-of-the-money
strip with the zero-bid stopping rule, sum the strip into a per-term variance
and interpolate the two variances to a constant 30-day horizon.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import IO, Sequence
from zoneinfo import ZoneInfo

import numpy as np

from . import metrics
from .ingest import (CALL, DEFAULT_ZONE, PUT, DataError, OptionChain, OptionQuote,
                     ReferenceSeries, align_series, mid_price)

N30 = 43200
N365 = 525600
MIN_DAYS = 23
MAX_DAYS = 37

DAILY_RATE = 0.01
INTRADAY_RATE = 0.013

ATM = "PC"


class EngineError(ArithmeticError):
    """A chain that cannot produce an index value."""


@dataclass(frozen=True)
class StripEntry:
    strike: float
    delta_k: float
    mid: float
    right: str  # "P", "C", or "PC" for the averaged K0 entry

    def contribution(self, rate: float, T: float) -> float:
        return self.delta_k / self.strike**2 * math.exp(rate * T) * self.mid


@dataclass(frozen=True)
class TermSelection:
    term: str
    expiration: datetime
    T: float
    minutes_to_settle: float
    rate: float
    forward: float
    k_star: float
    k0: float
    strip: tuple[StripEntry, ...]

    @property
    def put_count(self) -> int:
        return sum(e.right == PUT for e in self.strip)

    @property
    def call_count(self) -> int:
        return sum(e.right == CALL for e in self.strip)

    @property
    def strikes(self) -> list[float]:
        return [e.strike for e in self.strip]

    def with_strip(self, strip: Sequence[StripEntry]) -> "TermSelection":
        return replace(self, strip=tuple(strip))

    def to_dict(self) -> dict:
        return {
            "term": self.term,
            "expiration": self.expiration.isoformat(),
            "T": self.T,
            "minutes_to_settle": self.minutes_to_settle,
            "rate": self.rate,
            "forward": self.forward,
            "k_star": self.k_star,
            "k0": self.k0,
            "put_count": self.put_count,
            "call_count": self.call_count,
            "strip": [[e.strike, e.delta_k, e.mid, e.right] for e in self.strip],
        }


@dataclass(frozen=True)
class IndexComputation:
    quote_time: datetime
    near: TermSelection
    next: TermSelection
    sigma1_sq: float
    sigma2_sq: float
    value: float
    n30: int = N30
    n365: int = N365

    def to_dict(self) -> dict:
        return {
            "quote_time": self.quote_time.isoformat(),
            "value": self.value,
            "sigma1_sq": self.sigma1_sq,
            "sigma2_sq": self.sigma2_sq,
            "n30": self.n30,
            "n365": self.n365,
            "near": self.near.to_dict(),
            "next": self.next.to_dict(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _local(ts: datetime, zone: str) -> datetime:
    return ts.astimezone(ZoneInfo(zone)).replace(tzinfo=None)


def days_to_expiration(now: datetime, settle: datetime, zone: str = DEFAULT_ZONE) -> int:
    """Calendar days between the local dates of ``now`` and ``settle``."""
    return (_local(settle, zone).date() - _local(now, zone).date()).days


def select_term_expirations(chain: OptionChain, now: datetime | None = None,
                            zone: str = DEFAULT_ZONE) -> tuple[datetime, datetime]:
    now = chain.quote_time if now is None else now
    eligible = [e for e in chain.expirations
                if MIN_DAYS < days_to_expiration(now, e, zone) < MAX_DAYS and e > now]
    if len(eligible) < 2:
        raise EngineError(f"insufficient terms at {now.isoformat()}: "
                          f"{len(eligible)} expiration(s) inside ({MIN_DAYS}, {MAX_DAYS}) days")
    return eligible[0], eligible[1]


def time_to_expiration(now: datetime, settle: datetime,
                       zone: str = DEFAULT_ZONE) -> tuple[float, float]:
    """Return ``(T, minutes)`` counting exchange-local wall-clock minutes.

    Equals minutes left today + minutes from midnight to settlement + 1440 per
    full day in between.
    """
    if settle <= now:
        raise EngineError("settlement is not after the quote time")
    minutes = (_local(settle, zone) - _local(now, zone)) / timedelta(minutes=1)
    if minutes <= 0:
        raise EngineError("settlement is not after the quote time in local wall time")
    return minutes / N365, minutes


def _pairs(quotes: Sequence[OptionQuote]) -> dict[float, dict[str, OptionQuote]]:
    by_strike: dict[float, dict[str, OptionQuote]] = {}
    for q in quotes:
        by_strike.setdefault(q.strike, {})[q.right] = q
    return dict(sorted(by_strike.items()))


def compute_forward(quotes: Sequence[OptionQuote], rate: float, T: float) -> tuple[float, float]:
    """Forward from put-call parity at the strike where call and put mids are closest."""
    best = None
    for strike, rights in _pairs(quotes).items():
        if CALL not in rights or PUT not in rights:
            continue
        c, p = mid_price(rights[CALL]), mid_price(rights[PUT])
        if c <= 0 or p <= 0:
            continue
        diff = abs(c - p)
        # strict < keeps the lower strike on ties
        if best is None or diff < best[0]:
            best = (diff, strike, c - p)
    if best is None:
        raise EngineError("no strike with both call and put quoted")
    _, k_star, cp = best
    return k_star + math.exp(rate * T) * cp, k_star


def find_k0(strikes: Sequence[float], forward: float) -> float:
    below = [k for k in strikes if k <= forward]
    if not below:
        raise EngineError(f"forward {forward} below lowest strike")
    return max(below)


def strike_spacing(strikes: Sequence[float], i: int) -> float:
    n = len(strikes)
    if n < 2:
        raise ValueError("strike spacing needs at least two strikes")
    if i == 0:
        return strikes[1] - strikes[0]
    if i == n - 1:
        return strikes[-1] - strikes[-2]
    return (strikes[i + 1] - strikes[i - 1]) / 2.0


def _scan(quotes: Sequence[OptionQuote]) -> list[OptionQuote]:
    kept, zeros = [], 0
    for q in quotes:
        if q.bid == 0:
            zeros += 1
            if zeros == 2:
                break
            continue
        zeros = 0
        kept.append(q)
    return kept


def with_spacing(entries: Sequence[tuple[float, float, str]]) -> list[StripEntry]:
    """Attach ``delta_k`` to ``(strike, mid, right)`` triples sorted by strike."""
    strikes = [e[0] for e in entries]
    return [StripEntry(k, strike_spacing(strikes, i), m, r)
            for i, (k, m, r) in enumerate(entries)]


def select_strips(quotes: Sequence[OptionQuote], k0: float) -> list[StripEntry]:
    """Out-of-the-money strip around ``k0`` with the zero-bid stopping rule.

    Puts below ``k0`` are scanned downward and calls above it upward; zero-bid
    quotes are skipped and a wing stops at its second consecutive zero bid.
    ``k0`` contributes one entry priced at the average of its call and put mids.
    """
    pairs = _pairs(quotes)
    puts = [r[PUT] for k, r in reversed(pairs.items()) if k < k0 and PUT in r]
    calls = [r[CALL] for k, r in pairs.items() if k > k0 and CALL in r]
    put_side = _scan(puts)[::-1]
    call_side = _scan(calls)
    at = pairs.get(k0, {})
    mids = [mid_price(at[r]) for r in (CALL, PUT) if r in at]
    if not mids:
        raise EngineError(f"no quote at K0 = {k0}")
    entries = [(q.strike, mid_price(q), PUT) for q in put_side]
    entries.append((k0, sum(mids) / len(mids), ATM))
    entries += [(q.strike, mid_price(q), CALL) for q in call_side]
    if not put_side and not call_side:
        raise EngineError("empty strip on both wings")
    return with_spacing(entries)


def build_term(chain: OptionChain, expiration: datetime, rate: float, term: str = "near",
               zone: str = DEFAULT_ZONE) -> TermSelection:
    quotes = chain.terms[expiration]
    T, minutes = time_to_expiration(chain.quote_time, expiration, zone)
    forward, k_star = compute_forward(quotes, rate, T)
    k0 = find_k0(sorted({q.strike for q in quotes}), forward)
    strip = select_strips(quotes, k0)
    return TermSelection(term, expiration, T, minutes, rate, forward, k_star, k0, tuple(strip))


def strip_sum(sel: TermSelection) -> float:
    """Sum of ``(dK / K^2) e^{rT} Q(K)`` over the strip."""
    growth = math.exp(sel.rate * sel.T)
    return sum(e.delta_k / (e.strike * e.strike) * growth * e.mid for e in sel.strip)


def term_variance(sel: TermSelection) -> float:
    if not sel.strip:
        raise EngineError("empty strip")
    if sel.T <= 0:
        raise EngineError("T must be positive")
    return 2.0 / sel.T * strip_sum(sel) - (sel.forward / sel.k0 - 1.0) ** 2 / sel.T


def index_from_terms(sigma1_sq: float, sigma2_sq: float, n_t1: float, n_t2: float) -> float:
    if not n_t1 < n_t2:
        raise EngineError("near term must settle before next term")
    t1, t2 = n_t1 / N365, n_t2 / N365
    w1 = (n_t2 - N30) / (n_t2 - n_t1)
    w2 = (N30 - n_t1) / (n_t2 - n_t1)
    radicand = (t1 * sigma1_sq * w1 + t2 * sigma2_sq * w2) * N365 / N30
    if radicand < 0:
        raise EngineError("negative interpolated variance")
    return 100.0 * math.sqrt(radicand)


def index_from_selections(quote_time: datetime, near: TermSelection,
                          next_: TermSelection) -> IndexComputation:
    s1, s2 = term_variance(near), term_variance(next_)
    for name, s in (("near", s1), ("next", s2)):
        if s < 0:
            raise EngineError(f"negative {name}-term variance {s:.3g}")
    value = index_from_terms(s1, s2, near.minutes_to_settle, next_.minutes_to_settle)
    return IndexComputation(quote_time, near, next_, s1, s2, value)


def select_terms(chain: OptionChain, rate: float,
                 zone: str = DEFAULT_ZONE) -> tuple[TermSelection, TermSelection]:
    e1, e2 = select_term_expirations(chain, zone=zone)
    return build_term(chain, e1, rate, "near", zone), build_term(chain, e2, rate, "next", zone)


def compute_index(chain: OptionChain, rate: float = INTRADAY_RATE,
                  zone: str = DEFAULT_ZONE) -> IndexComputation:
    near, next_ = select_terms(chain, rate, zone)
    return index_from_selections(chain.quote_time, near, next_)


def count_puts_calls(sel: TermSelection) -> tuple[int, int]:
    return sel.put_count, sel.call_count


@dataclass
class ReplicationSeries:
    """Replicated index values with optional aligned reference and metrics."""

    computations: list[IndexComputation]
    errors: list[tuple[datetime, str]] = field(default_factory=list)
    reference: list[float | None] | None = None
    metrics: metrics.MetricsReport | None = None

    @property
    def timestamps(self) -> list[datetime]:
        return [c.quote_time for c in self.computations]

    @property
    def values(self) -> np.ndarray:
        return np.array([c.value for c in self.computations])

    def as_reference(self) -> ReferenceSeries:
        return ReferenceSeries(tuple(self.timestamps), tuple(self.values))

    def attach_reference(self, reference: ReferenceSeries, tolerance: float = 60.0) -> None:
        pairs = align_series(self.as_reference(), reference, tolerance)
        matched = {t: vb for _, vb, t in pairs}
        self.reference = [matched.get(t) for t in self.timestamps]
        est = np.array([va for va, _, _ in pairs])
        ref = np.array([vb for _, vb, _ in pairs])
        self.metrics = metrics.report(est, ref)

    def write_csv(self, sink: IO[str], zone: str = DEFAULT_ZONE) -> None:
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["timestamp", "index", "reference", "error", "pct_error",
                    "puts_near", "calls_near", "puts_next", "calls_next"])
        refs = self.reference or [None] * len(self.computations)
        for c, ref in zip(self.computations, refs):
            if ref is None:
                ref_cells = ["", "", ""]
            else:
                err = c.value - ref
                ref_cells = [repr(ref), repr(err), repr(100.0 * err / ref)]
            w.writerow([_local(c.quote_time, zone).isoformat(), repr(c.value), *ref_cells,
                        c.near.put_count, c.near.call_count, c.next.put_count, c.next.call_count])


def replicate_series(chains: Sequence[OptionChain], rate: float = INTRADAY_RATE,
                     reference: ReferenceSeries | None = None, *, tolerance: float = 60.0,
                     continue_on_error: bool = False,
                     zone: str = DEFAULT_ZONE) -> ReplicationSeries:
    """Index value for every chain, optionally scored against ``reference``.

    With ``continue_on_error`` failing timestamps are recorded in ``errors``
    instead of aborting the run.
    """
    if not chains:
        raise EngineError("no chains to replicate")
    out, errors = [], []
    for chain in sorted(chains, key=lambda c: c.quote_time):
        try:
            out.append(compute_index(chain, rate, zone))
        except (EngineError, DataError) as exc:
            if not continue_on_error:
                raise EngineError(f"{chain.quote_time.isoformat()}: {exc}") from exc
            errors.append((chain.quote_time, str(exc)))
    if not out:
        raise EngineError("every chain failed")
    series = ReplicationSeries(out, errors)
    if reference is not None:
        series.attach_reference(reference, tolerance)
    return series
