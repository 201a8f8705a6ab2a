"""Option-chain and reference-series file I/O.

Quotes are read from a flat CSV (``quote_datetime,expiration,option_type,
strike,bid,ask``) and grouped into one :class:`OptionChain` per quote minute.
Naive timestamps are interpreted as exchange-local wall time (``zone``);
everything is stored as timezone-aware datetimes so settlement arithmetic can
use wall-clock minutes while comparisons stay unambiguous.
"""

from __future__ import annotations

import csv
import io
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from typing import IO, Iterable, Sequence
from zoneinfo import ZoneInfo

DEFAULT_ZONE = "America/New_York"
DEFAULT_SETTLEMENT = time(8, 30)

OPTIONS_HEADER = ("quote_datetime", "expiration", "option_type", "strike", "bid", "ask")
REFERENCE_HEADER = ("timestamp", "value")

CALL = "C"
PUT = "P"


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class OptionQuote:
    quote_time: datetime
    expiration: datetime
    right: str
    strike: float
    bid: float
    ask: float

    def __post_init__(self):
        if self.right not in (CALL, PUT):
            raise DataError(f"option_type must be C or P, got {self.right!r}")
        if not (self.strike > 0 and math.isfinite(self.strike)):
            raise DataError(f"strike must be positive, got {self.strike}")
        if not (math.isfinite(self.bid) and math.isfinite(self.ask)):
            raise DataError("bid/ask must be finite")
        if self.bid < 0:
            raise DataError(f"negative bid {self.bid}")
        if self.ask < self.bid:
            raise DataError(f"ask {self.ask} < bid {self.bid}")
        if self.expiration <= self.quote_time:
            raise DataError("expiration must be after quote time")

    @property
    def mid(self) -> float:
        return mid_price(self)

    @property
    def key(self) -> tuple[datetime, str, float]:
        return (self.expiration, self.right, self.strike)


@dataclass
class OptionChain:
    """All quotes for one timestamp, grouped by expiration.

    ``terms`` maps each expiration to its quotes sorted by ``(strike, right)``
    with calls before puts at a shared strike.
    """

    quote_time: datetime
    terms: dict[datetime, list[OptionQuote]] = field(default_factory=dict)

    def __post_init__(self):
        for exp in list(self.terms):
            quotes = sorted(self.terms[exp], key=lambda q: (q.strike, q.right))
            seen = set()
            for q in quotes:
                if q.quote_time != self.quote_time:
                    raise DataError(f"quote at {q.quote_time} in chain for {self.quote_time}")
                if q.expiration != exp:
                    raise DataError("quote filed under the wrong expiration")
                if q.key in seen:
                    raise DataError(f"duplicate quote {exp} {q.right} {q.strike}")
                seen.add(q.key)
            self.terms[exp] = quotes
        self.terms = dict(sorted(self.terms.items()))

    @property
    def expirations(self) -> list[datetime]:
        return list(self.terms)

    def calls(self, expiration: datetime) -> list[OptionQuote]:
        return [q for q in self.terms[expiration] if q.right == CALL]

    def puts(self, expiration: datetime) -> list[OptionQuote]:
        return [q for q in self.terms[expiration] if q.right == PUT]

    def quotes(self) -> list[OptionQuote]:
        return [q for qs in self.terms.values() for q in qs]

    def lookup(self) -> dict[tuple[datetime, str, float], OptionQuote]:
        return {q.key: q for q in self.quotes()}


@dataclass(frozen=True)
class ReferenceSeries:
    timestamps: tuple[datetime, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.timestamps) != len(self.values):
            raise DataError("timestamps and values differ in length")
        for a, b in zip(self.timestamps, self.timestamps[1:]):
            if b <= a:
                raise DataError(f"timestamps not strictly increasing at {b}")
        for v in self.values:
            if not (math.isfinite(v) and v > 0):
                raise DataError(f"reference value must be finite and positive, got {v}")

    def __len__(self):
        return len(self.values)


def mid_price(q: OptionQuote) -> float:
    return (q.bid + q.ask) / 2.0


def parse_timestamp(text: str, zone: str = DEFAULT_ZONE) -> datetime:
    ts = datetime.fromisoformat(text.strip())
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=ZoneInfo(zone))
    return ts


def parse_expiration(text: str, zone: str = DEFAULT_ZONE,
                     settlement: time = DEFAULT_SETTLEMENT) -> datetime:
    """Parse an expiration cell; a bare date settles at ``settlement`` local time."""
    text = text.strip()
    if "T" in text or " " in text:
        return parse_timestamp(text, zone)
    d = date.fromisoformat(text)
    return datetime.combine(d, settlement, tzinfo=ZoneInfo(zone))


def _parse_price(cell: str, name: str, line: int, missing: float | None) -> float:
    cell = cell.strip()
    if cell == "":
        if missing is None:
            raise DataError(f"missing {name}", line)
        return missing
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"bad {name} {cell!r}", line) from None
    if not math.isfinite(value):
        raise DataError(f"non-finite {name}", line)
    return value


def parse_options_csv(source: IO[str] | IO[bytes] | str, zone: str = DEFAULT_ZONE,
                      settlement: time = DEFAULT_SETTLEMENT) -> list[OptionChain]:
    """Read an options quote file into chains ordered by quote time.

    A blank bid is read as 0; a blank ask rejects the row.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    text = source.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty file", 1) from None
    if tuple(h.strip() for h in header) != OPTIONS_HEADER:
        raise DataError(f"expected header {','.join(OPTIONS_HEADER)}", 1)

    grouped: dict[datetime, dict[datetime, list[OptionQuote]]] = {}
    seen: set[tuple] = set()
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(OPTIONS_HEADER):
            raise DataError(f"expected {len(OPTIONS_HEADER)} fields, got {len(row)}", line)
        try:
            quote_time = parse_timestamp(row[0], zone)
            expiration = parse_expiration(row[1], zone, settlement)
        except ValueError as exc:
            raise DataError(f"bad timestamp: {exc}", line) from None
        right = row[2].strip().upper()
        strike = _parse_price(row[3], "strike", line, None)
        bid = _parse_price(row[4], "bid", line, 0.0)
        ask = _parse_price(row[5], "ask", line, None)
        try:
            q = OptionQuote(quote_time, expiration, right, strike, bid, ask)
        except DataError as exc:
            raise DataError(str(exc), line) from None
        key = (quote_time, expiration, right, strike)
        if key in seen:
            raise DataError(f"duplicate quote {right} {strike} exp {row[1].strip()}", line)
        seen.add(key)
        grouped.setdefault(quote_time, {}).setdefault(expiration, []).append(q)

    return [OptionChain(t, terms) for t, terms in sorted(grouped.items())]


def _fmt_time(ts: datetime, zone: str) -> str:
    return ts.astimezone(ZoneInfo(zone)).replace(tzinfo=None).isoformat()


def write_options_csv(chains: Iterable[OptionChain], sink: IO[str],
                      zone: str = DEFAULT_ZONE) -> None:
    """Write chains in the ingest schema; floats use ``repr`` so re-parsing is exact."""
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(OPTIONS_HEADER)
    for chain in chains:
        for q in chain.quotes():
            w.writerow([_fmt_time(q.quote_time, zone), _fmt_time(q.expiration, zone),
                        q.right, repr(q.strike), repr(q.bid), repr(q.ask)])


def parse_reference_csv(source: IO[str] | str, zone: str = DEFAULT_ZONE) -> ReferenceSeries:
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != REFERENCE_HEADER:
        raise DataError("expected header timestamp,value", 1)
    ts, vals = [], []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise DataError("expected 2 fields", line)
        try:
            ts.append(parse_timestamp(row[0], zone))
            vals.append(float(row[1]))
        except ValueError as exc:
            raise DataError(str(exc), line) from None
    try:
        return ReferenceSeries(ts, vals)
    except DataError as exc:
        raise DataError(str(exc)) from None


def write_reference_csv(series: ReferenceSeries, sink: IO[str], zone: str = DEFAULT_ZONE) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(REFERENCE_HEADER)
    for t, v in zip(series.timestamps, series.values):
        w.writerow([_fmt_time(t, zone), repr(v)])


def align_series(a: ReferenceSeries, b: ReferenceSeries,
                 tolerance: float) -> list[tuple[float, float, datetime]]:
    """Pair each point of ``a`` with the nearest unused point of ``b``.

    Points further apart than ``tolerance`` seconds are dropped. Returns
    ``(value_a, value_b, timestamp_a)`` triples in ``a``'s order.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    tol = timedelta(seconds=tolerance)
    bt = b.timestamps
    used = [False] * len(bt)
    out = []
    for ta, va in zip(a.timestamps, a.values):
        i = bisect_left(bt, ta)
        best = None
        # nearest unused candidates on either side
        j = i - 1
        while j >= 0 and used[j]:
            j -= 1
        k = i
        while k < len(bt) and used[k]:
            k += 1
        for c in (j, k):
            if 0 <= c < len(bt) and abs(bt[c] - ta) <= tol:
                if best is None or abs(bt[c] - ta) < abs(bt[best] - ta):
                    best = c
        if best is not None:
            used[best] = True
            out.append((va, b.values[best], ta))
    if not out:
        raise DataError("no overlapping timestamps")
    return out


def series_from_pairs(timestamps: Sequence[datetime], values: Sequence[float]) -> ReferenceSeries:
    return ReferenceSeries(tuple(timestamps), tuple(values))
