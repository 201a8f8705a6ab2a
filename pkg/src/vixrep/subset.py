"""Index replication from reduced option strips.

The forward and ``K0`` of each term always come from the full selection; only
the strip shrinks. Subset series under-estimate the full index (every strip
entry contributes a nonnegative amount), so they are compared after scaling
to the reference mean.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, time
from typing import IO, Iterable, Sequence

import numpy as np

from . import metrics
from .engine import (ATM, EngineError, IndexComputation, StripEntry, TermSelection, _local,
                     build_term, index_from_selections, select_terms,
                     with_spacing)
from .ingest import CALL, DEFAULT_ZONE, PUT, OptionChain, ReferenceSeries, align_series, mid_price

PER_MINUTE = "per_minute_nearest_k0"
DAY_START = "day_start_nearest_k0"
EVERY_THIRD = "every_third"
STRATEGIES = (PER_MINUTE, DAY_START, EVERY_THIRD)

DEFAULT_GRID = (1, 2, 3, 4, 5, 10, 25, 50, 100, 200, "all")
OPENING = time(9, 31)


@dataclass(frozen=True)
class SubsetSpec:
    strategy: str = PER_MINUTE
    n: int = 52

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")


def _respace(sel: TermSelection, kept: Sequence[StripEntry], recompute: bool) -> TermSelection:
    kept = sorted(kept, key=lambda e: e.strike)
    if recompute and len(kept) >= 2:
        kept = with_spacing([(e.strike, e.mid, e.right) for e in kept])
    return sel.with_strip(kept)


def _by_distance(sel: TermSelection) -> list[StripEntry]:
    return sorted(sel.strip, key=lambda e: (abs(e.strike - sel.k0), e.strike))


def nearest_k0(sel: TermSelection, n: int | None, recompute_spacing: bool = True) -> TermSelection:
    """Keep the ``n`` strip entries closest to ``K0`` (ties go to the lower strike).

    ``n=None`` keeps the whole strip. A single survivor keeps its original
    ``delta_k`` since spacing is undefined for one strike.
    """
    if n is None or n >= len(sel.strip):
        return sel
    if n < 1:
        raise ValueError("n must be >= 1")
    return _respace(sel, _by_distance(sel)[:n], recompute_spacing)


def _reprice(chain: OptionChain, template: TermSelection, full: TermSelection,
             recompute_spacing: bool) -> TermSelection:
    """Price the opening strikes of ``template`` on their out-of-the-money side.

    Sides follow the current minute's ``K0``: puts below, calls above, the
    call/put average at ``K0``. Missing or zero-bid wing quotes are skipped.
    """
    quotes = {(q.right, q.strike): q for q in chain.terms[template.expiration]}
    entries = []
    for k in template.strikes:
        if k == full.k0:
            mids = [mid_price(quotes[(r, k)]) for r in (CALL, PUT) if (r, k) in quotes]
            if mids:
                entries.append((k, sum(mids) / len(mids), ATM))
            continue
        right = PUT if k < full.k0 else CALL
        q = quotes.get((right, k))
        if q is not None and q.bid > 0:
            entries.append((k, mid_price(q), right))
    if not entries:
        raise EngineError(f"no fixed strike quoted at {chain.quote_time.isoformat()}")
    width = {e.strike: e.delta_k for e in template.strip}
    if recompute_spacing and len(entries) >= 2:
        return full.with_strip(with_spacing(entries))
    # a lone survivor keeps its opening spacing
    return full.with_strip([StripEntry(k, width[k], m, r) for k, m, r in entries])


def day_start_subset(day_chains: Sequence[OptionChain], n: int | None, rate: float,
                     zone: str = DEFAULT_ZONE, opening: time | None = OPENING,
                     recompute_spacing: bool = True,
                     full: Sequence[tuple[TermSelection, TermSelection]] | None = None,
                     ) -> list[tuple[TermSelection, TermSelection]]:
    """Fix each term's strikes at the opening minute and reprice them all day.

    Returns one ``(near, next)`` pair per chain. Forward and ``K0`` are
    recomputed each minute from that minute's full chain; strikes missing
    from a minute are skipped.
    """
    if not day_chains:
        raise EngineError("no chains for the day")
    chains = sorted(day_chains, key=lambda c: c.quote_time)
    first = chains[0]
    if opening is not None and _local(first.quote_time, zone).time() != opening:
        raise EngineError(f"opening minute {opening} missing; first chain at "
                          f"{_local(first.quote_time, zone).time()}")
    if full is None:
        full = [select_terms(first, rate, zone)]
        full += [tuple(build_term(c, sel.expiration, rate, sel.term, zone) for sel in full[0])
                 for c in chains[1:]]
    fixed = [nearest_k0(sel, n, recompute_spacing) for sel in full[0]]
    out = [tuple(fixed)]
    for chain, terms in zip(chains[1:], full[1:]):
        for sel, cur in zip(fixed, terms):
            if cur.expiration != sel.expiration:
                raise EngineError(f"term roll within the day at {chain.quote_time.isoformat()}")
        out.append(tuple(_reprice(chain, sel, cur, recompute_spacing)
                         for sel, cur in zip(fixed, terms)))
    return out


def _lattice_order(sel: TermSelection) -> list[int]:
    """Strip indices on the stride-3 lattice through ``K0``, nearest first."""
    strikes = sel.strikes
    i0 = strikes.index(sel.k0)
    order = [i0]
    step = 3
    while i0 - step >= 0 or i0 + step < len(strikes):
        if i0 - step >= 0:
            order.append(i0 - step)
        if i0 + step < len(strikes):
            order.append(i0 + step)
        step += 3
    return order


def _nearest_order(sel: TermSelection) -> list[int]:
    strikes = sel.strikes
    return sorted(range(len(strikes)), key=lambda i: (abs(strikes[i] - sel.k0), strikes[i]))


def _take_pair(near: TermSelection, next_: TermSelection, total: int, order_fn,
               recompute_spacing: bool) -> tuple[TermSelection, TermSelection]:
    if total < 2 or total % 2:
        raise ValueError("total must be a positive even number")
    orders = [order_fn(near), order_fn(next_)]
    if len(orders[0]) + len(orders[1]) < total:
        raise EngineError(f"insufficient options: {len(orders[0]) + len(orders[1])} "
                          f"available, {total} required")
    half = total // 2
    counts = [min(half, len(orders[0])), min(half, len(orders[1]))]
    # an exhausted term hands its remaining quota to the other term
    short = total - sum(counts)
    for t in (0, 1):
        extra = min(short, len(orders[t]) - counts[t])
        counts[t] += extra
        short -= extra
    out = []
    for sel, order, c in zip((near, next_), orders, counts):
        out.append(_respace(sel, [sel.strip[i] for i in order[:c]], recompute_spacing))
    return out[0], out[1]


def every_third(near: TermSelection, next_: TermSelection, total: int = 52,
                recompute_spacing: bool = True) -> tuple[TermSelection, TermSelection]:
    """Every third strip entry by strike, anchored at ``K0`` and growing outward.

    ``total`` is split evenly between the terms; a term that runs out of
    lattice points passes its remaining quota to the other.
    """
    return _take_pair(near, next_, total, _lattice_order, recompute_spacing)


def in_order(near: TermSelection, next_: TermSelection, total: int = 52,
             recompute_spacing: bool = True) -> tuple[TermSelection, TermSelection]:
    """The ``total`` consecutive strip entries nearest ``K0``, split across terms."""
    return _take_pair(near, next_, total, _nearest_order, recompute_spacing)


def scale_to_reference(series, reference, window: int | None = None) -> tuple[np.ndarray, float]:
    """Scale ``series`` so its mean matches ``reference``.

    With ``window`` the factor is fit on the leading ``window`` points only.
    """
    s = np.asarray(series, dtype=float)
    r = np.asarray(reference, dtype=float)
    if s.shape != r.shape or s.size < 1:
        raise ValueError("series and reference need equal nonzero length")
    fit = slice(None) if window is None else slice(0, window)
    m = s[fit].mean()
    if not m > 0:
        raise ValueError("series mean must be positive")
    factor = float(r[fit].mean() / m)
    return s * factor, factor


@dataclass(frozen=True)
class SubsetRow:
    n: int | str
    strategy: str
    mse_before_scaling: float
    mse_after_scaling: float
    correlation: float
    factor: float
    values: tuple[float, ...] = ()

    CSV_HEADER = ("n", "strategy", "mse_before_scaling", "mse_after_scaling", "correlation",
                  "factor")

    def csv_row(self) -> list:
        return [self.n, self.strategy, repr(self.mse_before_scaling),
                repr(self.mse_after_scaling), repr(self.correlation), repr(self.factor)]


def write_rows(rows: Iterable[SubsetRow], sink: IO[str]) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(SubsetRow.CSV_HEADER)
    for row in rows:
        w.writerow(row.csv_row())


def _group_days(chains: Sequence[OptionChain], zone: str) -> list[list[OptionChain]]:
    days: dict = {}
    for c in sorted(chains, key=lambda c: c.quote_time):
        days.setdefault(_local(c.quote_time, zone).date(), []).append(c)
    return list(days.values())


def subset_series(chains: Sequence[OptionChain], n: int | str | None, strategy: str,
                  rate: float, zone: str = DEFAULT_ZONE, recompute_spacing: bool = True,
                  full: Sequence[tuple[TermSelection, TermSelection]] | None = None,
                  opening: time | None = OPENING) -> list[IndexComputation]:
    """Index computations for one strategy and subset size over ``chains``."""
    n = None if n in (None, "all") else int(n)
    chains = sorted(chains, key=lambda c: c.quote_time)
    if full is None:
        full = [select_terms(c, rate, zone) for c in chains]
    if strategy == DAY_START:
        pairs = []
        lookup = {c.quote_time: f for c, f in zip(chains, full)}
        for day in _group_days(chains, zone):
            pairs += day_start_subset(day, n, rate, zone, opening, recompute_spacing,
                                      [lookup[c.quote_time] for c in day])
    else:
        if strategy == PER_MINUTE:
            pairs = [(nearest_k0(a, n, recompute_spacing), nearest_k0(b, n, recompute_spacing))
                     for a, b in full]
        elif strategy == EVERY_THIRD:
            pairs = [every_third(a, b, n, recompute_spacing) if n is not None else (a, b)
                     for a, b in full]
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
    return [index_from_selections(c.quote_time, a, b) for c, (a, b) in zip(chains, pairs)]


def subset_experiment(chains: Sequence[OptionChain], n_grid: Sequence = DEFAULT_GRID,
                      strategy: str = PER_MINUTE, reference: ReferenceSeries | None = None,
                      rate: float = 0.013, zone: str = DEFAULT_ZONE, *,
                      tolerance: float = 60.0, recompute_spacing: bool = True,
                      scale_window: int | None = None,
                      opening: time | None = OPENING) -> list[SubsetRow]:
    """MSE and correlation against ``reference`` for each subset size.

    Without ``reference`` the full-strip replication is the reference.
    """
    if not chains:
        raise EngineError("no chains")
    chains = sorted(chains, key=lambda c: c.quote_time)
    full = [select_terms(c, rate, zone) for c in chains]
    if reference is None:
        ref_vals = [index_from_selections(c.quote_time, a, b).value
                    for c, (a, b) in zip(chains, full)]
        reference = ReferenceSeries(tuple(c.quote_time for c in chains), tuple(ref_vals))
    rows = []
    for n in n_grid:
        comps = subset_series(chains, n, strategy, rate, zone, recompute_spacing, full, opening)
        est = ReferenceSeries(tuple(c.quote_time for c in comps), tuple(c.value for c in comps))
        pairs = align_series(est, reference, tolerance)
        a = np.array([p[0] for p in pairs])
        b = np.array([p[1] for p in pairs])
        scaled, factor = scale_to_reference(a, b, scale_window)
        try:
            corr = metrics.pearson(scaled, b)
        except ValueError:
            corr = float("nan")
        rows.append(SubsetRow("all" if n in (None, "all") else int(n), strategy,
                              metrics.mse(a, b), metrics.mse(scaled, b), corr, factor,
                              tuple(a)))
    return rows
