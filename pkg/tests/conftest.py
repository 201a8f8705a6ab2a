from __future__ import annotations

from datetime import datetime, timedelta
from zoneinfo import ZoneInfo

import pytest

from vixrep.ingest import CALL, PUT, OptionChain, OptionQuote
from vixrep.synth import ChainSpec, generate_chain

ET = ZoneInfo("America/New_York")
OPEN = datetime(2018, 1, 10, 9, 31, tzinfo=ET)


def et(*args) -> datetime:
    return datetime(*args, tzinfo=ET)


def quote(strike, right, bid, ask, t=OPEN, exp=None):
    exp = exp or OPEN + timedelta(days=30)
    return OptionQuote(t, exp, right, float(strike), float(bid), float(ask))


def hand_chain(rows, t=OPEN, exp=None):
    """Chain from ``(strike, call_bid, call_ask, put_bid, put_ask)`` rows, one term."""
    exp = exp or t + timedelta(days=30)
    qs = []
    for k, cb, ca, pb, pa in rows:
        qs.append(quote(k, CALL, cb, ca, t, exp))
        qs.append(quote(k, PUT, pb, pa, t, exp))
    return OptionChain(t, {exp: qs})


def flat_spec(sigma=0.2, **kw) -> ChainSpec:
    base = dict(spot=100.0, rate=0.013, vol=sigma, strike_grid=(50.0, 200.0, 0.5),
                expirations=(24 / 365, 36 / 365))
    base.update(kw)
    return ChainSpec(**base)


@pytest.fixture(scope="session")
def flat_chain():
    return generate_chain(flat_spec(), OPEN)
