"""Do futures returns move one-for-one with the index?

A futures series is built whose minute returns are 0.8 times the index
returns plus independent noise. Regressing futures returns on index returns
recovers the damping. The t statistic tests the slope against 1.
"""

from datetime import datetime
from zoneinfo import ZoneInfo

from vixrep import metrics
from vixrep.cli import synthetic_futures
from vixrep.ingest import series_from_pairs
from vixrep.synth import ChainSpec, oracle_index, synthetic_specs

start = datetime(2018, 1, 10, 9, 31, tzinfo=ZoneInfo("America/New_York"))
spec = ChainSpec(spot=100.0, rate=0.013, vol=0.2, expirations=(24 / 365, 36 / 365))
minutes = synthetic_specs(spec, start, days=1, minutes=390, vol_of_vol=4.0, seed=2)
index = series_from_pairs([t for t, _ in minutes], [oracle_index(s) for _, s in minutes])

for beta in (1.0, 0.8):
    futures = synthetic_futures(index, beta, noise=0.0005, seed=1)
    fit = metrics.ols(metrics.returns(index.values), metrics.returns(futures.values))
    print(f"true beta {beta}: slope {fit.slope:.3f} (se {fit.slope_se:.3f}), "
          f"intercept {fit.intercept:.2e}, t(slope=1) {fit.t_stat_slope_lt_1:.2f}")
