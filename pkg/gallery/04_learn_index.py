"""Learning the index from 52 option prices.

Every minute contributes one row of 52 option mids. They are picked as every
third strike outward from K0, half from each term. The target is the
full-strip index. A small dense network, a bagged forest, a single tree and
a recurrent net over 10-minute windows are compared on a random 30% holdout.
"""

import time
from datetime import datetime
from zoneinfo import ZoneInfo

import numpy as np

from vixrep import learn
from vixrep.synth import ChainSpec, synthetic_days

start = datetime(2018, 1, 10, 9, 31, tzinfo=ZoneInfo("America/New_York"))
spec = ChainSpec(spot=100.0, rate=0.013, vol=0.2, skew=-0.3, strike_grid=(60.0, 160.0, 0.5),
                 expirations=(24 / 365, 36 / 365))
t0 = time.perf_counter()
chains = synthetic_days(spec, start, days=3, minutes=390, spot_vol=0.25, vol_of_vol=6.0, seed=3)
data = learn.build_features(chains, 52)
train, test = learn.split_random(data, 0.7, seed=0)
print(f"{len(data)} rows, {data.width} features, target variance {np.var(test.y):.3f} "
      f"({time.perf_counter() - t0:.0f} s to build)")

dense = learn.dense_train(learn.model1_spec(52), learn.TrainConfig(epochs=300, patience=30), train)
forest = learn.train_forest(train, trees=10, max_leaf_nodes=8)
tree = learn.train_tree(train, max_leaf_nodes=8)
for name, model in (("dense 52-64-64-1", dense), ("forest", forest), ("tree", tree)):
    print(f"{name:>18}: test MSE {model.evaluate(test.X, test.y).mse:.4f}")
print(f"dense stopped after {len(dense.history)} epochs, {dense.count_params():,} parameters")

X, y, _ = learn.make_windows(data, 10)
order = np.random.default_rng(0).permutation(len(y))
cut = int(0.7 * len(y))
tr, te = order[:cut], order[cut:]
lstm = learn.lstm_train(learn.NetworkSpec("lstm_flat", 52, units=(32,), sequence_length=10),
                        learn.TrainConfig(lr=3e-3, epochs=100, patience=15), (X[tr], y[tr]))
print(f"{'lstm(32)':>18}: test MSE {lstm.evaluate(X[te], y[te]).mse:.4f}")
