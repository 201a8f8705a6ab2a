"""Acceptance criteria, one test per criterion; each prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math
import shutil
import time
from datetime import timedelta
from pathlib import Path

import numpy as np
import pytest

from vixrep import cli, learn, metrics
from vixrep.engine import compute_index, index_from_terms, select_strips
from vixrep.ingest import CALL, PUT
from vixrep.learn import NetworkSpec, TrainConfig, build_features, make_windows
from vixrep.subset import DAY_START, DEFAULT_GRID, PER_MINUTE, subset_experiment
from vixrep.synth import (ChainSpec, generate_chain, generate_day, oracle_variance,
                          simulate_paths, synthetic_days)

from conftest import OPEN, hand_chain
from test_learn import _gradcheck

ROOT = Path(__file__).resolve().parents[1]


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nacceptance {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# 1 -------------------------------------------------------------------------


def test_01_oracle_equivalence(capsys):
    start = time.perf_counter()
    worst_var, worst_idx = 0.0, 0.0
    for sigma in (0.1, 0.2, 0.4):
        spec = ChainSpec(spot=100.0, rate=0.013, vol=sigma, strike_grid=(50.0, 200.0, 0.5),
                         expirations=(24 / 365, 36 / 365))
        comp = compute_index(generate_chain(spec, OPEN), rate=0.013)
        for sel, var in ((comp.near, comp.sigma1_sq), (comp.next, comp.sigma2_sq)):
            oracle = oracle_variance(spec.vol_fn(sel.T), spec.forward(sel.T), 0.013, sel.T)
            worst_var = max(worst_var, abs(var - oracle))
        worst_idx = max(worst_idx, abs(comp.value - 100 * sigma))
    elapsed = time.perf_counter() - start
    ok = worst_var <= 5e-4 and worst_idx <= 0.05 and elapsed < 10
    report(capsys, 1, ok, f"max |var - oracle| = {worst_var:.2e} (tol 5e-4), "
                          f"max |index - 100 sigma| = {worst_idx:.4f} (tol 0.05), {elapsed:.2f} s")


# 2 -------------------------------------------------------------------------


def test_02_interpolation_identity(capsys):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        n1 = int(rng.integers(1, 43200))
        n2 = int(rng.integers(43201, 150000))
        v = float(rng.uniform(1e-4, 1.0))
        worst = max(worst, abs(index_from_terms(v, v, n1, n2) - 100 * math.sqrt(v)))
    report(capsys, 2, worst <= 1e-10, f"max deviation {worst:.2e} over 1000 pairs (tol 1e-10)")


# 3 -------------------------------------------------------------------------


def test_03_strip_rules(capsys):
    stop = hand_chain([(80, 20, 21, 5.0, 5.2), (85, 15, 16, 0, 0.1), (90, 10, 11, 0, 0.1),
                       (95, 5, 6, 1.0, 1.2), (100, 2, 2.2, 2, 2.2), (105, 0.5, 0.6, 6, 7)])
    isolated = hand_chain([(85, 15, 16, 0.5, 0.6), (90, 10, 11, 0, 0.1), (95, 5, 6, 1.0, 1.2),
                           (100, 2, 2.2, 2, 2.2), (105, 0.5, 0.6, 6, 7), (110, 0, 0.05, 11, 12),
                           (115, 0.1, 0.2, 16, 17), (120, 0, 0.05, 21, 22),
                           (125, 0, 0.05, 26, 27), (130, 0.1, 0.2, 31, 32)])
    got_stop = [(e.strike, e.right) for e in select_strips(stop.quotes(), 100)]
    got_iso = [(e.strike, e.right, e.delta_k) for e in select_strips(isolated.quotes(), 100)]
    want_stop = [(95, PUT), (100, "PC"), (105, CALL)]
    want_iso = [(85, PUT, 10), (95, PUT, 7.5), (100, "PC", 5), (105, CALL, 7.5), (115, CALL, 10)]
    ok = got_stop == want_stop and got_iso == want_iso
    report(capsys, 3, ok, "two-consecutive stop and isolated-zero continue selections exact")


# 4 -------------------------------------------------------------------------

SELLOFF_SEEDS = (0, 1, 2)


def selloff_day(seed: int):
    """390-minute day: spot falls 4% with random-walk noise; ATM vol rises as spot falls."""
    wiggle, _ = simulate_paths(390, 1.0, 0.2, spot_vol=0.15, seed=100 + seed)
    spots = 100 * np.exp(np.linspace(0, -0.04, 390)) * wiggle
    vols = 0.15 * (spots / 100) ** -18
    spec = ChainSpec(spot=100.0, rate=0.013, vol=0.15, skew=-0.2,
                     strike_grid=(50.0, 200.0, 0.5), expirations=(24 / 365, 36 / 365))
    return generate_day(spec, OPEN, spots, vols)


@pytest.fixture(scope="module")
def selloff_rows():
    out = {}
    for seed in SELLOFF_SEEDS:
        chains = selloff_day(seed)
        out[seed] = {s: subset_experiment(chains, DEFAULT_GRID, s) for s in (PER_MINUTE, DAY_START)}
    return out


def test_04a_subset_mse_nonincreasing(capsys, selloff_rows):
    breaks = []
    for seed, by in selloff_rows.items():
        for strategy, rows in by.items():
            mse = [r.mse_after_scaling for r in rows]
            for i in range(len(mse) - 1):
                if mse[i + 1] > mse[i]:
                    breaks.append(f"seed {seed} {strategy} n={rows[i].n}->{rows[i + 1].n} "
                                  f"({mse[i]:.4g} -> {mse[i + 1]:.4g})")
    report(capsys, "4a", not breaks,
           "MSE nonincreasing in n for both strategies" if not breaks
           else "increases: " + "; ".join(breaks))


def test_04b_per_minute_dominates_day_start(capsys, selloff_rows):
    # equal strips produce bit-different sums only through rounding
    slack = 1e-12
    breaks = []
    for seed, by in selloff_rows.items():
        for pm, ds in zip(by[PER_MINUTE], by[DAY_START]):
            if pm.mse_after_scaling > ds.mse_after_scaling + slack:
                breaks.append(f"seed {seed} n={pm.n}")
    report(capsys, "4b", not breaks,
           "per-minute MSE <= day-start MSE at every n" if not breaks
           else "violations: " + ", ".join(breaks))


def test_04c_correlation_invariant_under_scaling(capsys, selloff_rows):
    worst = 0.0
    for seed, by in selloff_rows.items():
        ref = np.array(by[PER_MINUTE][-1].values)
        for rows in by.values():
            for r in rows:
                raw = np.array(r.values)
                if np.std(raw) == 0:
                    continue
                worst = max(worst, abs(metrics.pearson(raw, ref) - r.correlation))
    report(capsys, "4c", worst <= 1e-12, f"max correlation change {worst:.1e} (tol 1e-12)")


# 5 -------------------------------------------------------------------------


def test_05_put_call_asymmetry(capsys):
    spec = ChainSpec(spot=100.0, rate=0.013, vol=0.18, skew=-0.3,
                     strike_grid=(50.0, 150.0, 0.5), expirations=(24 / 365, 36 / 365),
                     zero_bid_tail=40, zero_bid_wings=("call",))
    chains = synthetic_days(spec, OPEN, days=1, minutes=390, spot_vol=0.2, seed=5)
    worst = None
    for chain in chains:
        comp = compute_index(chain)
        for sel in (comp.near, comp.next):
            margin = sel.put_count - sel.call_count
            worst = margin if worst is None else min(worst, margin)
    report(capsys, 5, worst > 0, f"min (puts - calls) over 390 minutes and both terms = {worst}")


# 6 -------------------------------------------------------------------------


def test_06_parameter_counts(capsys):
    want = {"model1": 7617, "model2": 69761, "lstm_flat": 4213001, "lstm_multi": 5110501}
    got = {}
    for name in want:
        cfg = cli.resolve("train", json.loads((ROOT / "configs" / f"{name}.json").read_text()),
                          {}, [])
        got[name] = learn.build_network(cli.network_spec(cfg)).count_params()
    report(capsys, 6, got == want, ", ".join(f"{k} {v:,}" for k, v in got.items()))


# 7 -------------------------------------------------------------------------


def test_07_gradient_suite(capsys):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n_in, h = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        dense = learn.Sequential([learn.Dense(n_in, h, "relu", rng),
                                  learn.Dense(h, h, "relu", rng), learn.Dense(h, 1, "linear", rng)])
        # nonzero biases keep ReLU pre-activations off the kink at exactly 0
        for layer in dense.layers:
            layer.params["b"] += rng.normal(scale=0.1, size=layer.params["b"].shape)
        worst = max(worst, _gradcheck(dense, rng.normal(size=(4, n_in)), seed))
        u = int(rng.integers(2, 4))
        rec = learn.Sequential([learn.LSTM(n_in, u, return_sequences=True, rng=rng),
                                learn.LSTM(u, u, rng=rng), learn.Dense(u, 1, "linear", rng)])
        for layer in rec.layers:
            for v in layer.params.values():
                v += rng.normal(scale=0.1, size=v.shape)
        worst = max(worst, _gradcheck(rec, rng.normal(size=(2, 4, n_in)), seed))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 30
    report(capsys, 7, ok, f"max relative error {worst:.1e} over 40 nets (tol 1e-4), {elapsed:.1f} s")


# 8, 9, 10 --------------------------------------------------------------------


@pytest.fixture(scope="module")
def learn_data():
    start = time.perf_counter()
    spec = ChainSpec(spot=100.0, rate=0.013, vol=0.2, skew=-0.3, strike_grid=(60.0, 160.0, 0.5),
                     expirations=(24 / 365, 36 / 365))
    chains = synthetic_days(spec, OPEN, days=3, minutes=390, spot_vol=0.25, vol_of_vol=6.0,
                            seed=3)
    ds = build_features(chains, 52, ordering="every_third")
    train, test = learn.split_random(ds, 0.7, seed=0)
    return ds, train, test, time.perf_counter() - start


@pytest.fixture(scope="module")
def learned(learn_data):
    ds, train, test, prep = learn_data
    start = time.perf_counter()
    dense = learn.dense_train(learn.model1_spec(52, seed=0),
                              TrainConfig(lr=1e-3, epochs=300, patience=30, seed=0), train)
    X, y, _ = make_windows(ds, 10)
    order = np.random.default_rng(0).permutation(len(y))
    n_tr = int(round(0.7 * len(y)))
    tr, te = np.sort(order[:n_tr]), np.sort(order[n_tr:])
    lstm = learn.lstm_train(NetworkSpec("lstm_multi", 52, units=(32, 16), dropout=0.3,
                                        sequence_length=10, seed=0),
                            TrainConfig(lr=3e-3, epochs=100, patience=15, seed=0), (X[tr], y[tr]))
    elapsed = prep + time.perf_counter() - start
    return {"dense": dense.evaluate(test.X, test.y).mse,
            "lstm": lstm.evaluate(X[te], y[te]).mse,
            "lstm_var": float(np.var(y[te])),
            "var": float(np.var(test.y)),
            "epochs": len(dense.history), "seconds": elapsed}


def test_08_learnability(capsys, learned):
    r = learned
    ok = (r["dense"] < 0.1 * r["var"] and r["lstm"] < 0.1 * r["lstm_var"]
          and r["epochs"] <= 300 and r["seconds"] < 300)
    report(capsys, 8, ok, f"dense test MSE {r['dense']:.4f}, LSTM test MSE {r['lstm']:.4f}, "
                          f"10% of target variance {0.1 * r['var']:.4f}, {r['seconds']:.0f} s")


def test_09_baseline_ordering(capsys, learn_data, learned):
    _, train, test, _ = learn_data
    forest = learn.train_forest(train, trees=10, max_leaf_nodes=8, seed=0).evaluate(test.X, test.y).mse
    tree = learn.train_tree(train, max_leaf_nodes=8).evaluate(test.X, test.y).mse
    dense = learned["dense"]
    report(capsys, 9, dense < forest < tree,
           f"dense {dense:.4f} < forest {forest:.4f} < tree {tree:.4f}")


def test_10_returns_regression(capsys, learn_data):
    ds = learn_data[0]
    index = learn_data[0].y
    from vixrep.ingest import series_from_pairs
    series = series_from_pairs(ds.timestamps, index)
    futures = cli.synthetic_futures(series, 0.8, 0.0005, seed=10)
    fit = metrics.ols(metrics.returns(series.values), metrics.returns(futures.values))
    ok = 0.75 <= fit.slope <= 0.85 and fit.t_stat_slope_lt_1 < -2
    report(capsys, 10, ok, f"slope {fit.slope:.4f}, t(slope<1) {fit.t_stat_slope_lt_1:.1f}")


# 11 ------------------------------------------------------------------------


def _snapshot(d: Path) -> dict:
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_11_cli_determinism(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    steps = [
        ("s", ["synth", "--set", "minutes=30", "--set", "spec.noise=0.002",
               "--set", "spec.skew=-0.2", "--set", "reference=true",
               "--set", "futures_beta=0.8", "--set", "futures_noise=0.0005", "--seed", "9"]),
        ("r", ["replicate", "--input", "s/chains.csv", "--reference", "s/reference.csv"]),
        ("u", ["subset", "--input", "s/chains.csv", "--reference", "s/reference.csv"]),
        ("t", ["train", "--config", str(ROOT / "configs" / "dense_desk.json"),
               "--input", "s/chains.csv", "--set", "train.epochs=20"]),
        ("e", ["eval", "--config", "t/run.json", "--model", "t/model.json"]),
        ("g", ["regress", "--index", "s/reference.csv", "--futures", "s/futures.csv"]),
        ("m", ["metrics", "--a", "r/replication.csv", "--b", "s/reference.csv"]),
    ]
    for out, args in steps:
        assert cli.run(args + ["--out", out]) == 0, args
    first = {out: _snapshot(tmp_path / out) for out, _ in steps}
    differing = []
    for out, _ in steps:
        shutil.move(out, out + "_first")
        first_echo = tmp_path / (out + "_first") / "run.json"
        assert cli.run(["--config", str(first_echo)]) == 0
        if _snapshot(tmp_path / out) != first[out]:
            differing.append(out)
        shutil.rmtree(out)
        shutil.move(out + "_first", out)
    report(capsys, 11, not differing,
           "all 7 subcommands bit-identical on rerun from run.json" if not differing
           else f"differs: {differing}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
