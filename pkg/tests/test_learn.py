import io
import math
import warnings
from datetime import timedelta

import numpy as np
import pytest

from vixrep import learn, metrics
from vixrep.engine import select_terms
from vixrep.ingest import DataError, series_from_pairs
from vixrep.learn import (LSTM, AdamState, Dataset, Dense, Dropout, Model, NetworkSpec,
                          RandomForest, Sequential, TrainConfig, TrainingError, adam_step,
                          build_features, build_network, dense_param_count, dense_train, fit,
                          forest_fit, kfold, lstm_param_count, lstm_train, make_windows,
                          minmax_apply, minmax_fit, split_random, tree_fit)
from vixrep.learn.nets import mse_loss
from vixrep.synth import generate_day, synthetic_days

from conftest import OPEN, flat_spec

EPS = 1e-5


def _rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if denom == 0 else np.linalg.norm(a - b) / denom


def _gradcheck(net: Sequential, x: np.ndarray, seed: int) -> float:
    """Worst relative error of d(sum(w * net(x)))/d(params, x) vs central differences."""
    rng = np.random.default_rng(seed + 1000)
    w = rng.normal(size=net.forward(x).shape)

    def loss():
        return float(np.sum(w * net.forward(x)))

    net.forward(x)
    dx = net.backward(w)
    analytic = {k: g.copy() for k, g in net.named_grads().items()}
    worst = 0.0
    for name, p in net.named_params().items():
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + EPS
            hi = loss()
            p[idx] = old - EPS
            lo = loss()
            p[idx] = old
            num[idx] = (hi - lo) / (2 * EPS)
        worst = max(worst, _rel_err(analytic[name], num))
    num_x = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + EPS
        hi = loss()
        x[idx] = old - EPS
        lo = loss()
        x[idx] = old
        num_x[idx] = (hi - lo) / (2 * EPS)
    return max(worst, _rel_err(dx, num_x))


@pytest.mark.parametrize("seed", range(20))
def test_dense_gradients(seed):
    rng = np.random.default_rng(seed)
    n_in, h1, h2 = rng.integers(2, 6, size=3)
    net = Sequential([Dense(n_in, h1, "relu", rng), Dense(h1, h2, "relu", rng),
                      Dense(h2, 1, "linear", rng)])
    for layer in net.layers:
        layer.params["b"][...] = rng.normal(scale=0.1, size=layer.params["b"].shape)
    assert net.count_params() <= 200
    assert _gradcheck(net, rng.normal(size=(4, n_in)), seed) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_lstm_gradients(seed):
    rng = np.random.default_rng(seed)
    n_in, units = int(rng.integers(2, 4)), int(rng.integers(2, 4))
    layers = [LSTM(n_in, units, return_sequences=seed % 2 == 0, rng=rng)]
    if seed % 2 == 0:
        layers.append(LSTM(units, 2, rng=rng))
        units = 2
    layers.append(Dense(units, 1, "linear", rng))
    net = Sequential(layers)
    for layer in net.layers:
        for v in layer.params.values():
            v += rng.normal(scale=0.1, size=v.shape)
    assert net.count_params() <= 200
    assert _gradcheck(net, rng.normal(size=(2, 4, n_in)), seed) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_scaled_mse_loss_gradient(seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(20, 2, 8)
    ys = minmax_fit(y)
    target = minmax_apply(ys, y)
    pred = rng.normal(0.5, 0.3, (8, 1))
    _, grad = mse_loss(pred, target)
    num = np.zeros_like(pred)
    for i in range(8):
        p = pred.copy()
        p[i] += EPS
        hi, _ = mse_loss(p, target)
        p[i] -= 2 * EPS
        lo, _ = mse_loss(p, target)
        num[i] = (hi - lo) / (2 * EPS)
    assert _rel_err(grad, num) < 1e-4


def test_dropout_backward_uses_forward_mask():
    d = Dropout(0.5, np.random.default_rng(0))
    x = np.ones((3, 4))
    out = d.forward(x, training=True)
    assert np.array_equal(d.backward(np.ones_like(x)), out)
    assert np.array_equal(d.forward(x), x)


def test_parameter_counts():
    assert build_network(learn.model1_spec()).count_params() == 7617
    assert build_network(learn.model2_spec()).count_params() == 69761
    assert lstm_param_count(52, 1000) + dense_param_count(1000, 1) == 4213001
    assert (lstm_param_count(52, 500) + 2 * lstm_param_count(500, 500)
            + dense_param_count(500, 1)) == 5110501
    small = NetworkSpec("lstm_multi", 52, units=(8, 8, 8), dropout=0.3)
    assert build_network(small).count_params() == (
        lstm_param_count(52, 8) + 2 * lstm_param_count(8, 8) + dense_param_count(8, 1))


def test_lstm_zero_weights_give_zero_output():
    cell = LSTM(3, 4, return_sequences=True)
    for v in cell.params.values():
        v[...] = 0
    out = cell.forward(np.random.default_rng(0).normal(size=(2, 5, 3)))
    assert np.all(out == 0)


def test_lstm_saturated_forget_gate_keeps_cell_state():
    u = 1
    cell = LSTM(1, u, return_sequences=True)
    W, U, b = cell.params["W"], cell.params["U"], cell.params["b"]
    W[...] = 0
    U[...] = 0
    W[0, 0] = 100.0        # input gate opens on x = 1
    W[0, 2] = 100.0        # candidate saturates at +1 on x = 1
    b[:] = [-50.0, 50.0, 0.0, 50.0]
    out = cell.forward(np.array([[[1.0], [0.0], [0.0]]]))
    np.testing.assert_allclose(out[0, :, 0], math.tanh(1.0), rtol=1e-12)


def test_adam():
    p = {"w": np.array([1.0, -2.0])}
    state = AdamState()
    adam_step(p, {"w": np.zeros(2)}, state, 0.1)
    assert np.array_equal(p["w"], [1.0, -2.0])
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.array([3.0, -0.5])}, AdamState(), 0.01)
    np.testing.assert_allclose(p["w"], [1.0 - 0.01, -2.0 + 0.01], atol=1e-8)
    # two steps on a scalar, traced by hand
    p = {"w": np.array([0.0])}
    state = AdamState()
    adam_step(p, {"w": np.array([1.0])}, state, 0.1)
    adam_step(p, {"w": np.array([-1.0])}, state, 0.1)
    m2 = 0.9 * 0.1 - 0.1            # 0.9*m1 + 0.1*g2 with m1 = 0.1
    v2 = 0.999 * 0.001 + 0.001      # 0.999*v1 + 0.001*g2^2 with v1 = 0.001
    step2 = 0.1 * (m2 / (1 - 0.81)) / (math.sqrt(v2 / (1 - 0.998001)) + 1e-8)
    step1 = 0.1 * 1.0 / (1.0 + 1e-8)
    assert p["w"][0] == pytest.approx(-step1 - step2, abs=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(patience=-1)
    with pytest.raises(ValueError):
        NetworkSpec("dense", 5, widths=())
    with pytest.raises(ValueError):
        NetworkSpec("lstm_multi", 5, units=(4,), dropout=1.0)
    with pytest.raises(ValueError):
        NetworkSpec("lstm_flat", 5, units=(4,), sequence_length=0)


def _linear_data(n=300, width=5, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n, width))
    return Dataset(X, X.sum(axis=1))


def test_dense_learns_linear_target():
    ds = _linear_data()
    spec = NetworkSpec("dense", 5, (16, 16), seed=0)
    model = dense_train(spec, TrainConfig(epochs=300, patience=None, validation_fraction=0.0),
                        ds)
    assert model.evaluate(ds.X, ds.y).mse < 1e-3
    assert len(model.history) == 300


def test_early_stopping_bound_and_restore():
    ds = _linear_data(120)
    tr, va = split_random(ds, 0.7, 1)
    net = build_network(NetworkSpec("dense", 5, (8,), seed=2))
    cfg = TrainConfig(lr=0.05, epochs=500, patience=3, seed=0)
    hist = fit(net, tr.X, tr.y, cfg, va.X, va.y)
    vals = [h[2] for h in hist]
    best_epoch = int(np.argmin(vals)) + 1
    assert len(hist) <= best_epoch + cfg.patience + 1
    assert mse_loss(net.forward(va.X), va.y)[0] == pytest.approx(min(vals), rel=1e-12)
    net2 = build_network(NetworkSpec("dense", 5, (8,), seed=2))
    steps = TrainConfig(lr=0.05, epochs=500, patience=3 * math.ceil(len(tr) / 32),
                        patience_unit="step", seed=0)
    assert fit(net2, tr.X, tr.y, steps, va.X, va.y) == hist


def test_non_finite_loss_aborts():
    net = build_network(NetworkSpec("dense", 2, (4,), seed=0))
    X = np.full((8, 2), 1e300)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(TrainingError, match="epoch 1"):
            fit(net, X, np.zeros(8), TrainConfig(epochs=3))


def test_training_is_deterministic():
    ds = _linear_data(80)
    spec = NetworkSpec("dense", 5, (8,), seed=4)
    cfg = TrainConfig(epochs=20, seed=4)
    a, b = dense_train(spec, cfg, ds), dense_train(spec, cfg, ds)
    assert a.history == b.history
    assert np.array_equal(a.predict(ds.X), b.predict(ds.X))


def test_minmax():
    s = minmax_fit(np.array([[2.0, 5.0], [4.0, 5.0]]))
    np.testing.assert_array_equal(minmax_apply(s, [[2.0, 5.0], [4.0, 5.0]]), [[0, 0], [1, 0]])
    assert minmax_apply(s, [[6.0, 5.0]])[0, 0] == 2.0
    np.testing.assert_allclose(s.invert(minmax_apply(s, [[3.0, 5.0]])), [[3.0, 5.0]])


def test_split_and_kfold():
    ds = _linear_data(100)
    tr, te = split_random(ds, 0.7, 3)
    assert (len(tr), len(te)) == (70, 30)
    tr2, _ = split_random(ds, 0.7, 3)
    assert np.array_equal(tr.X, tr2.X)
    assert len(split_random(ds, 1.0, 0)[1]) == 0
    folds = kfold(_linear_data(10), 5, 0)
    assert [len(v) for _, v in folds] == [2] * 5
    seen = np.concatenate([v.y for _, v in folds])
    assert sorted(seen) == sorted(_linear_data(10).y)
    sizes = [len(v) for _, v in kfold(_linear_data(13), 5, 0)]
    assert max(sizes) - min(sizes) <= 1
    with pytest.raises(ValueError):
        kfold(_linear_data(4), 5)


def test_tree_cases():
    X = np.random.default_rng(0).normal(size=(20, 3))
    const = tree_fit(X, np.full(20, 3.5))
    assert const.n_leaves == 1 and np.all(const.predict(X) == 3.5)
    x = np.linspace(0, 1, 40)[:, None]
    y = np.where(x[:, 0] < 0.5, 1.0, 4.0)
    step = tree_fit(x, y)
    assert step.n_leaves == 2 and np.array_equal(step.predict(x), y)
    assert tree_fit(X, X[:, 0] ** 2, 8).n_leaves == 8
    with pytest.raises(ValueError):
        tree_fit(np.zeros((0, 2)), np.zeros(0))


def test_forest_cases():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 4))
    y = X[:, 0] - 2 * X[:, 1]
    single = forest_fit(X, y, trees=1, bootstrap=False)
    assert np.array_equal(single.predict(X), tree_fit(X, y).predict(X))
    forest = forest_fit(X, y, trees=10, seed=2)
    assert np.array_equal(forest.predict(X), np.mean([t.predict(X) for t in forest.trees], axis=0))


@pytest.fixture(scope="module")
def small_day():
    spec = flat_spec(skew=-0.2, strike_grid=(60.0, 160.0, 0.5))
    return synthetic_days(spec, OPEN, days=2, minutes=25, spot_vol=0.3, vol_of_vol=4.0, seed=1)


def test_feature_widths_and_orderings(small_day):
    a = build_features(small_day, 52)
    b = build_features(small_day, 52, ordering="in_order")
    g = build_features(small_day, 52, include_greeks=True)
    assert (a.width, b.width, g.width) == (52, 52, 156)
    assert len(a) == len(b) == len(g) == len(small_day)
    np.testing.assert_array_equal(g.X[:, ::3], a.X)
    assert not np.array_equal(a.X, b.X)
    with pytest.raises(ValueError):
        build_features(small_day, 52, ordering="random")


def test_feature_target_alignment(small_day):
    times = [c.quote_time + timedelta(seconds=17) for c in small_day[:10]]
    target = series_from_pairs(times, np.arange(1.0, 11.0))
    ds = build_features(small_day, 52, target=target)
    assert len(ds) == 10 and list(ds.y) == list(np.arange(1.0, 11.0))


def test_short_strips_error(small_day):
    with pytest.raises(DataError, match="insufficient options"):
        build_features(small_day[:1], 2000)


def test_windows_stay_within_a_day(small_day):
    ds = build_features(small_day, 52)
    X, y, times = make_windows(ds, 10)
    assert X.shape == (2 * (25 - 9), 10, 52)
    for w, t in zip(X, times):
        assert t.date() in {c.quote_time.date() for c in small_day}
    assert y[0] == ds.y[9]
    with pytest.raises(DataError):
        make_windows(ds, 30)


@pytest.mark.parametrize("kind", ["dense", "lstm_multi", "tree", "forest"])
def test_serialization_round_trip(kind, small_day, tmp_path):
    ds = build_features(small_day, 52)
    if kind == "dense":
        model = dense_train(NetworkSpec("dense", 52, (8,)), TrainConfig(epochs=3), ds)
        X = ds.X
    elif kind == "lstm_multi":
        X, y, _ = make_windows(ds, 10)
        spec = NetworkSpec("lstm_multi", 52, units=(4, 3), dropout=0.3, sequence_length=10)
        model = lstm_train(spec, TrainConfig(epochs=2), (X, y))
    elif kind == "tree":
        model, X = learn.train_tree(ds), ds.X
    else:
        model, X = learn.train_forest(ds, trees=3), ds.X
    path = tmp_path / "model.json"
    model.save(path)
    back = Model.load(path)
    assert np.array_equal(back.predict(X), model.predict(X))
    assert np.array_equal(model.predict(X), model.predict(X))
    assert back.kind == kind and back.history == model.history
    buf = io.StringIO()
    model.write_history(buf)
    assert buf.getvalue().splitlines()[0] == "epoch,train_loss,val_loss"


def test_evaluate_matches_metrics(small_day):
    ds = build_features(small_day, 52)
    model = learn.train_forest(ds, trees=3)
    rep = learn.evaluate(model, ds.X, ds.y)
    assert rep.mse == metrics.mse(learn.predict(model, ds.X), ds.y)
    assert math.isfinite(rep.mse) and rep.mse >= 0
    with pytest.raises(ValueError):
        model.predict(ds.X[:, :10])


def test_rejects_bad_models(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        Model.load(path)
