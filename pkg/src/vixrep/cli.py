"""Command-line front end: ``vixrep <subcommand> [flags]``.

Each subcommand resolves its configuration from built-in defaults, an
optional JSON file (``--config``) and explicit flags, in increasing order of
precedence. The resolved configuration is written to ``<out>/run.json``;
passing that file back through ``--config`` reproduces the run exactly.

Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import engine, ingest, metrics, subset, synth
from . import learn

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

FUTURES_STREAM = 1

COMMON = {"seed": 0, "out": "out", "zone": ingest.DEFAULT_ZONE}

DEFAULTS: dict[str, dict[str, Any]] = {
    "synth": {
        "spec": synth.ChainSpec().to_dict(),
        "start": "2018-01-10T09:31:00",
        "days": 1,
        "minutes": 1,
        "spot_vol": 0.2,
        "drift": 0.0,
        "vol_of_vol": 1.0,
        "reference": False,
        "futures_beta": None,
        "futures_noise": 0.0,
    },
    "replicate": {"input": None, "reference": None, "mode": "intraday", "rate": None,
                  "tolerance": 60.0, "continue_on_error": False},
    "subset": {"input": None, "reference": None, "mode": "intraday", "rate": None,
               "strategies": [subset.PER_MINUTE, subset.DAY_START],
               "n_grid": list(subset.DEFAULT_GRID), "tolerance": 60.0,
               "recompute_spacing": True, "scale_window": None},
    "train": {"input": None, "target": "index", "reference": None, "futures": None,
              "mode": "intraday", "rate": None, "tolerance": 60.0,
              "features": {"total": 52, "include_greeks": False, "ordering": "every_third"},
              "network": {"kind": "dense", "n_in": 52, "widths": [64, 64]},
              "train": {}, "split": {"train_fraction": 0.7}, "dry_run": False},
    "eval": {"input": None, "target": "index", "reference": None, "futures": None,
             "mode": "intraday", "rate": None, "tolerance": 60.0,
             "features": {"total": 52, "include_greeks": False, "ordering": "every_third"},
             "split": {"train_fraction": 0.7}, "on": "test", "model_path": None},
    "regress": {"index": None, "futures": None, "tolerance": 60.0},
    "metrics": {"a": None, "b": None, "a_column": None, "b_column": None, "tolerance": 60.0},
}

PRESETS = {
    "model1": lambda: learn.model1_spec(),
    "model2": lambda: learn.model2_spec(),
    "lstm_flat": lambda: learn.lstm_flat_spec(),
    "lstm_multi": lambda: learn.lstm_multi_spec(),
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _set(cfg: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted}: {k} is not a section")
    node[keys[-1]] = value


def _parse_set(text: str) -> tuple[str, Any]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def resolve(command: str, file_cfg: dict | None, flags: dict[str, Any],
            sets: list[str]) -> dict:
    """Defaults, then file, then ``--set`` pairs, then named flags."""
    cfg = _merge(COMMON, DEFAULTS[command])
    if file_cfg:
        cfg = _merge(cfg, file_cfg)
    for item in sets:
        _set(cfg, *_parse_set(item))
    for k, v in flags.items():
        if v is not None:
            _set(cfg, k, v)
    return cfg


def _load_config(path: str) -> tuple[str | None, dict]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    if "command" in doc and "config" in doc:
        return doc["command"], doc["config"]
    return None, doc


def _require(cfg: dict, *keys: str) -> None:
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise ConfigError(f"missing required setting {k!r}")


def _rate(cfg: dict) -> float:
    if cfg.get("rate") is not None:
        return float(cfg["rate"])
    mode = cfg.get("mode", "intraday")
    if mode == "daily":
        return engine.DAILY_RATE
    if mode == "intraday":
        return engine.INTRADAY_RATE
    raise ConfigError(f"mode must be daily or intraday, got {mode!r}")


def _read_chains(path: str, zone: str) -> list[ingest.OptionChain]:
    with open(path) as fh:
        return ingest.parse_options_csv(fh, zone)


def _read_series(path: str | None, zone: str,
                 column: str | None = None) -> ingest.ReferenceSeries | None:
    """Read a ``timestamp,value`` file, or ``column`` of any CSV with a timestamp column.

    Without ``column``, a file whose header is not the reference schema is read
    through its ``index`` column, so replication output can be scored directly.
    """
    if path is None:
        return None
    with open(path) as fh:
        text = fh.read()
    header = next(csv.reader(io.StringIO(text)), [])
    if column is None and tuple(h.strip() for h in header) == ingest.REFERENCE_HEADER:
        return ingest.parse_reference_csv(text, zone)
    column = column or "index"
    if "timestamp" not in header or column not in header:
        raise ingest.DataError(f"{path}: needs timestamp and {column} columns", 1)
    ti, vi = header.index("timestamp"), header.index(column)
    rows = list(csv.reader(io.StringIO(text)))[1:]
    body = "".join(f"{r[ti]},{r[vi]}\n" for r in rows if r and r[vi].strip())
    return ingest.parse_reference_csv("timestamp,value\n" + body, zone)


def _write_json(path: Path, obj: Any) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _n_value(n):
    return "all" if n in (None, "all") else int(n)


# subcommands ----------------------------------------------------------------


def cmd_synth(cfg: dict, out: Path) -> dict:
    zone = cfg["zone"]
    spec = synth.ChainSpec.from_dict(cfg["spec"])
    start = ingest.parse_timestamp(cfg["start"], zone)
    if int(cfg["minutes"]) < 1 or int(cfg["days"]) < 1:
        raise ConfigError("days and minutes must be >= 1")
    pairs = synth.synthetic_specs(spec, start, int(cfg["days"]), int(cfg["minutes"]),
                                  spot_vol=float(cfg["spot_vol"]), drift=float(cfg["drift"]),
                                  vol_of_vol=float(cfg["vol_of_vol"]), seed=int(cfg["seed"]))
    if int(cfg["minutes"]) == 1 and int(cfg["days"]) == 1:
        pairs = [(start, spec)]
    chains = [synth.generate_chain(s, t) for t, s in pairs]
    with open(out / "chains.csv", "w") as fh:
        ingest.write_options_csv(chains, fh, zone)
    written = {"chains": "chains.csv"}
    if cfg["reference"] or cfg["futures_beta"] is not None:
        ref = ingest.series_from_pairs([t for t, _ in pairs],
                                       [synth.oracle_index(s) for _, s in pairs])
        if cfg["reference"]:
            with open(out / "reference.csv", "w") as fh:
                ingest.write_reference_csv(ref, fh, zone)
            written["reference"] = "reference.csv"
        if cfg["futures_beta"] is not None:
            fut = synthetic_futures(ref, float(cfg["futures_beta"]),
                                    float(cfg["futures_noise"]), int(cfg["seed"]))
            with open(out / "futures.csv", "w") as fh:
                ingest.write_reference_csv(fut, fh, zone)
            written["futures"] = "futures.csv"
    return written


def synthetic_futures(index: ingest.ReferenceSeries, beta: float, noise: float,
                      seed: int) -> ingest.ReferenceSeries:
    """Series whose simple returns are ``beta`` times the index returns plus N(0, noise²)."""
    r = metrics.returns(index.values)
    # separate stream from the price path so the noise is independent of the index
    rng = np.random.default_rng([seed, FUTURES_STREAM])
    eps = rng.normal(0.0, noise, r.size) if noise > 0 else 0.0
    growth = 1.0 + beta * r + eps
    if np.any(growth <= 0):
        raise ArithmeticError("synthetic futures path went non-positive")
    values = index.values[0] * np.concatenate([[1.0], np.cumprod(growth)])
    return ingest.ReferenceSeries(index.timestamps, tuple(values))


def cmd_replicate(cfg: dict, out: Path) -> dict:
    _require(cfg, "input")
    zone = cfg["zone"]
    chains = _read_chains(cfg["input"], zone)
    ref = _read_series(cfg["reference"], zone)
    series = engine.replicate_series(chains, _rate(cfg), ref, tolerance=float(cfg["tolerance"]),
                                     continue_on_error=bool(cfg["continue_on_error"]), zone=zone)
    with open(out / "replication.csv", "w") as fh:
        series.write_csv(fh, zone)
    written = {"replication": "replication.csv"}
    if series.metrics is not None:
        _write_json(out / "metrics.json", series.metrics.to_dict())
        written["metrics"] = "metrics.json"
    if series.errors:
        _write_json(out / "errors.json",
                    [[engine._local(t, zone).isoformat(), msg] for t, msg in series.errors])
        written["errors"] = "errors.json"
    return written


def cmd_subset(cfg: dict, out: Path) -> dict:
    _require(cfg, "input")
    zone = cfg["zone"]
    chains = _read_chains(cfg["input"], zone)
    ref = _read_series(cfg["reference"], zone)
    strategies = cfg["strategies"]
    if isinstance(strategies, str):
        strategies = [strategies]
    grid = [_n_value(n) for n in cfg["n_grid"]]
    rows = []
    for strategy in strategies:
        if strategy not in subset.STRATEGIES:
            raise ConfigError(f"unknown strategy {strategy!r}")
        rows += subset.subset_experiment(
            chains, grid, strategy, ref, _rate(cfg), zone, tolerance=float(cfg["tolerance"]),
            recompute_spacing=bool(cfg["recompute_spacing"]), scale_window=cfg["scale_window"])
    with open(out / "subset.csv", "w") as fh:
        subset.write_rows(rows, fh)
    return {"subset": "subset.csv"}


def network_spec(cfg: dict) -> learn.NetworkSpec | None:
    """NetworkSpec from a ``network`` section; None for tree and forest models."""
    net = dict(cfg["network"])
    preset = net.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown network preset {preset!r}")
        base = PRESETS[preset]().to_dict()
        net = {**base, **net}
    if net.get("kind") in ("tree", "forest"):
        return None
    net.setdefault("seed", int(cfg["seed"]))
    allowed = set(learn.NetworkSpec.__dataclass_fields__)
    unknown = set(net) - allowed
    if unknown:
        raise ConfigError(f"unknown network settings {sorted(unknown)}")
    return learn.NetworkSpec(**net)


def _dataset(cfg: dict) -> learn.Dataset:
    _require(cfg, "input")
    zone = cfg["zone"]
    target_kind = cfg["target"]
    if target_kind == "index":
        target = _read_series(cfg["reference"], zone)
    elif target_kind == "futures":
        _require(cfg, "futures")
        target = _read_series(cfg["futures"], zone)
    else:
        raise ConfigError(f"target must be index or futures, got {target_kind!r}")
    feats = cfg["features"]
    chains = _read_chains(cfg["input"], zone)
    return learn.build_features(chains, int(feats["total"]), bool(feats["include_greeks"]),
                                feats["ordering"], target, _rate(cfg), zone,
                                float(cfg["tolerance"]))


def _prepared(cfg: dict, sequence_length: int | None):
    """Rows (or windows), targets and timestamps split into train and test parts."""
    ds = _dataset(cfg)
    if sequence_length is not None:
        X, y, ts = learn.make_windows(ds, sequence_length, cfg["zone"])
    else:
        X, y, ts = ds.X, ds.y, ds.timestamps
    split = cfg["split"]
    seed = int(split.get("seed", cfg["seed"]))
    frac = float(split["train_fraction"])
    if not 0 < frac <= 1:
        raise ConfigError("train_fraction must be in (0, 1]")
    order = np.random.default_rng(seed).permutation(len(y))
    n_train = int(round(frac * len(y)))
    parts = {"train": np.sort(order[:n_train]), "test": np.sort(order[n_train:]),
             "all": np.arange(len(y))}
    return X, y, ts, parts


def _history_csv(model: learn.Model, path: Path) -> None:
    with open(path, "w") as fh:
        model.write_history(fh)


def cmd_train(cfg: dict, out: Path) -> dict:
    spec = network_spec(cfg)
    if cfg["dry_run"]:
        return {}
    kind = spec.kind if spec is not None else cfg["network"]["kind"]
    X, y, _, parts = _prepared(cfg, spec.sequence_length if spec and spec.recurrent else None)
    tr, te = parts["train"], parts["test"]
    if len(tr) == 0:
        raise ConfigError("empty training set")
    tc = {"seed": int(cfg["seed"]), **cfg["train"]}
    config = learn.TrainConfig(**tc)
    if kind == "tree":
        model = learn.train_tree(learn.Dataset(X[tr], y[tr]),
                                 int(cfg["network"].get("max_leaf_nodes", 8)))
    elif kind == "forest":
        net = cfg["network"]
        model = learn.train_forest(learn.Dataset(X[tr], y[tr]), int(net.get("trees", 10)),
                                   int(net.get("max_leaf_nodes", 8)),
                                   int(net.get("seed", cfg["seed"])),
                                   bool(net.get("bootstrap", True)))
    elif kind == "dense":
        model = learn.dense_train(spec, config, learn.Dataset(X[tr], y[tr]))
    else:
        model = learn.lstm_train(spec, config, (X[tr], y[tr]))
    model.save(out / "model.json")
    _history_csv(model, out / "history.csv")
    report = {"train": model.evaluate(X[tr], y[tr]).to_dict()}
    if len(te):
        report["test"] = model.evaluate(X[te], y[te]).to_dict()
    _write_json(out / "metrics.json", report)
    return {"model": "model.json", "history": "history.csv", "metrics": "metrics.json"}


def cmd_eval(cfg: dict, out: Path) -> dict:
    path = cfg["model_path"] or str(out / "model.json")
    if not Path(path).is_file():
        raise ConfigError(f"model file not found: {path}")
    try:
        model = learn.Model.load(path)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed model file ({exc})") from None
    seq = model.spec.sequence_length if model.spec is not None and model.spec.recurrent else None
    X, y, ts, parts = _prepared(cfg, seq)
    if cfg["on"] not in parts:
        raise ConfigError("on must be train, test or all")
    idx = parts[cfg["on"]]
    if len(idx) == 0:
        raise ConfigError(f"the {cfg['on']} split is empty")
    pred = model.predict(X[idx])
    _write_json(out / "metrics.json", metrics.report(pred, y[idx]).to_dict())
    with open(out / "predictions.csv", "w") as fh:
        fh.write("timestamp,prediction,target\n")
        for i, p in zip(idx, pred):
            stamp = engine._local(ts[i], cfg["zone"]).isoformat() if ts else str(i)
            fh.write(f"{stamp},{float(p)!r},{float(y[i])!r}\n")
    return {"metrics": "metrics.json", "predictions": "predictions.csv"}


def cmd_regress(cfg: dict, out: Path) -> dict:
    _require(cfg, "index", "futures")
    zone = cfg["zone"]
    a = _read_series(cfg["index"], zone)
    b = _read_series(cfg["futures"], zone)
    pairs = ingest.align_series(a, b, float(cfg["tolerance"]))
    if len(pairs) < 4:
        raise ConfigError(f"only {len(pairs)} aligned points; need at least 4")
    x = metrics.returns([p[0] for p in pairs])
    yv = metrics.returns([p[1] for p in pairs])
    _write_json(out / "regress.json", metrics.ols(x, yv).to_dict())
    return {"regress": "regress.json"}


def cmd_metrics(cfg: dict, out: Path) -> dict:
    _require(cfg, "a", "b")
    zone = cfg["zone"]
    pairs = ingest.align_series(_read_series(cfg["a"], zone, cfg["a_column"]),
                                _read_series(cfg["b"], zone, cfg["b_column"]),
                                float(cfg["tolerance"]))
    rep = metrics.report([p[0] for p in pairs], [p[1] for p in pairs])
    _write_json(out / "metrics.json", rep.to_dict())
    return {"metrics": "metrics.json"}


COMMANDS: dict[str, Callable[[dict, Path], dict]] = {
    "synth": cmd_synth, "replicate": cmd_replicate, "subset": cmd_subset, "train": cmd_train,
    "eval": cmd_eval, "regress": cmd_regress, "metrics": cmd_metrics,
}

# named flags per subcommand: (flag, config key, argparse kwargs)
FLAGS: dict[str, list[tuple[str, str, dict]]] = {
    "synth": [("--days", "days", {"type": int}), ("--minutes", "minutes", {"type": int}),
              ("--start", "start", {}), ("--reference", "reference",
                                         {"action": "store_const", "const": True})],
    "replicate": [("--input", "input", {}), ("--reference", "reference", {}),
                  ("--mode", "mode", {"choices": ["daily", "intraday"]}),
                  ("--rate", "rate", {"type": float})],
    "subset": [("--input", "input", {}), ("--reference", "reference", {}),
               ("--mode", "mode", {"choices": ["daily", "intraday"]}),
               ("--rate", "rate", {"type": float}),
               ("--strategy", "strategies", {"action": "append", "choices": subset.STRATEGIES})],
    "train": [("--input", "input", {}), ("--target", "target", {"choices": ["index", "futures"]}),
              ("--reference", "reference", {}), ("--futures", "futures", {}),
              ("--mode", "mode", {"choices": ["daily", "intraday"]}),
              ("--dry-run", "dry_run", {"action": "store_const", "const": True})],
    "eval": [("--input", "input", {}), ("--target", "target", {"choices": ["index", "futures"]}),
             ("--reference", "reference", {}), ("--futures", "futures", {}),
             ("--mode", "mode", {"choices": ["daily", "intraday"]}),
             ("--model", "model_path", {}), ("--on", "on", {"choices": ["train", "test", "all"]})],
    "regress": [("--index", "index", {}), ("--futures", "futures", {})],
    "metrics": [("--a", "a", {}), ("--b", "b", {})],
}


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON config file (a run.json echo also works)")
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("--zone", default=d, help="IANA zone for naive timestamps")
    p.add_argument("--set", action="append", default=d, metavar="KEY=VALUE",
                   help="override any config key; dotted keys reach sections")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vixrep", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        sp = sub.add_parser(name, help=COMMANDS[name].__doc__)
        _global_flags(sp, suppress=True)
        for flag, key, kw in FLAGS[name]:
            sp.add_argument(flag, dest="opt_" + key.replace(".", "__"), default=None, **kw)
    return parser


def _param_count(command: str, cfg: dict) -> int | None:
    if command != "train":
        return None
    spec = network_spec(cfg)
    return learn.build_network(spec).count_params() if spec is not None else 0


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_command, file_cfg = (None, {})
        if args.config:
            file_command, file_cfg = _load_config(args.config)
        command = args.command or file_command
        if command is None:
            parser.print_usage(sys.stderr)
            raise ConfigError("no subcommand given")
        if command not in COMMANDS:
            raise ConfigError(f"unknown subcommand {command!r}")
        flags = {k[4:].replace("__", "."): v for k, v in vars(args).items()
                 if k.startswith("opt_")}
        for g in ("seed", "out", "zone"):
            flags[g] = getattr(args, g, None)
        cfg = resolve(command, file_cfg, flags, args.set or [])
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        echo = {"command": command, "config": cfg}
        count = _param_count(command, cfg)
        if count is not None:
            echo["param_count"] = count
        # echo first so a failing run still records what it tried
        _write_json(out / "run.json", echo)
        written = COMMANDS[command](cfg, out)
        for name, fname in written.items():
            print(f"{name}: {out / fname}")
        if count is not None:
            print(f"parameters: {count:,}")
        return EXIT_OK
    except ArithmeticError as exc:
        print(f"vixrep: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"vixrep: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())
