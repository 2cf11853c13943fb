"""Command-line interface: train, evaluate, predict, simulate, stats.

Exit codes: 0 success, 2 usage, 3 I/O or compatibility, 4 numeric divergence.
"""
import argparse
import contextlib
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import data, evaluation
from .models import MODEL_NAMES, ConfigError, ModelConfig, assemble
from .seeding import rng_for
from .tensor import checkpoint, no_recording
from .training import DivergenceError, NegativeSampler, TrainConfig, group_events, train

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED = 0, 2, 3, 4

DEFAULTS = {
    "model": "HGDHE",
    "data": None,
    "bipartite": False,
    "d": 64,
    "lr": 0.001,
    "epochs": 100,
    "segment": 128,
    "negatives": 20,
    "eval_negatives": None,
    "mc_samples": 20,
    "history": 128,
    "seed": 0,
    "threads": 1,
    "out": None,
    "no_time_scaling": False,
    "no_best": False,
    "no_val_mae": False,
    "checkpoint": None,
}
TYPES = {"d": int, "lr": float, "epochs": int, "segment": int, "negatives": int, "eval_negatives": int,
         "mc_samples": int, "history": int, "seed": int, "threads": int}
FLAGS = ("bipartite", "no_time_scaling", "no_best", "no_val_mae")
CHECKPOINT_NAME = "checkpoint.hgtpp"


class UsageError(Exception):
    pass


def default_out():
    return os.environ.get("HGTPP_OUT", "hgtpp-out")


def read_config_file(path):
    """key=value lines; ``#`` starts a comment; keys use flag names with - or _."""
    out = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (p.strip() for p in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _coerce(key, value):
    if key in FLAGS:
        if isinstance(value, bool):
            return value
        low = str(value).lower()
        if low not in ("1", "0", "true", "false", "yes", "no"):
            raise UsageError(f"{key} must be a boolean, got {value!r}")
        return low in ("1", "true", "yes")
    if key in TYPES and value is not None:
        try:
            return TYPES[key](value)
        except ValueError:
            raise UsageError(f"{key} must be {TYPES[key].__name__}, got {value!r}") from None
    return value


def resolve(args):
    """Defaults < config file < command-line flags."""
    cfg = dict(DEFAULTS)
    cfg["out"] = default_out()
    if getattr(args, "config", None):
        file_cfg = read_config_file(args.config)
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update({k: _coerce(k, v) for k, v in file_cfg.items()})
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            cfg[key] = _coerce(key, value)
    if cfg["model"] not in MODEL_NAMES:
        raise UsageError(f"unknown model {cfg['model']!r}; valid names: {', '.join(MODEL_NAMES)}")
    return cfg


def _add_common(p, with_train=True):
    p.add_argument("--config", help="key=value config file; command-line flags take precedence (default: none)")
    p.add_argument("--model", choices=MODEL_NAMES, help=f"model name (default: {DEFAULTS['model']})")
    p.add_argument("--data", help="simplex corpus prefix or directory, or bipartite events file (default: none)")
    p.add_argument("--bipartite", action="store_true", default=None, help="dataset is bipartite (default: off)")
    p.add_argument("--d", type=int, help=f"embedding size (default: {DEFAULTS['d']})")
    p.add_argument("--history", type=int, help=f"history window in events (default: {DEFAULTS['history']})")
    p.add_argument("--seed", type=int, help=f"global random seed (default: {DEFAULTS['seed']})")
    p.add_argument("--threads", type=int, help=f"BLAS thread limit (default: {DEFAULTS['threads']})")
    p.add_argument("--out", help="output directory (default: $HGTPP_OUT or hgtpp-out)")
    p.add_argument("--no-time-scaling", action="store_true", default=None,
                   help="keep raw timestamps instead of dividing by the median gap (default: off)")
    p.add_argument("--negatives", type=int,
                   help=f"negatives per event (default: {DEFAULTS['negatives']})")
    p.add_argument("--eval-negatives", type=int, help="negatives per evaluated event (default: --negatives)")
    if with_train:
        p.add_argument("--lr", type=float, help=f"learning rate (default: {DEFAULTS['lr']})")
        p.add_argument("--epochs", type=int, help=f"training epochs (default: {DEFAULTS['epochs']})")
        p.add_argument("--segment", type=int, help=f"events per segment (default: {DEFAULTS['segment']})")
        p.add_argument("--mc-samples", type=int,
                       help=f"Monte-Carlo survival samples (default: {DEFAULTS['mc_samples']})")
        p.add_argument("--no-best", action="store_true", default=None,
                       help="keep the last epoch instead of the best by validation MRR (default: off)")
        p.add_argument("--no-val-mae", action="store_true", default=None,
                       help="skip duration prediction during validation (default: off)")


def build_parser():
    parser = argparse.ArgumentParser(prog="hgtpp", description="Temporal point process models of hyperedges")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", help="train a model and write a checkpoint, loss trace and config echo")
    _add_common(p)
    p = sub.add_parser("evaluate", help="score the test split with a trained checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint path (default: <out>/checkpoint.hgtpp)")
    p = sub.add_parser("predict", help="intensities and expected durations for given hyperedges")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint path (default: <out>/checkpoint.hgtpp)")
    p.add_argument("--hyperedges", required=True,
                   help="';'-separated hyperedges of original ids, e.g. '1,2;3,4,5' "
                        "(bipartite: 'left/right', e.g. '1,2/7')")
    p.add_argument("--at", type=float, help="query time in original units (default: last event time)")
    p = sub.add_parser("simulate", help="generate a synthetic corpus from a key=value spec file")
    p.add_argument("--spec", required=True, help="generator spec file")
    p.add_argument("--seed", type=int, help="random seed (default: 0)")
    p.add_argument("--out", help="output directory (default: $HGTPP_OUT or hgtpp-out)")
    p = sub.add_parser("stats", help="dataset statistics table")
    p.add_argument("--data", required=True, help="simplex corpus prefix or directory, or bipartite file")
    p.add_argument("--bipartite", action="store_true", default=None, help="dataset is bipartite")
    return parser


# ---- helpers -------------------------------------------------------------

def prepare(cfg):
    if not cfg["data"]:
        raise UsageError("--data is required")
    ds = data.load_dataset(cfg["data"], bipartite=cfg["bipartite"])
    ds, dropped = ds.without_singletons()
    if dropped:
        print(f"dropped {dropped} single-node events", file=sys.stderr)
    if not cfg["no_time_scaling"]:
        ds = data.scale_times(ds)
    return ds


def build_model(cfg, ds):
    config = ModelConfig.for_name(cfg["model"], d=cfg["d"])
    if config.bipartite != ds.bipartite:
        raise UsageError(f"{cfg['model']} needs a {'bipartite' if config.bipartite else 'homogeneous'} dataset")
    return assemble(config, ds.num_nodes, seed=cfg["seed"], num_right=ds.num_right or None,
                    history_size=cfg["history"])


def train_config(cfg):
    return TrainConfig(lr=cfg["lr"], segment=cfg["segment"], negatives=cfg["negatives"],
                       mc_samples=cfg["mc_samples"], epochs=cfg["epochs"], seed=cfg["seed"],
                       eval_negatives=cfg["eval_negatives"], best_by_val=not cfg["no_best"],
                       val_mae=not cfg["no_val_mae"]).validate()


def replay(model, events, times):
    for t, group in group_events(events, times):
        model.observe(group, t)


def _threads(n):
    if n is None or n < 1:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _fmt(x):
    return "nan" if isinstance(x, float) and math.isnan(x) else repr(float(x))


def _write(path, text):
    with open(path, "w") as f:
        f.write(text)


def _metadata(cfg, ds, model, best_epoch):
    return {"model": cfg["model"], "d": cfg["d"], "num_nodes": ds.num_nodes, "num_right": ds.num_right,
            "history": cfg["history"], "seed": cfg["seed"], "time_scale": ds.time_scale,
            "dataset": ds.name, "best_epoch": best_epoch}


def load_checkpoint(cfg, ds):
    path = cfg["checkpoint"] or os.path.join(cfg["out"], CHECKPOINT_NAME)
    arrays, meta = checkpoint.load(path)
    for key in ("model", "d"):
        if meta.get(key) != cfg[key]:
            raise ConfigError(f"checkpoint {key}={meta.get(key)!r} does not match requested {cfg[key]!r}")
    if meta.get("num_nodes") != ds.num_nodes or meta.get("num_right") != ds.num_right:
        raise ConfigError("checkpoint node counts do not match the dataset")
    model = build_model(dict(cfg, history=meta.get("history", cfg["history"])), ds)
    model.load_state_dict(arrays)
    return model, meta


# ---- commands --------------------------------------------------------------

def cmd_train(cfg):
    ds = prepare(cfg)
    sp = data.split(ds)
    tc = train_config(cfg)
    model = build_model(cfg, ds)
    tr_ev, tr_t = ds.subset(sp.train)
    va_ev, va_t = ds.subset(sp.val)
    sampler = NegativeSampler(tr_ev, ds.num_nodes, ds.num_right, ds.bipartite)
    gap = data.median_gap(ds.times)

    def validate(m):
        return evaluation.evaluate_stream(m, va_ev, va_t, sampler, tc.test_negatives, rng_for(tc.seed, "eval"),
                                          durations=tc.val_mae, duration_grid=tc.duration_grid, median_gap=gap)

    log = lambda msg: print(msg, file=sys.stderr)
    result = train(model, tr_ev, tr_t, va_ev, va_t, tc, sampler=sampler, evaluate=validate, log=log)
    os.makedirs(cfg["out"], exist_ok=True)
    checkpoint.save(os.path.join(cfg["out"], CHECKPOINT_NAME), model.state_dict(),
                    _metadata(cfg, ds, model, result.best_epoch))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_mrr", "val_mae"])
    for epoch, loss, mrr, mae in result.trace:
        w.writerow([epoch, _fmt(loss), _fmt(mrr), _fmt(mae)])
    _write(os.path.join(cfg["out"], "trace.csv"), buf.getvalue())
    echo = {k: cfg[k] for k in sorted(cfg) if k != "checkpoint"}
    _write(os.path.join(cfg["out"], "config.txt"), "".join(f"{k}={echo[k]}\n" for k in echo))
    print(f"trained {cfg['model']} for {tc.epochs} epochs; best epoch {result.best_epoch}")
    return EXIT_OK


def cmd_evaluate(cfg):
    ds = prepare(cfg)
    sp = data.split(ds)
    model, _ = load_checkpoint(cfg, ds)
    tr_ev, tr_t = ds.subset(sp.train)
    sampler = NegativeSampler(tr_ev, ds.num_nodes, ds.num_right, ds.bipartite)
    replay(model, *ds.subset(range(0, sp.test.start)))
    te_ev, te_t = ds.subset(sp.test)
    negatives = cfg["eval_negatives"] if cfg["eval_negatives"] is not None else cfg["negatives"]
    m = evaluation.evaluate_stream(model, te_ev, te_t, sampler, negatives, rng_for(cfg["seed"], "eval"),
                                   median_gap=data.median_gap(ds.times))
    rows = [(cfg["model"], m)]
    os.makedirs(cfg["out"], exist_ok=True)
    _write(os.path.join(cfg["out"], "metrics.csv"), evaluation.metrics_csv(rows, ds.time_scale))
    _write(os.path.join(cfg["out"], "buckets.csv"), evaluation.buckets_csv(rows))
    table = evaluation.metrics_table(rows)
    _write(os.path.join(cfg["out"], "metrics.txt"), table)
    print(table, end="")
    return EXIT_OK


def parse_hyperedges(text, ds):
    out = []
    lookup = {int(v): i for i, v in enumerate(ds.node_ids)}
    rlookup = {int(v): i for i, v in enumerate(ds.right_ids)} if ds.bipartite else None

    def ids(part, table):
        try:
            return tuple(sorted({table[int(x)] for x in part.split(",") if x.strip()}))
        except (KeyError, ValueError) as exc:
            raise UsageError(f"unknown node id in {part!r}: {exc}") from None

    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        if ds.bipartite:
            if "/" not in item:
                raise UsageError(f"bipartite hyperedge {item!r} needs 'left/right'")
            left, right = item.split("/", 1)
            out.append((item, (ids(left, lookup), ids(right, rlookup))))
        else:
            out.append((item, ids(item, lookup)))
    if not out:
        raise UsageError("no hyperedges given")
    return out


def cmd_predict(cfg, hyperedges, at):
    ds = prepare(cfg)
    model, _ = load_checkpoint(cfg, ds)
    cands = parse_hyperedges(hyperedges, ds)
    t = ds.times[-1] if at is None else at / ds.time_scale
    keep = ds.times < t if at is not None else ds.times <= t
    replay(model, [h for h, k in zip(ds.events, keep) if k], ds.times[keep])
    gap = data.median_gap(ds.times)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["hyperedge", "time", "intensity", "expected_duration"])
    for text, h in cands:
        if t < model.anchor_time(h):
            raise UsageError(f"query time precedes the last interaction of {text}")
        with no_recording():
            lam = model.intensities([h], np.array([[t]]))[0].value[0, 0]
        dur = evaluation.predict_duration(model, h, median_gap=gap) * ds.time_scale
        w.writerow([text, _fmt(t * ds.time_scale), _fmt(lam), _fmt(dur)])
    os.makedirs(cfg["out"], exist_ok=True)
    _write(os.path.join(cfg["out"], "predictions.csv"), buf.getvalue())
    print(buf.getvalue(), end="")
    return EXIT_OK


SPEC_TYPES = {"num_nodes": int, "count": int, "copies": int, "horizon": float, "rate": float,
              "alpha": float, "decay": float}


def read_spec(path):
    raw = read_config_file(path)
    spec = {}
    for key, value in raw.items():
        if key in SPEC_TYPES:
            try:
                spec[key] = SPEC_TYPES[key](value)
            except ValueError:
                raise UsageError(f"spec key {key} must be {SPEC_TYPES[key].__name__}") from None
        elif key in ("sizes", "rates"):
            spec[key] = [float(x) if key == "rates" else int(x) for x in value.split(",") if x.strip()]
        elif key == "hyperedges":
            spec[key] = [[int(x) for x in h.split(",")] for h in value.split(";") if h.strip()]
        elif key in ("mode", "process", "name"):
            spec[key] = value
        else:
            raise UsageError(f"unknown spec key {key!r}")
    return spec


def cmd_simulate(spec_path, seed, out):
    try:
        spec = read_spec(spec_path)
    except OSError as exc:
        raise data.DataError(str(exc)) from None
    try:
        ds = data.generate_synthetic(spec, rng_for(seed, "simulate"))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    paths = data.save_simplex_corpus(ds, os.path.join(out, ds.name))
    print(f"wrote {len(ds)} events over {ds.num_nodes} nodes to {paths[0][: -len('-nverts.txt')]}")
    return EXIT_OK


def cmd_stats(path, bipartite):
    ds = data.load_dataset(path, bipartite=bipartite)
    if len(ds) == 0:
        print("warning: dataset is empty", file=sys.stderr)
    print(data.stats_table([data.stats(ds)]), end="")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.spec, args.seed or 0, args.out or default_out())
        if args.command == "stats":
            return cmd_stats(args.data, bool(args.bipartite))
        cfg = resolve(args)
        with _threads(cfg["threads"]):
            if args.command == "train":
                return cmd_train(cfg)
            if args.command == "evaluate":
                return cmd_evaluate(cfg)
            return cmd_predict(cfg, args.hyperedges, args.at)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError, checkpoint.CheckpointError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
