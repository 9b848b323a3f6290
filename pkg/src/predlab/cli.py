"""Command-line entry point: estimate, analyze, synth-bench, synth."""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import NoiseKind, indicator_report, mae_lower_bound, mse_lower_bound
from .data import LabeledDataset, load_table, pca_fit, pca_reduce, train_test_split, write_table
from .estimators import gauss_doe_entropy, run_algorithm1
from .schema import validate
from .synth import SynthTaskKind, gen_dataset
from .trainer import TrainConfig, zscore_fit

log = logging.getLogger("predlab")

# flag name -> TrainConfig field
_CONFIG_FLAGS = {
    "repetitions": "repetitions",
    "kernels": "kernel_count",
    "hidden_dim": "hidden_dim",
    "layers": "layer_count",
    "dropout": "dropout_rate",
    "epochs": "epochs",
    "patience": "patience",
    "batch": "batch_size",
    "lr": "learning_rate",
    "val_fraction": "val_fraction",
    "seed": "seed",
}


class CliError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    input_digest: str
    version: str
    started_at: str
    finished_at: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _json_digest(obj) -> str:
    return "sha256:" + hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def resolve_config(args) -> TrainConfig:
    """Defaults, then the --config file, then explicit flags."""
    cfg = TrainConfig()
    if args.config:
        try:
            cfg = TrainConfig.from_json(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}") from exc
    changes = {f: getattr(args, a) for a, f in _CONFIG_FLAGS.items() if getattr(args, a, None) is not None}
    if args.no_perturb:
        changes["perturb"] = False
    return cfg.replace(**changes) if changes else cfg


def _write_report(kind: str, doc: dict, out) -> None:
    validate(kind, doc)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is None:
        return
    out = Path(out)
    tmp = out.with_name(out.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, out)


def _manifest(command, cfg, digest, started, extra=None) -> dict:
    conf = cfg.to_dict()
    if extra:
        conf.update(extra)
    return RunManifest(command, conf, cfg.seed, digest, __version__, started, _now()).to_dict()


def _var_y(y) -> float:
    return float(np.var(np.asarray(y, dtype=float), ddof=1))


def _fmt(v) -> str:
    return f"{v:10.4f}" if isinstance(v, float) else f"{v!s:>10}"


def _print_table(header, rows, stream=None):
    stream = stream or sys.stdout
    print(" ".join(f"{h:>10}" for h in header), file=stream)
    for r in rows:
        print(" ".join(_fmt(v) for v in r), file=stream)


def _load(args) -> LabeledDataset:
    if not args.target:
        raise CliError("--target is required")
    ds = load_table(args.dataset, args.target)
    if ds.dropped_rows:
        log.warning("dropped %d malformed rows", ds.dropped_rows)
    return ds


def cmd_estimate(args) -> dict:
    started = _now()
    cfg = resolve_config(args)
    ds = _load(args)
    report = run_algorithm1(ds.X, ds.y, cfg)
    var_y = _var_y(ds.y)
    ind = indicator_report(report, var_y, args.r2_mode)
    doc = {
        "manifest": _manifest("estimate", cfg, file_digest(args.dataset), started,
                              {"target": args.target, "r2_mode": args.r2_mode}),
        "entropies": report.to_dict(),
        "indicators": ind.to_dict(),
        "traces": report.traces,
        "var_y": var_y,
    }
    _write_report("estimate", doc, args.out)
    _print_table(["estimator", "H (nats)", "R2"], [
        ["knifecp", report.h_knifecp, ind.r2_knifecp],
        ["knifedp", report.h_knifedp, ind.r2_knifedp],
        ["lmcp", report.h_lmcp, ind.r2_lmcp],
    ])
    return doc


def cmd_analyze(args) -> dict:
    started = _now()
    cfg = resolve_config(args)
    ds = _load(args)
    thresholds = args.ev or [1.0]
    for t in thresholds:
        if not 0 < t <= 1:
            raise CliError(f"EV threshold {t} outside (0, 1]")
    if args.holdout > 0:
        ds, _ = train_test_split(ds, args.holdout, cfg.seed)
    X = zscore_fit(ds.X).apply(ds.X) if args.standardize else ds.X
    pca = pca_fit(X)
    var_y = _var_y(ds.y)
    rows = []
    for t in thresholds:
        k = pca.k_for_threshold(t)
        Xk = pca_reduce(pca, X, k=k)
        report = run_algorithm1(Xk, ds.y, cfg)
        ind = indicator_report(report, var_y, args.r2_mode)
        rows.append({
            "ev_threshold": t,
            "EV": float(np.sum(pca.ev_ratios[:k])),
            "d": k,
            "R2_knifecp": ind.r2_knifecp,
            "R2_knifedp": ind.r2_knifedp,
            "R2_lmcp": ind.r2_lmcp,
            "entropies": report.to_dict(),
            "indicators": ind.to_dict(),
        })
    doc = {
        "manifest": _manifest("analyze", cfg, file_digest(args.dataset), started, {
            "target": args.target, "ev": thresholds, "standardize": args.standardize,
            "holdout": args.holdout, "r2_mode": args.r2_mode,
        }),
        "columns": ["EV", "d", "R2_knifecp", "R2_knifedp", "R2_lmcp"],
        "rows": rows,
    }
    _write_report("analyze", doc, args.out)
    _print_table(doc["columns"], [[r[c] for c in doc["columns"]] for r in rows])
    return doc


def _cell_seed(seed, task, noise, mse) -> int:
    return (seed * 1_000_003 + zlib.crc32(f"{task}/{noise}/{mse!r}".encode())) % (2**31 - 1)


def _bench_cell(task, noise, mse, n, cfg, gauss):
    ds, truth = gen_dataset(task, noise, mse, n, _cell_seed(cfg.seed, task, noise, mse))
    cell = {
        "task": task, "noise": noise, "mse": mse, "true_mse": mse,
        "h_true": truth.h_cond_true, "mae_true": truth.mae_true,
    }
    try:
        report = run_algorithm1(ds.X, ds.y, cfg)
        est = {"knifecp": report.h_knifecp, "knifedp": report.h_knifedp, "lmcp": report.h_lmcp}
        if gauss:
            est["gauss"] = gauss_doe_entropy(ds.X, ds.y, cfg)[0]
    except (RuntimeError, ValueError) as exc:
        cell.update(status="failed", error=str(exc))
        return cell
    cell.update(
        status="ok",
        entropies=est,
        mse_bounds={k: mse_lower_bound(h, noise) for k, h in est.items()},
        mae_bounds={k: mae_lower_bound(h, noise) for k, h in est.items()},
        variances=report.variances,
        reps=report.per_repetition,
        failures=report.failures,
    )
    return cell


def cmd_synth_bench(args) -> dict:
    started = _now()
    cfg = resolve_config(args)
    tasks = [SynthTaskKind(t).value for t in args.tasks]
    noises = [NoiseKind(k).value for k in args.noises]
    mses = [float(m) for m in args.mse]
    if not (tasks and noises and mses):
        raise CliError("task, noise and mse grids must be nonempty")
    keys = sorted({(t, k, m) for t in tasks for k in noises for m in mses})
    cells = [_bench_cell(t, k, m, args.n, cfg, args.gauss) for t, k, m in keys]
    tidy = []
    for c in cells:
        tidy.append({"estimator": "true", "task": c["task"], "noise": c["noise"], "mse": c["mse"],
                     "value": c["true_mse"]})
        for e, v in c.get("mse_bounds", {}).items():
            tidy.append({"estimator": e, "task": c["task"], "noise": c["noise"], "mse": c["mse"], "value": v})
    grid = {"tasks": tasks, "noises": noises, "mse": mses, "n": args.n, "gauss": args.gauss}
    doc = {"manifest": _manifest("synth-bench", cfg, _json_digest(grid), started, grid), "cells": cells,
           "tidy": tidy}
    _write_report("synth-bench", doc, args.out)
    rows = []
    for c in cells:
        b = c.get("mse_bounds", {})
        rows.append([c["task"][:10], c["noise"][:10], c["true_mse"], b.get("knifecp", math.nan),
                     b.get("lmcp", math.nan), c["status"]])
    _print_table(["task", "noise", "true_mse", "knifecp", "lmcp", "status"], rows)
    return doc


def cmd_synth(args) -> dict:
    started = _now()
    if args.out is None:
        raise CliError("--out is required for synth")
    seed = 0 if args.seed is None else args.seed
    ds, truth = gen_dataset(args.task, args.noise, args.mse, args.n, seed)
    out = Path(args.out)
    write_table(ds, out)
    params = {"task": truth.task, "noise": truth.noise, "mse": args.mse, "n": args.n}
    doc = {
        "manifest": RunManifest("synth", params, seed, file_digest(out), __version__, started, _now()).to_dict(),
        "ground_truth": truth.to_dict(),
    }
    _write_report("synth", doc, out.with_name(out.name + ".truth.json"))
    print(f"wrote {len(ds)} rows to {out}")
    return doc


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", help="target column name")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON file with training config overrides")
    p.add_argument("--out", help="report path")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--kernels", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--no-perturb", action="store_true")
    p.add_argument("--r2-mode", choices=["paper", "gaussian"], default="paper")
    p.add_argument("--ev", type=float, action="append", help="explained-variance threshold (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="predlab", description="Conditional-entropy predictability estimates")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate entropies and R^2 indicators for a table")
    p.add_argument("dataset")
    _add_shared(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("analyze", help="R^2 indicators across PCA explained-variance levels")
    p.add_argument("dataset")
    _add_shared(p)
    p.add_argument("--no-standardize", dest="standardize", action="store_false",
                   help="skip z-scoring features before PCA")
    p.add_argument("--holdout", type=float, default=0.4,
                   help="fraction held out before estimation (0 uses every row)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth-bench", help="estimator grid over synthetic tasks")
    _add_shared(p)
    p.add_argument("--tasks", nargs="+", default=[t.value for t in SynthTaskKind])
    p.add_argument("--noises", nargs="+", default=[k.value for k in NoiseKind])
    p.add_argument("--mse", nargs="+", type=float, default=[250.0, 500.0, 1000.0])
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--gauss", action="store_true", help="also run the single-Gaussian baseline")
    p.set_defaults(func=cmd_synth_bench)

    p = sub.add_parser("synth", help="write a synthetic dataset with a ground-truth sidecar")
    _add_shared(p)
    p.add_argument("--task", required=True, choices=[t.value for t in SynthTaskKind])
    p.add_argument("--noise", required=True, choices=[k.value for k in NoiseKind])
    p.add_argument("--mse", type=float, required=True)
    p.add_argument("--n", type=int, default=3000)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # every module error becomes exit 1
        print(f"predlab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
