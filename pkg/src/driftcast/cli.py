"""Command-line driver.

Exit codes: 0 success, 1 verification mismatch, 2 configuration error,
3 data error, 4 numerical failure. ``DRIFTCAST_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment as ex
from .data import fit_scale, parse_csv, write_csv
from .errors import ConfigError, DataError, DriftcastError
from .losses import window_metrics
from .synthetic import synthetic_price_series
from .training import load_checkpoint, windows_to_arrays

log = logging.getLogger("driftcast")


def _load_config(args, **overrides) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.load(args.config) if args.config else ex.ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides) if overrides else cfg


def _out_dir(args, default):
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_ingest(args):
    series = parse_csv(args.input, json.loads(Path(args.schema).read_text()) if args.schema else None,
                       args.instrument)
    transform = fit_scale(series, args.train_fraction)
    summary = {"instrument": series.instrument, "records": len(series),
               "first": series.records[0].timestamp.isoformat(), "last": series.records[-1].timestamp.isoformat(),
               "scale": {"minimum": transform.minimum, "maximum": transform.maximum}}
    if args.out:
        out = _out_dir(args, ".")
        write_csv(series, out / "series.csv")
        (out / "ingest.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _print_json(summary)


def cmd_synth(args):
    series = synthetic_price_series(args.length, seed=args.seed if args.seed is not None else 0)
    path = Path(args.out or "synthetic.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(series, path)
    print(path)


def cmd_features(args):
    cfg = _load_config(args)
    split = ex.prepare_split(cfg)
    X, Y = windows_to_arrays(split.train + split.validation)
    origins = np.array([w.origin_index for w in split.train + split.validation])
    out = _out_dir(args, "features")
    np.savez(out / "features.npz", inputs=X, targets=Y, origins=origins, n_train=len(split.train))
    _print_json({"windows": len(origins), "train": len(split.train), "validation": len(split.validation),
                 "input_channels": int(X.shape[2])})


def _run(cfg, args, default_out):
    report = ex.run_experiment(cfg, _out_dir(args, default_out))
    _print_json({"name": report["name"], "metrics": report["metrics"], "provenance": report["provenance"]})


def cmd_train(args):
    _run(_load_config(args), args, "run")


def cmd_baseline(args):
    cfg = _load_config(args, model=args.model, name=args.name or args.model.upper())
    _run(cfg, args, f"baseline-{args.model}")


def _checkpoint_predictions(args):
    cfg = _load_config(args)
    model = ex.model_from_checkpoint(load_checkpoint(args.checkpoint))
    if model.kind == "ann":
        cfg = replace(cfg, model="ann")
    split = ex.prepare_split(cfg)
    X, Y = windows_to_arrays(split.validation)
    return cfg, split, model.predict(X), Y


def cmd_evaluate(args):
    cfg, _, preds, Y = _checkpoint_predictions(args)
    metrics = window_metrics(preds, Y, cfg.metric_threshold)
    if args.out:
        out = _out_dir(args, ".")
        (out / "evaluation.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    _print_json(metrics)


def cmd_predict(args):
    cfg, split, preds, _ = _checkpoint_predictions(args)
    transform = fit_scale(ex.load_series(cfg), cfg.train_ratio)
    raw = transform.inverse(preds)
    path = Path(args.out or "predictions.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["origin_index", "step", "scaled", "price"])
        for w, row_s, row_p in zip(split.validation, preds, raw):
            for step, (s, p) in enumerate(zip(row_s, row_p), start=1):
                writer.writerow([w.origin_index, step, repr(float(s)), repr(float(p))])
    print(path)


def cmd_compare(args):
    if not args.config:
        raise ConfigError("compare: --config <matrix.json> is required")
    try:
        matrix = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{args.config}: cannot read matrix ({exc})") from None
    out = _out_dir(args, "matrix")
    report = ex.run_matrix(matrix, out, jobs=args.jobs, seed=args.seed)
    print((out / "table.csv").read_text(), end="")
    print()
    print((out / "dm.csv").read_text(), end="")
    return report


def cmd_verify(args):
    problems = ex.verify_report(args.report)
    for p in problems:
        print(p, file=sys.stderr)
    print("consistent" if not problems else f"{len(problems)} mismatches")
    return 0 if not problems else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftcast", description="Peak/valley-aware FX forecasting experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory or file")
        return p

    p = common(sub.add_parser("ingest", help="validate an OHLCV CSV and report its scale"), config=False)
    p.add_argument("input")
    p.add_argument("--schema", help="JSON column mapping")
    p.add_argument("--instrument")
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.set_defaults(func=cmd_ingest)

    p = common(sub.add_parser("synth", help="write the bundled synthetic series as CSV"), config=False)
    p.add_argument("--length", type=int, default=5000)
    p.set_defaults(func=cmd_synth)

    common(sub.add_parser("features", help="build windows and stacked features")).set_defaults(func=cmd_features)
    common(sub.add_parser("train", help="run one experiment config")).set_defaults(func=cmd_train)

    p = common(sub.add_parser("baseline", help="run the ARIMA(0,1,0) or ANN baseline"))
    p.add_argument("--model", choices=("arima", "ann"), default="arima")
    p.add_argument("--name")
    p.set_defaults(func=cmd_baseline)

    for name, func, text in (("evaluate", cmd_evaluate, "score a checkpoint on the validation split"),
                             ("predict", cmd_predict, "write validation forecasts from a checkpoint")):
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--checkpoint", required=True)
        p.set_defaults(func=func)

    p = common(sub.add_parser("compare", help="run a comparison matrix"))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify-report", help="recompute a report from its stored predictions")
    p.add_argument("report")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DRIFTCAST_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except DriftcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return code if isinstance(code, int) else 0


if __name__ == "__main__":
    sys.exit(main())
