"""Config-driven experiment runs and comparison matrices.

A run goes ingest → scale → window → features → train → evaluate and writes
``report.json``, ``curves.csv``, ``predictions.npz`` and (for trained models)
``checkpoint.json`` into its output directory. Every number in a report can
be recomputed from the persisted predictions with :func:`verify_report`.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import Ann, AnnConfig, DmResult, diebold_mariano, dm_horizon, window_errors
from .data import (DEFAULT_INPUT_LENGTH, DEFAULT_OUTPUT_LENGTH, DEFAULT_STRIDE, DEFAULT_TRAIN_RATIO,
                   DatasetSplit, fit_scale, parse_csv, slice_windows, split_train_val)
from .errors import ConfigError, IncompatibleConfigs, NonPositiveVariance, SeriesTooShort
from .losses import DEFAULT_PIVOT_THRESHOLD, LOSSES, PIVOT_OFFSET, LossParams, window_metrics
from .patterns import DEFAULT_WINDOW_SIZES, build_similarity_features, default_templates
from .seq2seq import CellKind, ModelConfig, Seq2Seq
from .synthetic import synthetic_price_series
from .training import (LOG_FIELDS, Checkpoint, TrainSettings, fit, load_checkpoint, restore, save_checkpoint,
                       snapshot, windows_to_arrays)
from .zigzag import DEFAULT_THRESHOLDS, ZigzagConfig, build_zigzag_features

log = logging.getLogger(__name__)

FEATURE_SETS = ("none", "zigzag", "similarity", "zigzag+similarity")
MODELS = ("seq2seq", "ann", "arima")
TABLE_COLUMNS = ("configuration", "PVRMSE (x1e-3)", "PVMAE (x1e-3)", "SMAPE")
SIGNIFICANCE = 0.01
TOLERANCE = 1e-12

# fields that must agree for runs to share one split
DATA_FIELDS = ("data_path", "schema", "instrument", "synthetic_length", "synthetic_seed", "train_ratio",
               "input_length", "output_length", "stride")


@dataclass
class ExperimentConfig:
    name: str = "run"
    data_path: str = None
    schema: dict = None
    instrument: str = ""
    synthetic_length: int = 5000
    synthetic_seed: int = 0
    train_ratio: float = DEFAULT_TRAIN_RATIO
    input_length: int = DEFAULT_INPUT_LENGTH
    output_length: int = DEFAULT_OUTPUT_LENGTH
    stride: int = DEFAULT_STRIDE
    features: str = "none"
    zigzag_thresholds: tuple = DEFAULT_THRESHOLDS
    window_sizes: tuple = DEFAULT_WINDOW_SIZES
    model: str = "seq2seq"
    cell: str = "gru"
    use_attention: bool = True
    hidden_size: int = 128
    encoder_layers: int = 1
    decoder_layers: int = 1
    dropout_rate: float = 0.0
    teacher_forcing_ratio: float = 0.0
    ann_widths: tuple = None
    loss: str = "mpv"
    loss_params: dict = field(default_factory=dict)
    epochs: int = 150
    learning_rate: float = 1e-4
    batch_size: int = 128
    seed: int = 0
    metric_threshold: float = DEFAULT_PIVOT_THRESHOLD

    def __post_init__(self):
        self.zigzag_thresholds = tuple(float(t) for t in self.zigzag_thresholds)
        self.window_sizes = tuple(int(s) for s in self.window_sizes)
        if self.ann_widths is None:
            self.ann_widths = (self.input_length, 128, 32, self.output_length)
        self.ann_widths = tuple(int(w) for w in self.ann_widths)
        self.validate()

    def validate(self):
        def bad(name, why):
            raise ConfigError(f"config.{name}: {why}")

        if self.features not in FEATURE_SETS:
            bad("features", f"expected one of {FEATURE_SETS}, got {self.features!r}")
        if self.model not in MODELS:
            bad("model", f"expected one of {MODELS}, got {self.model!r}")
        if self.cell not in {c.value for c in CellKind}:
            bad("cell", f"expected rnn, lstm or gru, got {self.cell!r}")
        if self.loss not in LOSSES:
            bad("loss", f"expected one of {sorted(LOSSES)}, got {self.loss!r}")
        for name in ("input_length", "output_length", "stride", "hidden_size", "batch_size",
                     "encoder_layers", "decoder_layers", "synthetic_length"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                bad(name, f"expected a positive integer, got {value!r}")
        if not isinstance(self.epochs, int) or self.epochs < 0:
            bad("epochs", f"expected a non-negative integer, got {self.epochs!r}")
        if not 0.0 < self.train_ratio < 1.0:
            bad("train_ratio", f"expected a ratio in (0, 1), got {self.train_ratio!r}")
        if not self.learning_rate > 0:
            bad("learning_rate", f"expected > 0, got {self.learning_rate!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            bad("dropout_rate", f"expected a rate in [0, 1), got {self.dropout_rate!r}")
        if not 0.0 <= self.teacher_forcing_ratio <= 1.0:
            bad("teacher_forcing_ratio", f"expected a ratio in [0, 1], got {self.teacher_forcing_ratio!r}")
        if "similarity" in self.features:
            for s in self.window_sizes:
                if s < 2 or self.input_length % s:
                    bad("window_sizes", f"size {s} does not divide input_length {self.input_length}")
        if "zigzag" in self.features and not (self.zigzag_thresholds and all(t > 0 for t in self.zigzag_thresholds)):
            bad("zigzag_thresholds", "expected a non-empty list of positive thresholds")
        if self.ann_widths[0] != self.input_length or self.ann_widths[-1] != self.output_length:
            bad("ann_widths", f"must run from input_length to output_length, got {list(self.ann_widths)}")
        try:
            LossParams.from_dict(self.loss_params)
        except (TypeError, ValueError) as exc:
            bad("loss_params", str(exc))

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"config.{unknown[0]}: unknown field")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"config: {exc}") from None

    @classmethod
    def load(cls, path):
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: cannot read config ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self):
        d = asdict(self)
        for key in ("zigzag_thresholds", "window_sizes", "ann_widths"):
            d[key] = list(d[key])
        return d

    def data_key(self):
        d = self.to_dict()
        return json.dumps({k: d[k] for k in DATA_FIELDS}, sort_keys=True)

    def config_hash(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @property
    def input_channels(self):
        if self.model != "seq2seq":
            return 1
        return feature_channels(self.features, self.zigzag_thresholds, self.window_sizes)

    def model_config(self) -> ModelConfig:
        return ModelConfig(cell=self.cell, use_attention=self.use_attention, hidden_size=self.hidden_size,
                           encoder_layers=self.encoder_layers, decoder_layers=self.decoder_layers,
                           dropout_rate=self.dropout_rate, teacher_forcing_ratio=self.teacher_forcing_ratio,
                           input_channels=self.input_channels, output_length=self.output_length)

    def train_settings(self) -> TrainSettings:
        return TrainSettings(loss=self.loss, epochs=self.epochs, batch_size=self.batch_size,
                             learning_rate=self.learning_rate, seed=self.seed,
                             loss_params=LossParams.from_dict(self.loss_params),
                             metric_threshold=self.metric_threshold)


def feature_channels(features, thresholds=DEFAULT_THRESHOLDS, window_sizes=DEFAULT_WINDOW_SIZES) -> int:
    """Model input channels: the close price plus 3 per zigzag threshold and 13 per window size."""
    n = 1
    if "zigzag" in features:
        n += 3 * len(thresholds)
    if "similarity" in features:
        n += len(default_templates()) * len(window_sizes)
    return n


# ---------------------------------------------------------------- pipeline

def load_series(cfg: ExperimentConfig):
    if cfg.data_path:
        return parse_csv(cfg.data_path, cfg.schema, cfg.instrument or None)
    return synthetic_price_series(cfg.synthetic_length, seed=cfg.synthetic_seed, instrument=cfg.instrument or "SYNTH")


def window_features(values, cfg: ExperimentConfig) -> np.ndarray:
    blocks = [np.zeros((0, len(values)))]
    if "zigzag" in cfg.features:
        blocks.append(build_zigzag_features(values, ZigzagConfig(cfg.zigzag_thresholds), offset=PIVOT_OFFSET))
    if "similarity" in cfg.features:
        blocks.append(build_similarity_features(values, cfg.window_sizes))
    return np.vstack(blocks)


def prepare_split(cfg: ExperimentConfig, series=None) -> DatasetSplit:
    """Scale, window and split the series; features are attached only for seq2seq runs."""
    series = series if series is not None else load_series(cfg)
    transform = fit_scale(series, cfg.train_ratio)
    windows = slice_windows(series, transform, cfg.input_length, cfg.output_length, cfg.stride)
    if cfg.model == "seq2seq" and cfg.features != "none":
        for w in windows:
            w.features = window_features(w.input, cfg)
    return split_train_val(windows, cfg.train_ratio)


def model_from_checkpoint(checkpoint: Checkpoint):
    kind = checkpoint.config.get("model", "seq2seq")
    if kind == "ann":
        return restore(Ann(AnnConfig.from_dict(checkpoint.config)), checkpoint)
    if kind == "seq2seq":
        return restore(Seq2Seq(ModelConfig.from_dict(checkpoint.config)), checkpoint)
    raise ConfigError(f"checkpoint.config.model: unknown model kind {kind!r}")


def _build_model(cfg):
    if cfg.model == "ann":
        return Ann(AnnConfig(cfg.ann_widths), seed=cfg.seed)
    try:
        return Seq2Seq(cfg.model_config(), seed=cfg.seed)
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from None


def _write_curves(rows, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_FIELDS)
    for row in rows:
        writer.writerow([row["epoch"]] + [repr(float(row[k])) if k in row else "" for k in LOG_FIELDS[1:]])
    Path(path).write_text(buf.getvalue())


def run_experiment(cfg: ExperimentConfig, out_dir=None, split=None) -> dict:
    """Execute one configuration; returns the report and writes artifacts when ``out_dir`` is given."""
    split = split if split is not None else prepare_split(cfg)
    X, Y = windows_to_arrays(split.train)
    Xv, Yv = windows_to_arrays(split.validation)
    curves, checkpoint = [], None
    if cfg.model == "arima":
        preds = np.repeat(Xv[:, -1:, 0], cfg.output_length, axis=1)
    else:
        if cfg.model == "ann":
            X, Xv = X[:, :, :1], Xv[:, :, :1]
        model = _build_model(cfg)
        log.info("training %s (%s, %d epochs)", cfg.name, cfg.model, cfg.epochs)
        curves = fit(model, X, Y, Xv, Yv, cfg.train_settings(),
                     on_epoch=lambda r: log.info("%s epoch %d loss %.6g", cfg.name, r["epoch"], r["train_loss"]))
        checkpoint = snapshot(model, {"epoch": cfg.epochs, "seed": cfg.seed, "loss": cfg.loss})
        preds = model.predict(Xv)
    metrics = window_metrics(preds, Yv, cfg.metric_threshold)
    report = {
        "name": cfg.name,
        "config": cfg.to_dict(),
        "provenance": {"config_hash": cfg.config_hash(), "seed": cfg.seed, "version": __version__,
                       "input_channels": cfg.input_channels},
        "metrics": metrics,
        "curves": curves,
        "predictions_file": "predictions.npz",
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        origins = np.array([w.origin_index for w in split.validation])
        np.savez(out / "predictions.npz", predictions=preds, targets=Yv, origins=origins)
        _write_curves(curves, out / "curves.csv")
        if checkpoint is not None:
            save_checkpoint(checkpoint, out / "checkpoint.json")
        write_json(report, out / "report.json")
    report["_predictions"] = preds
    report["_targets"] = Yv
    return report


def write_json(obj, path):
    clean = {k: v for k, v in obj.items() if not k.startswith("_")}
    Path(path).write_text(json.dumps(clean, indent=2, sort_keys=True, allow_nan=True) + "\n")


# ---------------------------------------------------------------- matrices

LOSS_ROWS = (("RMSE", "rmse"), ("WRMSE", "wrmse"), ("SPV", "spv"), ("MPV", "mpv"))
FEATURE_ROWS = (("close", "none"), ("close+zigzag", "zigzag"), ("close+similarity", "similarity"),
                ("close+zigzag+similarity", "zigzag+similarity"))


def matrix_runs(matrix: dict) -> list:
    """Expand a matrix description into named run overrides."""
    kind = matrix.get("kind", "custom")
    if "runs" in matrix:
        return [dict(r) for r in matrix["runs"]]
    if kind == "loss":
        return [{"name": n, "loss": v} for n, v in LOSS_ROWS]
    if kind == "features":
        return [{"name": n, "features": v} for n, v in FEATURE_ROWS]
    if kind == "components":
        runs = []
        for cell in ("rnn", "lstm", "gru"):
            for att in (False, True):
                runs.append({"name": cell.upper() + ("+attention" if att else ""), "model": "seq2seq",
                             "cell": cell, "use_attention": att})
        return runs + [{"name": "ARIMA", "model": "arima"}, {"name": "ANN", "model": "ann"}]
    raise ConfigError(f"matrix.kind: expected loss, features or components (or explicit runs), got {kind!r}")


def matrix_configs(matrix: dict, seed=None) -> list:
    base = dict(matrix.get("base", {}))
    if seed is not None:
        base["seed"] = seed
    configs = []
    for i, overrides in enumerate(matrix_runs(matrix)):
        try:
            configs.append(ExperimentConfig.from_dict({**base, **overrides}))
        except ConfigError as exc:
            raise ConfigError(f"matrix.runs[{i}].{str(exc).removeprefix('config.')}") from None
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError(f"matrix.runs: configuration names must be unique, got {names}")
    if len(configs) < 2:
        raise ConfigError("matrix.runs: need at least two configurations")
    keys = {c.data_key() for c in configs}
    if len(keys) > 1:
        raise IncompatibleConfigs("configurations differ in data or split settings; one shared split is required")
    return configs


def _run_worker(args):
    cfg, out_dir, split = args
    report = run_experiment(cfg, out_dir, split)
    return report


def _shared_splits(configs):
    """One split per feature set, all derived from the same series and transform."""
    series = load_series(configs[0])
    splits = {}
    for cfg in configs:
        key = (cfg.model == "seq2seq" and cfg.features != "none", cfg.features)
        if key not in splits:
            splits[key] = prepare_split(cfg, series)
        yield splits[key]


def format_dm_cell(result) -> str:
    if result is None:
        return ""
    if isinstance(result, str):
        return result
    star = "*" if result.p_value < SIGNIFICANCE else ""
    return f"{result.statistic:.4f}{star}"


def dm_matrix(names, errors, h) -> dict:
    """Pairwise DM statistics; entry [r][c] tests column model (first) against row model (second).

    A negative entry means the row model has the larger errors.
    """
    n = len(names)
    stat = [[None] * n for _ in range(n)]
    pval = [[None] * n for _ in range(n)]
    for r in range(n):
        for c in range(n):
            if r == c:
                continue
            try:
                res = diebold_mariano(errors[c], errors[r], h=h)
            except (NonPositiveVariance, SeriesTooShort) as exc:
                log.info("DM %s vs %s undefined: %s", names[c], names[r], exc)
                continue
            stat[r][c], pval[r][c] = res.statistic, res.p_value
    return {"names": list(names), "h": h, "statistic": stat, "p_value": pval}


def table_rows(rows):
    return [[r["name"], repr(1e3 * r["pvrmse"]), repr(1e3 * r["pvmae"]), repr(r["smape"])] for r in rows]


def dm_rows(dm):
    out = [[""] + dm["names"]]
    for r, name in enumerate(dm["names"]):
        cells = []
        for c in range(len(dm["names"])):
            s, p = dm["statistic"][r][c], dm["p_value"][r][c]
            cells.append("" if r == c else ("undefined" if s is None else format_dm_cell(DmResult(s, p, dm["h"], 0))))
        out.append([name] + cells)
    return out


def _write_csv(rows, path):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    Path(path).write_text(buf.getvalue())


def run_matrix(matrix: dict, out_dir, jobs=1, seed=None) -> dict:
    """Run every configuration on one shared split and write the comparison table and DM matrix."""
    configs = matrix_configs(matrix, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, out / "runs" / cfg.name, split) for cfg, split in zip(configs, _shared_splits(configs))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_worker, tasks))
    else:
        reports = [_run_worker(t) for t in tasks]
    rows = [{"name": r["name"], **r["metrics"], "report": f"runs/{r['name']}/report.json"} for r in reports]
    errors = [window_errors(r["_predictions"], r["_targets"]) for r in reports]
    dm = dm_matrix([r["name"] for r in reports], errors, dm_horizon(configs[0].output_length))
    _write_csv([list(TABLE_COLUMNS)] + table_rows(rows), out / "table.csv")
    _write_csv(dm_rows(dm), out / "dm.csv")
    combined = {"kind": matrix.get("kind", "custom"), "rows": rows, "dm": dm,
                "table_file": "table.csv", "dm_file": "dm.csv",
                "provenance": {"version": __version__, "seed": configs[0].seed,
                               "config_hashes": {c.name: c.config_hash() for c in configs}}}
    write_json(combined, out / "matrix_report.json")
    return combined


# ---------------------------------------------------------------- verification

def _close(a, b):
    if a is None or b is None:
        return a is b
    if math.isnan(a) and math.isnan(b):
        return True
    return abs(a - b) <= TOLERANCE * max(1.0, abs(a), abs(b))


def _load_predictions(run_dir, report):
    with np.load(Path(run_dir) / report["predictions_file"]) as z:
        return z["predictions"], z["targets"]


def _verify_run(report_path):
    report = json.loads(Path(report_path).read_text())
    preds, targets = _load_predictions(Path(report_path).parent, report)
    threshold = report["config"]["metric_threshold"]
    fresh = window_metrics(preds, targets, threshold)
    problems = [f"{report_path}: metrics.{k} stored {report['metrics'][k]!r}, recomputed {v!r}"
                for k, v in fresh.items() if not _close(report["metrics"].get(k), v)]
    if report["curves"]:
        last = report["curves"][-1]
        if "val_pvrmse" in last and not _close(last["val_pvrmse"], fresh["pvrmse"]):
            problems.append(f"{report_path}: final curve val_pvrmse disagrees with predictions")
    return report, preds, targets, problems


def verify_report(path) -> list:
    """Recompute every metric in a run or matrix report from its stored predictions.

    Returns the list of mismatches (empty when the report is consistent).
    """
    path = Path(path)
    if path.is_dir():
        path = path / ("matrix_report.json" if (path / "matrix_report.json").exists() else "report.json")
    raw = json.loads(path.read_text())
    if "rows" not in raw:
        return _verify_run(path)[3]
    problems, errors, names, rows = [], [], [], []
    for row in raw["rows"]:
        report, preds, targets, found = _verify_run(path.parent / row["report"])
        problems += found
        names.append(row["name"])
        errors.append(window_errors(preds, targets))
        fresh = window_metrics(preds, targets, report["config"]["metric_threshold"])
        rows.append({"name": row["name"], **fresh})
        for k, v in fresh.items():
            if not _close(row.get(k), v):
                problems.append(f"{path}: row {row['name']} {k} stored {row.get(k)!r}, recomputed {v!r}")
    dm = dm_matrix(names, errors, raw["dm"]["h"])
    for key in ("statistic", "p_value"):
        for r, (stored_row, fresh_row) in enumerate(zip(raw["dm"][key], dm[key])):
            for c, (a, b) in enumerate(zip(stored_row, fresh_row)):
                if not _close(a, b):
                    problems.append(f"{path}: dm.{key}[{r}][{c}] stored {a!r}, recomputed {b!r}")
    expected = {raw["table_file"]: [list(TABLE_COLUMNS)] + table_rows(rows), raw["dm_file"]: dm_rows(dm)}
    for name, table in expected.items():
        with open(path.parent / name, newline="") as fh:
            stored = list(csv.reader(fh))
        if stored != [[str(c) for c in row] for row in table]:
            # numeric cells may differ in the last digit only if stored values drifted
            for r, (a, b) in enumerate(zip(stored, table)):
                for c, (x, y) in enumerate(zip(a, b)):
                    if x != str(y):
                        try:
                            ok = _close(float(x.rstrip("*")), float(str(y).rstrip("*")))
                        except ValueError:
                            ok = False
                        if not ok:
                            problems.append(f"{name}: cell [{r}][{c}] is {x!r}, recomputed {y!r}")
            if len(stored) != len(table):
                problems.append(f"{name}: {len(stored)} rows, expected {len(table)}")
    return problems


def load_run_model(run_dir):
    return model_from_checkpoint(load_checkpoint(Path(run_dir) / "checkpoint.json"))


def with_overrides(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    return replace(cfg, **kwargs)
