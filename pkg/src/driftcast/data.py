"""OHLCV ingestion, close-price scaling, sliding windows and the train/validation split."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import (
    ConstantSeries,
    DuplicateTimestamp,
    MalformedRow,
    NonPositivePrice,
    OhlcOrderViolation,
    SeriesTooShort,
    TooFewWindows,
)

COLUMNS = ("timestamp", "open", "high", "low", "close", "volume")

DEFAULT_INPUT_LENGTH = 672
DEFAULT_OUTPUT_LENGTH = 16
DEFAULT_STRIDE = 16
DEFAULT_TRAIN_RATIO = 0.9


@dataclass(frozen=True)
class OhlcvRecord:
    timestamp: datetime
    open: float
    high: float
    low: float
    close: float
    volume: float

    def validate(self):
        prices = (self.open, self.high, self.low, self.close)
        if not all(math.isfinite(p) and p > 0 for p in prices):
            raise NonPositivePrice(f"{self.timestamp.isoformat()}: prices must be finite and > 0, got {prices}")
        if not (math.isfinite(self.volume) and self.volume >= 0):
            raise NonPositivePrice(f"{self.timestamp.isoformat()}: volume must be finite and >= 0")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise OhlcOrderViolation(
                f"{self.timestamp.isoformat()}: need low <= min(open, close) and high >= max(open, close)"
            )


@dataclass(frozen=True)
class PriceSeries:
    records: tuple
    instrument: str = ""

    def __post_init__(self):
        for prev, cur in zip(self.records, self.records[1:]):
            if cur.timestamp <= prev.timestamp:
                raise DuplicateTimestamp(None, cur.timestamp.isoformat())

    def __len__(self):
        return len(self.records)

    @property
    def closes(self) -> np.ndarray:
        return np.array([r.close for r in self.records], dtype=np.float64)

    @classmethod
    def from_closes(cls, closes, instrument="", start=None, step_minutes=15):
        """Build a series from close prices alone; open/high/low are set to the close."""
        start = start or datetime(2015, 1, 1, tzinfo=timezone.utc)
        base = start.timestamp()
        records = []
        for i, c in enumerate(np.asarray(closes, dtype=np.float64)):
            ts = datetime.fromtimestamp(base + 60.0 * step_minutes * i, tz=timezone.utc)
            rec = OhlcvRecord(ts, float(c), float(c), float(c), float(c), 0.0)
            rec.validate()
            records.append(rec)
        return cls(tuple(records), instrument)


@dataclass(frozen=True)
class ScaleTransform:
    minimum: float
    maximum: float

    def __post_init__(self):
        if not self.maximum > self.minimum:
            raise ConstantSeries(f"scale needs maximum > minimum, got [{self.minimum}, {self.maximum}]")

    @property
    def span(self):
        return self.maximum - self.minimum

    def forward(self, values):
        return (np.asarray(values, dtype=np.float64) - self.minimum) / self.span

    def inverse(self, scaled):
        return np.asarray(scaled, dtype=np.float64) * self.span + self.minimum


@dataclass(eq=False)
class WindowPair:
    input: np.ndarray
    target: np.ndarray
    origin_index: int
    features: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.features is None:
            self.features = np.zeros((0, len(self.input)))

    def model_input(self) -> np.ndarray:
        """Channel matrix (1 + C, L_in): scaled close on channel 0, stacked features below."""
        return np.vstack([self.input[None, :], self.features])


@dataclass(eq=False)
class DatasetSplit:
    train: list
    validation: list


def _parse_timestamp(text):
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_csv(path, schema=None, instrument=None) -> PriceSeries:
    """Read an OHLCV CSV file into a validated :class:`PriceSeries`.

    ``schema`` maps the canonical column names (``timestamp``, ``open``, ...)
    to the header names used in the file; unmapped columns are looked up
    under their canonical name. Rows are returned sorted by timestamp.
    """
    path = Path(path)
    schema = dict(schema or {})
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedRow(1, "missing header row") from None
        index = {}
        for col in COLUMNS:
            name = schema.get(col, col)
            if name not in header:
                raise MalformedRow(1, f"column {name!r} not found in header {header}")
            index[col] = header.index(name)

        rows = []
        seen = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                ts = _parse_timestamp(row[index["timestamp"]])
                values = [float(row[index[c]]) for c in COLUMNS[1:]]
            except (IndexError, ValueError) as exc:
                raise MalformedRow(lineno, str(exc)) from None
            if ts in seen:
                raise DuplicateTimestamp(lineno, ts.isoformat())
            seen[ts] = lineno
            rec = OhlcvRecord(ts, *values)
            try:
                rec.validate()
            except (NonPositivePrice, OhlcOrderViolation) as exc:
                raise type(exc)(f"line {lineno}: {exc}") from None
            rows.append(rec)

    rows.sort(key=lambda r: r.timestamp)
    return PriceSeries(tuple(rows), instrument if instrument is not None else path.stem)


def write_csv(series: PriceSeries, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for r in series.records:
            writer.writerow([r.timestamp.isoformat().replace("+00:00", "Z"),
                             repr(r.open), repr(r.high), repr(r.low), repr(r.close), repr(r.volume)])


def _closes(series):
    if isinstance(series, PriceSeries):
        return series.closes
    return np.asarray(series, dtype=np.float64)


def fit_scale(series, train_fraction: float = 1.0) -> ScaleTransform:
    """Min-max transform from the closes of the first ``train_fraction`` of the records."""
    closes = _closes(series)
    if closes.size == 0:
        raise SeriesTooShort("cannot fit a scale on an empty series")
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train_fraction must be in (0, 1], got {train_fraction}")
    n = max(1, int(math.floor(train_fraction * closes.size + 1e-9)))
    prefix = closes[:n]
    lo, hi = float(prefix.min()), float(prefix.max())
    if hi == lo:
        raise ConstantSeries(f"training prefix of {n} closes is constant at {lo}")
    return ScaleTransform(lo, hi)


def apply_scale(transform: ScaleTransform, values) -> np.ndarray:
    return transform.forward(values)


def slice_windows(series, transform: ScaleTransform, input_length=DEFAULT_INPUT_LENGTH,
                  output_length=DEFAULT_OUTPUT_LENGTH, stride=DEFAULT_STRIDE) -> list:
    """Cut the scaled close series into consecutive (input, target) pairs.

    Origins run 0, stride, 2*stride, ... while the pair still fits.
    """
    if stride < 1 or input_length < 1 or output_length < 1:
        raise ValueError("lengths and stride must be >= 1")
    scaled = transform.forward(_closes(series))
    span = input_length + output_length
    if scaled.size < span:
        raise SeriesTooShort(f"series of length {scaled.size} is shorter than {span}")
    windows = []
    for origin in range(0, scaled.size - span + 1, stride):
        windows.append(WindowPair(
            input=scaled[origin:origin + input_length].copy(),
            target=scaled[origin + input_length:origin + span].copy(),
            origin_index=origin,
        ))
    return windows


def split_train_val(windows, ratio=DEFAULT_TRAIN_RATIO) -> DatasetSplit:
    """Chronological split; the first floor(ratio * N) windows train."""
    if len(windows) < 2:
        raise TooFewWindows(f"need at least 2 windows, got {len(windows)}")
    n_train = int(math.floor(ratio * len(windows) + 1e-9))
    n_train = min(max(n_train, 1), len(windows) - 1)
    ordered = sorted(windows, key=lambda w: w.origin_index)
    return DatasetSplit(train=ordered[:n_train], validation=ordered[n_train:])
