"""Zigzag peak/valley pivots from relative reversal thresholds.

The extractor is a single-pass reversal automaton. It waits until price has
moved ``threshold`` (relative) away from the first value to learn the initial
direction, then tracks the running extremum of the current leg. A retrace of
at least ``threshold`` relative to that extremum confirms the extremum as a
pivot and flips the direction. Endpoints are never emitted: the first value
only seeds the direction and the final leg is unconfirmed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import SeriesTooShort

DEFAULT_THRESHOLDS = (0.0063, 0.007, 0.008, 0.0097, 0.012, 0.015, 0.0163, 0.0288)
EPS = 1e-12


class PivotKind(IntEnum):
    PEAK = 0
    VALLEY = 1


# feature classes, in channel order
PEAK, VALLEY, OTHER = 0, 1, 2


@dataclass(frozen=True)
class Pivot:
    index: int
    kind: PivotKind
    value: float


@dataclass(frozen=True)
class ZigzagConfig:
    thresholds: tuple = DEFAULT_THRESHOLDS

    def __post_init__(self):
        for t in self.thresholds:
            if not 0.0 < t < 1.0:
                raise ValueError(f"zigzag thresholds must lie in (0, 1), got {t}")


def _pivot_indices(x, threshold):
    x = x.tolist()
    n = len(x)
    first = x[0]
    denom0 = max(abs(first), EPS)
    start = None
    up = True
    for i in range(1, n):
        move = (x[i] - first) / denom0
        if move >= threshold:
            start, up = i, True
            break
        if -move >= threshold:
            start, up = i, False
            break
    if start is None:
        return []

    out = []
    ext_i, ext_v = start, x[start]
    for i in range(start + 1, n):
        v = x[i]
        if up:
            if v > ext_v:
                ext_i, ext_v = i, v
            elif (ext_v - v) / max(abs(ext_v), EPS) >= threshold:
                out.append((ext_i, PivotKind.PEAK))
                up = False
                ext_i, ext_v = i, v
        else:
            if v < ext_v:
                ext_i, ext_v = i, v
            elif (v - ext_v) / max(abs(ext_v), EPS) >= threshold:
                out.append((ext_i, PivotKind.VALLEY))
                up = True
                ext_i, ext_v = i, v
    return out


def extract_pivots(series, threshold: float, offset: float = 0.0) -> list:
    """Alternating peak/valley pivots of ``series`` at a relative ``threshold``.

    ``offset`` is added before thresholding. Min-max scaled data touches zero,
    where relative moves are meaningless, so callers working on scaled values
    pass ``offset=1.0``. Reported pivot values are the unshifted inputs.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise SeriesTooShort(f"zigzag needs at least 2 values, got shape {x.shape}")
    if not 0.0 < threshold:
        raise ValueError(f"threshold must be positive, got {threshold}")
    shifted = x + offset if offset else x
    return [Pivot(i, kind, float(x[i])) for i, kind in _pivot_indices(shifted, threshold)]


def split_kinds(pivots):
    """Peak and valley pivots, each in temporal order."""
    peaks = [p for p in pivots if p.kind == PivotKind.PEAK]
    valleys = [p for p in pivots if p.kind == PivotKind.VALLEY]
    return peaks, valleys


def pivot_classes(length, pivots) -> np.ndarray:
    """Per-step class labels: PEAK, VALLEY or OTHER."""
    labels = np.full(length, OTHER, dtype=np.int64)
    for p in pivots:
        labels[p.index] = PEAK if p.kind == PivotKind.PEAK else VALLEY
    return labels


def build_zigzag_features(values, config: ZigzagConfig = ZigzagConfig(), offset: float = 0.0) -> np.ndarray:
    """One-hot (peak, valley, other) blocks, one per threshold, shape (3 * len(thresholds), L)."""
    x = np.asarray(values, dtype=np.float64)
    out = np.zeros((3 * len(config.thresholds), x.size))
    cols = np.arange(x.size)
    for b, t in enumerate(config.thresholds):
        labels = pivot_classes(x.size, extract_pivots(x, t, offset=offset))
        out[3 * b + labels, cols] = 1.0
    return out
