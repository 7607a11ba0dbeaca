"""Synthetic price generators for tests and demos.

``synthetic_closes`` layers three components in log-price space: a slow
random walk, sine regimes whose period and amplitude change at random
boundaries, and template shapes injected at random positions. The
regimes make the series forecastable beyond persistence while the walk
keeps it non-stationary.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np

from .data import OhlcvRecord, PriceSeries
from .patterns import default_templates, sample_template

DEFAULT_WALK_SIGMA = 0.0022


def random_walk(length=672, sigma=DEFAULT_WALK_SIGMA, seed=None, start=100.0) -> np.ndarray:
    """Geometric Gaussian random walk of ``length`` prices starting at ``start``."""
    rng = np.random.default_rng(seed)
    steps = rng.normal(0.0, sigma, size=length - 1)
    return start * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))


def _sine_regimes(rng, length, periods, amplitudes, regime_lengths):
    out = np.empty(length)
    phase = rng.uniform(0, 2 * np.pi)
    pos = 0
    while pos < length:
        n = min(int(rng.integers(*regime_lengths)), length - pos)
        period = rng.uniform(*periods)
        amp = rng.uniform(*amplitudes)
        t = np.arange(n)
        out[pos:pos + n] = amp * np.sin(phase + 2 * np.pi * t / period)
        phase += 2 * np.pi * n / period
        pos += n
    return out


def _injected_patterns(rng, length, count, sizes, amplitudes):
    out = np.zeros(length)
    templates = default_templates()
    for _ in range(count):
        size = int(rng.integers(*sizes))
        if size >= length:
            continue
        start = int(rng.integers(0, length - size))
        shape = sample_template(templates[int(rng.integers(len(templates)))], size)
        bump = rng.uniform(*amplitudes) * (shape - shape[0])
        out[start:start + size] += bump
        out[start + size:] += bump[-1]
    return out


def synthetic_closes(length=5000, seed=0, *, walk_sigma=0.0004, periods=(40.0, 96.0),
                     amplitudes=(0.01, 0.025), regime_lengths=(400, 1200), pattern_count=None,
                     pattern_sizes=(48, 193), pattern_amplitudes=(0.005, 0.015), start=100.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if pattern_count is None:
        pattern_count = length // 250
    log_price = np.cumsum(rng.normal(0.0, walk_sigma, size=length))
    log_price += _sine_regimes(rng, length, periods, amplitudes, regime_lengths)
    log_price += _injected_patterns(rng, length, pattern_count, pattern_sizes, pattern_amplitudes)
    return start * np.exp(log_price - log_price[0])


def to_price_series(closes, seed=0, instrument="SYNTH", wick=0.0005) -> PriceSeries:
    """Wrap closes into OHLCV records: open is the previous close, wicks extend the body."""
    rng = np.random.default_rng([seed, 7])
    closes = np.asarray(closes, dtype=np.float64)
    opens = np.concatenate([[closes[0]], closes[:-1]])
    up = 1.0 + np.abs(rng.normal(0.0, wick, size=closes.size))
    down = 1.0 - np.abs(rng.normal(0.0, wick, size=closes.size))
    highs = np.maximum(opens, closes) * up
    lows = np.minimum(opens, closes) * down
    volumes = rng.integers(100, 5000, size=closes.size)
    base = datetime(2015, 1, 1, tzinfo=timezone.utc)
    step = timedelta(minutes=15)
    records = tuple(
        OhlcvRecord(base + i * step, float(o), float(h), float(lo), float(c), float(v))
        for i, (o, h, lo, c, v) in enumerate(zip(opens, highs, lows, closes, volumes))
    )
    return PriceSeries(records, instrument)


def synthetic_price_series(length=5000, seed=0, instrument="SYNTH", **kwargs) -> PriceSeries:
    return to_price_series(synthetic_closes(length, seed, **kwargs), seed=seed, instrument=instrument)
