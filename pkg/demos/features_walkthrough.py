# Stacked input features for one window of the bundled synthetic series.
#
# Run with: python demos/features_walkthrough.py

import numpy as np

from driftcast.data import fit_scale, slice_windows, split_train_val
from driftcast.patterns import DEFAULT_WINDOW_SIZES, build_similarity_features, default_templates
from driftcast.synthetic import synthetic_price_series
from driftcast.zigzag import DEFAULT_THRESHOLDS, build_zigzag_features, extract_pivots

# A 5,000-bar synthetic series: a slow walk with sine regimes and injected chart patterns.

series = synthetic_price_series(5000, seed=0)
closes = series.closes
print(f"{len(series)} bars, close range {closes.min():.3f} to {closes.max():.3f}")

# Scaling is fitted on the training prefix only, then windows of 672 inputs and 16 targets are cut.

transform = fit_scale(series, 0.9)
windows = slice_windows(series, transform, 672, 16, 16)
split = split_train_val(windows)
print(f"{len(split.train)} training windows, {len(split.validation)} validation windows")

# Zigzag pivots on the raw closes of the first window, at every default threshold.
# Larger thresholds keep only the bigger swings, so the counts never rise.

raw = closes[:672]
for t in DEFAULT_THRESHOLDS:
    print(f"threshold {t:.4f}: {len(extract_pivots(raw, t)):3d} pivots")

# The zigzag block is one-hot (peak, valley, other) per threshold: 8 x 3 = 24 rows.

zz = build_zigzag_features(raw)
print("zigzag features", zz.shape)

# Pattern similarity: every sub-window is matched against the 13 templates by DTW
# and the best match is broadcast over the sub-window as a one-hot row.

sim = build_similarity_features(split.train[0].input)
print("similarity features", sim.shape, "from window sizes", DEFAULT_WINDOW_SIZES)
names = [t.name for t in default_templates()]
best = sim[:13].argmax(axis=0)[0]
print("whole-window best template:", names[best])

# Stacked with the scaled close, the model sees 1 + 24 + 78 = 103 channels.

stacked = np.vstack([split.train[0].input[None, :], zz, sim])
print("stacked input", stacked.shape)
