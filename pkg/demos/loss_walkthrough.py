# How the pivot-aware losses differ from plain RMSE on one 16-step forecast.
#
# Run with: python demos/loss_walkthrough.py

import numpy as np

from driftcast.losses import (mpv_factor, mpv_loss, pair_pivots, pvmae, pvrmse, rmse, smape, spv_factor, spv_loss,
                              wrmse_loss)

t = np.linspace(0, 2 * np.pi, 16)
target = 0.5 + 0.3 * np.sin(t)

# Two forecasts: one shifted in level, one shifted in time. The level shift keeps
# the turning points in place and pays no penalty; the lag misplaces them and
# its RMSE is multiplied by the displacement penalty.

level = target + 0.05
lagged = 0.5 + 0.3 * np.sin(t - 0.8)

for name, pred in (("level shift", level), ("time lag", lagged)):
    print(f"{name:12s} rmse {rmse(pred, target).item():.4f}  spv {spv_loss(pred, target).item():.4f} "
          f"(x{spv_factor(pred, target):.2f})  mpv {mpv_loss(pred, target).item():.4f} "
          f"(x{mpv_factor(pred, target):.2f})  wrmse {wrmse_loss(pred, target).item():.4f}")

# The evaluation metrics pair peaks and valleys in order of occurrence and compare
# their values only. A level shift scores its offset; the lag keeps the peak
# heights, so it scores near zero even though it is late.

pairs = pair_pivots(lagged, target)
print("lagged forecast peak pairs", pairs.peaks, "valley pairs", pairs.valleys)
for name, pred in (("level shift", level), ("time lag", lagged)):
    print(f"{name:12s} pvrmse {pvrmse(pred, target):.4f}  pvmae {pvmae(pred, target):.4f}  "
          f"smape {smape(pred, target):.2f}")
