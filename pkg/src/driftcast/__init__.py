"""Peak/valley-aware forecasting of non-stationary price series.

The package is organised by pipeline stage:

``driftcast.data``       CSV ingestion, scaling, windowing, splitting
``driftcast.patterns``   DTW similarity against shape templates
``driftcast.zigzag``     zigzag peak/valley pivots and features
``driftcast.autodiff``   numpy tensors with reverse-mode gradients and Adam
``driftcast.seq2seq``    bidirectional encoder / attention decoder model
``driftcast.losses``     RMSE, SPV, MPV, WRMSE losses and PV metrics
``driftcast.baselines``  persistence (ARIMA(0,1,0)), dense ANN, Diebold-Mariano
``driftcast.experiment`` config-driven runs, comparison tables, verification
"""

__version__ = "0.1.0"
