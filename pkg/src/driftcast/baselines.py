"""Comparison baselines and the Diebold-Mariano test.

ARIMA(0, 1, 0) without a constant is a driftless random walk, so its
multi-step forecast is the last observation repeated; it is computed in
closed form rather than fitted.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import stats

from . import autodiff as ad
from .errors import EmptyHistory, LengthMismatch, NonPositiveVariance, SeriesTooShort, ShapeMismatch


def arima_010_forecast(history, horizon: int = 16) -> np.ndarray:
    h = np.asarray(history, dtype=np.float64)
    if h.size == 0:
        raise EmptyHistory("persistence forecast needs at least one observation")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    return np.full(horizon, h[-1])


def persistence_predictions(X) -> np.ndarray:
    """Persistence forecasts for model inputs (N, L_in, C), horizon taken from ``X``'s caller."""
    return np.asarray(X)[:, -1, 0]


# ---------------------------------------------------------------- dense ANN

_ACTIVATIONS = {"relu": ad.relu, "sigmoid": ad.sigmoid, "tanh": ad.tanh, "linear": lambda a: a}


@dataclass
class AnnConfig:
    widths: tuple = (672, 128, 32, 16)
    hidden_activation: str = "relu"
    output_activation: str = "sigmoid"

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise ValueError(f"invalid ANN widths {self.widths}")
        for act in (self.hidden_activation, self.output_activation):
            if act not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    @property
    def output_length(self):
        return self.widths[-1]

    def to_dict(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("model", None)
        return cls(**d)


class Ann:
    """Fully connected network on the raw scaled close window (stacked features are ignored)."""

    kind = "ann"

    def __init__(self, config: AnnConfig = AnnConfig(), seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.params = OrderedDict()
        for k, (a, b) in enumerate(zip(config.widths, config.widths[1:])):
            bound = 1.0 / np.sqrt(a)
            self.params[f"dense{k}.W"] = ad.parameter(rng.uniform(-bound, bound, size=(a, b)), f"dense{k}.W")
            self.params[f"dense{k}.b"] = ad.parameter(rng.uniform(-bound, bound, size=(b,)), f"dense{k}.b")

    def parameters(self):
        return list(self.params.values())

    def named_parameters(self):
        return self.params

    def forward(self, X, targets=None, training=False, rng=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 3:
            X = X[:, :, 0]
        if X.ndim != 2 or X.shape[1] != self.config.widths[0]:
            raise ShapeMismatch("ann_forward", X.shape, (None, self.config.widths[0]))
        a = ad.Tensor(X)
        n_layers = len(self.config.widths) - 1
        for k in range(n_layers):
            a = ad.add(ad.matmul(a, self.params[f"dense{k}.W"]), self.params[f"dense{k}.b"])
            act = self.config.output_activation if k == n_layers - 1 else self.config.hidden_activation
            a = _ACTIVATIONS[act](a)
        return a

    def predict(self, X) -> np.ndarray:
        with ad.no_grad():
            return self.forward(X).data.copy()


def ann_forward(model: Ann, X) -> np.ndarray:
    return model.predict(X)


def ann_train(split, config: AnnConfig = AnnConfig(), settings=None, **overrides):
    """Train an :class:`Ann` on the close-price channel; returns ``(checkpoint, log)``."""
    from .training import TrainSettings, fit, snapshot, windows_to_arrays

    settings = replace(settings or TrainSettings(), **overrides)
    X, Y = windows_to_arrays(split.train)
    Xv, Yv = windows_to_arrays(split.validation) if split.validation else (X[:0], Y[:0])
    model = Ann(config, seed=settings.seed)
    log = fit(model, X, Y, Xv, Yv, settings)
    meta = {"epoch": settings.epochs, "seed": settings.seed, "loss": settings.loss}
    return snapshot(model, meta), log


def ann_from_checkpoint(checkpoint) -> Ann:
    from .training import restore

    return restore(Ann(AnnConfig.from_dict(checkpoint.config)), checkpoint)


# ---------------------------------------------------------------- Diebold-Mariano

@dataclass(frozen=True)
class DmResult:
    """Negative ``statistic``: the second error series (``errors_b``) is larger."""
    statistic: float
    p_value: float
    h: int
    n: int


def dm_horizon(output_length: int) -> int:
    """floor(L ** (1/3)) + 1, e.g. 3 for a 16-step forecast."""
    return int(math.floor(output_length ** (1.0 / 3.0) + 1e-9)) + 1


def diebold_mariano(errors_a, errors_b, h: int = 3, harvey: bool = False) -> DmResult:
    """DM test on the squared-error differential ``errors_a**2 - errors_b**2``.

    The long-run variance uses autocovariances up to lag ``h - 1``. With
    ``harvey=True`` the small-sample correction is applied and the p-value
    comes from Student's t with n - 1 degrees of freedom.
    """
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"error series shapes differ: {a.shape} vs {b.shape}")
    n = a.size
    if n < 10:
        raise SeriesTooShort(f"Diebold-Mariano needs at least 10 observations, got {n}")
    if h < 1:
        raise ValueError(f"h must be >= 1, got {h}")
    d = a * a - b * b
    dbar = d.mean()
    dc = d - dbar
    gamma = [float(np.dot(dc[k:], dc[:n - k]) / n) for k in range(h)]
    var = gamma[0] + 2.0 * sum(gamma[1:])
    scale = float(np.mean(d * d))
    # a constant differential leaves only rounding noise in the variance
    if not var > 1e-20 * scale or var <= 0.0:
        raise NonPositiveVariance(f"long-run variance {var!r} is not positive; the statistic is undefined")
    stat = dbar / math.sqrt(var / n)
    if harvey:
        stat *= math.sqrt((n + 1 - 2 * h + h * (h - 1) / n) / n)
        p = float(2.0 * stats.t.sf(abs(stat), df=n - 1))
    else:
        p = math.erfc(abs(stat) / math.sqrt(2.0))
    return DmResult(statistic=float(stat), p_value=float(p), h=h, n=n)


def window_errors(preds, targets) -> np.ndarray:
    """One error per forecast window: the window's RMSE, so squared errors are window MSEs."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    return np.sqrt(np.mean((preds - targets) ** 2, axis=1))
