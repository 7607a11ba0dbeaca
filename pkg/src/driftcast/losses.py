"""Training losses (RMSE, SPV, MPV, WRMSE) and peak/valley evaluation metrics.

Losses take a prediction :class:`~driftcast.autodiff.Tensor` of shape (L,)
or (B, L) and a constant target array of the same shape, and return a scalar
tensor. For batches the loss is the mean of the per-row losses.

SPV and MPV scale the RMSE by a penalty factor built from integer pivot
positions. Those positions are piecewise constant in the prediction, so the
factor is computed from the current values and held constant in the backward
pass.

Pivot-based quantities work on min-max scaled values, which can touch 0;
zigzag is therefore run on ``values + 1`` (see :data:`PIVOT_OFFSET`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import EmptySequence, LengthMismatch, NoPivotsAtAll
from .zigzag import PivotKind, extract_pivots

DEFAULT_PIVOT_THRESHOLD = 0.0063
PIVOT_OFFSET = 1.0


@dataclass(frozen=True)
class SpvParams:
    alpha: float = 0.5
    beta: float = 0.5


@dataclass(frozen=True)
class MpvParams:
    k: int = 3
    alphas: tuple = (0.3, 0.15, 0.05)
    betas: tuple = (0.3, 0.15, 0.05)
    zigzag_threshold: float = DEFAULT_PIVOT_THRESHOLD

    def __post_init__(self):
        if not (self.k == len(self.alphas) == len(self.betas)):
            raise ValueError(f"MPV needs k == len(alphas) == len(betas), got {self.k}, {self.alphas}, {self.betas}")
        if any(c < 0 for c in (*self.alphas, *self.betas)):
            raise ValueError("MPV coefficients must be non-negative")


@dataclass(frozen=True)
class LossParams:
    spv: SpvParams = field(default_factory=SpvParams)
    mpv: MpvParams = field(default_factory=MpvParams)
    normalize_positions: bool = False

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        mpv = dict(d.get("mpv", {}))
        for key in ("alphas", "betas"):
            if key in mpv:
                mpv[key] = tuple(mpv[key])
        return cls(spv=SpvParams(**d.get("spv", {})), mpv=MpvParams(**mpv),
                   normalize_positions=bool(d.get("normalize_positions", False)))

    def to_dict(self):
        return {
            "spv": {"alpha": self.spv.alpha, "beta": self.spv.beta},
            "mpv": {"k": self.mpv.k, "alphas": list(self.mpv.alphas), "betas": list(self.mpv.betas),
                    "zigzag_threshold": self.mpv.zigzag_threshold},
            "normalize_positions": self.normalize_positions,
        }


@dataclass(frozen=True)
class PairedPivots:
    """Peaks and valleys of prediction and target, paired in order of occurrence.

    Each pair is ``((pred_index, pred_value), (target_index, target_value))``.
    """
    peaks: tuple
    valleys: tuple

    @property
    def M(self):
        return len(self.peaks)

    @property
    def N(self):
        return len(self.valleys)


def _check_pair(pred, target, min_len=1):
    p = np.asarray(pred.data if isinstance(pred, ad.Tensor) else pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise LengthMismatch(f"prediction shape {p.shape} != target shape {t.shape}")
    if p.ndim == 0 or p.shape[-1] == 0:
        raise EmptySequence(f"need non-empty sequences, got shape {p.shape}")
    if p.shape[-1] < min_len:
        raise LengthMismatch(f"sequences need length >= {min_len}, got shape {p.shape}")
    return p, t


def kind_points(values, threshold=DEFAULT_PIVOT_THRESHOLD):
    """(peak_indices, valley_indices) from zigzag, each falling back to the global arg-extremum."""
    v = np.asarray(values, dtype=np.float64)
    pivots = extract_pivots(v, threshold, offset=PIVOT_OFFSET)
    peaks = [p.index for p in pivots if p.kind == PivotKind.PEAK]
    valleys = [p.index for p in pivots if p.kind == PivotKind.VALLEY]
    if not peaks:
        peaks = [int(np.argmax(v))]
    if not valleys:
        valleys = [int(np.argmin(v))]
    return peaks, valleys


def pair_pivots(pred, target, threshold=DEFAULT_PIVOT_THRESHOLD, limit=None) -> PairedPivots:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    pp, pv = kind_points(p, threshold)
    tp, tv = kind_points(t, threshold)

    def zip_kind(a, b):
        n = min(len(a), len(b)) if limit is None else min(len(a), len(b), limit)
        return tuple(((a[i], float(p[a[i]])), (b[i], float(t[b[i]]))) for i in range(n))

    return PairedPivots(zip_kind(pp, tp), zip_kind(pv, tv))


# ---------------------------------------------------------------- penalty factors

def spv_factor(pred, target, params: SpvParams = SpvParams(), normalize_positions=False) -> float:
    p, t = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    pd = abs(int(np.argmax(p)) - int(np.argmax(t)))
    vd = abs(int(np.argmin(p)) - int(np.argmin(t)))
    scale = 1.0 / (p.size - 1) if normalize_positions else 1.0
    return 1.0 + scale * (params.alpha * pd + params.beta * vd)


def mpv_factor(pred, target, params: MpvParams = MpvParams(), normalize_positions=False) -> float:
    pairs = pair_pivots(pred, target, params.zigzag_threshold, limit=params.k)
    scale = 1.0 / (len(pred) - 1) if normalize_positions else 1.0
    total = 0.0
    for i, ((pi, _), (ti, _)) in enumerate(pairs.peaks):
        total += params.alphas[i] * abs(pi - ti)
    for i, ((pi, _), (ti, _)) in enumerate(pairs.valleys):
        total += params.betas[i] * abs(pi - ti)
    return 1.0 + scale * total


# ---------------------------------------------------------------- losses

def _row_rmse(pred, target):
    diff = ad.sub(pred, target)
    return ad.sqrt(ad.mean(ad.square(diff), axis=-1))


def _batch_mean(per_row, factors=None):
    if factors is not None:
        per_row = ad.mul(per_row, np.asarray(factors, dtype=np.float64).reshape(per_row.shape))
    return ad.mean(per_row) if per_row.ndim else per_row


def rmse(pred, target) -> ad.Tensor:
    _check_pair(pred, target, 1)
    return _batch_mean(_row_rmse(ad.as_tensor(pred), np.asarray(target, dtype=np.float64)))


def _rows(a):
    return a.reshape(1, -1) if a.ndim == 1 else a


def spv_loss(pred, target, params: LossParams = LossParams()) -> ad.Tensor:
    p, t = _check_pair(pred, target, 2)
    factors = [spv_factor(pr, tr, params.spv, params.normalize_positions) for pr, tr in zip(_rows(p), _rows(t))]
    return _batch_mean(_row_rmse(ad.as_tensor(pred), t), factors if p.ndim > 1 else factors[0])


def mpv_loss(pred, target, params: LossParams = LossParams()) -> ad.Tensor:
    p, t = _check_pair(pred, target, 2)
    factors = [mpv_factor(pr, tr, params.mpv, params.normalize_positions) for pr, tr in zip(_rows(p), _rows(t))]
    return _batch_mean(_row_rmse(ad.as_tensor(pred), t), factors if p.ndim > 1 else factors[0])


def wrmse_loss(pred, target, params: LossParams = None) -> ad.Tensor:
    """sqrt(mean((pred - y)**2 * (y - mean(y))**2)); 0 whenever the target is constant."""
    _, t = _check_pair(pred, target, 1)
    weights = (t - t.mean(axis=-1, keepdims=True)) ** 2
    # the mean of a constant row can differ from its entries by rounding
    weights = np.where(np.ptp(t, axis=-1, keepdims=True) == 0, 0.0, weights)
    diff = ad.sub(ad.as_tensor(pred), t)
    return _batch_mean(ad.sqrt(ad.mean(ad.mul(ad.square(diff), weights), axis=-1)))


LOSSES = {
    "rmse": lambda pred, target, params=None: rmse(pred, target),
    "wrmse": wrmse_loss,
    "spv": spv_loss,
    "mpv": mpv_loss,
}


def compute_loss(name, pred, target, params: LossParams = LossParams()) -> ad.Tensor:
    try:
        fn = LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; choose from {sorted(LOSSES)}") from None
    return fn(pred, target, params)


# ---------------------------------------------------------------- metrics

def _pv_errors(pred, target, threshold):
    p, t = _check_pair(pred, target, 2)
    if p.ndim != 1:
        raise LengthMismatch("peak/valley metrics take single sequences")
    pairs = pair_pivots(p, t, threshold)
    errs = [pv - tv for (_, pv), (_, tv) in pairs.peaks + pairs.valleys]
    if not errs:
        raise NoPivotsAtAll("no peak or valley pairs")
    return np.asarray(errs)


def pvrmse(pred, target, zigzag_threshold=DEFAULT_PIVOT_THRESHOLD) -> float:
    e = _pv_errors(pred, target, zigzag_threshold)
    return float(np.sqrt(np.mean(e * e)))


def pvmae(pred, target, zigzag_threshold=DEFAULT_PIVOT_THRESHOLD) -> float:
    e = _pv_errors(pred, target, zigzag_threshold)
    return float(np.mean(np.abs(e)))


def smape(pred, target) -> float:
    """Symmetric MAPE in percent, bounded by [0, 200]; 0/0 terms count as 0."""
    p, t = _check_pair(pred, target, 1)
    num = 2.0 * np.abs(p - t)
    den = np.abs(p) + np.abs(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(den > 0, num / den, 0.0)
    return float(100.0 * terms.mean())


def window_metrics(preds, targets, zigzag_threshold=DEFAULT_PIVOT_THRESHOLD) -> dict:
    """Mean per-window PVRMSE, PVMAE, SMAPE and RMSE over aligned (W, L) arrays."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    rows = list(zip(preds, targets))
    return {
        "pvrmse": float(np.mean([pvrmse(p, t, zigzag_threshold) for p, t in rows])),
        "pvmae": float(np.mean([pvmae(p, t, zigzag_threshold) for p, t in rows])),
        "smape": float(np.mean([smape(p, t) for p, t in rows])),
        "rmse": float(np.mean([np.sqrt(np.mean((p - t) ** 2)) for p, t in rows])),
    }
