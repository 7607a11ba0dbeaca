"""Mini-batch training loop and JSON checkpoints shared by the seq2seq model and the ANN."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import CorruptCheckpoint, EmptyDataset, NonFiniteLoss, VersionMismatch
from .losses import DEFAULT_PIVOT_THRESHOLD, LossParams, compute_loss, window_metrics

CHECKPOINT_VERSION = 1
LOG_FIELDS = ("epoch", "train_loss", "val_pvrmse", "val_pvmae", "val_smape")


@dataclass
class TrainSettings:
    loss: str = "mpv"
    epochs: int = 150
    batch_size: int = 128
    learning_rate: float = 1e-4
    seed: int = 0
    loss_params: LossParams = field(default_factory=LossParams)
    metric_threshold: float = DEFAULT_PIVOT_THRESHOLD


@dataclass
class Checkpoint:
    config: dict
    parameters: dict
    metadata: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def to_json(self):
        return {
            "version": self.version,
            "config": self.config,
            "metadata": self.metadata,
            "parameters": {
                name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
                for name, arr in self.parameters.items()
            },
        }


def windows_to_arrays(windows):
    """Stack windows into model inputs (N, L_in, 1 + C) and targets (N, L_out)."""
    if not windows:
        raise EmptyDataset("no windows")
    X = np.stack([w.model_input().T for w in windows])
    Y = np.stack([w.target for w in windows])
    return X, Y


def snapshot(model, metadata=None) -> Checkpoint:
    config = model.config.to_dict()
    config["model"] = model.kind
    params = {name: p.data.copy() for name, p in model.named_parameters().items()}
    return Checkpoint(config=config, parameters=params, metadata=dict(metadata or {}))


def save_checkpoint(checkpoint: Checkpoint, path):
    # float repr is the shortest string that round-trips the 64-bit value exactly
    Path(path).write_text(json.dumps(checkpoint.to_json(), allow_nan=False))


def load_checkpoint(path) -> Checkpoint:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"{path}: not valid JSON ({exc})") from None
    version = raw.get("version")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"checkpoint version {version!r}, this build reads {CHECKPOINT_VERSION}")
    try:
        params = {}
        for name, entry in raw["parameters"].items():
            shape = tuple(int(s) for s in entry["shape"])
            data = np.asarray(entry["data"], dtype=np.float64)
            if data.size != math.prod(shape):
                raise CorruptCheckpoint(f"parameter {name}: {data.size} values for shape {shape}")
            params[name] = data.reshape(shape)
        return Checkpoint(config=raw["config"], parameters=params, metadata=raw.get("metadata", {}),
                          version=version)
    except KeyError as exc:
        raise CorruptCheckpoint(f"missing field {exc}") from None


def restore(model, checkpoint: Checkpoint):
    """Copy checkpoint values into ``model``; every declared parameter must match exactly once."""
    declared = model.named_parameters()
    if set(declared) != set(checkpoint.parameters):
        missing = sorted(set(declared) - set(checkpoint.parameters))
        extra = sorted(set(checkpoint.parameters) - set(declared))
        raise CorruptCheckpoint(f"parameter names differ; missing {missing}, unexpected {extra}")
    for name, p in declared.items():
        value = checkpoint.parameters[name]
        if value.shape != p.shape:
            raise CorruptCheckpoint(f"parameter {name}: shape {value.shape}, model declares {p.shape}")
        p.data = value.copy()
    return model


def fit(model, train_X, train_Y, val_X, val_Y, settings: TrainSettings, on_epoch=None):
    """Train ``model`` in place; returns the per-epoch log (list of dicts).

    Randomness (batch order, dropout, teacher forcing) comes from a generator
    seeded by ``settings.seed``, so identical inputs give identical runs.
    """
    if len(train_X) == 0:
        raise EmptyDataset("training set is empty")
    rng = np.random.default_rng([settings.seed, 1])
    opt = ad.Adam(model.parameters(), lr=settings.learning_rate)
    log = []
    n = len(train_X)
    for epoch in range(1, settings.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for b, start in enumerate(range(0, n, settings.batch_size)):
            idx = order[start:start + settings.batch_size]
            pred = model.forward(train_X[idx], targets=train_Y[idx], training=True, rng=rng)
            loss = compute_loss(settings.loss, pred, train_Y[idx], settings.loss_params)
            value = loss.item()
            if not math.isfinite(value):
                ad.current_tape().clear()
                raise NonFiniteLoss(epoch, b, value)
            ad.backward(loss)
            opt.step()
            losses.append(value)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if len(val_X):
            m = window_metrics(model.predict(val_X), val_Y, settings.metric_threshold)
            row.update(val_pvrmse=m["pvrmse"], val_pvmae=m["pvmae"], val_smape=m["smape"], val_rmse=m["rmse"])
        log.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return log
