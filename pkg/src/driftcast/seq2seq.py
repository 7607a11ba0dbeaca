"""Bidirectional recurrent encoder, dot-product attention and an autoregressive decoder.

Arrays are batch-major: model inputs are (B, L_in, C) with the scaled close
price on channel 0, outputs are (B, L_out).

The encoder runs one RNN/LSTM/GRU per direction and concatenates the two
hidden states at every step, giving (B, L_in, 2H) outputs. The decoder is a
single-direction cell of width 2H, started from the concatenated final
encoder states. Each decoder step reads the previous output (the last input
close price at step 0, or the ground truth under teacher forcing) together
with the attention context, and emits ``sigmoid(FC(FC(relu(state))))``.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .errors import ShapeMismatch, TeacherTargetsMissing


class CellKind(str, Enum):
    RNN = "rnn"
    LSTM = "lstm"
    GRU = "gru"


# number of stacked gate blocks in W_x / W_h
_GATES = {CellKind.RNN: 1, CellKind.GRU: 3, CellKind.LSTM: 4}


@dataclass
class ModelConfig:
    cell: str = "gru"
    use_attention: bool = True
    hidden_size: int = 128
    encoder_layers: int = 1
    decoder_layers: int = 1
    dropout_rate: float = 0.0
    teacher_forcing_ratio: float = 0.0
    input_channels: int = 1
    output_length: int = 16
    head_widths: tuple = None

    def __post_init__(self):
        self.cell = CellKind(self.cell).value
        if self.hidden_size < 1 or self.encoder_layers < 1 or self.decoder_layers < 1:
            raise ValueError("hidden_size and layer counts must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if not 0.0 <= self.teacher_forcing_ratio <= 1.0:
            raise ValueError(f"teacher_forcing_ratio must lie in [0, 1], got {self.teacher_forcing_ratio}")
        if self.input_channels < 1 or self.output_length < 1:
            raise ValueError("input_channels and output_length must be >= 1")
        if self.head_widths is None:
            self.head_widths = (2 * self.hidden_size, self.hidden_size)
        self.head_widths = tuple(int(w) for w in self.head_widths)
        if self.head_widths[0] != 2 * self.hidden_size:
            raise ValueError("the head must start at the decoder width 2 * hidden_size")

    def to_dict(self):
        d = asdict(self)
        d["head_widths"] = list(self.head_widths)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("model", None)
        return cls(**d)


@dataclass
class AttentionContext:
    weights: np.ndarray
    context: np.ndarray


# ---------------------------------------------------------------- cells

def init_cell(rng, kind, input_size, hidden_size, prefix):
    kind = CellKind(kind)
    g = _GATES[kind] * hidden_size
    bound = 1.0 / np.sqrt(hidden_size)
    u = lambda *shape: rng.uniform(-bound, bound, size=shape)
    params = OrderedDict()
    params[f"{prefix}.W_x"] = u(input_size, g)
    params[f"{prefix}.W_h"] = u(hidden_size, g)
    params[f"{prefix}.b_x"] = u(g)
    if kind is CellKind.GRU:
        params[f"{prefix}.b_h"] = u(g)
    return params


def _sig(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _gru_step(x, h, W_x, W_h, b_x, b_h):
    xd, hd = x.data, h.data
    H = hd.shape[-1]
    gx = xd @ W_x.data + b_x.data
    gh = hd @ W_h.data + b_h.data
    r = _sig(gx[:, :H] + gh[:, :H])
    z = _sig(gx[:, H:2 * H] + gh[:, H:2 * H])
    ghn = gh[:, 2 * H:]
    n = np.tanh(gx[:, 2 * H:] + r * ghn)
    out = (1.0 - z) * n + z * hd

    def backward(g):
        dn = g * (1.0 - z) * (1.0 - n * n)
        dz = g * (hd - n) * z * (1.0 - z)
        dr = dn * ghn * r * (1.0 - r)
        dgx = np.concatenate([dr, dz, dn], axis=-1)
        dgh = np.concatenate([dr, dz, dn * r], axis=-1)
        dx = dgx @ W_x.data.T if x.requires_grad else None
        dh = g * z + dgh @ W_h.data.T
        return dx, dh, xd.T @ dgx, hd.T @ dgh, dgx.sum(axis=0), dgh.sum(axis=0)

    return ad.record(out, (x, h, W_x, W_h, b_x, b_h), backward)


def _lstm_step(x, hc, W_x, W_h, b_x):
    xd, hcd = x.data, hc.data
    H = hcd.shape[-1] // 2
    h, c = hcd[:, :H], hcd[:, H:]
    gates = xd @ W_x.data + h @ W_h.data + b_x.data
    i = _sig(gates[:, :H])
    f = _sig(gates[:, H:2 * H])
    gg = np.tanh(gates[:, 2 * H:3 * H])
    o = _sig(gates[:, 3 * H:])
    c_new = f * c + i * gg
    tc = np.tanh(c_new)
    out = np.concatenate([o * tc, c_new], axis=-1)

    def backward(g):
        gh, gc = g[:, :H], g[:, H:]
        dc = gc + gh * o * (1.0 - tc * tc)
        dpre = np.concatenate([
            dc * gg * i * (1.0 - i),
            dc * c * f * (1.0 - f),
            dc * i * (1.0 - gg * gg),
            gh * tc * o * (1.0 - o),
        ], axis=-1)
        dx = dpre @ W_x.data.T if x.requires_grad else None
        dhc = np.concatenate([dpre @ W_h.data.T, dc * f], axis=-1)
        return dx, dhc, xd.T @ dpre, h.T @ dpre, dpre.sum(axis=0)

    return ad.record(out, (x, hc, W_x, W_h, b_x), backward)


def cell_forward(kind, params, x, state):
    """One recurrence step. ``params`` holds W_x, W_h, b_x (and b_h for GRU).

    ``x`` is (B, I). The state is ``h`` (B, H) for RNN/GRU; for LSTM it is
    the concatenation ``[h, c]`` (B, 2H), and :func:`hidden_of` extracts h.
    GRU and LSTM steps are single fused tape records.
    """
    kind = CellKind(kind)
    x, state = ad.as_tensor(x), ad.as_tensor(state)
    W_x, W_h, b_x = params["W_x"], params["W_h"], params["b_x"]
    H = W_h.shape[0]
    width = 2 * H if kind is CellKind.LSTM else H
    if x.ndim != 2 or x.shape[-1] != W_x.shape[0] or state.shape != (x.shape[0], width):
        raise ShapeMismatch("cell_forward", x.shape, W_x.shape, state.shape)
    if kind is CellKind.RNN:
        return ad.tanh(ad.add(ad.add(ad.matmul(x, W_x), b_x), ad.matmul(state, W_h)))
    if kind is CellKind.GRU:
        return _gru_step(x, state, W_x, W_h, b_x, params["b_h"])
    return _lstm_step(x, state, W_x, W_h, b_x)


def cell_forward_composite(kind, params, x, state):
    """The same recurrences built from elementary tensor ops (slower; used as a cross-check)."""
    kind = CellKind(kind)
    x, state = ad.as_tensor(x), ad.as_tensor(state)
    W_x, W_h, b_x = params["W_x"], params["W_h"], params["b_x"]
    H = W_h.shape[0]
    gx = ad.add(ad.matmul(x, W_x), b_x)
    if kind is CellKind.RNN:
        return ad.tanh(ad.add(gx, ad.matmul(state, W_h)))
    if kind is CellKind.GRU:
        gh = ad.add(ad.matmul(state, W_h), params["b_h"])
        r = ad.sigmoid(ad.add(gx[:, :H], gh[:, :H]))
        z = ad.sigmoid(ad.add(gx[:, H:2 * H], gh[:, H:2 * H]))
        n = ad.tanh(ad.add(gx[:, 2 * H:], ad.mul(r, gh[:, 2 * H:])))
        return ad.add(ad.mul(ad.sub(1.0, z), n), ad.mul(z, state))
    h, c = state[:, :H], state[:, H:]
    gates = ad.add(gx, ad.matmul(h, W_h))
    i = ad.sigmoid(gates[:, :H])
    f = ad.sigmoid(gates[:, H:2 * H])
    g = ad.tanh(gates[:, 2 * H:3 * H])
    o = ad.sigmoid(gates[:, 3 * H:])
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    return ad.concat([ad.mul(o, ad.tanh(c_new)), c_new], axis=-1)


def zero_state(kind, batch, hidden):
    width = 2 * hidden if CellKind(kind) is CellKind.LSTM else hidden
    return ad.Tensor(np.zeros((batch, width)))


def hidden_of(kind, state):
    if CellKind(kind) is CellKind.LSTM:
        return state[:, :state.shape[-1] // 2]
    return state


# ---------------------------------------------------------------- model

class Seq2Seq:
    kind = "seq2seq"

    def __init__(self, config: ModelConfig, seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        H, kind = config.hidden_size, config.cell
        shapes = OrderedDict()
        for layer in range(config.encoder_layers):
            in_size = config.input_channels if layer == 0 else 2 * H
            for direction in ("fwd", "bwd"):
                shapes.update(init_cell(rng, kind, in_size, H, f"encoder.l{layer}.{direction}"))
        D = 2 * H
        for layer in range(config.decoder_layers):
            in_size = (1 + (D if config.use_attention else 0)) if layer == 0 else D
            shapes.update(init_cell(rng, kind, in_size, D, f"decoder.l{layer}"))
        if config.use_attention:
            shapes["attention.W_q"] = rng.uniform(-1 / np.sqrt(D), 1 / np.sqrt(D), size=(D, D))
        widths = list(config.head_widths) + [1]
        for k, (a, b) in enumerate(zip(widths, widths[1:])):
            bound = 1.0 / np.sqrt(a)
            shapes[f"head.fc{k}.W"] = rng.uniform(-bound, bound, size=(a, b))
            shapes[f"head.fc{k}.b"] = rng.uniform(-bound, bound, size=(b,))
        self.params = OrderedDict((name, ad.parameter(v, name)) for name, v in shapes.items())

    # parameter access -------------------------------------------------

    def parameters(self):
        return list(self.params.values())

    def named_parameters(self):
        return self.params

    def _cell_params(self, prefix):
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    # forward pieces ---------------------------------------------------

    def encode(self, X, training=False, rng=None):
        """Encoder outputs (B, T, 2H) and the decoder's initial state per layer."""
        cfg = self.config
        X = np.asarray(X.data if isinstance(X, ad.Tensor) else X, dtype=np.float64)
        if X.ndim != 3 or X.shape[2] != cfg.input_channels:
            raise ShapeMismatch("encode", X.shape, (None, None, cfg.input_channels))
        B, T, _ = X.shape
        H, kind = cfg.hidden_size, cfg.cell
        layer_in = [ad.Tensor(X[:, t, :]) for t in range(T)]
        finals = None
        for layer in range(cfg.encoder_layers):
            outs = {}
            finals = {}
            for direction, steps in (("fwd", range(T)), ("bwd", range(T - 1, -1, -1))):
                p = self._cell_params(f"encoder.l{layer}.{direction}")
                state = zero_state(kind, B, H)
                seq = [None] * T
                for t in steps:
                    state = cell_forward(kind, p, layer_in[t], state)
                    seq[t] = hidden_of(kind, state)
                outs[direction] = seq
                finals[direction] = state
            layer_in = [ad.concat([f, b], axis=-1) for f, b in zip(outs["fwd"], outs["bwd"])]
        enc = ad.stack(layer_in, axis=1)
        if training and cfg.dropout_rate > 0:
            enc = ad.dropout(enc, cfg.dropout_rate, rng)
        if CellKind(kind) is CellKind.LSTM:
            f, b = finals["fwd"], finals["bwd"]
            init = ad.concat([f[:, :H], b[:, :H], f[:, H:], b[:, H:]], axis=-1)
        else:
            init = ad.concat([finals["fwd"], finals["bwd"]], axis=-1)
        return enc, [init] * cfg.decoder_layers

    def attention_context(self, decoder_state, encoder_outputs):
        """Softmax-weighted sum of encoder outputs scored against the projected state.

        Returns tensors ``(weights (B, T), context (B, 2H))``.
        """
        h = ad.as_tensor(decoder_state)
        enc = ad.as_tensor(encoder_outputs)
        if h.ndim == 1:
            h = ad.reshape(h, (1, -1))
        if enc.ndim == 2:
            enc = ad.reshape(enc, (1,) + enc.shape)
        B, T, D = enc.shape
        if h.shape != (B, D):
            raise ShapeMismatch("attention_context", h.shape, enc.shape)
        q = ad.matmul(h, self.params["attention.W_q"])
        scores = ad.reshape(ad.matmul(enc, ad.reshape(q, (B, D, 1))), (B, T))
        weights = ad.softmax(scores, axis=-1)
        context = ad.reshape(ad.matmul(ad.reshape(weights, (B, 1, T)), enc), (B, D))
        return weights, context

    def _head(self, s, training, rng):
        cfg = self.config
        if training and cfg.dropout_rate > 0:
            s = ad.dropout(s, cfg.dropout_rate, rng)
        a = ad.relu(s)
        n_fc = len(cfg.head_widths)
        for k in range(n_fc):
            a = ad.add(ad.matmul(a, self.params[f"head.fc{k}.W"]), self.params[f"head.fc{k}.b"])
        return ad.sigmoid(a)

    def decode(self, encoder_outputs, init_states, first_input, targets=None, training=False, rng=None,
               record_attention=None):
        """Autoregressive decoding of ``output_length`` steps; returns (B, L_out)."""
        cfg = self.config
        kind = cfg.cell
        B = encoder_outputs.shape[0]
        tf = cfg.teacher_forcing_ratio if training else 0.0
        if tf > 0 and targets is None:
            raise TeacherTargetsMissing("teacher forcing ratio > 0 needs targets")
        if tf > 0:
            targets = np.asarray(targets, dtype=np.float64)
            if targets.shape != (B, cfg.output_length):
                raise ShapeMismatch("decode", targets.shape, (B, cfg.output_length))
        states = list(init_states)
        prev = ad.Tensor(np.asarray(first_input, dtype=np.float64).reshape(B, 1))
        outputs = []
        for step in range(cfg.output_length):
            parts = [prev]
            if cfg.use_attention:
                weights, context = self.attention_context(hidden_of(kind, states[-1]), encoder_outputs)
                if record_attention is not None:
                    record_attention.append(AttentionContext(weights.data.copy(), context.data.copy()))
                parts.append(context)
            x = ad.concat(parts, axis=-1) if len(parts) > 1 else prev
            for layer in range(cfg.decoder_layers):
                states[layer] = cell_forward(kind, self._cell_params(f"decoder.l{layer}"), x, states[layer])
                x = hidden_of(kind, states[layer])
            y = self._head(x, training, rng)
            outputs.append(y)
            if tf > 0 and rng.random() < tf:
                prev = ad.Tensor(targets[:, step:step + 1])
            else:
                prev = y
        return ad.reshape(ad.concat(outputs, axis=-1), (B, cfg.output_length))

    def forward(self, X, targets=None, training=False, rng=None, record_attention=None):
        X = np.asarray(X, dtype=np.float64)
        enc, init = self.encode(X, training=training, rng=rng)
        return self.decode(enc, init, X[:, -1, 0], targets=targets, training=training, rng=rng,
                           record_attention=record_attention)

    def predict(self, X) -> np.ndarray:
        with ad.no_grad():
            return self.forward(X).data.copy()


def train(split, config: ModelConfig, settings=None, **overrides):
    """Fit a fresh model on ``split``; returns ``(checkpoint, log)``.

    ``settings`` is a :class:`~driftcast.training.TrainSettings`; keyword
    overrides (``loss=``, ``epochs=``, ``batch_size=``, ``seed=`` ...) are
    applied on top. With ``epochs=0`` the fresh initialisation is returned.
    """
    from dataclasses import replace

    from .training import TrainSettings, fit, snapshot, windows_to_arrays

    settings = replace(settings or TrainSettings(), **overrides)
    X, Y = windows_to_arrays(split.train)
    Xv, Yv = windows_to_arrays(split.validation) if split.validation else (X[:0], Y[:0])
    if X.shape[2] != config.input_channels:
        raise ShapeMismatch("train", X.shape, (None, None, config.input_channels))
    model = Seq2Seq(config, seed=settings.seed)
    log = fit(model, X, Y, Xv, Yv, settings)
    meta = {"epoch": settings.epochs, "seed": settings.seed, "loss": settings.loss}
    return snapshot(model, meta), log


def from_checkpoint(checkpoint) -> Seq2Seq:
    from .training import restore

    model = Seq2Seq(ModelConfig.from_dict(checkpoint.config), seed=0)
    return restore(model, checkpoint)
