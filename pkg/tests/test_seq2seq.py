import json

import numpy as np
import pytest

from driftcast import autodiff as ad
from driftcast.data import DatasetSplit, WindowPair
from driftcast.errors import (CorruptCheckpoint, EmptyDataset, NonFiniteLoss, ShapeMismatch, TeacherTargetsMissing,
                              VersionMismatch)
from driftcast.seq2seq import (ModelConfig, Seq2Seq, cell_forward, cell_forward_composite, from_checkpoint,
                               init_cell, train, zero_state)
from driftcast.training import TrainSettings, load_checkpoint, save_checkpoint, snapshot
from helpers import model_gradient_failures

COMPOSITIONS = [(cell, att) for cell in ("rnn", "lstm", "gru") for att in (False, True)]


def tiny(cell="gru", attention=True, hidden=4, channels=1, out=3, **kw):
    return Seq2Seq(ModelConfig(cell=cell, use_attention=attention, hidden_size=hidden, input_channels=channels,
                               output_length=out, **kw), seed=1)


def inputs(batch=2, length=8, channels=1, seed=0):
    return np.random.default_rng(seed).uniform(0.1, 0.9, size=(batch, length, channels))


def zero_params(model):
    for p in model.parameters():
        p.data[...] = 0.0


def cell_params(kind, i, h, seed=0, zero=False):
    raw = init_cell(np.random.default_rng(seed), kind, i, h, "c")
    return {k[2:]: ad.parameter(np.zeros_like(v) if zero else v) for k, v in raw.items()}


@pytest.mark.parametrize("kind", ["rnn", "gru"])
def test_zero_cell_fixed_point(kind):
    p = cell_params(kind, 3, 2, zero=True)
    out = cell_forward(kind, p, np.ones((1, 3)), zero_state(kind, 1, 2))
    np.testing.assert_array_equal(out.data, 0.0)
    ad.current_tape().clear()


@pytest.mark.parametrize("kind", ["rnn", "lstm", "gru"])
def test_fused_cell_matches_composite(kind):
    H, I, B = 3, 2, 4
    rng = np.random.default_rng(5)
    width = 2 * H if kind == "lstm" else H
    x0, s0 = rng.normal(size=(B, I)), rng.normal(size=(B, width))
    w = rng.normal(size=(B, width))
    results = []
    for step in (cell_forward, cell_forward_composite):
        p = cell_params(kind, I, H, seed=2)
        x, s = ad.parameter(x0), ad.parameter(s0)
        out = step(kind, p, x, s)
        ad.backward(ad.sum_(ad.mul(out, w)))
        results.append((out.data, x.grad, s.grad, {k: v.grad for k, v in p.items()}))
    (o1, x1, s1, g1), (o2, x2, s2, g2) = results
    np.testing.assert_allclose(o1, o2, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(x1, x2, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(s1, s2, rtol=1e-12, atol=1e-14)
    for k in g1:
        np.testing.assert_allclose(g1[k], g2[k], rtol=1e-12, atol=1e-14)


def test_cell_shape_mismatch():
    p = cell_params("gru", 3, 2)
    with pytest.raises(ShapeMismatch):
        cell_forward("gru", p, np.ones((1, 4)), zero_state("gru", 1, 2))


def test_encoder_output_shape():
    m = tiny(hidden=2)
    enc, init = m.encode(inputs(length=4))
    assert enc.shape == (2, 4, 4) and init[0].shape == (2, 4)
    ad.current_tape().clear()


@pytest.mark.parametrize("cell", ["rnn", "lstm", "gru"])
def test_bidirectional_mirror(cell):
    m = tiny(cell=cell, hidden=3)
    for name in list(m.params):
        if ".bwd." in name:
            m.params[name].data = m.params[name.replace(".bwd.", ".fwd.")].data.copy()
    X = inputs(length=6)
    with ad.no_grad():
        a, _ = m.encode(X)
        b, _ = m.encode(X[:, ::-1])
    np.testing.assert_allclose(a.data[:, :, :3], b.data[:, ::-1, 3:], rtol=1e-12, atol=1e-14)


def test_zero_model_outputs():
    m = tiny()
    zero_params(m)
    with ad.no_grad():
        enc, _ = m.encode(np.zeros((1, 5, 1)))
    np.testing.assert_array_equal(enc.data, 0.0)
    np.testing.assert_array_equal(m.predict(inputs()), 0.5)


def test_attention_identical_outputs_give_that_vector():
    m = tiny(hidden=2)
    v = np.array([0.3, -1.0, 2.0, 0.5])
    enc = np.tile(v, (1, 7, 1))
    with ad.no_grad():
        w, ctx = m.attention_context(np.random.default_rng(0).normal(size=(1, 4)), enc)
    np.testing.assert_allclose(ctx.data[0], v, rtol=1e-12)
    np.testing.assert_allclose(w.data.sum(), 1.0, atol=1e-12)


def test_attention_sharp_limit():
    m = tiny(hidden=2)
    m.params["attention.W_q"].data = np.eye(4)
    enc = np.random.default_rng(1).normal(size=(1, 5, 4)) * 0.01
    enc[0, 3] = [10.0, 10.0, 10.0, 10.0]
    with ad.no_grad():
        w, ctx = m.attention_context(np.full((1, 4), 10.0), enc)
    assert w.data[0, 3] > 1 - 1e-12
    np.testing.assert_allclose(ctx.data[0], enc[0, 3], rtol=1e-9)


def test_attention_shape_mismatch():
    m = tiny(hidden=2)
    with pytest.raises(ShapeMismatch):
        m.attention_context(np.zeros((1, 3)), np.zeros((1, 5, 4)))


@pytest.mark.parametrize("cell,attention", COMPOSITIONS)
def test_compositions_forward_range_and_attention(cell, attention):
    m = tiny(cell=cell, attention=attention, channels=2)
    record = []
    with ad.no_grad():
        y = m.forward(inputs(channels=2), record_attention=record)
    assert y.shape == (2, 3) and np.all((y.data > 0) & (y.data < 1))
    assert len(record) == (3 if attention else 0)
    for a in record:
        assert a.weights.shape == (2, 8) and np.all(a.weights >= 0)
        np.testing.assert_allclose(a.weights.sum(axis=1), 1.0, atol=1e-12)


def test_targets_ignored_without_teacher_forcing():
    m = tiny()
    X, Y = inputs(), np.random.default_rng(9).uniform(size=(2, 3))
    with ad.no_grad():
        a = m.forward(X, targets=Y, training=True, rng=np.random.default_rng(0)).data
        b = m.forward(X, training=True, rng=np.random.default_rng(0)).data
    np.testing.assert_array_equal(a, b)


def test_teacher_forcing_needs_targets():
    m = tiny(teacher_forcing_ratio=0.5)
    with pytest.raises(TeacherTargetsMissing):
        m.forward(inputs(), training=True, rng=np.random.default_rng(0))
    ad.current_tape().clear()


def test_teacher_forcing_changes_decoding():
    m = tiny(teacher_forcing_ratio=1.0)
    X, Y = inputs(), np.zeros((2, 3))
    with ad.no_grad():
        forced = m.forward(X, targets=Y, training=True, rng=np.random.default_rng(0)).data
        free = m.forward(X, targets=Y, training=False).data
    np.testing.assert_array_equal(forced[:, 0], free[:, 0])
    assert not np.allclose(forced[:, 1:], free[:, 1:])


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(dropout_rate=1.0)
    with pytest.raises(ValueError):
        ModelConfig(cell="transformer")
    with pytest.raises(ValueError):
        ModelConfig(hidden_size=0)


@pytest.mark.parametrize("loss", ["rmse", "wrmse", "spv", "mpv"])
def test_end_to_end_gradients(loss):
    m = tiny(hidden=4)
    X = inputs(batch=2, length=8)
    Y = np.random.default_rng(4).uniform(0.1, 0.9, size=(2, 3))
    failures, checked = model_gradient_failures(m, X, Y, loss)
    assert checked > 0.9 * sum(p.data.size for p in m.parameters())
    assert failures == []


@pytest.mark.parametrize("cell", ["rnn", "lstm", "gru"])
def test_gradients_stacked_layers_and_dropout_free(cell):
    m = Seq2Seq(ModelConfig(cell=cell, hidden_size=2, encoder_layers=2, decoder_layers=2, output_length=2), seed=3)
    Y = np.random.default_rng(1).uniform(size=(1, 2))
    failures, _ = model_gradient_failures(m, inputs(batch=1, length=5), Y, "rmse", coords=6)
    assert failures == []


def windows(n, length=8, out=3, channels=0, seed=0):
    rng = np.random.default_rng(seed)
    series = 0.5 + 0.3 * np.sin(np.arange(n * out + length) / 3.0) + 0.01 * rng.normal(size=n * out + length)
    return [WindowPair(series[i * out:i * out + length], series[i * out + length:i * out + length + out], i * out,
                       rng.uniform(size=(channels, length))) for i in range(n)]


def split(n=12, **kw):
    w = windows(n, **kw)
    return DatasetSplit(w[:n - 3], w[n - 3:])


def test_train_zero_epochs_returns_initialisation():
    cfg = ModelConfig(hidden_size=3, output_length=3)
    ckpt, log = train(split(), cfg, epochs=0, seed=4)
    assert log == []
    fresh = Seq2Seq(cfg, seed=4)
    for name, p in fresh.named_parameters().items():
        np.testing.assert_array_equal(ckpt.parameters[name], p.data)


def test_train_is_deterministic_and_logs_metrics():
    cfg = ModelConfig(hidden_size=3, output_length=3, dropout_rate=0.2, teacher_forcing_ratio=0.5)
    a, log_a = train(split(), cfg, epochs=2, batch_size=4, learning_rate=1e-2, seed=7)
    b, log_b = train(split(), cfg, epochs=2, batch_size=4, learning_rate=1e-2, seed=7)
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())
    assert log_a == log_b and len(log_a) == 2
    assert {"epoch", "train_loss", "val_pvrmse", "val_pvmae", "val_smape"} <= set(log_a[0])


def test_training_reduces_loss():
    cfg = ModelConfig(hidden_size=4, output_length=3)
    _, log = train(split(30), cfg, epochs=15, batch_size=8, learning_rate=1e-2, loss="rmse")
    assert log[-1]["train_loss"] < 0.5 * log[0]["train_loss"]


def test_train_channel_mismatch():
    with pytest.raises(ShapeMismatch):
        train(split(channels=2), ModelConfig(hidden_size=2, output_length=3, input_channels=1), epochs=1)


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        train(DatasetSplit([], []), ModelConfig(hidden_size=2, output_length=3), epochs=1)


def test_non_finite_loss_reports_position():
    s = split()
    s.train[0].target[:] = np.nan
    with pytest.raises(NonFiniteLoss) as info:
        train(s, ModelConfig(hidden_size=2, output_length=3), epochs=1, batch_size=100, loss="rmse")
    assert info.value.epoch == 1 and info.value.batch == 0


def test_checkpoint_round_trip_bit_identical(tmp_path):
    cfg = ModelConfig(cell="lstm", hidden_size=3, output_length=3, input_channels=3)
    ckpt, _ = train(split(channels=2), cfg, epochs=1, batch_size=4, learning_rate=1e-2)
    save_checkpoint(ckpt, tmp_path / "c.json")
    model = from_checkpoint(load_checkpoint(tmp_path / "c.json"))
    X = inputs(channels=3)
    np.testing.assert_array_equal(model.predict(X), from_checkpoint(ckpt).predict(X))
    assert snapshot(model).parameters.keys() == ckpt.parameters.keys()


def test_checkpoint_tampering(tmp_path):
    ckpt = snapshot(tiny(), {"epoch": 0})
    path = tmp_path / "c.json"
    raw = ckpt.to_json()
    raw["parameters"]["attention.W_q"]["shape"] = [3, 3]
    path.write_text(json.dumps(raw))
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)
    raw = ckpt.to_json()
    raw["version"] = 99
    path.write_text(json.dumps(raw))
    with pytest.raises(VersionMismatch):
        load_checkpoint(path)
    raw = ckpt.to_json()
    del raw["parameters"]["head.fc0.b"]
    path.write_text(json.dumps(raw))
    with pytest.raises(CorruptCheckpoint):
        from_checkpoint(load_checkpoint(path))
