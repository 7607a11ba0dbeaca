import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftcast.baselines import (Ann, AnnConfig, ann_from_checkpoint, ann_train, arima_010_forecast,
                                 diebold_mariano, dm_horizon, persistence_predictions, window_errors)
from driftcast.data import DatasetSplit, WindowPair
from driftcast.errors import EmptyHistory, LengthMismatch, NonPositiveVariance, SeriesTooShort, ShapeMismatch
from driftcast.losses import window_metrics
from helpers import model_gradient_failures, reference_dm


def dm_case(seed, n=60):
    rng = np.random.default_rng(seed)
    common = rng.normal(size=n)
    a = np.abs(common + rng.normal(scale=0.5, size=n))
    b = np.abs(1.1 * common + rng.normal(scale=0.6, size=n))
    return a, b


def test_arima_examples():
    np.testing.assert_array_equal(arima_010_forecast([0.1, 0.7, 0.5321]), np.full(16, 0.5321))
    np.testing.assert_array_equal(arima_010_forecast([0.3, 0.2], horizon=1), [0.2])
    np.testing.assert_array_equal(arima_010_forecast([9.0, -4.0, 0.2]), arima_010_forecast([0.2]))
    with pytest.raises(EmptyHistory):
        arima_010_forecast([])


def test_persistence_predictions_use_last_close():
    X = np.random.default_rng(0).uniform(size=(3, 10, 2))
    np.testing.assert_array_equal(persistence_predictions(X), X[:, -1, 0])


def test_ann_zero_parameters_give_half():
    m = Ann(AnnConfig((8, 4, 3)))
    for p in m.parameters():
        p.data[...] = 0.0
    np.testing.assert_array_equal(m.predict(np.ones((2, 8))), 0.5)


def test_ann_shape_checks():
    m = Ann(AnnConfig((8, 4, 3)))
    assert m.predict(np.ones((2, 8, 5))).shape == (2, 3)
    with pytest.raises(ShapeMismatch):
        m.predict(np.ones((2, 7)))
    with pytest.raises(ValueError):
        AnnConfig((8,))


def test_ann_default_widths():
    m = Ann()
    assert [p.data.shape for p in m.parameters()] == [(672, 128), (128,), (128, 32), (32,), (32, 16), (16,)]


@pytest.mark.parametrize("loss", ["rmse", "wrmse", "spv", "mpv"])
def test_ann_gradients(loss):
    m = Ann(AnnConfig((8, 4, 3, 2)), seed=2)
    rng = np.random.default_rng(1)
    X, Y = rng.uniform(size=(3, 8)), rng.uniform(size=(3, 2))
    failures, checked = model_gradient_failures(m, X, Y, loss)
    assert checked > 0 and failures == []


def noisy_sine_split(n_in=32, n_out=8, windows=120, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(windows * n_out + n_in)
    s = 0.5 + 0.35 * np.sin(2 * np.pi * t / 24) + 0.02 * rng.normal(size=t.size)
    pairs = [WindowPair(s[i * n_out:i * n_out + n_in], s[i * n_out + n_in:(i + 1) * n_out + n_in], i * n_out)
             for i in range(windows)]
    cut = int(windows * 0.9)
    return DatasetSplit(pairs[:cut], pairs[cut:])


def test_ann_beats_persistence_on_noisy_sine():
    split = noisy_sine_split()
    ckpt, log = ann_train(split, AnnConfig((32, 32, 16, 8)), epochs=150, batch_size=16, learning_rate=3e-3,
                          loss="rmse")
    X = np.stack([w.input for w in split.validation])
    Y = np.stack([w.target for w in split.validation])
    ann = window_metrics(ann_from_checkpoint(ckpt).predict(X), Y)["rmse"]
    persistence = window_metrics(np.repeat(X[:, -1:], 8, axis=1), Y)["rmse"]
    assert ann < persistence
    assert len(log) == 150


def test_ann_checkpoint_round_trip():
    split = noisy_sine_split(windows=20)
    ckpt, _ = ann_train(split, AnnConfig((32, 8, 8)), epochs=1, batch_size=8, learning_rate=1e-2)
    X = np.stack([w.input for w in split.validation])
    a = ann_from_checkpoint(ckpt).predict(X)
    b = ann_from_checkpoint(ckpt).predict(X)
    np.testing.assert_array_equal(a, b)


def test_dm_horizon():
    assert dm_horizon(16) == 3
    assert dm_horizon(27) == 4
    assert dm_horizon(1) == 2


@pytest.mark.parametrize("seed", range(20))
def test_dm_matches_reference(seed):
    a, b = dm_case(seed, n=30 + 5 * seed)
    for h in (1, 3):
        res = diebold_mariano(a, b, h=h)
        stat, p = reference_dm(a, b, h)
        assert res.statistic == pytest.approx(stat, rel=1e-6, abs=1e-6)
        assert res.p_value == pytest.approx(p, rel=1e-6, abs=1e-9)
        assert (res.h, res.n) == (h, a.size)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dm_antisymmetric(seed):
    a, b = dm_case(seed, n=40)
    try:
        forward = diebold_mariano(a, b)
    except NonPositiveVariance:
        # the truncated long-run variance can be genuinely negative
        with pytest.raises(NonPositiveVariance):
            diebold_mariano(b, a)
        return
    assert forward.statistic == -diebold_mariano(b, a).statistic
    assert 0.0 <= forward.p_value <= 1.0


def test_dm_sign_convention():
    rng = np.random.default_rng(0)
    small, large = np.abs(rng.normal(scale=0.1, size=50)), np.abs(rng.normal(scale=1.0, size=50))
    assert diebold_mariano(small, large).statistic < 0


def test_dm_harvey_correction_shrinks_statistic():
    a, b = dm_case(3)
    plain, corrected = diebold_mariano(a, b), diebold_mariano(a, b, harvey=True)
    assert abs(corrected.statistic) < abs(plain.statistic)
    assert corrected.p_value > plain.p_value


def test_dm_degenerate_differentials():
    e = np.random.default_rng(1).uniform(size=20)
    with pytest.raises(NonPositiveVariance):
        diebold_mariano(e, e)
    with pytest.raises(NonPositiveVariance):
        diebold_mariano(np.zeros(20), np.full(20, 0.3))


def test_dm_input_errors():
    with pytest.raises(LengthMismatch):
        diebold_mariano(np.ones(12), np.ones(11))
    with pytest.raises(SeriesTooShort):
        diebold_mariano(np.ones(9), np.zeros(9))
    with pytest.raises(ValueError):
        diebold_mariano(*dm_case(0), h=0)


def test_window_errors_are_per_window_rmse():
    p = np.array([[0.0, 0.0], [1.0, 3.0]])
    t = np.array([[1.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(window_errors(p, t), [1.0, np.sqrt(2.0)])
