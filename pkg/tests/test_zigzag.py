import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftcast.errors import SeriesTooShort
from driftcast.synthetic import random_walk
from driftcast.zigzag import (DEFAULT_THRESHOLDS, OTHER, PEAK, VALLEY, PivotKind, ZigzagConfig,
                              build_zigzag_features, extract_pivots)
from helpers import reference_zigzag

walks = st.integers(0, 2**32 - 1).map(lambda s: random_walk(200, 0.01, seed=s))


def as_pairs(pivots):
    return [(p.index, 1 if p.kind == PivotKind.PEAK else -1) for p in pivots]


def test_monotone_series_has_no_pivots():
    assert extract_pivots([1, 2, 3, 4], 0.1) == []


def test_alternating_example():
    piv = extract_pivots([1.0, 1.1, 1.0, 1.1], 0.05)
    assert [(p.index, p.kind) for p in piv] == [(1, PivotKind.PEAK), (2, PivotKind.VALLEY)]
    assert piv[0].value == 1.1


def test_unreachable_threshold():
    assert extract_pivots(random_walk(300, 0.005, seed=1), 0.99) == []


def test_too_short():
    with pytest.raises(SeriesTooShort):
        extract_pivots([1.0], 0.01)


def test_config_rejects_bad_thresholds():
    with pytest.raises(ValueError):
        ZigzagConfig((0.01, 1.5))


def test_offset_reports_unshifted_values():
    x = np.array([0.0, 0.2, 0.05, 0.3])
    piv = extract_pivots(x, 0.1, offset=1.0)
    assert [(p.index, p.value) for p in piv] == [(1, 0.2), (2, 0.05)]


@settings(max_examples=200, deadline=None)
@given(walks, st.sampled_from(DEFAULT_THRESHOLDS + (0.02, 0.05)))
def test_matches_reference_automaton(x, t):
    assert as_pairs(extract_pivots(x, t)) == reference_zigzag(x, t)


@settings(max_examples=200, deadline=None)
@given(walks, st.floats(0.002, 0.05))
def test_alternation_and_threshold_bound(x, t):
    piv = extract_pivots(x, t)
    for a, b in zip(piv, piv[1:]):
        assert a.index < b.index and a.kind != b.kind
        assert abs(b.value - a.value) / a.value >= t * (1 - 1e-12)
        # the confirming pivot is the extreme of its leg; the earlier one can be undercut
        # by a move that stays within the threshold
        seg = x[a.index:b.index + 1]
        assert b.value == (seg.min() if a.kind == PivotKind.PEAK else seg.max())


@settings(max_examples=200, deadline=None)
@given(walks)
def test_count_monotone_in_threshold(x):
    counts = [len(extract_pivots(x, t)) for t in DEFAULT_THRESHOLDS]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


@settings(max_examples=100, deadline=None)
@given(walks, st.floats(0.01, 1000))
def test_scale_invariance(x, c):
    t = 0.0097
    # power-of-two factors keep every ratio bit-identical
    assert as_pairs(extract_pivots(x, t)) == as_pairs(extract_pivots(x * 2.0 ** np.round(np.log2(c)), t))


def test_feature_matrix_shape_and_one_hot():
    x = random_walk(672, seed=4)
    f = build_zigzag_features(x)
    assert f.shape == (24, 672)
    np.testing.assert_array_equal(f.reshape(8, 3, 672).sum(axis=1), 1.0)


def test_monotone_input_all_other():
    f = build_zigzag_features(np.linspace(1, 2, 50))
    assert (f.reshape(8, 3, 50)[:, OTHER] == 1).all()


def test_small_reversal_only_marks_first_block():
    # up 2% to index 100, back down 0.7%, then up again: a pivot only at the smallest threshold
    up = np.linspace(1.0, 1.02, 101)
    down = np.linspace(1.02, 1.02 * (1 - 0.0068), 11)[1:]
    again = np.linspace(down[-1], 1.05, 30)[1:]
    x = np.concatenate([up, down, again])
    f = build_zigzag_features(x).reshape(8, 3, x.size)
    assert f[0, PEAK, 100] == 1
    assert f[0, VALLEY, 110] == 1
    assert all(f[b, OTHER, 100] == 1 for b in range(1, 8))
