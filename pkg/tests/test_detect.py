import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from puffline.detect import (
    ProbabilityTrace,
    detect_puffs,
    find_puff_peaks,
    local_maxima,
    predict_recording,
    select_by_distance,
)
from puffline.net import Architecture, forward, init_model
from puffline.signal import Recording, Wrist
from puffline.windows import extract_windows

from oracles import oracle_peaks, random_trace


def test_oracle_equivalence_random_traces():
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        n = int(rng.integers(1, 501))
        x = random_trace(rng, n)
        lam = float(rng.choice([0.0, 0.5, 0.8]))
        md = int(rng.choice([1, 3, 10]))
        assert find_puff_peaks(x, lam, md).tolist() == oracle_peaks(x, lam, md)


def test_simple_peak():
    trace = ProbabilityTrace(np.array([0.1, 0.9, 0.1]), np.array([4.5, 5.0, 5.5]))
    assert detect_puffs(trace).timestamps.tolist() == [5.0]


def test_sub_threshold_peak_rejected():
    assert find_puff_peaks([0.1, 0.79, 0.1]).size == 0
    assert find_puff_peaks([0.1, 0.8, 0.1]).tolist() == [1]


def test_close_peaks_keep_the_higher():
    x = np.full(20, 0.1)
    x[5], x[10] = 0.85, 0.95
    assert find_puff_peaks(x).tolist() == [10]


def test_equal_heights_keep_the_earlier():
    x = np.full(20, 0.1)
    x[5], x[10] = 0.9, 0.9
    assert find_puff_peaks(x).tolist() == [5]


def test_plateau_and_boundaries():
    assert local_maxima([0.5, 0.9, 0.9, 0.9, 0.2]).tolist() == [1]
    assert local_maxima([0.9, 0.5, 0.1]).tolist() == [0]
    assert local_maxima([0.1, 0.5, 0.9]).tolist() == [2]
    assert local_maxima([0.3, 0.3, 0.3]).tolist() == [0]
    assert local_maxima([0.5]).tolist() == [0]
    assert local_maxima([]).tolist() == []
    # a shoulder is not a peak
    assert local_maxima([0.1, 0.5, 0.5, 0.9, 0.1]).tolist() == [3]


def test_figure_style_trace():
    # five bumps; the two outer ones stay under the threshold
    x = np.full(80, 0.05)
    for centre, height in [(5, 0.6), (20, 0.92), (35, 0.85), (50, 0.97), (70, 0.7)]:
        x[centre - 2:centre + 3] = height * np.array([0.5, 0.8, 1.0, 0.8, 0.5])
    t = 1000.0 + 4.5 + 0.5 * np.arange(80)
    puffs = detect_puffs(ProbabilityTrace(x, t))
    assert puffs.timestamps.tolist() == [t[20], t[35], t[50]]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=150), st.floats(0, 1), st.integers(1, 15))
def test_threshold_order_does_not_matter(x, lam, md):
    # a peak under the threshold can only suppress lower peaks, which are
    # under the threshold too, so both orders keep the same set
    assert (find_puff_peaks(x, lam, md).tolist()
            == find_puff_peaks(x, lam, md, threshold_first=True).tolist())


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=120), st.floats(0, 1), st.floats(0, 1))
def test_threshold_monotone_and_distance_respected(x, l1, l2):
    lo, hi = min(l1, l2), max(l1, l2)
    a, b = find_puff_peaks(x, lo), find_puff_peaks(x, hi)
    assert set(b) <= set(a)
    assert np.all(np.diff(a) >= 10)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=120))
def test_puffs_are_trace_timestamps(x):
    t = 50.0 + 0.5 * np.arange(len(x))
    puffs = detect_puffs(ProbabilityTrace(np.array(x), t))
    assert set(puffs.timestamps.tolist()) <= set(t.tolist())
    assert np.all(np.diff(puffs.timestamps) >= 5.0)


def test_select_by_distance_small_distance_keeps_all():
    assert select_by_distance([1, 2, 3], [0.1, 0.2, 0.3], 1).tolist() == [1, 2, 3]


@pytest.fixture(scope="module")
def small_model():
    return init_model(Architecture(), np.random.default_rng(9))


def test_predict_exact_window(small_model):
    rec = Recording(np.random.default_rng(0).normal(size=(225, 6)), 50.0, 10.0, Wrist.RIGHT, "s")
    trace = predict_recording(small_model, rec)
    assert len(trace) == 1 and trace.end_epochs[0] == pytest.approx(14.5)


def test_predict_matches_manual_composition(small_model):
    rec = Recording(np.random.default_rng(1).normal(size=(600, 6)), 50.0, 0.0, Wrist.RIGHT, "s")
    trace = predict_recording(small_model, rec, batch_size=4)
    ws = extract_windows(rec)
    manual = np.array([forward(small_model, ws.data[i:i + 1])[0] for i in range(len(ws))])
    np.testing.assert_allclose(trace.probs, manual, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(np.diff(trace.end_epochs), 0.5)


def test_predict_too_short(small_model):
    rec = Recording(np.zeros((100, 6)), 50.0, 0.0, Wrist.RIGHT, "s")
    with pytest.raises(ValueError):
        predict_recording(small_model, rec)
