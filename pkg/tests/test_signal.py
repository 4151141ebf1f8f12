import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from puffline.signal import (
    FirFilter,
    Recording,
    Wrist,
    apply_highpass,
    design_highpass,
    mirror_hand,
    preprocess,
    resample_uniform,
)

from oracles import dft_oracle

FS = 50.0


def make_rec(samples, wrist=Wrist.LEFT, start=1000.0):
    return Recording(np.asarray(samples, dtype=np.float64), FS, start, wrist, "s")


@pytest.fixture(scope="module")
def hp():
    return design_highpass(1.0, 512, FS)


# recording basics

def test_recording_rejects_wrong_channel_count():
    with pytest.raises(ValueError):
        Recording(np.zeros((10, 5)), FS, 0.0, Wrist.RIGHT, "s")


def test_recording_rejects_nonpositive_rate():
    with pytest.raises(ValueError):
        Recording(np.zeros((10, 6)), 0.0, 0.0, Wrist.RIGHT, "s")


def test_implicit_timestamps():
    rec = make_rec(np.zeros((5, 6)), start=100.0)
    np.testing.assert_allclose(rec.timestamps, 100.0 + np.arange(5) / FS)
    assert rec.duration_s == pytest.approx(0.1)


def test_crop_keeps_timestamps_consistent():
    rec = make_rec(np.arange(600).reshape(100, 6), start=10.0)
    part = rec.crop(10.5, 11.0)
    assert part.start_epoch_s >= 10.5 - 1e-9
    assert part.timestamps[-1] <= 11.0 + 1e-9
    i0 = int(round((part.start_epoch_s - 10.0) * FS))
    np.testing.assert_array_equal(part.samples, rec.samples[i0:i0 + len(part)])


# mirroring

def test_mirror_example_row():
    out = mirror_hand(make_rec([[1, 2, 3, 4, 5, 6]]))
    np.testing.assert_array_equal(out.samples, [[-1, 2, 3, 4, -5, -6]])
    assert out.wrist is Wrist.RIGHT


def test_mirror_refuses_right_wrist():
    with pytest.raises(ValueError):
        mirror_hand(make_rec(np.zeros((3, 6)), Wrist.RIGHT))


def test_mirror_zero_is_fixed_point():
    out = mirror_hand(make_rec(np.zeros((4, 6))))
    assert np.all(out.samples == 0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.just(6)),
              elements=st.floats(-1e3, 1e3)))
def test_mirror_involution_and_norms(x):
    rec = make_rec(x)
    once = mirror_hand(rec)
    twice = mirror_hand(once, force=True)
    np.testing.assert_array_equal(twice.samples, x)
    np.testing.assert_array_equal(once.samples[:, [1, 2, 3]], x[:, [1, 2, 3]])
    for sl in (slice(0, 3), slice(3, 6)):
        np.testing.assert_allclose(np.linalg.norm(once.samples[:, sl], axis=1),
                                   np.linalg.norm(x[:, sl], axis=1))


# filter design

def test_highpass_dc_null_and_passband(hp):
    c = hp.coefficients
    assert dft_oracle(c, 0.0, FS) < 1e-6
    assert 0.99 <= dft_oracle(c, 10.0, FS) <= 1.01
    assert abs(c.sum()) < 1e-6


def test_highpass_symmetry_and_delay(hp):
    c = hp.coefficients
    assert hp.taps == 512
    assert np.max(np.abs(c - c[::-1])) <= 1e-12
    assert hp.group_delay_samples == 255.5
    assert hp.alignment_shift == 255


def test_response_matches_dft_oracle(hp):
    freqs = [0.0, 0.3, 1.0, 2.5, 10.0, 20.0]
    np.testing.assert_allclose(np.abs(hp.response(freqs, FS)),
                               [dft_oracle(hp.coefficients, f, FS) for f in freqs], atol=1e-10)


def test_even_length_zero_at_nyquist(hp):
    # a symmetric filter with an even tap count always has H(fs/2) = 0
    assert dft_oracle(hp.coefficients, FS / 2, FS) < 1e-9


def test_odd_length_passes_nyquist():
    odd = design_highpass(1.0, 511, FS)
    assert dft_oracle(odd.coefficients, FS / 2, FS) == pytest.approx(1.0, abs=0.01)
    assert dft_oracle(odd.coefficients, 0.0, FS) < 1e-6


def test_stopband_attenuation(hp):
    assert dft_oracle(hp.coefficients, 0.2, FS) < 0.05


@pytest.mark.parametrize("cutoff,taps", [(0.0, 512), (25.0, 512), (-1.0, 512), (1.0, 2), (1.0, 10.5)])
def test_design_rejects_bad_arguments(cutoff, taps):
    with pytest.raises(ValueError):
        design_highpass(cutoff, taps, FS)


# filtering

def test_constant_gravity_removed(hp):
    x = np.zeros((3000, 6))
    x[:, 0] = 9.81
    out = apply_highpass(make_rec(x, Wrist.RIGHT), hp).samples
    core = out[512:len(out) - 512, :3]
    assert np.max(np.abs(core)) < 1e-3


def test_gyro_untouched_and_length_kept(hp):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1200, 6))
    out = apply_highpass(make_rec(x, Wrist.RIGHT), hp).samples
    assert out.shape == x.shape
    np.testing.assert_array_equal(out[:, 3:], x[:, 3:])


def test_sine_amplitude_and_alignment(hp):
    # the alignment shift is 255 samples against a true delay of 255.5, so the
    # output equals the input delayed by half a sample
    n = 4000
    t = np.arange(n) / FS
    x = np.zeros((n, 6))
    x[:, 0] = np.sin(2 * np.pi * 10 * t)
    y = apply_highpass(make_rec(x, Wrist.RIGHT), hp).samples[:, 0]
    sl = slice(600, n - 600)
    residual = hp.group_delay_samples - hp.alignment_shift
    expect = np.sin(2 * np.pi * 10 * (t - residual / FS))
    amp = np.sqrt(2 * np.mean(y[sl] ** 2))
    assert amp == pytest.approx(1.0, abs=0.02)
    # phase by projection on the delayed reference
    ref_c = np.cos(2 * np.pi * 10 * (t - residual / FS))
    phase = np.arctan2(np.dot(y[sl], ref_c[sl]), np.dot(y[sl], expect[sl]))
    assert abs(phase) < 0.01
    # the leftover skew is half a sample, 10 ms
    assert residual / FS == pytest.approx(0.01)


def test_filter_matches_direct_convolution_oracle(hp):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(700, 6))
    y = apply_highpass(make_rec(x, Wrist.RIGHT), hp).samples[:, 1]
    c = hp.coefficients
    s = hp.alignment_shift
    for i in (0, 100, 350, 699):
        j = i + s
        acc = sum(c[k] * x[j - k, 1] for k in range(len(c)) if 0 <= j - k < len(x))
        assert y[i] == pytest.approx(acc, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31))
def test_filter_linearity(a, b, seed):
    filt = design_highpass(1.0, 64, FS)
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 300, 6))
    f = lambda z: apply_highpass(make_rec(z, Wrist.RIGHT), filt).samples
    np.testing.assert_allclose(f(a * x + b * y), a * f(x) + b * f(y), atol=1e-9)


def test_fir_filter_validates():
    with pytest.raises(ValueError):
        FirFilter(np.zeros(0))


# resampling

def test_resample_uniform_identity():
    rng = np.random.default_rng(1)
    t = 1.6e9 + np.arange(200) / FS
    v = rng.normal(size=(200, 6))
    rec = resample_uniform(t, v, FS)
    assert len(rec) == 200
    np.testing.assert_allclose(rec.samples, v, atol=1e-9)


def test_resample_linear_ramp():
    v = np.zeros((2, 6))
    v[1] = 1.0
    rec = resample_uniform([0.0, 1.0], v, 4.0)
    np.testing.assert_allclose(rec.samples[:, 0], [0, 0.25, 0.5, 0.75, 1.0])


def test_resample_matches_naive_oracle():
    rng = np.random.default_rng(2)
    t = np.cumsum(rng.uniform(0.015, 0.025, 150))
    v = rng.normal(size=(150, 6))
    rec = resample_uniform(t, v, FS)
    grid = t[0] + np.arange(len(rec)) / FS
    for i, g in enumerate(grid):
        # find bracketing knots by scanning
        j = max(k for k in range(len(t)) if t[k] <= g + 1e-12)
        if j == len(t) - 1:
            expect = v[j]
        else:
            w = (g - t[j]) / (t[j + 1] - t[j])
            expect = (1 - w) * v[j] + w * v[j + 1]
        np.testing.assert_allclose(rec.samples[i], expect, atol=1e-9)


@pytest.mark.parametrize("t", [[0.0, 0.0, 1.0], [0.0, 1.0, 0.5], [0.0]])
def test_resample_rejects_bad_timestamps(t):
    with pytest.raises(ValueError):
        resample_uniform(t, np.zeros((len(t), 6)), FS)


def test_preprocess_mirrors_then_filters(hp):
    rng = np.random.default_rng(4)
    x = rng.normal(size=(800, 6))
    left = preprocess(make_rec(x, Wrist.LEFT), hp)
    right = preprocess(make_rec(x * [-1, 1, 1, 1, -1, -1], Wrist.RIGHT), hp)
    assert left.wrist is Wrist.RIGHT
    np.testing.assert_allclose(left.samples, right.samples, atol=1e-12)
