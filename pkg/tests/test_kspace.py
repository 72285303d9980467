from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from racloraks.kspace import (
    Dataset, KSpaceGrid, Polarity, SamplingPattern, fft2c, ifft2c, split_interleaved,
)


def _grid(rng, n_ch=2, ny=8, nx=8):
    return KSpaceGrid(rng.standard_normal((n_ch, ny, nx)) + 1j * rng.standard_normal((n_ch, ny, nx)))


def _nonzero_lines(g):
    return set(np.flatnonzero(np.any(g.data != 0, axis=(0, 2))).tolist())


def test_split_r1_all_lines():
    rng = np.random.default_rng(0)
    raw = _grid(rng, ny=4, nx=4)
    pos, neg = split_interleaved(raw, SamplingPattern(ny=4, R=1))
    assert _nonzero_lines(pos) == {0, 2}
    assert _nonzero_lines(neg) == {1, 3}
    assert pos.polarity is Polarity.POSITIVE and neg.polarity is Polarity.NEGATIVE


def test_split_r2():
    rng = np.random.default_rng(1)
    pos, neg = split_interleaved(_grid(rng), SamplingPattern(ny=8, R=2))
    assert _nonzero_lines(pos) == {0, 4}
    assert _nonzero_lines(neg) == {2, 6}


def test_split_partial_fourier_window():
    # window start floor((1 - 5/8) * 8) = 3, so lines 3..7 with the centre row 4 inside
    pat = SamplingPattern(ny=8, R=1, pf=Fraction(5, 8))
    assert np.flatnonzero(pat.acquired).tolist() == [3, 4, 5, 6, 7]
    pos, neg = split_interleaved(_grid(np.random.default_rng(2)), pat)
    assert _nonzero_lines(pos) == {4, 6}
    assert _nonzero_lines(neg) == {3, 5, 7}


def test_split_shape_error():
    with pytest.raises(ValueError, match="shape mismatch"):
        split_interleaved(_grid(np.random.default_rng(0)), SamplingPattern(ny=6))


def test_line_counts_pf_six_eighths():
    pat = SamplingPattern(ny=32, R=2, pf=Fraction(6, 8))
    assert pat.window_start == 8
    assert len(pat.lines(Polarity.POSITIVE)) == 6
    assert len(pat.lines(Polarity.NEGATIVE)) == 6


@pytest.mark.parametrize("pf", [1, 0.875, 0.75, 0.625, Fraction(5, 8)])
def test_pf_values_accepted(pf):
    SamplingPattern(ny=16, R=1, pf=pf)


@pytest.mark.parametrize("bad", [dict(R=0), dict(pf=0.5), dict(offset=4, R=2), dict(offset=-1)])
def test_invalid_pattern(bad):
    with pytest.raises(ValueError):
        SamplingPattern(ny=16, **bad)


@settings(max_examples=60, deadline=None)
@given(
    ny=st.integers(4, 40),
    R=st.integers(1, 4),
    pf=st.sampled_from([Fraction(1), Fraction(7, 8), Fraction(6, 8), Fraction(5, 8)]),
    data=st.data(),
)
def test_pattern_properties(ny, R, pf, data):
    o = data.draw(st.integers(0, 2 * R - 1))
    pat = SamplingPattern(ny=ny, R=R, pf=pf, offset=o)
    pos, neg = pat.lines(Polarity.POSITIVE), pat.lines(Polarity.NEGATIVE)
    assert not set(pos) & set(neg)
    assert sorted(set(pos) | set(neg)) == np.flatnonzero(pat.acquired).tolist()
    assert np.all(np.diff(pos) == 2 * R) and np.all(np.diff(neg) == 2 * R)
    assert np.all(pos >= pat.window_start) and np.all(neg >= pat.window_start)
    start = pat.window_start
    assert all((k - o) % (2 * R) == 0 for k in pos)
    assert all((k - o - R) % (2 * R) == 0 for k in neg)
    # every candidate inside the window is acquired
    assert sum(1 for k in range(start, ny) if (k - o) % R == 0) == len(pos) + len(neg)

    rng = np.random.default_rng(ny * 100 + R)
    raw = _grid(rng, n_ch=1, ny=ny, nx=3)
    p, n = split_interleaved(raw, pat)
    masked = np.where(pat.acquired_mask(3)[None], raw.data, 0)
    assert np.array_equal(p.data + n.data, masked)


def test_grid_is_immutable_and_finite():
    g = KSpaceGrid(np.ones((1, 4, 4)))
    with pytest.raises(ValueError):
        g.data[0, 0, 0] = 2
    with pytest.raises(ValueError, match="non-finite"):
        KSpaceGrid(np.full((1, 4, 4), np.nan))


def test_dataset_rejects_samples_outside_pattern():
    rng = np.random.default_rng(3)
    full = _grid(rng)
    pat = SamplingPattern(ny=8, R=2)
    acs = (_grid(rng), _grid(rng))
    with pytest.raises(ValueError, match="outside the sampling pattern"):
        Dataset(epi=(full, full), pattern=pat, acs=acs)
    pos, neg = split_interleaved(full, pat)
    ds = Dataset(epi=(pos, neg), pattern=pat, acs=acs)
    assert ds.acs_complete


def test_fft_is_unitary_and_centered():
    rng = np.random.default_rng(4)
    img = rng.standard_normal((3, 10, 12)) + 1j * rng.standard_normal((3, 10, 12))
    k = fft2c(img)
    assert np.isclose(np.linalg.norm(k), np.linalg.norm(img), rtol=1e-12)
    assert np.allclose(ifft2c(k), img, atol=1e-12)
    delta = np.zeros((10, 12))
    delta[5, 6] = 1
    assert np.allclose(fft2c(delta), 1 / np.sqrt(120))
    const = np.ones((10, 12))
    assert np.argmax(np.abs(fft2c(const))) == 5 * 12 + 6
