"""Multi-channel k-space grids, EPI sampling patterns and datasets."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


class Polarity(enum.Enum):
    POSITIVE = "pos"
    NEGATIVE = "neg"
    NONE = "none"


ALLOWED_PF = (Fraction(1), Fraction(7, 8), Fraction(6, 8), Fraction(5, 8))

# per-line codes used in masks and on disk
UNACQUIRED, POS_LINE, NEG_LINE = 0, 1, 2


def _frozen(a):
    a = np.array(a, dtype=np.complex128, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class KSpaceGrid:
    """Complex k-space samples indexed ``(channel, ky, kx)``.

    DC sits at ``(ny // 2, nx // 2)``. The array is copied and made read-only
    on construction.
    """

    data: np.ndarray
    polarity: Polarity = Polarity.NONE

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim == 2:
            a = a[None]
        if a.ndim != 3:
            raise ValueError(f"k-space data must be (n_ch, ny, nx), got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1 or a.shape[2] < 1:
            raise ValueError(f"empty k-space grid {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("k-space data contains non-finite values")
        object.__setattr__(self, "data", _frozen(a))
        object.__setattr__(self, "polarity", Polarity(self.polarity))

    @property
    def n_ch(self) -> int:
        return self.data.shape[0]

    @property
    def ny(self) -> int:
        return self.data.shape[1]

    @property
    def nx(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data) -> "KSpaceGrid":
        return KSpaceGrid(data, self.polarity)

    def __eq__(self, other):
        if not isinstance(other, KSpaceGrid):
            return NotImplemented
        return (
            self.polarity == other.polarity
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None


def _as_fraction(pf) -> Fraction:
    f = Fraction(pf).limit_denominator(64) if isinstance(pf, float) else Fraction(pf)
    if f not in ALLOWED_PF:
        raise ValueError(f"partial Fourier fraction must be one of 1, 7/8, 6/8, 5/8; got {pf}")
    return f


@dataclass(frozen=True)
class SamplingPattern:
    """Interleaved dual-polarity EPI line pattern.

    Positive-polarity lines are ``ky = offset (mod 2R)``, negative-polarity
    lines ``ky = offset + R (mod 2R)``; both are restricted to the partial
    Fourier window ``ky >= floor((1 - pf) * ny)``.
    """

    ny: int
    R: int = 1
    pf: Fraction = Fraction(1)
    offset: int = 0

    def __post_init__(self):
        if int(self.ny) != self.ny or self.ny < 1:
            raise ValueError(f"ny must be a positive integer, got {self.ny}")
        if int(self.R) != self.R or self.R < 1:
            raise ValueError(f"acceleration factor R must be an integer >= 1, got {self.R}")
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "R", int(self.R))
        object.__setattr__(self, "pf", _as_fraction(self.pf))
        if not 0 <= self.offset < 2 * self.R:
            raise ValueError(f"offset must lie in [0, 2R) = [0, {2 * self.R}), got {self.offset}")
        object.__setattr__(self, "offset", int(self.offset))

    @property
    def window_start(self) -> int:
        # floor((1 - pf) * ny) in exact arithmetic
        return ((self.pf.denominator - self.pf.numerator) * self.ny) // self.pf.denominator

    @property
    def line_codes(self) -> np.ndarray:
        """Per-line code: 0 unacquired, 1 positive, 2 negative."""
        ky = np.arange(self.ny)
        phase = (ky - self.offset) % (2 * self.R)
        codes = np.zeros(self.ny, dtype=np.uint8)
        codes[phase == 0] = POS_LINE
        codes[phase == self.R] = NEG_LINE
        codes[ky < self.window_start] = UNACQUIRED
        return codes

    @property
    def acquired(self) -> np.ndarray:
        return self.line_codes != UNACQUIRED

    @property
    def polarity_of_line(self) -> list:
        out = []
        for c in self.line_codes:
            if c == POS_LINE:
                out.append(Polarity.POSITIVE)
            elif c == NEG_LINE:
                out.append(Polarity.NEGATIVE)
            else:
                out.append(Polarity.NONE)
        return out

    def lines(self, polarity: Polarity) -> np.ndarray:
        code = POS_LINE if Polarity(polarity) is Polarity.POSITIVE else NEG_LINE
        return np.flatnonzero(self.line_codes == code)

    def mask(self, polarity: Polarity, nx: int) -> np.ndarray:
        """Boolean ``(ny, nx)`` mask of samples measured for one polarity."""
        rows = np.zeros(self.ny, dtype=bool)
        rows[self.lines(polarity)] = True
        return np.repeat(rows[:, None], nx, axis=1)

    def acquired_mask(self, nx: int) -> np.ndarray:
        return np.repeat(self.acquired[:, None], nx, axis=1)

    @classmethod
    def full(cls, ny: int) -> "SamplingPattern":
        return cls(ny=ny, R=1, pf=Fraction(1), offset=0)


def split_interleaved(raw: KSpaceGrid, pattern: SamplingPattern):
    """Separate an interleaved EPI grid into per-polarity grids.

    Lines not acquired with a given polarity are zero in that polarity's grid.
    """
    if raw.ny != pattern.ny:
        raise ValueError(f"shape mismatch: grid has ny={raw.ny}, pattern has ny={pattern.ny}")
    pos = np.zeros_like(raw.data)
    neg = np.zeros_like(raw.data)
    lp = pattern.lines(Polarity.POSITIVE)
    ln = pattern.lines(Polarity.NEGATIVE)
    pos[:, lp, :] = raw.data[:, lp, :]
    neg[:, ln, :] = raw.data[:, ln, :]
    return KSpaceGrid(pos, Polarity.POSITIVE), KSpaceGrid(neg, Polarity.NEGATIVE)


@dataclass(frozen=True, eq=False)
class Dataset:
    """EPI measurements, ACS data and optional gold standard for one slice.

    ``acs_pattern`` lists which ACS lines were acquired; acquired ACS lines
    are measured in both ACS polarity grids.

    ``measured_lines`` optionally overrides the per-polarity measured lines
    implied by ``pattern`` with a pair of boolean per-line arrays. This
    covers data that no interleaved pattern describes, such as both
    polarities fully sampled. Such datasets cannot be written to a container.
    """

    epi: tuple
    pattern: SamplingPattern
    acs: tuple
    acs_pattern: SamplingPattern = None
    gold: tuple = None
    meta: dict = field(default_factory=dict)
    measured_lines: tuple = None

    def __post_init__(self):
        epi = tuple(self.epi)
        acs = tuple(self.acs)
        if len(epi) != 2 or len(acs) != 2:
            raise ValueError("epi and acs must each be a (positive, negative) pair of grids")
        if epi[0].shape != epi[1].shape:
            raise ValueError(f"shape mismatch between EPI polarities: {epi[0].shape} vs {epi[1].shape}")
        if acs[0].shape != acs[1].shape:
            raise ValueError(f"shape mismatch between ACS polarities: {acs[0].shape} vs {acs[1].shape}")
        if acs[0].n_ch != epi[0].n_ch:
            raise ValueError(f"ACS has {acs[0].n_ch} channels, EPI has {epi[0].n_ch}")
        if self.pattern.ny != epi[0].ny:
            raise ValueError(f"pattern ny={self.pattern.ny} does not match EPI ny={epi[0].ny}")
        acs_pattern = self.acs_pattern or SamplingPattern.full(acs[0].ny)
        if acs_pattern.ny != acs[0].ny:
            raise ValueError(f"acs_pattern ny={acs_pattern.ny} does not match ACS ny={acs[0].ny}")
        lines = self.measured_lines
        if lines is not None:
            lines = tuple(np.array(m, dtype=bool) for m in lines)
            if len(lines) != 2 or any(m.shape != (epi[0].ny,) for m in lines):
                raise ValueError(f"measured_lines must be two boolean arrays of length {epi[0].ny}")
            for m in lines:
                m.setflags(write=False)
            object.__setattr__(self, "measured_lines", lines)
        for g, pol, m in zip(epi, (Polarity.POSITIVE, Polarity.NEGATIVE), self.epi_masks):
            if np.any(g.data[:, ~m] != 0):
                raise ValueError(f"EPI {pol.value} grid has nonzero samples outside the sampling pattern")
        gold = self.gold
        if gold is not None:
            gold = tuple(gold)
            if len(gold) != 2 or gold[0].shape != epi[0].shape or gold[1].shape != epi[0].shape:
                raise ValueError("gold must be a (positive, negative) pair shaped like the EPI grids")
        object.__setattr__(self, "epi", epi)
        object.__setattr__(self, "acs", acs)
        object.__setattr__(self, "acs_pattern", acs_pattern)
        object.__setattr__(self, "gold", gold)

    @property
    def epi_masks(self):
        nx = self.epi[0].nx
        if self.measured_lines is not None:
            return tuple(np.repeat(m[:, None], nx, axis=1) for m in self.measured_lines)
        return self.pattern.mask(Polarity.POSITIVE, nx), self.pattern.mask(Polarity.NEGATIVE, nx)

    @property
    def acs_mask(self) -> np.ndarray:
        return self.acs_pattern.acquired_mask(self.acs[0].nx)

    @property
    def acs_complete(self) -> bool:
        return bool(np.all(self.acs_pattern.acquired))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.epi == other.epi
            and self.acs == other.acs
            and self.pattern == other.pattern
            and self.acs_pattern == other.acs_pattern
            and self.gold == other.gold
            and _same_lines(self.measured_lines, other.measured_lines)
        )

    __hash__ = None


def _same_lines(a, b):
    if a is None or b is None:
        return a is b
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def fft2c(img: np.ndarray) -> np.ndarray:
    """Unitary, DC-centred 2-D DFT over the last two axes."""
    x = np.fft.ifftshift(img, axes=(-2, -1))
    return np.fft.fftshift(np.fft.fft2(x, norm="ortho"), axes=(-2, -1))


def ifft2c(k: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2c`."""
    x = np.fft.ifftshift(k, axes=(-2, -1))
    return np.fft.fftshift(np.fft.ifft2(x, norm="ortho"), axes=(-2, -1))
