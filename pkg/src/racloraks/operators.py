"""LORAKS C and S liftings of multi-channel k-space and their adjoints.

The C matrix has one row per valid centre ``p`` and one column per
(channel, offset) pair holding ``k_c(p - m)``. The S matrix is real with two
row blocks; with ``a = k_c(p - m)`` and ``b = k_c(2*DC - (p - m))`` (the
sample mirrored through DC) the first block holds ``[Re a - Re b, Im a + Im b]``
per channel and the second ``[Im a - Im b, -(Re a + Re b)]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kspace import KSpaceGrid


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Neighborhood:
    """Integer offsets ``(dy, dx)`` within a disk of the given radius."""

    radius: int = 2

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValueError(f"neighborhood radius must be an integer >= 1, got {self.radius}")

    @property
    def offsets(self) -> np.ndarray:
        return _offsets(int(self.radius))

    def __len__(self):
        return len(self.offsets)


@lru_cache(maxsize=None)
def _offsets(radius):
    r = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(r, r, indexing="ij")
    keep = dy**2 + dx**2 <= radius**2
    out = np.stack([dy[keep], dx[keep]], axis=1)  # meshgrid ij order is lexicographic
    out.flags.writeable = False
    return out


def _as_nb(nb):
    return nb if isinstance(nb, Neighborhood) else Neighborhood(int(nb))


@lru_cache(maxsize=None)
def _centers(ny, nx, radius, kind):
    if ny < 2 * radius + 1 or nx < 2 * radius + 1:
        raise ShapeError(f"grid {ny}x{nx} is too small for radius {radius}: need at least {2 * radius + 1}")
    ys = np.arange(radius, ny - radius)
    xs = np.arange(radius, nx - radius)
    if kind == "S":
        # mirror of p - m is 2*DC - p + m; it must stay in-grid for every |m| <= radius
        dcy, dcx = ny // 2, nx // 2
        ys = ys[(2 * dcy - ys - radius >= 0) & (2 * dcy - ys + radius <= ny - 1)]
        xs = xs[(2 * dcx - xs - radius >= 0) & (2 * dcx - xs + radius <= nx - 1)]
        if ys.size == 0 or xs.size == 0:
            raise ShapeError(f"grid {ny}x{nx} has no S-valid centres for radius {radius}")
    cy, cx = np.meshgrid(ys, xs, indexing="ij")
    out = np.stack([cy.ravel(), cx.ravel()], axis=1)
    out.flags.writeable = False
    return out


def valid_centers(ny: int, nx: int, radius, kind: str = "C") -> np.ndarray:
    """Centres (lexicographic) whose whole neighbourhood lies inside the grid.

    For ``kind="S"`` the mirrored neighbourhood must also lie inside.
    """
    if kind not in ("C", "S"):
        raise ValueError(f"kind must be 'C' or 'S', got {kind!r}")
    return _centers(int(ny), int(nx), int(_as_nb(radius).radius), kind)


@lru_cache(maxsize=64)
def _gather_index(ny, nx, radius, kind):
    """Flat in-plane indices of ``p - m`` (and its mirror for S), shape (centres, offsets)."""
    c = _centers(ny, nx, radius, kind)
    off = _offsets(radius)
    iy = c[:, None, 0] - off[None, :, 0]
    ix = c[:, None, 1] - off[None, :, 1]
    direct = iy * nx + ix
    direct.flags.writeable = False
    if kind == "C":
        return direct, None
    mirror = (2 * (ny // 2) - iy) * nx + (2 * (nx // 2) - ix)
    mirror.flags.writeable = False
    return direct, mirror


@dataclass(frozen=True, eq=False)
class LoraksMatrix:
    """A lifted matrix together with the grid geometry it came from."""

    entries: np.ndarray
    kind: str
    n_ch: int
    ny: int
    nx: int
    radius: int

    def __post_init__(self):
        n_off = len(_offsets(self.radius))
        n_c = len(_centers(self.ny, self.nx, self.radius, self.kind))
        expected = (n_c, self.n_ch * n_off) if self.kind == "C" else (2 * n_c, 2 * self.n_ch * n_off)
        if self.entries.shape != expected:
            raise ShapeError(f"{self.kind} matrix has shape {self.entries.shape}, geometry implies {expected}")

    @property
    def shape(self):
        return self.entries.shape

    @property
    def n_rows(self) -> int:
        return self.entries.shape[0]

    @property
    def n_cols(self) -> int:
        return self.entries.shape[1]


def _raw(grid):
    if isinstance(grid, KSpaceGrid):
        return grid.data
    a = np.asarray(grid)
    return a[None] if a.ndim == 2 else a


def c_matrix(data: np.ndarray, radius: int) -> np.ndarray:
    """C lifting of a raw ``(n_ch, ny, nx)`` array, returned as a plain array."""
    n_ch, ny, nx = data.shape
    idx, _ = _gather_index(ny, nx, radius, "C")
    g = data.reshape(n_ch, ny * nx)[:, idx]  # (n_ch, centres, offsets)
    return g.transpose(1, 0, 2).reshape(idx.shape[0], n_ch * idx.shape[1])


def c_adjoint(M: np.ndarray, shape, radius: int) -> np.ndarray:
    n_ch, ny, nx = shape
    idx, _ = _gather_index(ny, nx, radius, "C")
    n_c, n_off = idx.shape
    blocks = M.reshape(n_c, n_ch, n_off).transpose(1, 0, 2).reshape(n_ch, -1)
    flat = idx.ravel()
    out = np.empty((n_ch, ny * nx), dtype=np.result_type(M.dtype, np.complex128))
    for c in range(n_ch):
        out[c] = np.bincount(flat, weights=blocks[c].real, minlength=ny * nx) + 1j * np.bincount(
            flat, weights=blocks[c].imag, minlength=ny * nx
        )
    return out.reshape(n_ch, ny, nx)


def s_matrix(data: np.ndarray, radius: int) -> np.ndarray:
    """S lifting of a raw ``(n_ch, ny, nx)`` array, returned as a real array."""
    n_ch, ny, nx = data.shape
    idx, mir = _gather_index(ny, nx, radius, "S")
    n_c, n_off = idx.shape
    flat = data.reshape(n_ch, ny * nx)
    a = flat[:, idx].transpose(1, 0, 2)  # (centres, n_ch, offsets)
    b = flat[:, mir].transpose(1, 0, 2)
    out = np.empty((2, n_c, n_ch, 2, n_off))
    out[0, :, :, 0] = a.real - b.real
    out[0, :, :, 1] = a.imag + b.imag
    out[1, :, :, 0] = a.imag - b.imag
    out[1, :, :, 1] = -(a.real + b.real)
    return out.reshape(2 * n_c, 2 * n_ch * n_off)


def s_adjoint(M: np.ndarray, shape, radius: int) -> np.ndarray:
    n_ch, ny, nx = shape
    idx, mir = _gather_index(ny, nx, radius, "S")
    n_c, n_off = idx.shape
    blk = np.asarray(M, dtype=float).reshape(2, n_c, n_ch, 2, n_off).transpose(2, 0, 3, 1, 4)
    t1a, t1b = blk[:, 0, 0], blk[:, 0, 1]  # (n_ch, centres, offsets)
    t2a, t2b = blk[:, 1, 0], blk[:, 1, 1]
    # gradients of <S(x), M> with respect to Re/Im of the direct and mirrored samples
    re_a, im_a = t1a - t2b, t1b + t2a
    re_b, im_b = -t1a - t2b, t1b - t2a
    fa, fb = idx.ravel(), mir.ravel()
    n = ny * nx
    out = np.empty((n_ch, n), dtype=np.complex128)
    for c in range(n_ch):
        re = np.bincount(fa, re_a[c].ravel(), n) + np.bincount(fb, re_b[c].ravel(), n)
        im = np.bincount(fa, im_a[c].ravel(), n) + np.bincount(fb, im_b[c].ravel(), n)
        out[c] = re + 1j * im
    return out.reshape(n_ch, ny, nx)


def build_C(grid, nb=2) -> LoraksMatrix:
    """C lifting of ``grid``: rows are valid centres, columns (channel, offset)."""
    nb = _as_nb(nb)
    data = _raw(grid)
    n_ch, ny, nx = data.shape
    return LoraksMatrix(c_matrix(data, nb.radius), "C", n_ch, ny, nx, nb.radius)


def build_S(grid, nb=2) -> LoraksMatrix:
    """S lifting of ``grid``; real-valued, two row blocks per centre set."""
    nb = _as_nb(nb)
    data = _raw(grid)
    n_ch, ny, nx = data.shape
    return LoraksMatrix(s_matrix(data, nb.radius), "S", n_ch, ny, nx, nb.radius)


def _check_target(M, kind, shape):
    if M.kind != kind:
        raise ShapeError(f"expected a {kind} matrix, got {M.kind}")
    if shape is not None and tuple(shape) != (M.n_ch, M.ny, M.nx):
        raise ShapeError(f"matrix was lifted from {(M.n_ch, M.ny, M.nx)}, target grid is {tuple(shape)}")


def adjoint_C(M: LoraksMatrix, shape=None) -> KSpaceGrid:
    _check_target(M, "C", shape)
    return KSpaceGrid(c_adjoint(M.entries, (M.n_ch, M.ny, M.nx), M.radius))


def adjoint_S(M: LoraksMatrix, shape=None) -> KSpaceGrid:
    _check_target(M, "S", shape)
    return KSpaceGrid(s_adjoint(M.entries, (M.n_ch, M.ny, M.nx), M.radius))
