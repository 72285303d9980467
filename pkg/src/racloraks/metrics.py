"""Reconstruction error metrics and image combination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kspace import KSpaceGrid, ifft2c


class MetricError(ValueError):
    pass


def _arr(g):
    return g.data if isinstance(g, KSpaceGrid) else np.asarray(g)


def _pairs(est, gold):
    est = [_arr(g) for g in est]
    gold = [_arr(g) for g in gold]
    if len(est) != len(gold):
        raise MetricError(f"got {len(est)} estimate grids but {len(gold)} gold grids")
    for e, g in zip(est, gold):
        if e.shape != g.shape:
            raise MetricError(f"shape mismatch: estimate {e.shape} vs gold {g.shape}")
    return est, gold


def nrmse(k_pos, k_neg, gold_pos, gold_neg) -> float:
    """Normalised RMS error pooled over both polarity grids."""
    est, gold = _pairs((k_pos, k_neg), (gold_pos, gold_neg))
    den = sum(float(np.vdot(g, g).real) for g in gold)
    if den == 0:
        raise MetricError("gold standard has zero energy; NRMSE is undefined")
    num = sum(float(np.vdot(e - g, e - g).real) for e, g in zip(est, gold))
    return float(np.sqrt(num / den))


@dataclass(frozen=True, eq=False)
class EspCurve:
    """Error spectrum: per-annulus error normalised by gold energy.

    ``value`` is NaN for bins without gold energy.
    """

    edges: np.ndarray
    radius: np.ndarray
    value: np.ndarray
    count: np.ndarray
    error_energy: np.ndarray
    gold_energy: np.ndarray

    @property
    def present(self) -> np.ndarray:
        return self.gold_energy > 0

    def total(self) -> float:
        """Pooled ratio over all bins; equals :func:`nrmse` for the same inputs."""
        return float(np.sqrt(self.error_energy.sum() / self.gold_energy.sum()))


def kspace_radius(ny, nx) -> np.ndarray:
    """Distance from DC in cycles per FOV."""
    fy = (np.arange(ny) - ny // 2) / ny
    fx = (np.arange(nx) - nx // 2) / nx
    return np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)


def esp(estimate, gold, n_bins: int = 32) -> EspCurve:
    """Error spectrum over uniform annuli of k-space radius.

    ``estimate`` and ``gold`` are sequences of grids (typically the two
    polarities); all channels and grids are pooled within each annulus.
    """
    if n_bins < 2:
        raise MetricError(f"n_bins must be >= 2, got {n_bins}")
    est, gold = _pairs(estimate, gold)
    if not est:
        raise MetricError("no grids given")
    ny, nx = gold[0].shape[-2:]
    rad = kspace_radius(ny, nx)
    edges = np.linspace(0, rad.max(), n_bins + 1)
    idx = np.clip(np.digitize(rad, edges[1:-1]), 0, n_bins - 1).ravel()
    err = np.zeros(n_bins)
    ref = np.zeros(n_bins)
    count = np.zeros(n_bins, dtype=int)
    for e, g in zip(est, gold):
        e = e.reshape(-1, ny * nx)
        g = g.reshape(-1, ny * nx)
        err += np.bincount(idx, (np.abs(e - g) ** 2).sum(axis=0), n_bins)
        ref += np.bincount(idx, (np.abs(g) ** 2).sum(axis=0), n_bins)
        count += np.bincount(idx, minlength=n_bins) * e.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(ref > 0, np.sqrt(err / ref), np.nan)
    return EspCurve(
        edges=edges, radius=0.5 * (edges[1:] + edges[:-1]), value=value,
        count=count, error_energy=err, gold_energy=ref,
    )


def ssos(grids) -> np.ndarray:
    """Root sum-of-squares image over every channel of every grid."""
    grids = list(grids)
    if not grids:
        raise MetricError("ssos needs at least one grid")
    shape = _arr(grids[0]).shape[-2:]
    acc = np.zeros(shape)
    for g in grids:
        a = _arr(g)
        if a.shape[-2:] != shape:
            raise MetricError(f"shape mismatch: {a.shape[-2:]} vs {shape}")
        img = ifft2c(a.reshape(-1, *shape))
        acc += (np.abs(img) ** 2).sum(axis=0)
    return np.sqrt(acc)


def to_pgm(image: np.ndarray) -> bytes:
    """16-bit binary PGM, scaled so the maximum maps to 65535."""
    img = np.asarray(image, dtype=float)
    top = img.max()
    scaled = np.zeros(img.shape) if top <= 0 else img / top * 65535
    data = np.rint(scaled).astype(">u2")
    ny, nx = img.shape
    return f"P5\n{nx} {ny}\n65535\n".encode("ascii") + data.tobytes()
