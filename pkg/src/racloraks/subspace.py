"""Rank penalties, trailing right-singular subspaces and rank suggestions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class RankPlan:
    """``r`` is the S-side rank, ``p`` the C-side nullspace dimension."""

    r: int
    p: int

    def check(self, n_cols_s: int, n_cols_c: int):
        if not 0 < self.r < n_cols_s:
            raise ParameterError(f"rank r={self.r} must satisfy 0 < r < {n_cols_s} (S-matrix columns)")
        if not 0 < self.p < n_cols_c:
            raise ParameterError(f"nullspace dimension p={self.p} must satisfy 0 < p < {n_cols_c} (C-matrix columns)")


def singular_values(X) -> np.ndarray:
    return np.linalg.svd(np.asarray(X), compute_uv=False)


def penalty_Jr(X, r: int) -> float:
    """Squared distance from ``X`` to the nearest matrix of rank at most ``r``.

    Singular values at or below the usual numerical-rank cutoff
    ``s_max * max(m, n) * eps`` count as zero, so inputs of rank at most
    ``r`` give exactly 0.
    """
    X = np.asarray(X)
    if int(r) != r or not 0 <= r <= min(X.shape):
        raise ParameterError(f"rank r={r} must be an integer in [0, {min(X.shape)}]")
    s = singular_values(X)
    if s.size:
        s = np.where(s <= s[0] * max(X.shape) * np.finfo(float).eps, 0.0, s)
    tail = s[int(r):]
    return float(np.dot(tail, tail))


def _normalize_signs(V):
    # make the largest-magnitude entry of each column real and positive
    idx = np.argmax(np.abs(V), axis=0)
    piv = V[idx, np.arange(V.shape[1])]
    return V * (np.abs(piv) / piv) if np.iscomplexobj(V) else V * np.sign(piv)


def right_singular(X):
    """All right singular vectors of ``X`` as columns, with singular values padded to ``n_cols``."""
    X = np.asarray(X)
    m, n = X.shape
    _, s, vh = np.linalg.svd(X, full_matrices=m < n)
    if s.size < n:
        s = np.concatenate([s, np.zeros(n - s.size)])
    return vh.conj().T, s


def nullspace_basis(X, p: int) -> np.ndarray:
    """Orthonormal basis of the right singular vectors for the ``p`` smallest singular values.

    Columns are ordered as the SVD returns them (descending singular value)
    and sign-normalised so the largest-magnitude entry of each is real-positive.
    """
    X = np.asarray(X)
    n = X.shape[1]
    if int(p) != p or not 0 < p < n:
        raise ParameterError(f"nullspace dimension p={p} must satisfy 0 < p < {n}")
    V, _ = right_singular(X)
    return _normalize_signs(V[:, n - int(p):])


def principal_angles(A, B) -> np.ndarray:
    """Principal angles (radians, descending) between the column spans of ``A`` and ``B``."""
    from scipy.linalg import subspace_angles

    return subspace_angles(A, B)


def suggest_rank(singular_values, kind: str = "C", flat: float = 0.05, decay: float = 0.9):
    """Pick the rank where a descending singular-value curve flattens out.

    Returns ``(rank, confident)``. The rank is the smallest ``i`` (0-based)
    such that the tail ``s[i:]`` lies below ``flat * s[0]`` and is flat: either
    ``s[i] == 0`` or the geometric-mean step ratio over the tail exceeds
    ``decay``. Without such an index the fallback is ``floor(0.75 * len(s))``
    with ``confident=False``. ``kind`` only names the curve; the rule is the
    same for C and S curves.
    """
    if kind not in ("C", "S"):
        raise ParameterError(f"kind must be 'C' or 'S', got {kind!r}")
    s = np.asarray(singular_values, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ParameterError("singular values must be a nonempty 1-D sequence")
    if np.any(s < 0) or np.any(~np.isfinite(s)):
        raise ParameterError("singular values must be finite and nonnegative")
    if np.any(np.diff(s) > 0):
        raise ParameterError("singular values must be sorted in descending order")
    if s[0] == 0:
        return 0, True
    n = s.size
    for i in range(1, n):
        if s[i] == 0:
            return i, True
        if s[i] / s[0] >= flat:
            continue
        steps = n - 1 - i
        if steps == 0 or (s[-1] / s[i]) ** (1.0 / steps) > decay:
            return i, True
    return int(np.floor(0.75 * n)), False
