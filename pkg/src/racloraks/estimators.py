"""Estimator wrappers following the scikit-learn ``fit``/``transform`` protocol.

``fit`` learns what can be learned from the calibration (ACS) data and
``transform`` reconstructs the EPI data of a dataset. ``transform`` returns
an array of shape ``(2, n_ch, ny, nx)`` holding the positive and negative
polarity grids; :meth:`reconstruct` returns the full result with the
objective trace and diagnostics.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .solver import ReconConfig, ReconResult, ac_loraks, acs_nullspace, rac_loraks, resolve_ranks, zero_fill
from .validation import check_consistent, check_dataset


def _stack(result: ReconResult) -> np.ndarray:
    return np.stack([result.k_pos.data, result.k_neg.data])


class _Reconstructor(TransformerMixin, BaseEstimator):
    def transform(self, X):
        return _stack(self.reconstruct(X))

    def score(self, X, y=None):
        """Negative NRMSE against the dataset's gold standard (higher is better)."""
        from .metrics import nrmse

        X = check_dataset(X, require_gold=True)
        return -nrmse(*self.reconstruct(X).grids, *X.gold)


class ZeroFill(_Reconstructor):
    """Measured samples with zeros elsewhere; the baseline."""

    def fit(self, X, y=None):
        X = check_dataset(X)
        self.n_channels_ = X.epi[0].n_ch
        return self

    def reconstruct(self, X) -> ReconResult:
        check_is_fitted(self)
        X = check_dataset(X)
        return zero_fill(X)


class _Loraks(_Reconstructor):
    def _config(self, **overrides) -> ReconConfig:
        params = dict(
            lam=self.lam, eta=getattr(self, "eta", 0.0), rank_s=self.rank_s, nullspace_p=self.nullspace_p,
            radius=self.radius, max_outer=self.max_outer, tol=self.tol, cg_max=self.cg_max,
            cg_tol=self.cg_tol,
        )
        params.update(overrides)
        return ReconConfig(**params)


class AcLoraks(_Loraks):
    """Reconstruction with a nullspace fixed from the ACS data.

    Parameters
    ----------
    lam : float
        Weight of the S-matrix rank penalty.
    rank_s, nullspace_p : int or None
        Rank of the S matrix and nullspace dimension; ``None`` picks them
        from the ACS singular values during ``fit``.
    radius : int
        Neighborhood radius of the lifting.
    max_outer, tol, cg_max, cg_tol
        Iteration controls.

    Attributes
    ----------
    nullspace_ : ndarray of shape (n_ch * n_offsets, nullspace_p_)
    rank_s_, nullspace_p_ : int
    n_channels_ : int
    """

    def __init__(self, lam=0.1, rank_s=None, nullspace_p=None, radius=2, max_outer=100,
                 tol=1e-6, cg_max=250, cg_tol=1e-8):
        self.lam = lam
        self.rank_s = rank_s
        self.nullspace_p = nullspace_p
        self.radius = radius
        self.max_outer = max_outer
        self.tol = tol
        self.cg_max = cg_max
        self.cg_tol = cg_tol

    def fit(self, X, y=None):
        X = check_dataset(X, require_complete_acs=True)
        cfg = self._config()
        self.rank_s_, self.nullspace_p_, _ = resolve_ranks(X, cfg)
        self.nullspace_ = acs_nullspace(*X.acs, self.nullspace_p_, self.radius)
        self.n_channels_ = X.epi[0].n_ch
        return self

    def reconstruct(self, X, init=None) -> ReconResult:
        check_is_fitted(self)
        X = check_dataset(X)
        check_consistent(X, self.n_channels_, type(self).__name__)
        cfg = self._config(rank_s=self.rank_s_, nullspace_p=self.nullspace_p_)
        return ac_loraks(X, cfg, init=init, nullspace=self.nullspace_)


class RacLoraks(_Loraks):
    """Joint nullspace and k-space reconstruction that trusts the ACS by ``eta``.

    Parameters
    ----------
    lam : float
        Weight of the S-matrix rank penalty.
    eta : float
        Weight of the ACS rows in the C-matrix nullspace estimate.
    rank_s, nullspace_p : int or None
        ``None`` picks them from the ACS singular values during ``fit``.
    init : {"zero-fill", "ac-loraks"}
        Starting point for the unmeasured samples.
    optimize_acs : bool
        Treat unmeasured ACS samples as unknowns.

    Attributes
    ----------
    rank_s_, nullspace_p_ : int
    n_channels_ : int
    """

    def __init__(self, lam=0.1, eta=1e-3, rank_s=None, nullspace_p=None, radius=2, max_outer=100,
                 tol=1e-6, cg_max=250, cg_tol=1e-8, init="zero-fill", optimize_acs=False):
        self.lam = lam
        self.eta = eta
        self.rank_s = rank_s
        self.nullspace_p = nullspace_p
        self.radius = radius
        self.max_outer = max_outer
        self.tol = tol
        self.cg_max = cg_max
        self.cg_tol = cg_tol
        self.init = init
        self.optimize_acs = optimize_acs

    def fit(self, X, y=None):
        X = check_dataset(X)
        cfg = self._config(optimize_acs=self.optimize_acs)
        self.rank_s_, self.nullspace_p_, _ = resolve_ranks(X, cfg)
        self.n_channels_ = X.epi[0].n_ch
        return self

    def reconstruct(self, X, callback=None) -> ReconResult:
        check_is_fitted(self)
        X = check_dataset(X)
        check_consistent(X, self.n_channels_, type(self).__name__)
        cfg = self._config(rank_s=self.rank_s_, nullspace_p=self.nullspace_p_, optimize_acs=self.optimize_acs)
        return rac_loraks(X, cfg, init=self.init, callback=callback)
