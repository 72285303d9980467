"""RAC-LORAKS and AC-LORAKS ghost-correction reconstructions.

Both methods are minimised with a multiplicative half-quadratic
majorize-minimize loop: each outer iteration freezes the trailing right
singular subspaces of the lifted matrices (which majorises the rank
penalties) and then minimises the resulting quadratic over the unmeasured
k-space samples by conjugate gradient.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .kspace import Dataset, KSpaceGrid, Polarity
from .operators import ShapeError, c_adjoint, c_matrix, s_adjoint, s_matrix, Neighborhood
from .subspace import ParameterError, RankPlan, _normalize_signs, right_singular, suggest_rank

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    """The objective became non-finite."""


class InnerSolverError(RuntimeError):
    """Conjugate gradient broke down on the data-consistency subproblem."""

    def __init__(self, message, iteration=None, residual=None, curvature=None):
        self.iteration = iteration
        self.residual = residual
        self.curvature = curvature
        super().__init__(f"{message} (cg iteration={iteration}, residual={residual}, curvature={curvature})")


@dataclass(frozen=True)
class ReconConfig:
    """Reconstruction parameters.

    ``lam`` weights the S-matrix rank penalty against the C-matrix nullspace
    term. Both terms are quadratic in the k-space data, so ``lam`` is
    scale-free and is applied as given: the effective weight is
    ``lam * lam_scale`` with ``lam_scale = 1``, echoed in the result config.
    ``rank_s`` (r) and ``nullspace_p``
    (p) default to ``None``, meaning "pick from the ACS singular values".
    """

    lam: float = 0.1
    eta: float = 1e-3
    rank_s: int = None
    nullspace_p: int = None
    radius: int = 2
    max_outer: int = 100
    tol: float = 1e-6
    cg_max: int = 250
    cg_tol: float = 1e-8
    optimize_acs: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ParameterError(f"lam must be >= 0, got {self.lam}")
        if not self.eta >= 0:
            raise ParameterError(f"eta must be >= 0, got {self.eta}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be > 0, got {self.tol}")
        if not self.cg_tol > 0:
            raise ParameterError(f"cg_tol must be > 0, got {self.cg_tol}")
        if int(self.max_outer) != self.max_outer or self.max_outer < 1:
            raise ParameterError(f"max_outer must be a positive integer, got {self.max_outer}")
        if int(self.cg_max) != self.cg_max or self.cg_max < 1:
            raise ParameterError(f"cg_max must be a positive integer, got {self.cg_max}")
        Neighborhood(self.radius)
        for name in ("rank_s", "nullspace_p"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 1):
                raise ParameterError(f"{name} must be a positive integer, got {v}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ReconResult:
    k_pos: KSpaceGrid
    k_neg: KSpaceGrid
    acs: tuple = None
    objective_trace: np.ndarray = None
    iterations_used: int = 0
    converged: bool = False
    config: dict = field(default_factory=dict)
    nullspace: np.ndarray = None
    orthonormality_error: np.ndarray = None

    @property
    def grids(self):
        return self.k_pos, self.k_neg


# ---------------------------------------------------------------------------
# lifted-matrix helpers


def _stack_c(grids, weights, radius):
    blocks = [np.sqrt(w) * c_matrix(g, radius) for g, w in zip(grids, weights) if w > 0]
    return np.concatenate(blocks, axis=0)


def _cat_s(grids, radius):
    return np.concatenate([s_matrix(g, radius) for g in grids], axis=1)


def _tail_energy(s, keep):
    tail = s[keep:]
    return float(np.dot(tail, tail))


def _check_ranks(r, p, n_s, n_c):
    RankPlan(r=r, p=p).check(n_s, n_c)


def rac_objective(k_pos, k_neg, acs_pos, acs_neg, lam, eta, r, p, radius=2) -> float:
    """RAC-LORAKS cost: ``J_{C-p}`` of the row-stacked C matrices plus ``lam * J_r`` of the S matrices.

    The ACS C blocks are scaled by ``sqrt(eta)``; the S matrices of all four
    grids are concatenated column-wise without scaling.
    """
    grids = [_raw(g) for g in (k_pos, k_neg, acs_pos, acs_neg)]
    shapes = {g.shape for g in grids}
    if len(shapes) != 1:
        raise ShapeError(f"all four grids must share one shape, got {sorted(shapes)}")
    Xc = _stack_c(grids, (1.0, 1.0, eta, eta), radius)
    Xs = _cat_s(grids, radius)
    _check_ranks(r, p, Xs.shape[1], Xc.shape[1])
    sc = np.linalg.svd(Xc, compute_uv=False)
    sc = np.concatenate([sc, np.zeros(Xc.shape[1] - sc.size)])
    fc = _tail_energy(sc, Xc.shape[1] - p)
    fs = _tail_energy(np.linalg.svd(Xs, compute_uv=False), r) if lam > 0 else 0.0
    return fc + lam * fs


def ac_objective(k_pos, k_neg, N, lam, r, radius=2) -> float:
    """AC-LORAKS cost with a fixed nullspace matrix ``N``."""
    grids = [_raw(k_pos), _raw(k_neg)]
    fc = sum(float(np.linalg.norm(c_matrix(g, radius) @ N) ** 2) for g in grids)
    fs = _tail_energy(np.linalg.svd(_cat_s(grids, radius), compute_uv=False), r) if lam > 0 else 0.0
    return fc + lam * fs


def _raw(g):
    return g.data if isinstance(g, KSpaceGrid) else np.asarray(g, dtype=np.complex128)


class _Projector:
    """Right-multiplication by ``N N^H`` for an orthonormal ``N``.

    With ``complement=True`` the basis ``B`` spans the orthogonal complement
    of ``N`` and the product is formed as ``X - X B B^H``.
    """

    def __init__(self, B, complement=False):
        self.B = B
        self.BH = B.conj().T
        self.complement = complement

    @classmethod
    def trailing(cls, V, n_null):
        """Projector onto the last ``n_null`` columns of the unitary ``V``."""
        n = V.shape[1]
        if n_null > n - n_null:
            return cls(V[:, : n - n_null], complement=True)
        return cls(V[:, n - n_null:])

    def block_apply(self, mats, bounds):
        """Project the column-concatenation of ``mats``; return per-block results."""
        T = sum(m @ self.B[a:b] for m, (a, b) in zip(mats, bounds))
        out = []
        for m, (a, b) in zip(mats, bounds):
            y = T @ self.BH[:, a:b]
            out.append(m - y if self.complement else y)
        return out


# ---------------------------------------------------------------------------
# the quadratic data step


class _Quadratic:
    """``f(x) = sum_g w_g ||C(x_g) Nc||^2 + lam ||[S(x_1) ... S(x_G)] Ns||^2`` over grids ``x_g``."""

    def __init__(self, shape, radius, c_weights, Pc, lam, Ps, s_bounds):
        self.shape = shape
        self.radius = radius
        self.c_weights = c_weights
        self.Pc = Pc
        self.lam = lam
        self.Ps = Ps
        self.s_bounds = s_bounds

    def apply(self, xs, active):
        out = [np.zeros(self.shape, dtype=np.complex128) for _ in xs]
        for g in active:
            w = self.c_weights[g]
            if w > 0:
                C = c_matrix(xs[g], self.radius)
                (y,) = self.Pc.block_apply([C], [(0, C.shape[1])])
                out[g] += w * c_adjoint(y, self.shape, self.radius)
        if self.lam > 0:
            mats = [s_matrix(xs[g], self.radius) for g in active]
            ys = self.Ps.block_apply(mats, [self.s_bounds[g] for g in active])
            for g, y in zip(active, ys):
                out[g] += self.lam * s_adjoint(y, self.shape, self.radius)
        return out


def _rdot(a, b):
    return sum(float(np.vdot(x, y).real) for x, y in zip(a, b))


def _cg(quad, xs, free, cg_max, cg_tol):
    """Minimise ``quad`` over the entries flagged in ``free`` starting from ``xs``."""
    all_g = list(range(len(xs)))
    active = [g for g in all_g if free[g].any()]
    hx = quad.apply(xs, all_g)
    r = [np.where(free[g], -hx[g], 0) for g in all_g]
    b_norm = np.sqrt(_rdot(r, r))
    if b_norm == 0:
        return xs, 0
    x = [a.copy() for a in xs]
    d = [a.copy() for a in r]
    rr = b_norm**2
    for it in range(1, cg_max + 1):
        hd = quad.apply(d, active)
        hd = [np.where(free[g], hd[g], 0) for g in all_g]
        curv = _rdot(d, hd)
        if not np.isfinite(curv) or curv < 0:
            raise InnerSolverError("non-positive curvature", it, np.sqrt(rr), curv)
        if curv == 0:
            break
        alpha = rr / curv
        for g in active:
            x[g] += alpha * d[g]
            r[g] -= alpha * hd[g]
        rr_new = _rdot(r, r)
        if np.sqrt(rr_new) <= cg_tol * b_norm:
            return x, it
        beta = rr_new / rr
        rr = rr_new
        for g in active:
            d[g] = r[g] + beta * d[g]
    return x, it


# ---------------------------------------------------------------------------
# setup shared by both methods


def _embed(data, shape):
    """Centre ``data`` (n_ch, ay, ax) inside a zero grid of ``shape`` keeping DC aligned."""
    n_ch, ny, nx = shape
    _, ay, ax = data.shape
    if ay > ny or ax > nx:
        raise ShapeError(f"ACS grid {data.shape[1:]} is larger than the EPI grid {(ny, nx)}")
    y0, x0 = ny // 2 - ay // 2, nx // 2 - ax // 2
    out = np.zeros(shape, dtype=np.complex128)
    window = (slice(y0, y0 + ay), slice(x0, x0 + ax))
    out[(slice(None),) + window] = data
    return out, window


def resolve_ranks(dataset: Dataset, config: ReconConfig):
    """Return ``(r, p, info)``, filling unset ranks from the ACS singular values."""
    rad = config.radius
    acs = [g.data for g in dataset.acs]
    n_c = acs[0].shape[0] * len(Neighborhood(rad))
    n_s_acs = 2 * n_c
    info = {}
    p = config.nullspace_p
    if p is None:
        sc = np.linalg.svd(_stack_c(acs, (1.0, 1.0), rad), compute_uv=False)
        rank_c, conf = suggest_rank(sc, "C")
        p = int(np.clip(n_c - rank_c, 1, n_c - 1))
        info["nullspace_p_confident"] = conf
    r = config.rank_s
    if r is None:
        ss = np.linalg.svd(_cat_s(acs, rad), compute_uv=False)
        r, conf = suggest_rank(ss, "S")
        r = int(np.clip(r, 1, n_s_acs - 1))
        info["rank_s_confident"] = conf
    return int(r), int(p), info


def _init_grids(dataset, init):
    data = [g.data for g in dataset.epi]
    masks = [m[None] for m in dataset.epi_masks]
    if init is None or (isinstance(init, str) and init == "zero-fill"):
        return [d.copy() for d in data], masks
    if isinstance(init, str):
        raise ParameterError(f"unknown initialisation {init!r}")
    start = [_raw(g) for g in init]
    if len(start) != 2 or any(s.shape != d.shape for s, d in zip(start, data)):
        raise ShapeError("initial grids must be a (positive, negative) pair shaped like the EPI data")
    return [np.where(m, d, s) for m, d, s in zip(masks, data, start)], masks


def _finish(xs, masks, data):
    # hard data consistency: measured entries are copied back bit-exactly
    return [np.where(m, d, x) for x, m, d in zip(xs, masks, data)]


def _check_finite(f, it):
    if not np.isfinite(f):
        raise DivergenceError(f"objective became non-finite at outer iteration {it}")


def _orth_error(N):
    return float(np.linalg.norm(N.conj().T @ N - np.eye(N.shape[1])))


# ---------------------------------------------------------------------------
# public solvers


def zero_fill(dataset: Dataset) -> ReconResult:
    """Measured samples with zeros elsewhere."""
    kp, kn = dataset.epi
    return ReconResult(
        k_pos=KSpaceGrid(kp.data, Polarity.POSITIVE),
        k_neg=KSpaceGrid(kn.data, Polarity.NEGATIVE),
        objective_trace=np.zeros(1),
        iterations_used=0,
        converged=True,
        config={"method": "zero-fill"},
    )


def rac_loraks(dataset: Dataset, config: ReconConfig = None, init=None, callback=None) -> ReconResult:
    """Joint nullspace and k-space reconstruction with ACS trust weight ``eta``.

    Parameters
    ----------
    dataset : Dataset
        EPI measurements and ACS data.
    config : ReconConfig, optional
    init : {"zero-fill", "ac-loraks", None} or pair of grids, optional
        Starting point for the unmeasured EPI samples. ``"ac-loraks"`` runs
        one linear (``lam=0``) AC-LORAKS solve with the ACS nullspace first,
        which needs complete ACS data. ``None`` means zero-fill.
    callback : callable, optional
        Called as ``callback(iteration, state)`` after each subspace step with
        ``state`` holding ``"Nc"``, ``"Ns"`` and the current grids.
    """
    config = config or ReconConfig()
    rad = config.radius
    data = [g.data for g in dataset.epi]
    shape = data[0].shape
    r, p, rank_info = resolve_ranks(dataset, config)
    init_name = init if isinstance(init, str) else ("zero-fill" if init is None else "provided")
    if init_name == "ac-loraks":
        if not dataset.acs_complete or dataset.acs[0].shape != shape:
            raise ParameterError("the ac-loraks initialisation needs complete ACS data on the EPI grid")
        warm = replace(config, lam=0.0, max_outer=1, rank_s=r, nullspace_p=p)
        init = ac_loraks(dataset, warm).grids
    xs, masks = _init_grids(dataset, init)

    acs_data = [g.data for g in dataset.acs]
    acs_mask = dataset.acs_mask[None]
    if acs_data[0].shape != shape:
        if not config.optimize_acs:
            raise ShapeError(
                f"ACS grid {acs_data[0].shape} differs from EPI grid {shape}; enable optimize_acs to embed it"
            )
        emb = [_embed(a, shape) for a in acs_data]
        win = emb[0][1]
        acs_data = [e[0] for e in emb]
        full_mask = np.zeros((1,) + shape[1:], dtype=bool)
        full_mask[(slice(None),) + win] = acs_mask
        acs_mask = full_mask
    elif not dataset.acs_complete and not config.optimize_acs:
        raise ParameterError("ACS data is incomplete; enable optimize_acs to treat missing ACS samples as unknowns")
    if config.optimize_acs:
        acs_masks = [acs_mask, acs_mask]
    else:
        acs_masks = [np.ones((1,) + shape[1:], dtype=bool)] * 2
    xs = xs + [np.where(acs_masks[i], acs_data[i], 0) for i in range(2)]
    all_data = data + acs_data
    all_masks = masks + acs_masks
    free = [np.broadcast_to(~m, shape) for m in all_masks]

    c_weights = (1.0, 1.0, config.eta, config.eta)
    n_c = shape[0] * len(Neighborhood(rad))
    n_s_one = 2 * n_c
    _check_ranks(r, p, 4 * n_s_one, n_c)
    s_bounds = [(i * n_s_one, (i + 1) * n_s_one) for i in range(4)]
    lam = config.lam

    def decompose(grids):
        Vc, sc = right_singular(_stack_c(grids, c_weights, rad))
        fc = _tail_energy(sc, n_c - p)
        if lam > 0:
            Vs, ss = right_singular(_cat_s(grids, rad))
            fs = _tail_energy(ss, r)
        else:
            Vs, fs = None, 0.0
        return Vc, Vs, fc + lam * fs

    Vc, Vs, f = decompose(xs)
    _check_finite(f, 0)
    trace = [f]
    orth = []
    converged = False
    Nc = None
    it = 0
    has_free = any(fr.any() for fr in free)
    for it in range(1, config.max_outer + 1):
        Nc = _normalize_signs(Vc[:, n_c - p:])
        Ns = _normalize_signs(Vs[:, r:]) if Vs is not None else None
        orth.append(_orth_error(Nc))
        if callback is not None:
            callback(it, {"Nc": Nc, "Ns": Ns, "grids": [x.copy() for x in xs]})
        if has_free:
            quad = _Quadratic(
                shape, rad, c_weights, _Projector.trailing(Vc, p), lam,
                _Projector.trailing(Vs, Vs.shape[1] - r) if Vs is not None else None, s_bounds,
            )
            xs, n_cg = _cg(quad, xs, free, config.cg_max, config.cg_tol)
            xs = _finish(xs, all_masks, all_data)
            log.debug("outer %d: %d cg iterations", it, n_cg)
        Vc, Vs, f_new = decompose(xs)
        _check_finite(f_new, it)
        trace.append(f_new)
        change = abs(f - f_new) / f if f > 0 else 0.0
        f = f_new
        if change < config.tol:
            converged = True
            break

    resolved = dict(config.as_dict(), rank_s=r, nullspace_p=p, method="rac-loraks", init=init_name,
                    lam_scale=1.0, **rank_info)
    return ReconResult(
        k_pos=KSpaceGrid(xs[0], Polarity.POSITIVE),
        k_neg=KSpaceGrid(xs[1], Polarity.NEGATIVE),
        acs=(KSpaceGrid(xs[2], Polarity.POSITIVE), KSpaceGrid(xs[3], Polarity.NEGATIVE)),
        objective_trace=np.asarray(trace),
        iterations_used=it,
        converged=converged,
        config=resolved,
        nullspace=Nc,
        orthonormality_error=np.asarray(orth),
    )


def acs_nullspace(acs_pos, acs_neg, p: int, radius: int = 2) -> np.ndarray:
    """Fixed AC-LORAKS nullspace: trailing ``p`` right singular vectors of the stacked ACS C matrices."""
    X = _stack_c([_raw(acs_pos), _raw(acs_neg)], (1.0, 1.0), radius)
    n = X.shape[1]
    if not 0 < p < n:
        raise ParameterError(f"nullspace dimension p={p} must satisfy 0 < p < {n}")
    V, _ = right_singular(X)
    return _normalize_signs(V[:, n - p:])


def ac_loraks(dataset: Dataset, config: ReconConfig = None, init=None, nullspace=None, callback=None) -> ReconResult:
    """Reconstruction with a nullspace fixed in advance from the ACS data.

    ``nullspace`` may be supplied (e.g. from a fitted estimator); otherwise it
    is computed from ``dataset.acs``.
    """
    config = config or ReconConfig()
    rad = config.radius
    if not dataset.acs_complete:
        raise ParameterError("AC-LORAKS needs complete ACS data; complete it first (e.g. with rac_loraks)")
    data = [g.data for g in dataset.epi]
    shape = data[0].shape
    xs, masks = _init_grids(dataset, init)
    free = [np.broadcast_to(~m, shape) for m in masks]
    r, p, rank_info = resolve_ranks(dataset, config)
    n_c = shape[0] * len(Neighborhood(rad))
    n_s_one = 2 * n_c
    _check_ranks(r, p, 2 * n_s_one, n_c)
    if nullspace is None:
        N = acs_nullspace(*dataset.acs, p, rad)
    else:
        N = np.asarray(nullspace)
        if N.shape != (n_c, p):
            raise ShapeError(f"nullspace has shape {N.shape}, expected {(n_c, p)}")
    lam = config.lam
    s_bounds = [(0, n_s_one), (n_s_one, 2 * n_s_one)]

    def decompose(grids):
        fc = sum(float(np.linalg.norm(c_matrix(g, rad) @ N) ** 2) for g in grids)
        if lam > 0:
            Vs, ss = right_singular(_cat_s(grids, rad))
            return Vs, fc + lam * _tail_energy(ss, r)
        return None, fc

    Vs, f = decompose(xs)
    _check_finite(f, 0)
    trace = [f]
    converged = False
    it = 0
    has_free = any(fr.any() for fr in free)
    for it in range(1, config.max_outer + 1):
        if callback is not None:
            callback(it, {"Nc": N, "grids": [x.copy() for x in xs]})
        if has_free:
            quad = _Quadratic(
                shape, rad, (1.0, 1.0), _Projector(N), lam,
                _Projector.trailing(Vs, Vs.shape[1] - r) if Vs is not None else None, s_bounds,
            )
            xs, _ = _cg(quad, xs, free, config.cg_max, config.cg_tol)
            xs = _finish(xs, masks, data)
        Vs, f_new = decompose(xs)
        _check_finite(f_new, it)
        trace.append(f_new)
        change = abs(f - f_new) / f if f > 0 else 0.0
        f = f_new
        if change < config.tol:
            converged = True
            break

    init_name = init if isinstance(init, str) else ("zero-fill" if init is None else "provided")
    resolved = dict(config.as_dict(), rank_s=r, nullspace_p=p, method="ac-loraks", init=init_name,
                    lam_scale=1.0, **rank_info)
    return ReconResult(
        k_pos=KSpaceGrid(xs[0], Polarity.POSITIVE),
        k_neg=KSpaceGrid(xs[1], Polarity.NEGATIVE),
        objective_trace=np.asarray(trace),
        iterations_used=it,
        converged=converged,
        config=resolved,
        nullspace=N,
        orthonormality_error=np.asarray([_orth_error(N)]),
    )
