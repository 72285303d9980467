from fractions import Fraction

import numpy as np
import pytest

from racloraks.kspace import Dataset, KSpaceGrid, Polarity
from racloraks.metrics import nrmse
from racloraks.operators import c_matrix
from racloraks.sim import build_dataset
from racloraks.solver import (
    ReconConfig, ac_loraks, acs_nullspace, ac_objective, rac_objective, rac_loraks, zero_fill,
)
from racloraks.subspace import ParameterError, penalty_Jr, principal_angles

SMALL = dict(n_ch=4, ny=16, nx=16)
FAST = dict(nullspace_p=30, rank_s=40, lam=0.1, max_outer=4, cg_max=30)


@pytest.fixture(scope="module")
def ds():
    return build_dataset("matched", R=2, seed=3, noise=1e-3, **SMALL)[0]


def _measured(dataset):
    return [m[None] & np.ones((dataset.epi[0].n_ch, 1, 1), bool) for m in dataset.epi_masks]


def _fully_sampled(dataset):
    full = np.ones(dataset.epi[0].ny, bool)
    return Dataset(
        epi=dataset.gold, pattern=dataset.pattern, acs=dataset.acs, gold=dataset.gold,
        measured_lines=(full, full),
    )


def _scaled(dataset, z):
    g = lambda pair: tuple(KSpaceGrid(z * x.data, x.polarity) for x in pair)
    return Dataset(
        epi=g(dataset.epi), pattern=dataset.pattern, acs=g(dataset.acs),
        acs_pattern=dataset.acs_pattern, gold=g(dataset.gold),
    )


# ---- objective


def test_objective_zero_grids():
    z = np.zeros((2, 10, 10), complex)
    assert rac_objective(z, z, z, z, lam=0.5, eta=1e-3, r=5, p=4) == 0


def test_objective_lambda_zero_is_c_term(ds):
    k = [g.data for g in ds.gold] + [g.data for g in ds.acs]
    eta, p = 0.3, 20
    stacked = np.concatenate([c_matrix(k[0], 2), c_matrix(k[1], 2),
                              np.sqrt(eta) * c_matrix(k[2], 2), np.sqrt(eta) * c_matrix(k[3], 2)])
    ref = penalty_Jr(stacked, stacked.shape[1] - p)
    assert rac_objective(*k, lam=0, eta=eta, r=10, p=p) == pytest.approx(ref, rel=1e-12)


def test_objective_eta_zero_drops_acs_rows(ds):
    k = [g.data for g in ds.gold]
    acs = [np.ones_like(k[0]) * 5, np.zeros_like(k[0])]
    junk = [np.ones_like(k[0]) * 7, np.ones_like(k[0]) * -3j]
    a = rac_objective(*k, *acs, lam=0, eta=0, r=10, p=20)
    b = rac_objective(*k, *junk, lam=0, eta=0, r=10, p=20)
    assert a == pytest.approx(b, rel=1e-12)
    # the S term still sees the ACS blocks
    assert rac_objective(*k, *acs, lam=1, eta=0, r=10, p=20) != pytest.approx(
        rac_objective(*k, *junk, lam=1, eta=0, r=10, p=20))


def test_objective_shape_mismatch():
    from racloraks.operators import ShapeError

    a, b = np.zeros((1, 8, 8)), np.zeros((1, 9, 8))
    with pytest.raises(ShapeError):
        rac_objective(a, a, a, b, lam=0, eta=1, r=1, p=1)


# ---- identity and data consistency


@pytest.mark.parametrize("solver", [rac_loraks, ac_loraks])
def test_fully_sampled_is_identity(ds, solver):
    full = _fully_sampled(ds)
    res = solver(full, ReconConfig(**FAST))
    assert res.iterations_used == 1
    for out, inp in zip(res.grids, full.epi):
        assert out.data.tobytes() == inp.data.tobytes()


def test_zero_fill(ds):
    res = zero_fill(ds)
    assert len(res.objective_trace) == 1
    for out, inp in zip(res.grids, ds.epi):
        assert out.data.tobytes() == inp.data.tobytes()
    r1 = build_dataset("matched", R=1, seed=3, **SMALL)[0]
    r2 = build_dataset("matched", R=2, seed=3, **SMALL)[0]
    assert nrmse(*zero_fill(r2).grids, *r2.gold) > nrmse(*zero_fill(r1).grids, *r1.gold)


@pytest.mark.parametrize("solver", [rac_loraks, ac_loraks])
def test_data_consistency_bit_exact(ds, solver):
    res = solver(ds, ReconConfig(**FAST))
    for out, inp, m in zip(res.grids, ds.epi, _measured(ds)):
        assert out.data[m].tobytes() == inp.data[m].tobytes()
        assert np.any(out.data[~m] != 0)


def test_optimize_acs_partial(ds):
    part = build_dataset("matched", R=2, seed=3, acs_pf=Fraction(5, 8), **SMALL)[0]
    with pytest.raises(ParameterError, match="optimize_acs"):
        rac_loraks(part, ReconConfig(**FAST))
    with pytest.raises(ParameterError):
        ac_loraks(part, ReconConfig(**FAST))
    res = rac_loraks(part, ReconConfig(optimize_acs=True, **FAST))
    m = part.acs_mask[None] & np.ones((4, 1, 1), bool)
    for out, inp in zip(res.acs, part.acs):
        assert out.data[m].tobytes() == inp.data[m].tobytes()
        assert np.any(out.data[~m] != 0)


def test_low_resolution_acs_is_embedded(ds):
    small = tuple(KSpaceGrid(g.data[:, 4:12, 4:12], g.polarity) for g in ds.acs)
    low = Dataset(epi=ds.epi, pattern=ds.pattern, acs=small, gold=ds.gold)
    with pytest.raises(ValueError, match="optimize_acs"):
        rac_loraks(low, ReconConfig(**FAST))
    res = rac_loraks(low, ReconConfig(optimize_acs=True, **FAST))
    assert res.acs[0].shape == ds.epi[0].shape
    assert np.array_equal(res.acs[0].data[:, 4:12, 4:12], small[0].data)
    # AC-LORAKS only needs the ACS for the nullspace, which any grid size provides
    ac_loraks(low, ReconConfig(**FAST))


# ---- MM behaviour


@pytest.mark.parametrize("solver", [rac_loraks, ac_loraks])
def test_objective_trace_non_increasing(ds, solver):
    res = solver(ds, ReconConfig(**FAST))
    t = res.objective_trace
    assert len(t) == res.iterations_used + 1
    assert np.all(np.diff(t) <= 1e-9 * t[:-1])


def test_trace_matches_objective_oracle(ds):
    cfg = ReconConfig(**FAST)
    res = rac_loraks(ds, cfg)
    f = rac_objective(*res.grids, *res.acs, lam=cfg.lam, eta=cfg.eta, r=40, p=30)
    assert res.objective_trace[-1] == pytest.approx(f, rel=1e-9)
    res = ac_loraks(ds, cfg)
    f = ac_objective(*res.grids, res.nullspace, lam=cfg.lam, r=40)
    assert res.objective_trace[-1] == pytest.approx(f, rel=1e-9)


def test_nullspace_orthonormal_every_iteration(ds):
    errs = []
    rac_loraks(ds, ReconConfig(**FAST), callback=lambda it, st: errs.append(
        np.linalg.norm(st["Nc"].conj().T @ st["Nc"] - np.eye(30))))
    assert len(errs) >= 1 and max(errs) <= 1e-10


def test_large_eta_recovers_acs_nullspace(ds):
    ref = acs_nullspace(*ds.acs, 30)
    angles = []
    rac_loraks(ds, ReconConfig(eta=1e6, **FAST), callback=lambda it, st: angles.append(
        principal_angles(st["Nc"], ref).max()))
    assert max(angles) < 1e-2


def test_improves_on_zero_fill(ds):
    res = rac_loraks(ds, ReconConfig(**FAST))
    assert nrmse(*res.grids, *ds.gold) < nrmse(*zero_fill(ds).grids, *ds.gold)


# ---- equivariance and determinism


def test_sign_flip_equivariance(ds):
    cfg = ReconConfig(**FAST)
    a = rac_loraks(ds, cfg)
    b = rac_loraks(_scaled(ds, -1.0), cfg)
    for x, y in zip(a.grids, b.grids):
        assert np.allclose(-x.data, y.data, rtol=0, atol=1e-9 * np.abs(x.data).max())


def test_channel_permutation_equivariance(ds):
    perm = np.array([2, 0, 3, 1])
    g = lambda pair: tuple(KSpaceGrid(x.data[perm], x.polarity) for x in pair)
    permuted = Dataset(epi=g(ds.epi), pattern=ds.pattern, acs=g(ds.acs), gold=g(ds.gold))
    cfg = ReconConfig(**FAST)
    a, b = rac_loraks(ds, cfg), rac_loraks(permuted, cfg)
    for x, y in zip(a.grids, b.grids):
        assert np.allclose(x.data[perm], y.data, rtol=0, atol=1e-8 * np.abs(x.data).max())


def test_deterministic(ds):
    cfg = ReconConfig(**FAST)
    a, b = rac_loraks(ds, cfg), rac_loraks(ds, cfg)
    assert all(x == y for x, y in zip(a.grids, b.grids))
    assert np.array_equal(a.objective_trace, b.objective_trace)


# ---- configuration


def test_config_echo_resolves_ranks(ds):
    res = rac_loraks(ds, ReconConfig(lam=0, max_outer=1, cg_max=5))
    cfg = res.config
    assert cfg["method"] == "rac-loraks"
    assert isinstance(cfg["rank_s"], int) and isinstance(cfg["nullspace_p"], int)
    assert set(ReconConfig().as_dict()) <= set(cfg)


@pytest.mark.parametrize("bad", [dict(lam=-1), dict(eta=-1), dict(tol=0), dict(max_outer=0),
                                 dict(cg_max=1.5), dict(radius=0), dict(rank_s=0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ReconConfig(**bad)


def test_bad_init(ds):
    from racloraks.operators import ShapeError

    with pytest.raises(ShapeError):
        rac_loraks(ds, ReconConfig(**FAST), init=(np.zeros((4, 8, 8)), np.zeros((4, 8, 8))))
    with pytest.raises(ParameterError):
        rac_loraks(ds, ReconConfig(**FAST), init="mdpg")


def test_provided_init_keeps_measured(ds):
    start = (np.ones((4, 16, 16)), np.ones((4, 16, 16)))
    res = ac_loraks(ds, ReconConfig(**dict(FAST, max_outer=1, cg_max=1)), init=start)
    for out, inp, m in zip(res.grids, ds.epi, _measured(ds)):
        assert out.data[m].tobytes() == inp.data[m].tobytes()
