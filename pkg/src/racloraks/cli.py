"""Command-line front end: ``simulate``, ``recon``, ``eval`` and ``svplot``.

Exit status is 0 on success, 2 for usage or parameter errors, 3 for I/O
errors and 4 for numerical failures. Every command writes a JSON manifest
next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .container import ContainerError, read_kspc, save_container, write_kspc
from .metrics import MetricError, esp, nrmse, ssos, to_pgm
from .operators import Neighborhood, ShapeError
from .sim import SCENARIOS, build_dataset
from .solver import (
    DivergenceError, InnerSolverError, ReconConfig, _cat_s, _stack_c, ac_loraks, rac_loraks, zero_fill,
)
from .subspace import ParameterError, suggest_rank
from .validation import check_dataset

log = logging.getLogger("racloraks")

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 2, 3, 4
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


def _g17(x) -> str:
    return format(float(x), ".17g")


def _write_atomic(path: Path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(out: Path, command: str, config: dict, inputs: dict, outputs: list, seed, started):
    manifest = {
        "command": command,
        "config": config,
        "inputs": inputs,
        "outputs": sorted(outputs),
        "seed": seed,
        "version": __version__,
        "wall_clock_seconds": time.perf_counter() - started,
    }
    _write_atomic(out / MANIFEST, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())


def _pf(text: str) -> Fraction:
    try:
        pf = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid partial Fourier fraction {text!r}")
    return pf


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    started = time.perf_counter()
    out = Path(args.out)
    ds, manifest = build_dataset(
        args.scenario, R=args.R, pf=args.pf, offset=args.offset, seed=args.seed,
        n_ch=args.nch, ny=args.ny, nx=args.nx, noise=args.noise,
    )
    save_container(out, ds)
    files = [f"{r}_{t}.kspc" for r in ("epi", "acs", "gold") for t in ("pos", "neg")]
    _write_manifest(out, "simulate", manifest, {}, files, args.seed, started)
    return 0


def _recon_config(args) -> ReconConfig:
    return ReconConfig(
        lam=args.lam, eta=args.eta, rank_s=args.rank_s, nullspace_p=args.nullspace_p,
        radius=args.radius, max_outer=args.max_outer, tol=args.tol, cg_max=args.cg_max,
        cg_tol=args.cg_tol, optimize_acs=args.optimize_acs,
    )


def cmd_recon(args):
    started = time.perf_counter()
    ds = check_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.method == "zero-fill":
        res = zero_fill(ds)
        config = {"method": "zero-fill"}
    else:
        cfg = _recon_config(args)
        if args.method == "rac-loraks":
            res = rac_loraks(ds, cfg, init=args.init)
        else:
            if args.init not in ("zero-fill",):
                raise UsageError("ac-loraks only supports --init zero-fill")
            res = ac_loraks(ds, cfg)
        config = dict(res.config, iterations_used=res.iterations_used, converged=res.converged)
    files = []
    for grid, tag in zip(res.grids, ("pos", "neg")):
        write_kspc(out / f"recon_{tag}.kspc", grid, "recon")
        files.append(f"recon_{tag}.kspc")
    if res.acs is not None and args.optimize_acs:
        for grid, tag in zip(res.acs, ("pos", "neg")):
            write_kspc(out / f"recon_acs_{tag}.kspc", grid, "recon")
            files.append(f"recon_acs_{tag}.kspc")
    rows = ["iteration,objective"] + [f"{i},{_g17(v)}" for i, v in enumerate(res.objective_trace)]
    _write_atomic(out / "objective.csv", ("\n".join(rows) + "\n").encode())
    files.append("objective.csv")
    _write_manifest(out, "recon", config, {"data": str(args.data)}, files, None, started)
    return 0


def _read_pair(directory, prefix):
    grids = []
    for tag in ("pos", "neg"):
        grid, _, _ = read_kspc(Path(directory) / f"{prefix}_{tag}.kspc")
        grids.append(grid)
    return grids


def cmd_eval(args):
    started = time.perf_counter()
    est = _read_pair(args.estimate, args.estimate_prefix)
    gold = _read_pair(args.gold, args.gold_prefix)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    value = nrmse(*est, *gold)
    _write_atomic(out / "nrmse.txt", (_g17(value) + "\n").encode())
    curve = esp(est, gold, n_bins=args.bins)
    rows = ["radius,value,count"]
    for r, v, c in zip(curve.radius, curve.value, curve.count):
        rows.append(f"{_g17(r)},{'nan' if np.isnan(v) else _g17(v)},{int(c)}")
    _write_atomic(out / "esp.csv", ("\n".join(rows) + "\n").encode())
    _write_atomic(out / "ssos.pgm", to_pgm(ssos(est)))
    inputs = {"estimate": f"{args.estimate}/{args.estimate_prefix}", "gold": f"{args.gold}/{args.gold_prefix}"}
    _write_manifest(out, "eval", {"bins": args.bins, "nrmse": value}, inputs,
                    ["nrmse.txt", "esp.csv", "ssos.pgm"], None, started)
    return 0


def cmd_svplot(args):
    started = time.perf_counter()
    ds = check_dataset(args.data)
    acs = [g.data for g in ds.acs]
    curves = {
        "C": np.linalg.svd(_stack_c(acs, (1.0, 1.0), args.radius), compute_uv=False),
        "S": np.linalg.svd(_cat_s(acs, args.radius), compute_uv=False),
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["curve,index,value"]
    ranks = ["curve,suggested_rank,confident,implied_parameter,value"]
    config = {"radius": args.radius}
    for name, s in curves.items():
        for i, v in enumerate(s[s > 0]):
            rows.append(f"{name},{i},{_g17(v)}")
        rank, confident = suggest_rank(s, name)
        if name == "C":
            n_c = acs[0].shape[0] * len(Neighborhood(args.radius))
            implied, val = "nullspace_p", min(max(1, n_c - rank), n_c - 1)
        else:
            implied, val = "rank_s", max(1, rank)
        ranks.append(f"{name},{rank},{str(confident).lower()},{implied},{val}")
        config[f"{name}_suggested_rank"] = rank
        config[f"{name}_confident"] = confident
    _write_atomic(out / "singular_values.csv", ("\n".join(rows) + "\n").encode())
    _write_atomic(out / "ranks.csv", ("\n".join(ranks) + "\n").encode())
    _write_manifest(out, "svplot", config, {"data": str(args.data)},
                    ["singular_values.csv", "ranks.csv"], None, started)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="racloraks", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="matched")
    p.add_argument("--R", type=int, default=2)
    p.add_argument("--pf", type=_pf, default=Fraction(1))
    p.add_argument("--offset", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nch", type=int, default=8)
    p.add_argument("--ny", type=int, default=32)
    p.add_argument("--nx", type=int, default=32)
    p.add_argument("--noise", type=float, default=1e-3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    d = ReconConfig()
    p = sub.add_parser("recon", help="reconstruct a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=["rac-loraks", "ac-loraks", "zero-fill"], default="rac-loraks")
    p.add_argument("--eta", type=float, default=d.eta)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--rank-s", type=int, default=None)
    p.add_argument("--nullspace-p", type=int, default=None)
    p.add_argument("--radius", type=int, default=d.radius)
    p.add_argument("--max-outer", type=int, default=d.max_outer)
    p.add_argument("--tol", type=float, default=d.tol)
    p.add_argument("--cg-max", type=int, default=d.cg_max)
    p.add_argument("--cg-tol", type=float, default=d.cg_tol)
    p.add_argument("--init", choices=["zero-fill", "ac-loraks"], default="zero-fill")
    p.add_argument("--optimize-acs", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recon)

    p = sub.add_parser("eval", help="compare an estimate with the gold standard")
    p.add_argument("--estimate", required=True)
    p.add_argument("--estimate-prefix", default="recon")
    p.add_argument("--gold", required=True)
    p.add_argument("--gold-prefix", default="gold")
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("svplot", help="singular value curves of the ACS liftings")
    p.add_argument("--data", required=True)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_svplot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ParameterError, ShapeError, MetricError) as exc:
        print(f"racloraks {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContainerError, OSError) as exc:
        print(f"racloraks {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DivergenceError, InnerSolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"racloraks {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"racloraks {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
