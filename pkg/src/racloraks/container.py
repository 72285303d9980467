"""Reading and writing ``.kspc`` k-space containers.

A container holds one grid. Layout::

    version:1
    nch:8
    ...
    <blank line>
    <samples: little-endian float64 (re, im) pairs, (channel, ky, kx) order>
    <mask: one uint8 per ky line, 0/1/2 = unacquired/positive/negative>

A :class:`~racloraks.kspace.Dataset` is stored as a directory of six
containers named ``{epi,acs,gold}_{pos,neg}.kspc``.
"""

from __future__ import annotations

import os
from fractions import Fraction
from pathlib import Path

import numpy as np

from .kspace import Dataset, KSpaceGrid, Polarity, SamplingPattern

VERSION = 1
FIELDS = ("version", "nch", "ny", "nx", "role", "polarity", "R", "pf_num", "pf_den", "offset")
ROLES = ("epi", "acs", "gold", "recon")
_SAMPLE_DTYPE = np.dtype("<c16")


class ContainerError(ValueError):
    """Malformed, truncated or incompatible container file."""

    def __init__(self, path, field, message):
        self.path = str(path)
        self.field = field
        super().__init__(f"{path}: field '{field}': {message}")


def encode(grid: KSpaceGrid, role: str, pattern: SamplingPattern) -> bytes:
    if role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}, got {role!r}")
    if pattern.ny != grid.ny:
        raise ValueError(f"pattern ny={pattern.ny} does not match grid ny={grid.ny}")
    header = {
        "version": VERSION,
        "nch": grid.n_ch,
        "ny": grid.ny,
        "nx": grid.nx,
        "role": role,
        "polarity": grid.polarity.value,
        "R": pattern.R,
        "pf_num": pattern.pf.numerator,
        "pf_den": pattern.pf.denominator,
        "offset": pattern.offset,
    }
    text = "".join(f"{k}:{header[k]}\n" for k in FIELDS) + "\n"
    samples = np.ascontiguousarray(grid.data, dtype=_SAMPLE_DTYPE).tobytes()
    return text.encode("utf-8") + samples + pattern.line_codes.astype(np.uint8).tobytes()


def _int_field(path, header, name, lo=None):
    try:
        v = int(header[name])
    except KeyError:
        raise ContainerError(path, name, "missing") from None
    except ValueError:
        raise ContainerError(path, name, f"not an integer: {header[name]!r}") from None
    if lo is not None and v < lo:
        raise ContainerError(path, name, f"must be >= {lo}, got {v}")
    return v


def decode(blob: bytes, path="<bytes>"):
    """Parse container bytes into ``(grid, role, pattern)``."""
    end = blob.find(b"\n\n")
    if end < 0:
        raise ContainerError(path, "header", "no blank line terminating the header")
    try:
        lines = blob[:end].decode("utf-8").split("\n")
    except UnicodeDecodeError:
        raise ContainerError(path, "header", "not valid UTF-8") from None
    header = {}
    for line in lines:
        key, sep, value = line.partition(":")
        if not sep:
            raise ContainerError(path, "header", f"line without ':' separator: {line!r}")
        if key in header:
            raise ContainerError(path, key, "duplicated")
        header[key] = value
    unknown = set(header) - set(FIELDS)
    if unknown:
        raise ContainerError(path, sorted(unknown)[0], "unknown header field")

    version = _int_field(path, header, "version")
    if version != VERSION:
        raise ContainerError(path, "version", f"unsupported version {version}, expected {VERSION}")
    nch = _int_field(path, header, "nch", 1)
    ny = _int_field(path, header, "ny", 1)
    nx = _int_field(path, header, "nx", 1)
    R = _int_field(path, header, "R", 1)
    pf_num = _int_field(path, header, "pf_num", 1)
    pf_den = _int_field(path, header, "pf_den", 1)
    offset = _int_field(path, header, "offset", 0)
    role = header.get("role")
    if role not in ROLES:
        raise ContainerError(path, "role", f"must be one of {ROLES}, got {role!r}")
    try:
        polarity = Polarity(header.get("polarity"))
    except ValueError:
        raise ContainerError(path, "polarity", f"must be pos, neg or none, got {header.get('polarity')!r}") from None
    try:
        pattern = SamplingPattern(ny=ny, R=R, pf=Fraction(pf_num, pf_den), offset=offset)
    except ValueError as exc:
        raise ContainerError(path, "R/pf/offset", str(exc)) from None

    body = blob[end + 2:]
    n_bytes = nch * ny * nx * _SAMPLE_DTYPE.itemsize
    if len(body) < n_bytes + ny:
        raise ContainerError(
            path, "payload", f"truncated: expected {n_bytes + ny} bytes after header, found {len(body)}"
        )
    if len(body) > n_bytes + ny:
        raise ContainerError(
            path, "payload", f"trailing data: expected {n_bytes + ny} bytes after header, found {len(body)}"
        )
    data = np.frombuffer(body[:n_bytes], dtype=_SAMPLE_DTYPE).reshape(nch, ny, nx)
    mask = np.frombuffer(body[n_bytes:], dtype=np.uint8)
    if np.any(mask > 2):
        raise ContainerError(path, "mask", "line codes must be 0, 1 or 2")
    if not np.array_equal(mask, pattern.line_codes):
        raise ContainerError(path, "mask", "line codes disagree with R/pf_num/pf_den/offset")
    try:
        grid = KSpaceGrid(data.astype(np.complex128), polarity)
    except ValueError as exc:
        raise ContainerError(path, "payload", str(exc)) from None
    return grid, role, pattern


def _atomic_write(path: Path, blob: bytes):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def write_kspc(path, grid: KSpaceGrid, role: str, pattern: SamplingPattern = None):
    path = Path(path)
    pattern = pattern or SamplingPattern.full(grid.ny)
    _atomic_write(path, encode(grid, role, pattern))


def read_kspc(path):
    """Return ``(grid, role, pattern)`` from a ``.kspc`` file."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ContainerError(path, "file", exc.strerror or str(exc)) from None
    return decode(blob, path)


def save_container(path, dataset: Dataset):
    """Write ``dataset`` into directory ``path`` as six ``.kspc`` files."""
    if dataset.measured_lines is not None:
        raise ContainerError(path, "mask", "datasets with explicit measured_lines have no line-code representation")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for grid, tag in zip(dataset.epi, ("pos", "neg")):
        write_kspc(path / f"epi_{tag}.kspc", grid, "epi", dataset.pattern)
    for grid, tag in zip(dataset.acs, ("pos", "neg")):
        write_kspc(path / f"acs_{tag}.kspc", grid, "acs", dataset.acs_pattern)
    if dataset.gold is not None:
        for grid, tag in zip(dataset.gold, ("pos", "neg")):
            write_kspc(path / f"gold_{tag}.kspc", grid, "gold")


def load_container(path) -> Dataset:
    path = Path(path)
    epi, pats = [], []
    for tag in ("pos", "neg"):
        g, role, pat = read_kspc(path / f"epi_{tag}.kspc")
        if role != "epi":
            raise ContainerError(path / f"epi_{tag}.kspc", "role", f"expected epi, got {role}")
        epi.append(g)
        pats.append(pat)
    if pats[0] != pats[1]:
        raise ContainerError(path / "epi_neg.kspc", "R/pf/offset", "EPI polarities disagree on the pattern")
    acs, acs_pats = [], []
    for tag in ("pos", "neg"):
        g, role, pat = read_kspc(path / f"acs_{tag}.kspc")
        if role != "acs":
            raise ContainerError(path / f"acs_{tag}.kspc", "role", f"expected acs, got {role}")
        acs.append(g)
        acs_pats.append(pat)
    if acs_pats[0] != acs_pats[1]:
        raise ContainerError(path / "acs_neg.kspc", "R/pf/offset", "ACS polarities disagree on the pattern")
    gold = None
    if (path / "gold_pos.kspc").exists() or (path / "gold_neg.kspc").exists():
        gold = tuple(read_kspc(path / f"gold_{tag}.kspc")[0] for tag in ("pos", "neg"))
    try:
        return Dataset(epi=tuple(epi), pattern=pats[0], acs=tuple(acs), acs_pattern=acs_pats[0], gold=gold)
    except ValueError as exc:
        raise ContainerError(path, "dataset", str(exc)) from None
