from fractions import Fraction

import numpy as np
import pytest

from racloraks.container import (
    ContainerError, decode, encode, load_container, read_kspc, save_container, write_kspc,
)
from racloraks.kspace import Dataset, KSpaceGrid, Polarity, SamplingPattern, split_interleaved


@pytest.fixture
def dataset():
    rng = np.random.default_rng(11)

    def g(pol=Polarity.NONE):
        return KSpaceGrid(rng.standard_normal((2, 8, 8)) + 1j * rng.standard_normal((2, 8, 8)), pol)

    pat = SamplingPattern(ny=8, R=2, pf=Fraction(6, 8), offset=1)
    pos, neg = split_interleaved(g(), pat)
    # bit patterns that a lossy text path would destroy
    gold_pos = g(Polarity.POSITIVE).data.copy()
    gold_pos[0, 0, 0] = complex(-0.0, 5e-324)
    gold_pos[1, 2, 3] = complex(np.nextafter(1.0, 2.0), -np.pi)
    acs_pat = SamplingPattern(ny=8, R=1, pf=Fraction(5, 8))
    acs = tuple(KSpaceGrid(np.where(acs_pat.acquired_mask(8)[None], g().data, 0), p)
                for p in (Polarity.POSITIVE, Polarity.NEGATIVE))
    return Dataset(
        epi=(pos, neg), pattern=pat, acs=acs, acs_pattern=acs_pat,
        gold=(KSpaceGrid(gold_pos, Polarity.POSITIVE), g(Polarity.NEGATIVE)),
    )


def test_dataset_round_trip_bit_exact(tmp_path, dataset):
    save_container(tmp_path, dataset)
    back = load_container(tmp_path)
    assert back == dataset
    assert back.gold[0].data.tobytes() == dataset.gold[0].data.tobytes()
    assert back.pattern == SamplingPattern(ny=8, R=2, pf=Fraction(6, 8), offset=1)
    assert back.acs_pattern.pf == Fraction(5, 8)
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(
        f"{r}_{t}.kspc" for r in ("epi", "acs", "gold") for t in ("pos", "neg")
    )


def test_single_grid_round_trip(tmp_path, dataset):
    write_kspc(tmp_path / "a.kspc", dataset.epi[0], "epi", dataset.pattern)
    grid, role, pat = read_kspc(tmp_path / "a.kspc")
    assert grid == dataset.epi[0] and role == "epi" and pat == dataset.pattern


def test_header_layout(dataset):
    blob = encode(dataset.epi[1], "epi", dataset.pattern)
    head = blob[: blob.index(b"\n\n")].decode()
    assert head.splitlines() == [
        "version:1", "nch:2", "ny:8", "nx:8", "role:epi", "polarity:neg",
        "R:2", "pf_num:3", "pf_den:4", "offset:1",
    ]
    assert len(blob) == len(head) + 2 + 2 * 8 * 8 * 16 + 8


def _replace_header(blob, field, value):
    head, body = blob.split(b"\n\n", 1)
    lines = [ln if not ln.startswith(field.encode() + b":") else f"{field}:{value}".encode()
             for ln in head.split(b"\n")]
    return b"\n".join(lines) + b"\n\n" + body


def test_truncated_payload(dataset):
    rng = np.random.default_rng(0)
    g = KSpaceGrid(rng.standard_normal((1, 7, 8)) + 0j)
    blob = encode(g, "gold", SamplingPattern.full(7))
    lying = _replace_header(blob, "ny", 8)
    with pytest.raises(ContainerError, match="truncated") as err:
        decode(lying)
    assert err.value.field == "payload"


@pytest.mark.parametrize(
    "field,value,match",
    [
        ("version", 2, "version"),
        ("role", "foo", "role"),
        ("polarity", "up", "polarity"),
        ("nch", "x", "nch"),
        ("pf_den", 5, "R/pf/offset"),
    ],
)
def test_bad_header_fields(dataset, field, value, match):
    blob = _replace_header(encode(dataset.epi[0], "epi", dataset.pattern), field, value)
    with pytest.raises(ContainerError, match=match):
        decode(blob)


def test_missing_blank_line():
    with pytest.raises(ContainerError, match="header"):
        decode(b"version:1\nnch:1\n")


def test_trailing_bytes_and_bad_mask(dataset):
    blob = encode(dataset.epi[0], "epi", dataset.pattern)
    with pytest.raises(ContainerError, match="trailing"):
        decode(blob + b"\x00")
    bad = bytearray(blob)
    bad[-1] = 7
    with pytest.raises(ContainerError, match="mask"):
        decode(bytes(bad))
    bad[-1] = 0 if blob[-1] else 1
    with pytest.raises(ContainerError, match="mask"):
        decode(bytes(bad))


def test_missing_file(tmp_path):
    with pytest.raises(ContainerError, match="file"):
        read_kspc(tmp_path / "nope.kspc")
