import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs

from tensortomo.field import Grid, PhantomSpec, TensorField, gaussian_phantom
from tensortomo.io import (
    FormatError,
    SinogramRecord,
    atomic_write,
    decode_field,
    decode_sinogram,
    encode_field,
    encode_sinogram,
    read_field,
    read_sinogram,
    write_field,
    write_pgm,
    write_sinogram,
)
from tensortomo.scalar_radon import DirectionSet, PGrid, Sinogram
from tensortomo.transforms import lrt


def sample_record(ndir=7, count=33, h=0.0625):
    data = np.random.default_rng(0).standard_normal((ndir, count))
    s = Sinogram(DirectionSet.uniform(2, ndir), PGrid(count, h), data)
    return SinogramRecord("wtrt", 1, (1,), s)


def test_field_roundtrip_is_exact(tmp_path):
    u = gaussian_phantom(PhantomSpec(seed=1), Grid.centered(2, 32), 2)
    path = write_field(tmp_path / "u.sttf", u)
    back = read_field(path)
    assert back.grid == u.grid and back.rank == 2
    np.testing.assert_array_equal(back.data, u.data)
    assert encode_field(back) == path.read_bytes()


def test_field_roundtrip_3d():
    g = Grid((8, 9, 10), (0.1, 0.2, 0.3), (-0.4, -0.9, -1.5))
    u = TensorField(g, 1, np.arange(3 * 720, dtype=float).reshape(3, 8, 9, 10))
    back = decode_field(encode_field(u))
    assert back.grid == g
    np.testing.assert_array_equal(back.data, u.data)


@given(hs.integers(3, 200), hs.floats(1e-3, 1.0), hs.integers(1, 6))
def test_sinogram_roundtrip_is_byte_identical(count, h, ndir):
    rec = sample_record(ndir, count, h)
    buf = encode_sinogram(rec)
    back = decode_sinogram(buf)
    assert encode_sinogram(back) == buf
    np.testing.assert_allclose(back.sinogram.pgrid.values, rec.sinogram.pgrid.values, rtol=1e-15, atol=0)
    assert (back.family, back.order, back.ell) == ("wtrt", 1, (1,))


def test_sinogram_file_roundtrip(tmp_path):
    g = Grid.centered(2, 32)
    f = gaussian_phantom(PhantomSpec(seed=2), g, 1)
    s = lrt(f, (1,), DirectionSet.uniform(2, 12), PGrid.covering(g))
    path = write_sinogram(tmp_path / "lrt.sgrm", SinogramRecord("lrt", 0, (1,), s))
    back = read_sinogram(path)
    np.testing.assert_array_equal(back.sinogram.data, s.data)
    np.testing.assert_array_equal(back.sinogram.directions.directions, s.directions.directions)


def test_corrupted_payload_is_rejected():
    buf = bytearray(encode_sinogram(sample_record()))
    buf[-20] ^= 0xFF
    with pytest.raises(FormatError, match="CRC"):
        decode_sinogram(bytes(buf))


@pytest.mark.parametrize("cut", [3, 10, 60, -1])
def test_truncation_is_rejected(cut):
    buf = encode_field(TensorField.zeros(Grid.centered(2, 8), 1))
    with pytest.raises(FormatError):
        decode_field(buf[:cut])


def test_wrong_magic_and_version():
    field_buf = encode_field(TensorField.zeros(Grid.centered(2, 8), 0))
    with pytest.raises(FormatError, match="magic"):
        decode_sinogram(field_buf)
    bumped = field_buf[:4] + b"\x09\x00" + field_buf[6:]
    with pytest.raises(FormatError, match="version"):
        decode_field(bumped)


def test_record_validation():
    s = sample_record().sinogram
    with pytest.raises(ValueError):
        SinogramRecord("xray", 0, (0,), s)
    with pytest.raises(ValueError):
        SinogramRecord("lrt", 0, (0, 1), s)


def test_atomic_write_replaces_and_leaves_no_temporaries(tmp_path):
    target = tmp_path / "sub" / "x.bin"
    atomic_write(target, b"one")
    atomic_write(target, b"two")
    assert target.read_bytes() == b"two"
    assert [p.name for p in target.parent.iterdir()] == ["x.bin"]


def test_pgm_preview(tmp_path):
    img = np.array([[0.0, 1.0], [2.0, 4.0]])
    raw = write_pgm(tmp_path / "p.pgm", img).read_bytes()
    assert raw.startswith(b"P5\n2 2\n255\n")
    assert list(raw[-4:]) == [0, 64, 128, 255]
    flat = write_pgm(tmp_path / "flat.pgm", np.ones((3, 2))).read_bytes()
    assert flat.endswith(bytes(6))
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "bad.pgm", np.zeros(4))
