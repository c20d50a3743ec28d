"""Binary containers for tensor fields (STTF) and sinograms (SGRM).

Both formats are little-endian, carry a fixed header followed by an ``f64``
payload, and end with the CRC32 of the payload.  Writes go through a
temporary file in the target directory and are renamed into place.
"""
from __future__ import annotations

import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import symtensor as st
from .field import Grid, TensorField
from .scalar_radon import DirectionSet, PGrid, Sinogram
from .transforms import FAMILIES, FAMILY_TAGS

STTF_MAGIC = b"STTF"
SGRM_MAGIC = b"SGRM"
FORMAT_VERSION = 1


class FormatError(OSError):
    """A file is truncated, corrupt or not of the expected kind."""


def atomic_write(path, payload: bytes) -> Path:
    """Write ``payload`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class _Reader:
    def __init__(self, buf: bytes, what: str):
        self.buf, self.pos, self.what = buf, 0, what

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise FormatError(f"{self.what}: truncated header")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return out

    def payload(self, count: int) -> np.ndarray:
        size = 8 * count
        if len(self.buf) != self.pos + size + 4:
            raise FormatError(
                f"{self.what}: expected {size} payload bytes plus CRC, found {len(self.buf) - self.pos} bytes"
            )
        raw = self.buf[self.pos : self.pos + size]
        (crc,) = struct.unpack_from("<I", self.buf, self.pos + size)
        if zlib.crc32(raw) != crc:
            raise FormatError(f"{self.what}: CRC mismatch")
        return np.frombuffer(raw, dtype="<f8").astype(float)


def _payload(values: np.ndarray) -> bytes:
    raw = np.ascontiguousarray(values, dtype="<f8").tobytes()
    return raw + struct.pack("<I", zlib.crc32(raw))


# --- STTF -----------------------------------------------------------------------


def encode_field(u: TensorField) -> bytes:
    g = u.grid
    n = g.dim
    head = STTF_MAGIC + struct.pack("<4H", FORMAT_VERSION, n, u.rank, 0)
    head += struct.pack(f"<{n}I", *g.shape) + struct.pack(f"<{n}d", *g.spacing) + struct.pack(f"<{n}d", *g.origin)
    return head + _payload(u.data)


def decode_field(buf: bytes, what: str = "STTF") -> TensorField:
    r = _Reader(buf, what)
    (magic,) = r.take("<4s")
    if magic != STTF_MAGIC:
        raise FormatError(f"{what}: bad magic {magic!r}")
    version, n, m, _ = r.take("<4H")
    if version != FORMAT_VERSION:
        raise FormatError(f"{what}: unsupported version {version}")
    if n not in (2, 3):
        raise FormatError(f"{what}: unsupported dimension {n}")
    shape = r.take(f"<{n}I")
    spacing = r.take(f"<{n}d")
    origin = r.take(f"<{n}d")
    s = st.sym_dim(n, m)
    data = r.payload(s * int(np.prod(shape)))
    return TensorField(Grid(shape, spacing, origin), m, data.reshape((s,) + tuple(shape)))


def write_field(path, u: TensorField) -> Path:
    return atomic_write(path, encode_field(u))


def read_field(path) -> TensorField:
    return decode_field(Path(path).read_bytes(), str(path))


# --- SGRM -----------------------------------------------------------------------


@dataclass(frozen=True)
class SinogramRecord:
    """One sinogram with the family, weight order and multi-index it belongs to."""

    family: str
    order: int
    ell: tuple[int, ...]
    sinogram: Sinogram

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if len(self.ell) != self.sinogram.directions.dim - 1:
            raise ValueError("multi-index length must be n - 1")


def _spacing_from_range(lo: float, hi: float, count: int) -> float:
    """Spacing whose symmetric p-grid reproduces ``(lo, hi)`` bit for bit."""
    h = (hi - lo) / (count - 1)
    for cand in (h, np.nextafter(h, np.inf), np.nextafter(h, -np.inf)):
        vals = PGrid(count, float(cand)).values
        if vals[0] == lo and vals[-1] == hi:
            return float(cand)
    return float(h)


def encode_sinogram(rec: SinogramRecord) -> bytes:
    s = rec.sinogram
    n = s.directions.dim
    p = s.pgrid.values
    head = SGRM_MAGIC + struct.pack("<2H2B", FORMAT_VERSION, n, FAMILY_TAGS[rec.family], rec.order)
    head += struct.pack(f"<{n - 1}B", *rec.ell)
    head += struct.pack("<I", len(s.directions)) + np.ascontiguousarray(s.directions.directions, "<f8").tobytes()
    head += struct.pack("<I2d", s.pgrid.count, p[0], p[-1])
    return head + _payload(s.data)


def decode_sinogram(buf: bytes, what: str = "SGRM") -> SinogramRecord:
    r = _Reader(buf, what)
    (magic,) = r.take("<4s")
    if magic != SGRM_MAGIC:
        raise FormatError(f"{what}: bad magic {magic!r}")
    version, n, tag, order = r.take("<2H2B")
    if version != FORMAT_VERSION:
        raise FormatError(f"{what}: unsupported version {version}")
    if n not in (2, 3) or tag >= len(FAMILIES):
        raise FormatError(f"{what}: unsupported dimension {n} or family tag {tag}")
    ell = r.take(f"<{n - 1}B")
    (ndir,) = r.take("<I")
    dirs = np.array(r.take(f"<{ndir * n}d")).reshape(ndir, n)
    count, lo, hi = r.take("<I2d")
    data = r.payload(ndir * count).reshape(ndir, count)
    pgrid = PGrid(count, _spacing_from_range(lo, hi, count))
    return SinogramRecord(FAMILIES[tag], order, tuple(ell), Sinogram(DirectionSet(dirs), pgrid, data))


def write_sinogram(path, rec: SinogramRecord) -> Path:
    return atomic_write(path, encode_sinogram(rec))


def read_sinogram(path) -> SinogramRecord:
    return decode_sinogram(Path(path).read_bytes(), str(path))


def write_pgm(path, image: np.ndarray) -> Path:
    """8-bit binary PGM of a 2-D array, linearly scaled to its range."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM previews need a 2-D array")
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros(img.shape) if hi == lo else (img - lo) / (hi - lo)
    pixels = np.round(255 * scaled).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    return atomic_write(path, header + pixels.tobytes())
