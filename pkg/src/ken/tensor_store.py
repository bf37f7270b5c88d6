"""Bit-exact reading, writing, and validation of weight snapshots.

A snapshot is an ordered collection of named 2-D float32 matrices stored in
the KENW container:

    magic "KENW" | version u16=1 | tensor_count u32 |
    per tensor: name_len u16, name (UTF-8), rows u32, cols u32,
                dtype u8=0 (float32 LE), payload rows*cols*4 bytes row-major |
    footer: CRC32 u32 over all preceding bytes.

All integers are little-endian.  Serialization is canonical: a snapshot
always produces the same bytes, so the footer CRC doubles as the snapshot
checksum used to bind delta files to their base.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    ChecksumMismatch,
    FormatError,
    NonFiniteValue,
    ShapeMismatch,
    TruncatedFile,
    UnknownMatrix,
    UnsupportedVersion,
)

MAGIC = b"KENW"
VERSION = 1
DTYPE_FLOAT32 = 0

_HEADER = struct.Struct("<4sHI")  # magic, version, tensor_count
_CRC = struct.Struct("<I")


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Named dense float32 matrix, immutable after construction.

    Equality is bit-exact: two matrices compare equal iff their names match
    and their payload bytes are identical (so -0.0 != 0.0 here, unlike ==
    on the raw arrays).
    """

    name: str
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32, order="C", copy=True)
        if arr.ndim != 2:
            raise ShapeMismatch(f"matrix {self.name!r}: expected 2-D data, got {arr.ndim}-D")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatch(f"matrix {self.name!r}: empty dimension in shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise NonFiniteValue(f"matrix {self.name!r} contains NaN or infinity")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightMatrix):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(frozen=True, eq=False)
class ModelSnapshot:
    """Ordered collection of uniquely named weight matrices.

    The matrix order is meaningful: layer-range filters and layer-wise
    rendering index into it.
    """

    matrices: tuple[WeightMatrix, ...]

    def __post_init__(self):
        object.__setattr__(self, "matrices", tuple(self.matrices))
        seen = set()
        for m in self.matrices:
            if m.name in seen:
                raise FormatError(f"duplicate matrix name {m.name!r} in snapshot")
            seen.add(m.name)

    def __len__(self) -> int:
        return len(self.matrices)

    def __iter__(self):
        return iter(self.matrices)

    def __getitem__(self, index: int) -> WeightMatrix:
        return self.matrices[index]

    def names(self) -> list[str]:
        return [m.name for m in self.matrices]

    def get(self, name: str) -> WeightMatrix:
        for m in self.matrices:
            if m.name == name:
                return m
        raise UnknownMatrix(f"no matrix named {name!r} in snapshot")

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelSnapshot):
            return NotImplemented
        return len(self) == len(other) and all(a == b for a, b in zip(self, other))


@dataclass(frozen=True)
class PairReport:
    """Outcome of a pre/fine compatibility check.

    `reason` is one of "", "count", "name", "order", "shape"; empty means OK.
    """

    ok: bool
    reason: str = ""
    matrix: str = ""
    detail: str = ""

    def __str__(self) -> str:
        return "compatible" if self.ok else f"{self.reason} mismatch: {self.detail}"


def validate_pair(pre: ModelSnapshot, fine: ModelSnapshot) -> PairReport:
    """Check that two snapshots agree in names, order, and shapes.

    Returns the first mismatch found rather than raising; the OK verdict is
    symmetric in the two arguments.
    """
    if len(pre) != len(fine):
        return PairReport(
            False, "count", "", f"snapshots hold {len(pre)} vs {len(fine)} matrices"
        )
    pre_names = set(pre.names())
    fine_names = set(fine.names())
    for a, b in zip(pre, fine):
        if a.name != b.name:
            if a.name in fine_names and b.name in pre_names:
                return PairReport(
                    False, "order", a.name,
                    f"matrix {a.name!r} is paired with {b.name!r}; same names, different order",
                )
            missing = a.name if a.name not in fine_names else b.name
            return PairReport(
                False, "name", missing,
                f"matrix {missing!r} is present in only one snapshot",
            )
        if a.shape != b.shape:
            return PairReport(
                False, "shape", a.name,
                f"matrix {a.name!r} has shape {a.shape} vs {b.shape}",
            )
    return PairReport(True)


def _serialize_body(snapshot: ModelSnapshot) -> bytes:
    """Canonical byte stream of a snapshot, without the trailing CRC."""
    out = bytearray()
    out += _HEADER.pack(MAGIC, VERSION, len(snapshot))
    for m in snapshot:
        name = m.name.encode("utf-8")
        if len(name) > 0xFFFF:
            raise FormatError(f"matrix name longer than 65535 bytes: {m.name[:40]!r}...")
        out += struct.pack("<H", len(name))
        out += name
        out += struct.pack("<IIB", m.rows, m.cols, DTYPE_FLOAT32)
        out += m.data.astype("<f4", copy=False).tobytes()
    return bytes(out)


def snapshot_checksum(snapshot: ModelSnapshot) -> int:
    """CRC32 of the canonical serialized bytes.

    Equal to the footer a KENW file stores for this snapshot, so the value
    read back from disk and the value computed in memory always agree.
    """
    return zlib.crc32(_serialize_body(snapshot)) & 0xFFFFFFFF


def save_snapshot(snapshot: ModelSnapshot, path) -> None:
    """Write `snapshot` to `path`; deterministic, byte-identical per input."""
    body = _serialize_body(snapshot)
    Path(path).write_bytes(body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF))


def load_snapshot(path) -> ModelSnapshot:
    """Read a KENW file, verifying magic, version, CRC, and finiteness."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: shorter than the 4-byte magic")
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: expected {MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < _HEADER.size + _CRC.size:
        raise TruncatedFile(f"{path}: header incomplete ({len(raw)} bytes)")
    _, version, count = _HEADER.unpack_from(raw, 0)
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: container version {version}, expected {VERSION}")
    (stored_crc,) = _CRC.unpack_from(raw, len(raw) - _CRC.size)
    actual_crc = zlib.crc32(raw[: -_CRC.size]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumMismatch(
            f"{path}: footer CRC32 {stored_crc:#010x} != computed {actual_crc:#010x}"
        )

    end = len(raw) - _CRC.size
    offset = _HEADER.size
    matrices = []
    for _ in range(count):
        if offset + 2 > end:
            raise TruncatedFile(f"{path}: tensor header past end of file")
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if offset + name_len + 9 > end:
            raise TruncatedFile(f"{path}: tensor header past end of file")
        try:
            name = raw[offset : offset + name_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: tensor name is not valid UTF-8") from exc
        offset += name_len
        rows, cols, dtype = struct.unpack_from("<IIB", raw, offset)
        offset += 9
        if dtype != DTYPE_FLOAT32:
            raise UnsupportedVersion(f"{path}: matrix {name!r} has unknown dtype tag {dtype}")
        payload = rows * cols * 4
        if offset + payload > end:
            raise TruncatedFile(f"{path}: payload of matrix {name!r} past end of file")
        data = np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=offset)
        offset += payload
        matrices.append(WeightMatrix(name, data.reshape(rows, cols)))
    if offset != end:
        raise FormatError(f"{path}: {end - offset} unexpected trailing bytes before footer")
    return ModelSnapshot(tuple(matrices))
