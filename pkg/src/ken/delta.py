"""Compact delta container: retained values plus a bitmask position dictionary.

A delta fixes a pre-trained snapshot (bound by checksum) and records, per
matrix, which positions keep their fine-tuned values.  The file body holds a
LSB-first bitmask and the retained float32 values in ascending flat-index
order, optionally LZMA-compressed; re-injection onto the matching base
reproduces the optimized snapshot bit-exactly.

File layout (all little-endian):

    magic b"KEND" | version u16 | compress u8 | base_checksum u32
    body (raw or LZMA):
        matrix_count u32
        per matrix: name_len u16, name UTF-8, rows u32, cols u32, k u32,
                    mask ceil(rows*cols/8) bytes, values popcount * 4 bytes
    crc32 u32 over every preceding byte of the file
"""

from __future__ import annotations

import lzma
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    BaseMismatch,
    ChecksumMismatch,
    CorruptMask,
    DecompressError,
    FormatError,
    ShapeMismatch,
    TruncatedFile,
    UnknownMatrix,
    UnsupportedVersion,
)
from .tensor_store import ModelSnapshot, WeightMatrix

MAGIC = b"KEND"
VERSION = 1
COMPRESS_NONE = 0
COMPRESS_LZMA = 1

_HEADER = struct.Struct("<4sHBI")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


@dataclass(frozen=True, eq=False)
class DeltaEntry:
    """Retained positions and values for one matrix.

    `mask` is a boolean (rows, cols) array with exactly min(k, cols) set
    bits per row; `values` holds the retained float32 values in ascending
    flat-index order.
    """

    name: str
    k: int
    mask: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        values = np.ascontiguousarray(self.values, dtype=np.float32).reshape(-1)
        if mask.ndim != 2:
            raise CorruptMask(f"matrix {self.name!r}: mask must be 2-D")
        expected = min(self.k, mask.shape[1])
        per_row = mask.sum(axis=1)
        if mask.shape[1] and not np.all(per_row == expected):
            bad = int(np.argmax(per_row != expected))
            raise CorruptMask(
                f"matrix {self.name!r}: row {bad} has {int(per_row[bad])} set bits, "
                f"expected {expected}"
            )
        if values.size != int(mask.sum()):
            raise CorruptMask(
                f"matrix {self.name!r}: {values.size} values for "
                f"{int(mask.sum())} mask bits"
            )
        mask.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.mask.shape[0]

    @property
    def cols(self) -> int:
        return self.mask.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DeltaEntry):
            return NotImplemented
        return (
            self.name == other.name
            and self.k == other.k
            and self.mask.shape == other.mask.shape
            and bool(np.array_equal(self.mask, other.mask))
            and self.values.tobytes() == other.values.tobytes()
        )


@dataclass(frozen=True, eq=False)
class DeltaContainer:
    """All deltas for one snapshot, bound to its checksum."""

    base_checksum: int
    entries: tuple[DeltaEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            dupe = next(n for n in names if names.count(n) > 1)
            raise FormatError(f"duplicate matrix name {dupe!r} in delta")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def get(self, name: str) -> DeltaEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise UnknownMatrix(f"no delta entry named {name!r}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, DeltaContainer):
            return NotImplemented
        return (
            self.base_checksum == other.base_checksum
            and self.entries == other.entries
        )


def extract_delta(
    base_checksum: int,
    fine: ModelSnapshot,
    masks: dict[str, np.ndarray],
    k: int,
) -> DeltaContainer:
    """Build a delta from per-matrix masks; values come from `fine`.

    Entries follow snapshot order.  Every mask name must name a matrix in
    the snapshot and match its shape.
    """
    unknown = set(masks) - set(fine.names())
    if unknown:
        raise UnknownMatrix(f"mask names not in snapshot: {sorted(unknown)!r}")
    entries = []
    for m in fine:
        if m.name not in masks:
            continue
        mask = np.asarray(masks[m.name])
        if mask.shape != m.shape:
            raise ShapeMismatch(
                f"matrix {m.name!r}: mask shape {mask.shape} does not match "
                f"{m.shape}"
            )
        entries.append(DeltaEntry(m.name, k, mask, m.data[mask]))
    return DeltaContainer(base_checksum, tuple(entries))


def _serialize_entries(delta: DeltaContainer) -> bytes:
    parts = [_U32.pack(len(delta.entries))]
    for e in delta.entries:
        name = e.name.encode("utf-8")
        parts.append(_U16.pack(len(name)))
        parts.append(name)
        parts.append(_U32.pack(e.rows))
        parts.append(_U32.pack(e.cols))
        parts.append(_U32.pack(e.k))
        parts.append(np.packbits(e.mask.ravel(), bitorder="little").tobytes())
        parts.append(e.values.astype("<f4", copy=False).tobytes())
    return b"".join(parts)


def save_delta(delta: DeltaContainer, path, compress: bool = True) -> int:
    """Write a delta file; returns the byte size written."""
    body = _serialize_entries(delta)
    if compress:
        body = lzma.compress(body, preset=6)
    flag = COMPRESS_LZMA if compress else COMPRESS_NONE
    blob = _HEADER.pack(MAGIC, VERSION, flag, delta.base_checksum & 0xFFFFFFFF) + body
    blob += _U32.pack(zlib.crc32(blob) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def load_delta(path) -> DeltaContainer:
    """Read and validate a delta file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise TruncatedFile(f"{path}: {len(blob)} bytes is too short for a delta")
    if blob[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < _HEADER.size + _U32.size:
        raise TruncatedFile(f"{path}: truncated before delta header completes")
    _, version, flag, base_checksum = _HEADER.unpack_from(blob, 0)
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: delta version {version} not supported")
    stored = _U32.unpack_from(blob, len(blob) - _U32.size)[0]
    actual = zlib.crc32(blob[: -_U32.size]) & 0xFFFFFFFF
    if stored != actual:
        raise ChecksumMismatch(
            f"{path}: crc32 {actual:#010x} does not match stored {stored:#010x}"
        )
    body = blob[_HEADER.size : -_U32.size]
    if flag == COMPRESS_LZMA:
        try:
            body = lzma.decompress(body)
        except lzma.LZMAError as exc:
            raise DecompressError(f"{path}: {exc}") from exc
    elif flag != COMPRESS_NONE:
        raise DecompressError(f"{path}: unknown compression flag {flag}")

    def need(cursor: int, count: int) -> int:
        if cursor + count > len(body):
            raise TruncatedFile(f"{path}: delta body ends mid-record")
        return cursor + count

    cur = 0
    cur = need(cur, _U32.size)
    (count,) = _U32.unpack_from(body, cur - _U32.size)
    entries = []
    for _ in range(count):
        cur = need(cur, _U16.size)
        (name_len,) = _U16.unpack_from(body, cur - _U16.size)
        cur = need(cur, name_len)
        try:
            name = body[cur - name_len : cur].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: matrix name is not valid UTF-8") from exc
        cur = need(cur, 3 * _U32.size)
        rows, cols, k = struct.unpack_from("<III", body, cur - 3 * _U32.size)
        mask_bytes = (rows * cols + 7) // 8
        cur = need(cur, mask_bytes)
        packed = np.frombuffer(body, dtype=np.uint8, count=mask_bytes, offset=cur - mask_bytes)
        bits = np.unpackbits(packed, bitorder="little")
        if bits[rows * cols :].any():
            raise CorruptMask(f"{path}: matrix {name!r} has set padding bits")
        mask = bits[: rows * cols].astype(bool).reshape(rows, cols)
        n_vals = int(mask.sum())
        cur = need(cur, 4 * n_vals)
        values = np.frombuffer(body, dtype="<f4", count=n_vals, offset=cur - 4 * n_vals)
        entries.append(DeltaEntry(name, k, mask, values))
    if cur != len(body):
        raise FormatError(f"{path}: {len(body) - cur} trailing bytes after last entry")
    return DeltaContainer(base_checksum, tuple(entries))


def inject(
    pre: ModelSnapshot, pre_checksum: int, delta: DeltaContainer
) -> ModelSnapshot:
    """Re-apply a delta onto its pre-trained base, bit-exactly.

    `pre_checksum` must equal the delta's recorded base checksum; every
    entry must name a matrix of matching shape.  Matrices without an entry
    pass through unchanged.
    """
    if (pre_checksum & 0xFFFFFFFF) != (delta.base_checksum & 0xFFFFFFFF):
        raise BaseMismatch(
            f"delta was built for base {delta.base_checksum:#010x}, "
            f"got {pre_checksum:#010x}"
        )
    names = set(pre.names())
    for e in delta:
        if e.name not in names:
            raise UnknownMatrix(f"delta entry {e.name!r} not in base snapshot")
    out = []
    for m in pre:
        try:
            e = delta.get(m.name)
        except UnknownMatrix:
            out.append(m)
            continue
        if e.mask.shape != m.shape:
            raise ShapeMismatch(
                f"matrix {m.name!r}: delta shape {e.mask.shape} does not match "
                f"base {m.shape}"
            )
        data = m.data.copy()
        data[e.mask] = e.values
        out.append(WeightMatrix(m.name, data))
    return ModelSnapshot(tuple(out))


def payload_sizes(delta: DeltaContainer) -> tuple[int, int]:
    """(values_bytes, mask_bytes) of the uncompressed body payload."""
    values_bytes = sum(e.values.size * 4 for e in delta)
    mask_bytes = sum((e.rows * e.cols + 7) // 8 for e in delta)
    return values_bytes, mask_bytes
