"""Per-trigger detection records and their packed binary file format.

Layout (little endian)::

    b"AHSP"  u16 version=1  u16 flags  u64 count
    ceil(count/4) payload bytes, 2 bits per record:
        record k -> byte k//4, det_a at bit 2*(k%4), det_b at bit 2*(k%4)+1
    [flags bit0] count x u64 timestamps in ns
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

MAGIC = b"AHSP"
VERSION = 1
FLAG_TIMESTAMPS = 0x1
HEADER = struct.Struct("<4sHHQ")


class RawFormatError(ValueError):
    """Base class for unreadable raw files."""


class BadMagicError(RawFormatError):
    pass


class VersionMismatchError(RawFormatError):
    pass


class TruncatedFileError(RawFormatError):
    def __init__(self, what: str, expected: int, actual: int):
        super().__init__(f"truncated {what}: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


@dataclass(frozen=True)
class TriggerRecord:
    det_a: int
    det_b: int
    timestamp: int | None = None


class Records:
    """Columnar stream of trigger records.

    ``det_a`` and ``det_b`` are uint8 arrays of 0/1; ``timestamps`` is an
    optional int64 array of nanoseconds since run start.
    """

    __slots__ = ("det_a", "det_b", "timestamps")

    def __init__(self, det_a, det_b, timestamps=None):
        a = np.ascontiguousarray(det_a, dtype=np.uint8)
        b = np.ascontiguousarray(det_b, dtype=np.uint8)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("det_a and det_b must be 1-d arrays of equal length")
        if a.size and (a.max() > 1 or b.max() > 1):
            raise ValueError("detection bits must be 0 or 1")
        if timestamps is not None:
            timestamps = np.ascontiguousarray(timestamps, dtype=np.int64)
            if timestamps.shape != a.shape:
                raise ValueError("timestamps length differs from record count")
            if timestamps.size > 1 and np.any(np.diff(timestamps) <= 0):
                raise ValueError("timestamps must be strictly increasing")
        self.det_a = a
        self.det_b = b
        self.timestamps = timestamps

    @classmethod
    def from_records(cls, records: Iterable[TriggerRecord | tuple]) -> "Records":
        a, b, t = [], [], []
        for r in records:
            if isinstance(r, TriggerRecord):
                a.append(r.det_a)
                b.append(r.det_b)
                t.append(r.timestamp)
            else:
                a.append(r[0])
                b.append(r[1])
                t.append(r[2] if len(r) > 2 else None)
        if t and all(x is not None for x in t):
            ts = t
        elif any(x is not None for x in t):
            raise ValueError("either all or no records must carry a timestamp")
        else:
            ts = None
        return cls(np.array(a, dtype=np.uint8), np.array(b, dtype=np.uint8), ts)

    def __len__(self) -> int:
        return int(self.det_a.size)

    def __iter__(self) -> Iterator[TriggerRecord]:
        ts = self.timestamps
        for k in range(len(self)):
            yield TriggerRecord(int(self.det_a[k]), int(self.det_b[k]),
                                None if ts is None else int(ts[k]))

    def __getitem__(self, idx) -> "Records":
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1)
        ts = None if self.timestamps is None else self.timestamps[idx]
        return Records(self.det_a[idx], self.det_b[idx], ts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Records):
            return NotImplemented
        if (self.timestamps is None) != (other.timestamps is None):
            return False
        same_ts = self.timestamps is None or np.array_equal(self.timestamps, other.timestamps)
        return same_ts and np.array_equal(self.det_a, other.det_a) and np.array_equal(self.det_b, other.det_b)

    def __repr__(self) -> str:
        return f"Records(n={len(self)}, timestamps={self.timestamps is not None})"

    @staticmethod
    def concat(parts: list["Records"]) -> "Records":
        if not parts:
            return Records(np.zeros(0, np.uint8), np.zeros(0, np.uint8))
        with_ts = [p.timestamps is not None for p in parts]
        if any(with_ts) and not all(with_ts):
            raise ValueError("cannot concatenate timestamped and bare records")
        ts = np.concatenate([p.timestamps for p in parts]) if all(with_ts) else None
        return Records(np.concatenate([p.det_a for p in parts]),
                       np.concatenate([p.det_b for p in parts]), ts)


def pack_bits(det_a: np.ndarray, det_b: np.ndarray) -> bytes:
    n = det_a.size
    pairs = (det_a.astype(np.uint8) | (det_b.astype(np.uint8) << 1))
    pad = (-n) % 4
    if pad:
        pairs = np.concatenate([pairs, np.zeros(pad, np.uint8)])
    q = pairs.reshape(-1, 4)
    packed = q[:, 0] | (q[:, 1] << 2) | (q[:, 2] << 4) | (q[:, 3] << 6)
    return packed.astype(np.uint8).tobytes()


def unpack_bits(payload: bytes, n: int) -> tuple[np.ndarray, np.ndarray]:
    raw = np.frombuffer(payload, dtype=np.uint8)
    shifts = np.array([0, 2, 4, 6], dtype=np.uint8)
    pairs = ((raw[:, None] >> shifts) & 0x3).reshape(-1)[:n]
    return (pairs & 1).astype(np.uint8), (pairs >> 1).astype(np.uint8)


def encode(records: Records) -> bytes:
    n = len(records)
    flags = FLAG_TIMESTAMPS if records.timestamps is not None else 0
    parts = [HEADER.pack(MAGIC, VERSION, flags, n), pack_bits(records.det_a, records.det_b)]
    if flags & FLAG_TIMESTAMPS:
        parts.append(records.timestamps.astype("<u8").tobytes())
    return b"".join(parts)


def decode(data: bytes) -> Records:
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < HEADER.size:
        raise TruncatedFileError("header", HEADER.size, len(data))
    _, version, flags, n = HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionMismatchError(f"unsupported format version {version}, expected {VERSION}")
    if flags & ~FLAG_TIMESTAMPS:
        raise RawFormatError(f"unknown flag bits 0x{flags:04x}")
    n_payload = (n + 3) // 4
    expected = HEADER.size + n_payload + (8 * n if flags & FLAG_TIMESTAMPS else 0)
    if len(data) < expected:
        raise TruncatedFileError("payload", expected, len(data))
    if len(data) > expected:
        raise RawFormatError(f"{len(data) - expected} trailing bytes after payload")
    payload = data[HEADER.size:HEADER.size + n_payload]
    det_a, det_b = unpack_bits(payload, n)
    ts = None
    if flags & FLAG_TIMESTAMPS:
        ts = np.frombuffer(data, dtype="<u8", count=n, offset=HEADER.size + n_payload).astype(np.int64)
    return Records(det_a, det_b, ts)


def write_raw(records: Records | Iterable[TriggerRecord], path: str | Path) -> int:
    """Write records to ``path``; returns the number of bytes written."""
    if not isinstance(records, Records):
        records = Records.from_records(records)
    data = encode(records)
    Path(path).write_bytes(data)
    return len(data)


def read_raw(path: str | Path) -> Records:
    return decode(Path(path).read_bytes())
