import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ahsps.records import (
    BadMagicError,
    RawFormatError,
    Records,
    TriggerRecord,
    TruncatedFileError,
    VersionMismatchError,
    decode,
    encode,
    read_raw,
    write_raw,
)


def test_round_trip_1e5(tmp_path):
    rng = np.random.default_rng(3)
    a = rng.integers(0, 2, 100_000)
    b = rng.integers(0, 2, 100_000)
    ts = np.cumsum(rng.integers(1, 10_000, 100_000))
    rec = Records(a, b, ts)
    path = tmp_path / "r.bin"
    write_raw(rec, path)
    assert read_raw(path) == rec
    bare = Records(a, b)
    write_raw(bare, path)
    assert read_raw(path) == bare
    assert read_raw(path).timestamps is None


def test_empty_stream(tmp_path):
    path = tmp_path / "empty.bin"
    n = write_raw(Records([], []), path)
    assert n == 16
    back = read_raw(path)
    assert len(back) == 0
    assert path.read_bytes() == b"AHSP" + struct.pack("<HHQ", 1, 0, 0)


def test_bit_layout():
    # record k -> byte k//4, det_a at bit 2(k%4), det_b at bit 2(k%4)+1
    rec = Records.from_records([(1, 0), (0, 1), (1, 1), (0, 0), (0, 1)])
    data = encode(rec)
    assert data[:16] == b"AHSP\x01\x00\x00\x00" + (5).to_bytes(8, "little")
    assert data[16:] == bytes([0b00_11_10_01, 0b00_00_00_10])


def test_timestamp_block_layout():
    rec = Records([1], [0], [123456789])
    data = encode(rec)
    flags = struct.unpack_from("<H", data, 6)[0]
    assert flags == 1
    assert data[-8:] == (123456789).to_bytes(8, "little")
    assert len(data) == 16 + 1 + 8


def test_size_arithmetic():
    data = encode(Records(np.zeros(1000), np.zeros(1000)))
    assert len(data) == 16 + 250


def test_bad_magic():
    with pytest.raises(BadMagicError):
        decode(b"NOPE" + bytes(12))
    with pytest.raises(BadMagicError):
        decode(b"")


def test_version_mismatch():
    data = bytearray(encode(Records([1], [1])))
    data[4] = 2
    with pytest.raises(VersionMismatchError):
        decode(bytes(data))


def test_truncated_payload_names_byte_counts():
    data = encode(Records(np.ones(100), np.zeros(100), np.arange(1, 101)))
    cut = data[:-10]
    with pytest.raises(TruncatedFileError) as info:
        decode(cut)
    assert info.value.expected == len(data)
    assert info.value.actual == len(cut)
    assert str(len(data)) in str(info.value) and str(len(cut)) in str(info.value)
    with pytest.raises(TruncatedFileError):
        decode(data[:10])


def test_errors_are_distinct():
    assert not issubclass(TruncatedFileError, BadMagicError)
    assert not issubclass(VersionMismatchError, TruncatedFileError)
    for cls in (BadMagicError, VersionMismatchError, TruncatedFileError):
        assert issubclass(cls, RawFormatError)


def test_trailing_garbage():
    with pytest.raises(RawFormatError):
        decode(encode(Records([1], [0])) + b"\x00")


def test_records_validation():
    with pytest.raises(ValueError):
        Records([2], [0])
    with pytest.raises(ValueError):
        Records([0, 1], [0, 1], [5, 5])
    with pytest.raises(ValueError):
        Records.from_records([TriggerRecord(0, 1, 3), TriggerRecord(1, 0)])


def test_iteration_and_from_records():
    recs = [TriggerRecord(0, 1, 10), TriggerRecord(1, 1, 20)]
    assert list(Records.from_records(recs)) == recs


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), max_size=64))
def test_round_trip_property(pairs):
    rec = Records.from_records(pairs) if pairs else Records([], [])
    assert decode(encode(rec)) == rec
