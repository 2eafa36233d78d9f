import io
import struct

import numpy as np
import pytest

from swapsim.tagfile import MAGIC, TagFileError, decode, encode, export_tags, import_tags
from swapsim.tagstream import Recorder, TagStream


def _stream(n, seed=0, recorder=Recorder.LAPALMA):
    rng = np.random.default_rng(seed)
    tags = np.sort(rng.integers(0, 2**50, n))
    chans = rng.integers(0, 6, n) if recorder is Recorder.LAPALMA else rng.integers(6, 8, n)
    truth = np.where(rng.random(n) < 0.3, rng.integers(0, 2**40, n), -1)
    return TagStream(recorder, tags, chans.astype(np.uint8), truth)


def test_million_event_roundtrip(tmp_path):
    s = _stream(1_000_000, 1)
    dark = np.random.default_rng(2).random(len(s)) < 0.1
    path = tmp_path / "lp.swtg"
    export_tags(s, path, dark)
    data = path.read_bytes()
    back, back_dark = decode(data)
    assert encode(back, back_dark) == data
    np.testing.assert_array_equal(back.tags, s.tags)
    np.testing.assert_array_equal(back.channels, s.channels)
    np.testing.assert_array_equal(back.truth, s.truth)
    np.testing.assert_array_equal(back_dark, dark)


def test_record_layout():
    s = TagStream(Recorder.TENERIFE, [7], [6], [70000])
    data = encode(s)
    assert data[:4] == MAGIC
    assert struct.unpack_from("<HHQ", data, 4) == (1, 156, 1)
    tag, chan, flags, ref = struct.unpack_from("<QBBH", data, 16)
    assert (tag, chan, flags, ref) == (7, 6, 1, 70000 & 0xFFFF)
    assert struct.unpack_from("<Q", data, 28)[0] == 70000
    assert len(data) == 36


def test_empty_stream():
    data = encode(TagStream(Recorder.LAPALMA, [], []))
    assert len(data) == 16
    assert len(decode(data)[0]) == 0


def test_recorder_inferred():
    back = import_tags(encode(_stream(50, recorder=Recorder.TENERIFE)))
    assert back.recorder is Recorder.TENERIFE


def test_file_object_roundtrip():
    buf = io.BytesIO()
    export_tags(_stream(100), buf)
    buf.seek(0)
    assert len(import_tags(buf)) == 100


def test_bad_magic():
    data = bytearray(encode(_stream(10)))
    data[:4] = b"XXXX"
    with pytest.raises(TagFileError, match="magic"):
        decode(bytes(data))


def test_bad_version_and_tick():
    data = encode(_stream(3))
    with pytest.raises(TagFileError, match="version"):
        decode(data[:4] + struct.pack("<H", 9) + data[6:])
    with pytest.raises(TagFileError, match="tick"):
        decode(data[:6] + struct.pack("<H", 100) + data[8:])


@pytest.mark.parametrize("cut", [5, 16 + 7, -3])
def test_truncated(cut):
    data = encode(_stream(20, 3))
    with pytest.raises(TagFileError, match="truncated"):
        decode(data[:cut])


def test_trailing_bytes():
    with pytest.raises(TagFileError):
        decode(encode(_stream(5)) + b"\0")


def test_unsorted_rejected():
    s = TagStream(Recorder.LAPALMA, [5, 1], [0, 1])
    with pytest.raises(TagFileError):
        encode(s)
    good = bytearray(encode(TagStream(Recorder.LAPALMA, [1, 5], [0, 1])))
    # swap the two records in place
    good[16:28], good[28:40] = good[28:40], good[16:28]
    with pytest.raises(TagFileError, match="sorted"):
        decode(bytes(good))


def test_truth_reference_mismatch():
    data = bytearray(encode(TagStream(Recorder.LAPALMA, [1], [0], [42])))
    data[-8:] = struct.pack("<Q", 43)
    with pytest.raises(TagFileError, match="truth"):
        decode(bytes(data))


def test_foreign_channel_rejected():
    data = encode(TagStream(Recorder.LAPALMA, [1, 2], [0, 7]))
    with pytest.raises(TagFileError):
        decode(data, Recorder.LAPALMA)
