"""Binary tag files.

Layout (little-endian):

* 16-byte header: ``b"SWTG"``, u16 version, u16 tick in ps, u64 record count
* 12-byte records: u64 tag, u8 channel, u8 flags, u16 truth reference
* for each record with flag bit 0 set, one u64 pulse index, in record order

Flag bit 0 marks a record carrying ground truth; bit 1 marks a dark count.
The u16 truth reference holds the low 16 bits of the pulse index so the
record alone can be checked against the trailing table.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from .link import TICK_PS
from .tagstream import Recorder, StreamError, TagStream

MAGIC = b"SWTG"
VERSION = 1
HEADER = struct.Struct("<4sHHQ")
RECORD = np.dtype([("tag", "<u8"), ("channel", "u1"), ("flags", "u1"), ("truth_ref", "<u2")])
FLAG_TRUTH = 0x01
FLAG_DARK = 0x02


class TagFileError(ValueError):
    pass


def encode(stream: TagStream, dark=None) -> bytes:
    """Serialize a stream; ``dark`` optionally marks dark-count events."""
    tags = np.asarray(stream.tags, dtype=np.int64)
    if tags.size and (np.any(np.diff(tags) < 0) or tags[0] < 0):
        raise TagFileError("stream tags must be non-negative and sorted")
    n = tags.size
    rec = np.zeros(n, dtype=RECORD)
    rec["tag"] = tags.astype(np.uint64)
    rec["channel"] = stream.channels
    has_truth = stream.truth >= 0
    flags = np.where(has_truth, FLAG_TRUTH, 0).astype(np.uint8)
    if dark is not None:
        flags |= np.where(np.asarray(dark, bool), FLAG_DARK, 0).astype(np.uint8)
    rec["flags"] = flags
    rec["truth_ref"] = np.where(has_truth, stream.truth & 0xFFFF, 0).astype(np.uint16)
    table = stream.truth[has_truth].astype("<u8")
    return HEADER.pack(MAGIC, VERSION, TICK_PS, n) + rec.tobytes() + table.tobytes()


def decode(data: bytes, recorder: Union[Recorder, str, None] = None, block_seconds: float = 30.0):
    """Parse bytes written by :func:`encode`; returns ``(stream, dark_mask)``."""
    if len(data) < HEADER.size:
        raise TagFileError("truncated file: incomplete header")
    magic, version, tick, n = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TagFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TagFileError(f"unsupported version {version}")
    if tick != TICK_PS:
        raise TagFileError(f"unsupported tick {tick} ps")
    body_end = HEADER.size + n * RECORD.itemsize
    if len(data) < body_end:
        raise TagFileError("truncated file: missing records")
    rec = np.frombuffer(data, dtype=RECORD, count=n, offset=HEADER.size)
    has_truth = (rec["flags"] & FLAG_TRUTH) != 0
    n_truth = int(has_truth.sum())
    expected = body_end + 8 * n_truth
    if len(data) < expected:
        raise TagFileError("truncated file: missing truth table")
    if len(data) > expected:
        raise TagFileError("trailing bytes after truth table")
    table = np.frombuffer(data, dtype="<u8", count=n_truth, offset=body_end).astype(np.int64)
    if np.any((table & 0xFFFF) != rec["truth_ref"][has_truth]):
        raise TagFileError("truth table does not match record references")
    tags = rec["tag"].astype(np.int64)
    if tags.size and np.any(np.diff(tags) < 0):
        raise TagFileError("records are not sorted by tag")
    truth = np.full(n, -1, dtype=np.int64)
    truth[has_truth] = table
    channels = rec["channel"].copy()
    if recorder is None:
        recorder = Recorder.TENERIFE if channels.size and channels.min() >= 6 else Recorder.LAPALMA
    stream = TagStream(Recorder(recorder), tags, channels, truth, block_seconds)
    try:
        stream.validate()
    except StreamError as exc:
        raise TagFileError(str(exc)) from exc
    return stream, (rec["flags"] & FLAG_DARK) != 0


def export_tags(stream: TagStream, target: Union[str, Path, BinaryIO], dark=None) -> int:
    data = encode(stream, dark)
    if isinstance(target, (str, Path)):
        Path(target).write_bytes(data)
    else:
        target.write(data)
    return len(data)


def import_tags(source: Union[str, Path, BinaryIO, bytes], recorder=None, block_seconds: float = 30.0) -> TagStream:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    else:
        data = source.read()
    return decode(data, recorder, block_seconds)[0]


__all__ = ["export_tags", "import_tags", "encode", "decode", "TagFileError", "MAGIC", "VERSION", "RECORD"]
