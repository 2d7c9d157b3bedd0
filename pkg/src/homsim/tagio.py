"""HOMTAG01 binary tag files.

Layout (all little-endian, bit-exact across platforms):

    offset  size  field
    0       8     magic "HOMTAG01"
    8       4     format version (u32, currently 1)
    12      8     tick size in femtoseconds (u64)
    20      8     record count (u64)
    28      8     rng seed (u64)
    36      8     modulation period in ticks (u64)
    44      8     optical delay in femtoseconds (i64)
    52      4     trigger decimation (u32, trigger tag every N periods)
    56      8     reserved, zero

followed by ``record count`` 12-byte records:

    0       8     time in ticks (u64)
    8       1     channel (u8: 0=DET3, 1=DET4, 2=TRIGGER)
    9       3     padding, zero
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .mcsim import FORMAT_VERSION, TagStream

__all__ = ["MAGIC", "write_tags", "read_tags"]

MAGIC = b"HOMTAG01"
HEADER = struct.Struct("<8sIQQQQqI8x")
assert HEADER.size == 64

RECORD_DTYPE = np.dtype([("time", "<u8"), ("channel", "u1"), ("pad", "u1", (3,))])
assert RECORD_DTYPE.itemsize == 12

FS_PER_NS = 1_000_000


def write_tags(stream: TagStream, path: str | Path) -> None:
    """Write a tag stream; the result is byte-identical for equal streams."""
    path = Path(path)
    tick_fs = round(stream.tick * FS_PER_NS)
    if tick_fs <= 0:
        raise DataError(f"tick {stream.tick} ns does not fit the femtosecond header field")
    header = HEADER.pack(
        MAGIC,
        stream.version,
        tick_fs,
        len(stream),
        stream.seed % 2**64,
        stream.t_mod_ticks,
        round(stream.tau_opt * FS_PER_NS),
        stream.trigger_every,
    )
    records = np.zeros(len(stream), dtype=RECORD_DTYPE)
    records["time"] = stream.times
    records["channel"] = stream.channels
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def read_tags(path: str | Path) -> TagStream:
    """Read and validate a HOMTAG01 file.

    Corruption is reported with the byte offset of the first bad item.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise DataError(f"{path}: truncated header, file ends at byte {len(raw)} of {HEADER.size}")
    magic, version, tick_fs, count, seed, t_mod_ticks, tau_opt_fs, trig_every = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r} at byte 0")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version} at byte 8")
    if tick_fs == 0:
        raise DataError(f"{path}: zero tick size at byte 12")

    payload = raw[HEADER.size:]
    expected = count * RECORD_DTYPE.itemsize
    if len(payload) != expected:
        offset = HEADER.size + (len(payload) // RECORD_DTYPE.itemsize) * RECORD_DTYPE.itemsize
        raise DataError(
            f"{path}: payload holds {len(payload)} bytes but header declares "
            f"{count} records ({expected} bytes); file breaks at byte {offset}"
        )
    records = np.frombuffer(payload, dtype=RECORD_DTYPE)

    bad = np.flatnonzero(records["channel"] > 2)
    if len(bad):
        offset = HEADER.size + int(bad[0]) * RECORD_DTYPE.itemsize + 8
        raise DataError(f"{path}: invalid channel {records['channel'][bad[0]]} at byte {offset}")
    if len(records) > 1:
        steps = np.diff(records["time"].astype(np.int64))
        bad = np.flatnonzero(steps < 0)
        if len(bad):
            offset = HEADER.size + (int(bad[0]) + 1) * RECORD_DTYPE.itemsize
            raise DataError(f"{path}: record times decrease at byte {offset}")

    return TagStream(
        times=records["time"].copy(),
        channels=records["channel"].copy(),
        tick=tick_fs / FS_PER_NS,
        t_mod_ticks=int(t_mod_ticks),
        seed=int(seed),
        trigger_every=int(trig_every),
        tau_opt=tau_opt_fs / FS_PER_NS,
        version=int(version),
    )
