"""Writer for the PMA feature-archive format.

Layout (little-endian): magic "PMA1" | version u16 (=1) | dims u32 |
frame_period_microseconds u32 | entry_count u64 | index records of
{id_length u16, id UTF-8, frame_count u32, byte_offset u64} | payload of
float32 row-major frames. Offsets are relative to the payload start.
"""

import struct

import numpy as np

MAGIC = b"PMA1"
VERSION = 1

_HEADER = struct.Struct("<4sHIIQ")
_ID_LEN = struct.Struct("<H")
_RECORD = struct.Struct("<IQ")


def write_archive(entries, frame_period: float, path) -> None:
    """Serialize (stimulus_id, frames x dims array) pairs.

    All entries must share one dims value; data is cast to float32.
    """
    entries = [(sid, np.ascontiguousarray(data, dtype="<f4")) for sid, data in entries]
    if not entries:
        raise ValueError("refusing to write an empty archive")
    dims = entries[0][1].shape[1]
    seen = set()
    for sid, data in entries:
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError(f"{sid!r}: expected a nonempty frames x dims matrix")
        if data.shape[1] != dims:
            raise ValueError(f"{sid!r}: dims {data.shape[1]} != {dims}")
        if not np.all(np.isfinite(data)):
            raise ValueError(f"{sid!r}: non-finite values")
        if sid in seen:
            raise ValueError(f"duplicate stimulus id {sid!r}")
        seen.add(sid)

    period_us = int(round(frame_period * 1e6))
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, dims, period_us, len(entries)))
        offset = 0
        for sid, data in entries:
            raw = sid.encode("utf-8")
            f.write(_ID_LEN.pack(len(raw)))
            f.write(raw)
            f.write(_RECORD.pack(data.shape[0], offset))
            offset += data.nbytes
        for _, data in entries:
            f.write(data.tobytes())
