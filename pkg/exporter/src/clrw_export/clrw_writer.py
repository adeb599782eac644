"""Writer for the CLRW weight container.

Layout, all integers little-endian: magic ``CLRW``, u32 version (1),
u32 tensor count; per tensor: u32 name length, UTF-8 name, u8 dtype code
(0 = float32), u8 rank, u32 dims, raw little-endian float32 data in
row-major order.  Entries go out sorted by name so equal tensor sets
produce identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CLRW"
VERSION = 1
DTYPE_F32 = 0


def write_clrw(entries: dict[str, np.ndarray], path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(entries)))
        for name in sorted(entries):
            tensor = np.ascontiguousarray(entries[name], dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", DTYPE_F32, tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(tensor.tobytes(order="C"))
