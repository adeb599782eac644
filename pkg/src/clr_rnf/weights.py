"""Binary weight interchange format (CLRW) and the in-memory store.

File layout, all integers little-endian:

    magic   4 bytes  b"CLRW"
    version u32      1
    count   u32      number of tensors
    then per tensor, in lexicographic order of the entry name:
        name_len u32
        name     UTF-8 bytes
        dtype    u8   0 = float32 (the only code in version 1)
        rank     u8   0..4
        dims     u32 * rank
        data     raw little-endian float32, C (row-major) order

Entries are written sorted by name, so equal stores serialize to equal
bytes.  Loading validates the header, the advertised sizes, and that every
value is finite; binding tensors against an architecture is a separate
step (see :func:`clr_rnf.ranking.bind_conv_weights`).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, UsageError

MAGIC = b"CLRW"
VERSION = 1
DTYPE_F32 = 0
MAX_RANK = 4


class WeightStore:
    """Named dense float32 tensors, immutable after construction."""

    def __init__(self, entries: dict[str, np.ndarray]):
        tensors: dict[str, np.ndarray] = {}
        for name, tensor in entries.items():
            arr = np.ascontiguousarray(tensor, dtype=np.float32)
            if arr.ndim > MAX_RANK:
                raise DataError(f"tensor {name!r}: rank {arr.ndim} exceeds {MAX_RANK}")
            _check_finite(name, arr)
            arr.flags.writeable = False
            tensors[name] = arr
        self._tensors = tensors

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        if name not in self._tensors:
            raise KeyError(name)
        return self._tensors[name]

    def get(self, name: str, default=None):
        return self._tensors.get(name, default)

    def names(self) -> list[str]:
        return sorted(self._tensors)

    def items(self):
        return [(name, self._tensors[name]) for name in self.names()]

    def total_values(self) -> int:
        return sum(int(t.size) for t in self._tensors.values())

    def equals(self, other: "WeightStore") -> bool:
        if self.names() != other.names():
            return False
        return all(np.array_equal(self[n], other[n]) for n in self.names())


def _check_finite(name: str, arr: np.ndarray) -> None:
    finite = np.isfinite(arr)
    if not finite.all():
        idx = int(np.flatnonzero(~finite.ravel())[0])
        raise DataError(f"tensor {name!r}: non-finite value at flat index {idx}")


def save_weights(store: WeightStore, path: str | Path) -> None:
    """Write ``store`` in the CLRW layout; deterministic for equal stores."""
    path = Path(path)
    items = store.items()
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", VERSION, len(items)))
            for name, tensor in items:
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<I", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<BB", DTYPE_F32, tensor.ndim))
                fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
                fh.write(tensor.astype("<f4", copy=False).tobytes(order="C"))
    except OSError as exc:
        raise FormatError(f"cannot write weights to {path}: {exc}") from exc


def load_weights(path: str | Path) -> WeightStore:
    """Read a CLRW file back into a validated store."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read weights file {path}: {exc}") from exc
    view = memoryview(blob)
    offset = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise FormatError(f"{path}: truncated while reading {what}")
        chunk = view[offset : offset + n]
        offset += n
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise FormatError(f"{path}: bad magic bytes, not a CLRW file")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise FormatError(f"{path}: unsupported CLRW version {version}")
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = bytes(take(name_len, "name")).decode("utf-8")
        dtype_code, rank = struct.unpack("<BB", take(2, f"tensor {name!r} header"))
        if dtype_code != DTYPE_F32:
            raise FormatError(f"{path}: tensor {name!r} has unknown dtype code {dtype_code}")
        if rank > MAX_RANK:
            raise FormatError(f"{path}: tensor {name!r} has rank {rank} > {MAX_RANK}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"tensor {name!r} dims"))
        size = 1
        for d in dims:
            size *= d
        raw = take(4 * size, f"tensor {name!r} data")
        arr = np.frombuffer(raw, dtype="<f4").reshape(dims)
        if name in entries:
            raise FormatError(f"{path}: duplicate tensor name {name!r}")
        entries[name] = arr
    if offset != len(view):
        raise FormatError(f"{path}: {len(view) - offset} trailing bytes after last tensor")
    return WeightStore(entries)


def flatten_filters(tensor: np.ndarray) -> np.ndarray:
    """Reformat a (n, c, kh, kw) conv tensor to an n x (c*kh*kw) matrix.

    Row j is filter j laid out in (channel, row, col) order.
    """
    if tensor.ndim != 4:
        raise UsageError(f"flatten_filters expects a rank-4 tensor, got rank {tensor.ndim}")
    n = tensor.shape[0]
    return np.reshape(tensor, (n, -1))
