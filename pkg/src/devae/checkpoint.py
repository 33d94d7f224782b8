"""Bit-exact binary checkpoint format.

Layout:

    magic bytes  b"DEVAE\\x01"
    uint64 LE    header length in bytes
    utf-8        header text (serialized run configuration plus bookkeeping
                 keys: iteration, adam step, tensor counts)
    tensors      for each tensor, in order:
                     uint32 LE ndim
                     uint32 LE x ndim  shape
                     float64 LE        row-major data

Model parameters come first (model order), then the optimizer's first-moment
and second-moment accumulators in the same order, so an interrupted run can
resume exactly. Round-trips are bitwise stable.
"""

from __future__ import annotations

import struct

import numpy as np

from devae.errors import DataError

__all__ = ["MAGIC", "save_checkpoint", "load_checkpoint"]

MAGIC = b"DEVAE\x01"


def save_checkpoint(path: str, header_text: str, tensors: list[np.ndarray]) -> None:
    header = header_text.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for arr in tensors:
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8", copy=False).tobytes())


def load_checkpoint(path: str) -> tuple[str, list[np.ndarray]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise DataError(f"{path} is not a checkpoint (bad magic)")
    offset = len(MAGIC)
    (header_len,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    header = blob[offset : offset + header_len].decode("utf-8")
    offset += header_len
    tensors: list[np.ndarray] = []
    while offset < len(blob):
        (ndim,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        tensors.append(arr.reshape(shape).astype(np.float64))
    return header, tensors
