"""Checkpoint container: JSON header + raw float32 parameter blob.

Layout: magic "SMCK", uint32 little-endian header length, UTF-8 JSON header,
then the flat parameter vector as little-endian float32. The header carries
the architecture descriptor, the role tag, and the hash of the schedule the
network was trained against, so mismatched loads fail loudly instead of
silently degrading.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ParameterError

MAGIC = b"SMCK"


def save_checkpoint(path, header: dict, flat_params: np.ndarray) -> None:
    header = dict(header)
    header["n_params"] = int(np.asarray(flat_params).size)
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        f.write(np.asarray(flat_params, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ParameterError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        blob = f.read()
    n = int(header.get("n_params", -1))
    if len(blob) != 4 * n:
        raise ParameterError(f"{path}: blob holds {len(blob) // 4} params, header says {n}")
    return header, np.frombuffer(blob, dtype="<f4").astype(np.float64)
