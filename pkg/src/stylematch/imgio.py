"""Image and raw-tensor I/O.

Images are float arrays in [-1, 1], HWC with C=3 (or HW for grayscale maps).
PNG round trips quantize to 8 bit; the raw format keeps float32 exactly and is
what checkpoint-adjacent artifacts use when losslessness matters.

Raw layout: magic b"SMSG", then H, W, C as little-endian uint32 (16-byte
header), then H*W*C float32 values, C-order.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from .errors import ParameterError, ShapeError

RAW_MAGIC = b"SMSG"


def to_unit(x: np.ndarray) -> np.ndarray:
    """[-1, 1] -> [0, 1], clipped."""
    return np.clip((np.asarray(x, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)


def from_unit(u: np.ndarray) -> np.ndarray:
    """[0, 1] -> [-1, 1]."""
    return np.asarray(u, dtype=np.float64) * 2.0 - 1.0


def save_png(path, img: np.ndarray) -> None:
    """Write an HWC float image in [-1, 1] (or HW grayscale) as 8-bit PNG."""
    img = np.asarray(img)
    if img.ndim == 2:
        arr = img[:, :, None]
    elif img.ndim == 3 and img.shape[2] in (1, 3):
        arr = img
    else:
        raise ShapeError(f"expected HW or HWC with C in {{1,3}}, got {img.shape}")
    u8 = np.round(to_unit(arr) * 255.0).astype(np.uint8)
    if u8.shape[2] == 1:
        Image.fromarray(u8[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(u8, mode="RGB").save(path)


def load_png(path) -> np.ndarray:
    """Read a PNG into an HWC float64 image in [-1, 1]; grayscale comes back HW."""
    with Image.open(path) as im:
        if im.mode == "L":
            u8 = np.asarray(im, dtype=np.float64)
        else:
            u8 = np.asarray(im.convert("RGB"), dtype=np.float64)
    return from_unit(u8 / 255.0)


def save_gray_png(path, m: np.ndarray) -> None:
    """Write an HW map already in [0, 1] (e.g. a relevance map) as grayscale PNG."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise ShapeError(f"expected HW map, got {m.shape}")
    u8 = np.round(np.clip(m, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(path)


def save_raw(path, img: np.ndarray) -> None:
    """Write an HWC float array losslessly (float32)."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ShapeError(f"expected HWC, got {img.shape}")
    h, w, c = img.shape
    with open(path, "wb") as f:
        f.write(RAW_MAGIC)
        f.write(struct.pack("<III", h, w, c))
        f.write(np.ascontiguousarray(img, dtype="<f4").tobytes())


def load_raw(path) -> np.ndarray:
    """Read the raw float format back as float64 HWC (HW if C=1)."""
    with open(path, "rb") as f:
        head = f.read(16)
        if len(head) != 16 or head[:4] != RAW_MAGIC:
            raise ParameterError(f"{path}: not a raw tensor file (bad magic/header)")
        h, w, c = struct.unpack("<III", head[4:])
        payload = f.read()
    expect = h * w * c * 4
    if len(payload) != expect:
        raise ParameterError(f"{path}: payload is {len(payload)} bytes, expected {expect}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float64)
    return arr[:, :, 0] if c == 1 else arr
