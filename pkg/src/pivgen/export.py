"""Image export formats.

png16: grayscale PNG, 16 bits per pixel, intensity quantized as
round(v * 65535). raw_f32: height and width as 32-bit little-endian signed
integers followed by row-major float32 intensities (a headerless dump for
zero-parsing consumers).
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

_RAW_HEADER = struct.Struct("<ii")


def quantize_u16(img: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)


def write_png16(path: str, img: np.ndarray) -> None:
    data = quantize_u16(img)
    Image.fromarray(data, mode="I;16").save(path, format="PNG")


def read_png16(path: str) -> np.ndarray:
    """Back to float intensities in [0, 1]."""
    with Image.open(path) as im:
        data = np.asarray(im, dtype=np.uint16)
    return data.astype(np.float32) / 65535.0


def write_raw_f32(path: str, img: np.ndarray) -> None:
    arr = np.ascontiguousarray(img, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_RAW_HEADER.pack(arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_raw_f32(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _RAW_HEADER.size:
        raise ValueError(f"raw_f32: truncated header in {path}")
    height, width = _RAW_HEADER.unpack_from(data)
    expected = _RAW_HEADER.size + 4 * height * width
    if height <= 0 or width <= 0 or len(data) != expected:
        raise ValueError(f"raw_f32: corrupt payload in {path}")
    return np.frombuffer(data, dtype="<f4", offset=_RAW_HEADER.size) \
        .reshape(height, width).copy()
