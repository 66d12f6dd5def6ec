"""Binary matrix format used for cached and exported mel frames.

Layout: an 8-byte header of two little-endian uint32 values (T, C) followed
by T*C little-endian float32 values in row-major order.
"""

from __future__ import annotations

import numpy as np


def save_mel_binary(path, frames: np.ndarray) -> None:
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise ValueError("mel frames must be a 2-D matrix")
    t, c = frames.shape
    with open(path, "wb") as fh:
        fh.write(np.array([t, c], dtype="<u4").tobytes())
        fh.write(frames.astype("<f4").tobytes())


def load_mel_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = np.frombuffer(fh.read(8), dtype="<u4")
        if header.size != 2:
            raise ValueError(f"{path}: truncated header")
        t, c = int(header[0]), int(header[1])
        data = np.frombuffer(fh.read(4 * t * c), dtype="<f4")
    if data.size != t * c:
        raise ValueError(f"{path}: expected {t * c} values, found {data.size}")
    return data.reshape(t, c).astype(np.float64)
