"""Binary image formats and crash-safe writes.

Images travel as binary PPM (P6, RGB) and masks as binary PGM (P5, one
byte per pixel holding the class id). Every writer goes through a
temp-file-plus-rename so interrupted runs never leave truncated output.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import DataError, UsageError


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write data to path via a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: str, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _as_bytes_image(array: np.ndarray, what: str) -> np.ndarray:
    array = np.asarray(array)
    if np.issubdtype(array.dtype, np.floating):
        if array.size and (array.min() < 0.0 or array.max() > 1.0):
            raise UsageError(f"float {what} values must lie in [0, 1]")
        array = np.round(array * 255.0).astype(np.uint8)
    if array.dtype != np.uint8:
        if array.size and (array.min() < 0 or array.max() > 255):
            raise UsageError(f"{what} values must fit in a byte")
        array = array.astype(np.uint8)
    return array


def write_ppm(path: str, image: np.ndarray) -> None:
    """Write an RGB image of shape (H, W, 3), float [0, 1] or uint8."""
    image = _as_bytes_image(image, "image")
    if image.ndim != 3 or image.shape[2] != 3:
        raise UsageError(f"PPM needs shape (H, W, 3), got {image.shape}")
    h, w = image.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + image.tobytes())


def write_pgm(path: str, mask: np.ndarray) -> None:
    """Write a single-channel byte image of shape (H, W)."""
    mask = _as_bytes_image(mask, "mask")
    if mask.ndim != 2:
        raise UsageError(f"PGM needs shape (H, W), got {mask.shape}")
    h, w = mask.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + mask.tobytes())


def _read_pnm(path: str, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(magic):
        raise DataError(f"{path}: expected {magic.decode()} header")
    # Tokenize the header: width, height, maxval, skipping '#' comments.
    pos = len(magic)
    tokens = []
    while len(tokens) < 3:
        if pos >= len(raw):
            raise DataError(f"{path}: truncated header")
        ch = raw[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            pos = raw.find(b"\n", pos)
            if pos < 0:
                raise DataError(f"{path}: truncated header")
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace():
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise DataError(f"{path}: non-numeric header fields") from None
    if maxval != 255:
        raise DataError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # single whitespace after maxval
    expected = w * h * channels
    payload = raw[pos:pos + expected]
    if len(payload) != expected:
        raise DataError(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype=np.uint8)
    return data.reshape((h, w, channels) if channels > 1 else (h, w)).copy()


def read_ppm(path: str) -> np.ndarray:
    """Read a binary PPM into a uint8 array of shape (H, W, 3)."""
    return _read_pnm(path, b"P6", 3)


def read_pgm(path: str) -> np.ndarray:
    """Read a binary PGM into a uint8 array of shape (H, W)."""
    return _read_pnm(path, b"P5", 1)
