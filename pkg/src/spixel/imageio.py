"""Binary PPM (P6, 8-bit) and PGM (P5, 16-bit big-endian) readers/writers.

Headers follow the netpbm conventions: whitespace-separated tokens, '#'
comments allowed anywhere in the header, a single whitespace byte before the
raster. Label maps are stored as 16-bit graymaps whose sample values are
class ids.
"""

import numpy as np

from .errors import DataError


def _read_tokens(fh, count, path):
    tokens = []
    while len(tokens) < count:
        ch = fh.read(1)
        if not ch:
            raise DataError(f"{path}: truncated header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            continue
        token = ch
        while True:
            ch = fh.read(1)
            if not ch or ch.isspace():
                break
            if ch == b"#":  # comment glued to a token ends it
                while ch not in (b"\n", b""):
                    ch = fh.read(1)
                break
            token += ch
        tokens.append(token)
    return tokens


def _read_netpbm(path, magic_expected):
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic != magic_expected:
            raise DataError(
                f"{path}: expected {magic_expected.decode()} file, got magic {magic!r}"
            )
        tokens = _read_tokens(fh, 3, path)
        try:
            width, height, maxval = (int(t) for t in tokens)
        except ValueError:
            raise DataError(f"{path}: non-numeric header fields {tokens}") from None
        if width < 1 or height < 1 or maxval < 1 or maxval > 65535:
            raise DataError(f"{path}: bad dimensions/maxval {width}x{height}/{maxval}")
        raster = fh.read()
    return width, height, maxval, raster


def read_ppm(path):
    """[H, W, 3] uint8 pixel data from a binary P6 file."""
    width, height, maxval, raster = _read_netpbm(path, b"P6")
    if maxval > 255:
        raise DataError(f"{path}: 16-bit PPM is not supported")
    need = width * height * 3
    if len(raster) < need:
        raise DataError(f"{path}: raster has {len(raster)} bytes, expected {need}")
    img = np.frombuffer(raster[:need], np.uint8).reshape(height, width, 3)
    if maxval != 255:
        img = (img.astype(np.float64) * (255.0 / maxval)).round().astype(np.uint8)
    return img.copy()


def write_ppm(path, img):
    """Write [H, W, 3] data as binary P6; floats are taken as [0, 1]."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"PPM needs [H, W, 3] data, got {arr.shape}")
    if arr.dtype != np.uint8:
        arr = (np.clip(arr, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_pgm16(path):
    """[H, W] uint16 sample values from a binary P5 file (8- or 16-bit)."""
    width, height, maxval, raster = _read_netpbm(path, b"P5")
    if maxval > 255:
        need = width * height * 2
        dtype = np.dtype(">u2")
    else:
        need = width * height
        dtype = np.dtype("u1")
    if len(raster) < need:
        raise DataError(f"{path}: raster has {len(raster)} bytes, expected {need}")
    ids = np.frombuffer(raster[:need], dtype).reshape(height, width)
    return ids.astype(np.uint16)


def write_pgm16(path, ids):
    """Write [H, W] non-negative ids as binary P5 with 16-bit BE samples."""
    arr = np.asarray(ids)
    if arr.ndim != 2:
        raise DataError(f"PGM needs [H, W] data, got {arr.shape}")
    if arr.min() < 0 or arr.max() > 65535:
        raise DataError(f"ids outside uint16 range: [{arr.min()}, {arr.max()}]")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode())
        fh.write(np.ascontiguousarray(arr.astype(">u2")).tobytes())
