"""Binary PGM (P5) and PPM (P6) images with maxval 255."""

from pathlib import Path

import numpy as np

from .errors import TruncatedStream


def _tokens(data, count):
    """Read ``count`` whitespace-separated header fields, skipping comments."""
    out = []
    i = 2
    while len(out) < count:
        if i >= len(data):
            raise TruncatedStream("PNM header ends early")
        ch = data[i : i + 1]
        if ch == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            out.append(int(data[i:j]))
            i = j
    return out, i + 1  # one whitespace byte ends the header


def parse_pnm(data):
    """Decode P5/P6 bytes to a uint8 array, (H, W) or (H, W, 3)."""
    data = bytes(data)
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"not a binary PGM/PPM file (magic {magic!r})")
    (w, h, maxval), start = _tokens(data, 3)
    if maxval != 255:
        raise ValueError(f"only maxval 255 is supported, got {maxval}")
    ch = 3 if magic == b"P6" else 1
    n = w * h * ch
    body = data[start : start + n]
    if len(body) < n:
        raise TruncatedStream("PNM pixel data ends early")
    a = np.frombuffer(body, dtype=np.uint8).reshape(h, w, ch)
    return a[..., 0].copy() if ch == 1 else a.copy()


def read_pnm(path):
    return parse_pnm(Path(path).read_bytes())


def format_pnm(pixels):
    a = np.asarray(pixels)
    if a.dtype != np.uint8:
        raise ValueError("PNM pixels must be uint8")
    if a.ndim == 2:
        magic = b"P5"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot store shape {a.shape} as PGM/PPM")
    h, w = a.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode() + np.ascontiguousarray(a).tobytes()


def write_pnm(path, pixels):
    Path(path).write_bytes(format_pnm(pixels))
