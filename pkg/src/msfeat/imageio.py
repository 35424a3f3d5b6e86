"""Image files: binary PGM/PPM natively, PNG/JPEG through Pillow if installed.

Images are float arrays in ``[0, 1]``, shape ``(h, w)`` or ``(h, w, 3)``.
"""

import re
from pathlib import Path

import numpy as np

from .core import check_image
from .exceptions import LayoutError

__all__ = ["read_image", "read_pnm", "write_image", "write_pnm", "IMAGE_SUFFIXES"]

IMAGE_SUFFIXES = (".pgm", ".ppm", ".png", ".jpg", ".jpeg")
_HEADER = re.compile(rb"(P[56])(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)"
                     rb"(?:\s|#[^\n]*\n)+(\d+)\s")


def read_pnm(path, raw=False):
    """Read a binary PGM (P5) or PPM (P6) file.

    Parameters
    ----------
    path : path-like
    raw : bool, default=False
        Return the stored integers and ``maxval`` instead of floats in [0, 1].
    """
    data = Path(path).read_bytes()
    m = _HEADER.match(data)
    if m is None:
        raise LayoutError(f"{path}: not a binary PGM/PPM file")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if not 0 < maxval <= 65535:
        raise LayoutError(f"{path}: maxval {maxval} out of range")
    channels = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = w * h * channels
    body = data[m.end():m.end() + count * dtype.itemsize]
    if len(body) < count * dtype.itemsize:
        raise LayoutError(f"{path}: truncated pixel data")
    arr = np.frombuffer(body, dtype=dtype).reshape((h, w) if channels == 1 else (h, w, 3))
    if raw:
        return arr.astype(np.int64), maxval
    return arr.astype(np.float64) / maxval


def write_pnm(path, img, maxval=255):
    """Write a float image in [0, 1] (or an integer array with ``maxval``)."""
    img = np.asarray(img)
    if not 0 < maxval <= 65535:
        raise LayoutError(f"maxval {maxval} out of range")
    if np.issubdtype(img.dtype, np.integer):
        q = img.astype(np.int64)
        if q.min() < 0 or q.max() > maxval:
            raise LayoutError("integer pixels exceed maxval")
    else:
        q = np.rint(np.clip(check_image(img), 0.0, 1.0) * maxval).astype(np.int64)
    if q.ndim == 2:
        magic = b"P5"
    elif q.ndim == 3 and q.shape[2] == 3:
        magic = b"P6"
    else:
        raise LayoutError(f"cannot store an image of shape {q.shape} as PGM/PPM")
    h, w = q.shape[:2]
    dtype = ">u2" if maxval > 255 else "u1"
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    Path(path).write_bytes(header + q.astype(dtype).tobytes())


def _pil():
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise LayoutError("reading PNG/JPEG needs Pillow (pip install msfeat[png])") from exc
    return Image


def read_image(path):
    """Read any supported image as floats in [0, 1]."""
    suffix = Path(path).suffix.lower()
    if suffix in (".pgm", ".ppm", ".pnm"):
        return read_pnm(path)
    if suffix not in IMAGE_SUFFIXES:
        raise LayoutError(f"{path}: unsupported image type")
    Image = _pil()
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        else:
            im = im.convert("L" if im.mode in ("L", "1") else "RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr


def write_image(path, img):
    suffix = Path(path).suffix.lower()
    if suffix in (".pgm", ".ppm", ".pnm"):
        return write_pnm(path, img)
    Image = _pil()
    q = np.rint(np.clip(check_image(img), 0, 1) * 255).astype(np.uint8)
    Image.fromarray(q).save(path)
