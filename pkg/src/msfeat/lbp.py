"""Local binary pattern histograms (plain, uniform, rotation invariant)."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import check_image, to_grayscale
from .exceptions import ConfigError, SizingError

__all__ = [
    "LBPConfig",
    "LBPTransformer",
    "MLBP_RINGS",
    "lbp_code",
    "lbp_histogram",
    "n_bins",
    "ring_codes",
]

VARIANTS = ("plain", "uniform", "ri", "ri-uniform")
MLBP_RINGS = ((1, 8), (2, 16), (3, 24))
# neighbors within this distance of the center count as ties (bit 1), which
# absorbs rounding in the bilinear interpolation
TIE_TOL = 1e-12
_MAX_TABLE_P = 16


@lru_cache(maxsize=None)
def _ri_table(P):
    codes = np.arange(2**P, dtype=np.int64)
    mask = 2**P - 1
    best = codes.copy()
    rot = codes.copy()
    for _ in range(P - 1):
        rot = ((rot >> 1) | ((rot & 1) << (P - 1))) & mask
        best = np.minimum(best, rot)
    _, index = np.unique(best, return_inverse=True)
    return index


def n_bins(variant, P):
    """Histogram length for one ring of ``P`` samples."""
    if variant == "plain":
        return 2**P
    if variant == "uniform":
        return P * (P - 1) + 3
    if variant == "ri":
        return int(_ri_table(P).max()) + 1
    if variant == "ri-uniform":
        return P + 2
    raise ConfigError(f"unknown LBP variant {variant!r}")


@dataclass(frozen=True)
class LBPConfig:
    """LBP variant and its rings of ``(radius, samples)``.

    Several rings give a multi-scale LBP (MLBP) whose per-ring histograms are
    concatenated.
    """

    variant: str = "uniform"
    rings: tuple = ((1, 8),)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown LBP variant {self.variant!r}")
        for R, P in self.rings:
            if R < 1:
                raise ConfigError("LBP radii must be >= 1")
            if P < 4:
                raise ConfigError("LBP needs at least 4 samples per ring")
            if self.variant in ("plain", "ri") and P > _MAX_TABLE_P:
                raise ConfigError(
                    f"{self.variant} LBP with {P} samples has too many bins; "
                    "use the uniform or ri-uniform variant"
                )

    @property
    def bins(self):
        return [n_bins(self.variant, P) for _, P in self.rings]


def lbp_code(neighbors, center):
    """``sum_k 2**k [n_k >= center]``."""
    neighbors = np.asarray(neighbors)
    return int(np.sum((neighbors >= center).astype(np.int64) << np.arange(neighbors.size)))


def _ring_offsets(R, P):
    theta = 2 * np.pi * np.arange(P) / P
    dy = np.round(-R * np.sin(theta), 12)
    dx = np.round(R * np.cos(theta), 12)
    return dy, dx


def _sample(img, m, off_y, off_x):
    """Bilinear samples at integer centers ``[m, h-m) x [m, w-m)`` plus an offset."""
    h, w = img.shape
    y0 = int(np.floor(off_y))
    x0 = int(np.floor(off_x))
    fy = off_y - y0
    fx = off_x - x0
    rows = slice(m + y0, h - m + y0)
    cols = slice(m + x0, w - m + x0)
    out = (1 - fy) * (1 - fx) * img[rows, cols]
    if fx > 0:
        out = out + (1 - fy) * fx * img[rows, m + x0 + 1:w - m + x0 + 1]
    if fy > 0:
        rows1 = slice(m + y0 + 1, h - m + y0 + 1)
        out = out + fy * (1 - fx) * img[rows1, cols]
        if fx > 0:
            out = out + fy * fx * img[rows1, m + x0 + 1:w - m + x0 + 1]
    return out


def ring_bits(img, R, P):
    """Thresholded neighbor bits, shape ``(h - 2m, w - 2m, P)`` with ``m = ceil(R)``."""
    img = np.asarray(img, dtype=np.float64)
    m = int(np.ceil(R))
    h, w = img.shape
    if h <= 2 * m or w <= 2 * m:
        raise SizingError(f"radius {R} leaves no interior pixels in a {h}x{w} image")
    center = img[m:h - m, m:w - m]
    dy, dx = _ring_offsets(R, P)
    return np.stack([_sample(img, m, y, x) >= center - TIE_TOL for y, x in zip(dy, dx)],
                    axis=-1).astype(np.int64)


def _map_codes(bits, variant):
    P = bits.shape[-1]
    weights = np.int64(1) << np.arange(P, dtype=np.int64)
    if variant == "plain":
        return bits @ weights
    if variant == "ri":
        return _ri_table(P)[bits @ weights]
    ones = bits.sum(axis=-1)
    transitions = np.sum(bits != np.roll(bits, 1, axis=-1), axis=-1)
    uniform = transitions <= 2
    if variant == "ri-uniform":
        return np.where(uniform, ones, P + 1)
    # uniform: index by (count of ones, start of the run of ones)
    starts = (bits == 1) & (np.roll(bits, 1, axis=-1) == 0)
    start = np.argmax(starts, axis=-1)
    idx = np.where(ones == 0, 0, np.where(ones == P, 1, 2 + (ones - 1) * P + start))
    return np.where(uniform, idx, P * (P - 1) + 2)


def ring_codes(img, R, P, variant="plain"):
    """Mapped LBP code of every interior pixel for one ring."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown LBP variant {variant!r}")
    return _map_codes(ring_bits(img, R, P), variant)


def lbp_histogram(img, cfg=None):
    """Normalized LBP histogram(s) of an image.

    Color images are converted to gray first. Each ring contributes one
    histogram summing to one.
    """
    cfg = LBPConfig() if cfg is None else cfg
    gray = to_grayscale(check_image(img))
    hists = []
    for (R, P), nb in zip(cfg.rings, cfg.bins):
        codes = ring_codes(gray, R, P, cfg.variant).ravel()
        hist = np.bincount(codes, minlength=nb).astype(np.float64)
        hists.append(hist / hist.sum())
    return np.concatenate(hists)


class LBPTransformer(TransformerMixin, BaseEstimator):
    """LBP histogram features for a list of images.

    Parameters
    ----------
    variant : {"plain", "uniform", "ri", "ri-uniform"}, default="uniform"
    rings : tuple of (radius, samples), default=((1, 8),)
        Use :data:`MLBP_RINGS` for multi-scale LBP.
    """

    def __init__(self, variant="uniform", rings=((1, 8),)):
        self.variant = variant
        self.rings = rings

    def fit(self, images=None, y=None):
        self.config_ = LBPConfig(self.variant, tuple(tuple(r) for r in self.rings))
        return self

    def transform(self, images):
        cfg = LBPConfig(self.variant, tuple(tuple(r) for r in self.rings))
        return np.array([lbp_histogram(img, cfg) for img in images])
