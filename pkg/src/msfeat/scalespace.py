"""Gaussian blurring, pyramids and multi-scale patch assembly."""

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .core import normalize_patches
from .exceptions import ConfigError, SizingError

__all__ = [
    "MultiScalePatch",
    "ScaleConfig",
    "build_pyramid",
    "gaussian_blur",
    "gaussian_kernel",
    "level_centers",
    "multiscale_patch",
    "multiscale_patches",
]


@dataclass(frozen=True)
class ScaleConfig:
    """Scale configuration for the multi-scale coders.

    ``mode="blur-stack"`` uses ``sigmas`` (S4C); ``mode="pyramid"`` uses
    ``levels`` with a downsampling factor of 2 (MS4C).
    """

    mode: str = "pyramid"
    sigmas: tuple = (0.0, 1.0, 2.0)
    levels: int = 3

    def __post_init__(self):
        if self.mode not in ("blur-stack", "pyramid"):
            raise ConfigError(f"unknown scale mode {self.mode!r}")
        s = np.asarray(self.sigmas, dtype=float)
        if s.size == 0 or np.any(s < 0) or np.any(np.diff(s) <= 0):
            raise ConfigError("sigmas must be nonnegative and strictly increasing")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")

    @property
    def n_scales(self):
        return len(self.sigmas) if self.mode == "blur-stack" else self.levels


def gaussian_kernel(sigma):
    """Sampled Gaussian truncated at ``ceil(3 sigma)`` and summing to one."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return np.ones(1)
    radius = int(np.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, sigma):
    """Separable Gaussian blur with reflect padding; ``sigma=0`` is identity."""
    img = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return img.copy()
    k = gaussian_kernel(sigma)
    out = correlate1d(img, k, axis=0, mode="reflect")
    return correlate1d(out, k, axis=1, mode="reflect")


def build_pyramid(img, levels, min_side=1):
    """Gaussian pyramid: blur with sigma=1 then keep every second pixel.

    Parameters
    ----------
    img : ndarray
    levels : int
        Number of levels including the input.
    min_side : int, default=1
        Smallest admissible side at the coarsest level (typically the patch
        side that will be extracted from it).

    Returns
    -------
    list of ndarray
        Level ``k`` has sides ``ceil(side / 2**k)``.
    """
    if levels < 1:
        raise ConfigError("levels must be >= 1")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    coarse = min(-(-h // 2 ** (levels - 1)), -(-w // 2 ** (levels - 1)))
    if coarse < min_side:
        raise SizingError(
            f"{levels} levels shrink a {h}x{w} image to side {coarse} "
            f"< required {min_side}"
        )
    pyr = [img]
    for _ in range(levels - 1):
        pyr.append(gaussian_blur(pyr[-1], 1.0)[::2, ::2])
    return pyr


def level_centers(centers, level):
    """Map level-0 centers to a pyramid level, rounding half up."""
    c = np.asarray(centers, dtype=np.float64)
    return np.floor(c / 2**level + 0.5).astype(np.int64)


@dataclass
class MultiScalePatch:
    """A patch of side ``p`` taken at the same location in every level."""

    levels: list = field(default_factory=list)

    @property
    def joint(self):
        return np.concatenate(self.levels)


def multiscale_patches(pyr, centers, p, *, clip=False, eps=1e-8):
    """Joint multi-scale vectors for many centers at once.

    Each level's sub-patch is centred on the geometrically corresponding
    location (``center / 2**k``, rounded) and standardized on its own; the
    levels are concatenated in order 0..M-1.

    Parameters
    ----------
    pyr : list of ndarray
    centers : array-like of shape (n, 2)
        ``(row, col)`` centers in level-0 coordinates. The patch origin is
        ``center - p // 2``.
    p : int
    clip : bool, default=False
        Shift out-of-bounds sub-patches back inside their level instead of
        raising :class:`SizingError`.

    Returns
    -------
    ndarray of shape (n, M * D)
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=np.int64))
    blocks = []
    for k, level in enumerate(pyr):
        h, w = level.shape[:2]
        if p > min(h, w):
            raise SizingError(f"patch side {p} exceeds pyramid level {k} ({h}x{w})")
        origin = level_centers(centers, k) - p // 2
        lim = np.array([h - p, w - p])
        if clip:
            origin = np.clip(origin, 0, lim)
        else:
            bad = np.any((origin < 0) | (origin > lim), axis=1)
            if np.any(bad):
                c = centers[np.argmax(bad)]
                raise SizingError(
                    f"patch of side {p} at center {tuple(c)} falls outside "
                    f"pyramid level {k} ({h}x{w})"
                )
        raw = np.array([level[y:y + p, x:x + p].reshape(-1) for y, x in origin])
        blocks.append(normalize_patches(raw, eps))
    return np.concatenate(blocks, axis=1)


def multiscale_patch(pyr, center, p, *, clip=False, eps=1e-8):
    """Single-center version of :func:`multiscale_patches`."""
    joint = multiscale_patches(pyr, [center], p, clip=clip, eps=eps)[0]
    return MultiScalePatch(np.split(joint, len(pyr)))
