"""Image and patch primitives shared by every coder.

Images are plain ``float64`` arrays with intensities in ``[0, 1]``, shaped
``(height, width)`` for gray or ``(height, width, 3)`` for RGB. A patch is
the row-major flattening of a square sub-window, so a ``p x p`` RGB patch has
``3 * p**2`` entries ordered ``(row, col, channel)``.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import SizingError

__all__ = [
    "LUMA_WEIGHTS",
    "PatchGrid",
    "ZCAWhitener",
    "check_image",
    "extract_grid",
    "grid_shape",
    "normalize_patch",
    "normalize_patches",
    "sample_random_patches",
    "to_grayscale",
]

# ITU-R BT.601
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def check_image(img, *, name="image"):
    """Validate and convert an image to a float64 array.

    Parameters
    ----------
    img : array-like of shape (h, w) or (h, w, 3)
        Intensities in [0, 1].
    name : str
        Used in error messages.

    Returns
    -------
    img : ndarray of float64
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
        raise ValueError(
            f"{name}: expected shape (h, w) or (h, w, 3), got {arr.shape}"
        )
    if arr.size == 0:
        raise SizingError(f"{name}: empty image")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite intensities")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name}: intensities must lie in [0, 1]")
    return arr


def to_grayscale(img):
    """Convert an RGB image to gray with BT.601 luma weights.

    Gray input is returned unchanged.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    gray = img @ LUMA_WEIGHTS
    # the weights sum to 1 but rounding can overshoot by an ulp
    return np.clip(gray, 0.0, 1.0)


def _patch_at(img, y, x, p):
    return img[y:y + p, x:x + p].reshape(-1)


def sample_random_patches(images, p, n, seed=None, *, names=None):
    """Draw ``n`` patches of side ``p`` uniformly from a set of images.

    An image is chosen uniformly at random, then an origin uniformly among
    the valid positions inside it.

    Parameters
    ----------
    images : sequence of ndarray
    p : int
        Patch side.
    n : int
        Number of patches.
    seed : int, Generator or None
    names : sequence of str, optional
        Image identifiers used in sizing errors.

    Returns
    -------
    patches : ndarray of shape (n, D)
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(images) == 0:
        raise ValueError("no images to sample from")
    for k, img in enumerate(images):
        if min(img.shape[:2]) < p:
            label = names[k] if names is not None else f"image #{k}"
            raise SizingError(
                f"{label} has shape {img.shape[:2]}, smaller than patch side {p}"
            )
    rng = np.random.default_rng(seed)
    which = rng.integers(len(images), size=n)
    out = []
    for k in which:
        img = images[k]
        h, w = img.shape[:2]
        y = rng.integers(h - p + 1)
        x = rng.integers(w - p + 1)
        out.append(_patch_at(img, y, x, p))
    return np.asarray(out, dtype=np.float64)


@dataclass(frozen=True)
class PatchGrid:
    """Patches extracted on a regular grid.

    Attributes
    ----------
    origins : ndarray of shape (n, 2)
        ``(row, col)`` of each patch's top-left pixel, row-major order.
    shape : tuple of int
        ``(rows, cols)`` of the origin grid.
    side : int
    stride : int
    patches : ndarray of shape (n, D)
    """

    origins: np.ndarray
    shape: tuple
    side: int
    stride: int
    patches: np.ndarray


def grid_shape(h, w, p, stride):
    """Number of grid origins along each axis."""
    return ((h - p) // stride + 1, (w - p) // stride + 1)


def extract_grid(img, p, stride):
    """Extract every patch whose origin lies on a ``stride``-spaced grid.

    Returns
    -------
    PatchGrid
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    h, w = img.shape[:2]
    if p > min(h, w):
        raise SizingError(f"patch side {p} exceeds image shape {(h, w)}")
    rows, cols = grid_shape(h, w, p, stride)
    ys = np.arange(rows) * stride
    xs = np.arange(cols) * stride
    origins = np.array([(y, x) for y in ys for x in xs], dtype=np.int64)
    patches = np.array([_patch_at(img, y, x, p) for y, x in origins])
    return PatchGrid(origins, (rows, cols), p, stride, patches)


def normalize_patches(V, eps=1e-8):
    """Standardize each row to zero mean and unit (population) std.

    Rows whose std does not exceed ``eps`` map to zero.
    """
    V = np.asarray(V, dtype=np.float64)
    mean = V.mean(axis=-1, keepdims=True)
    centered = V - mean
    std = np.sqrt(np.mean(centered**2, axis=-1, keepdims=True))
    ok = std > eps
    return np.where(ok, centered / np.where(ok, std, 1.0), 0.0)


def normalize_patch(v, eps=1e-8):
    """Standardize a single patch vector; see :func:`normalize_patches`."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return normalize_patches(np.asarray(v, dtype=np.float64)[None, :], eps)[0]


class ZCAWhitener(TransformerMixin, BaseEstimator):
    """ZCA whitening of patch vectors.

    Parameters
    ----------
    regularization : float, default=0.1
        Added to the covariance eigenvalues before inversion.
    """

    def __init__(self, regularization=0.1):
        self.regularization = regularization

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        cov = np.cov(X - self.mean_, rowvar=False, bias=True)
        evals, evecs = np.linalg.eigh(np.atleast_2d(cov))
        scale = 1.0 / np.sqrt(np.maximum(evals, 0.0) + self.regularization)
        self.components_ = (evecs * scale) @ evecs.T
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        return (X - self.mean_) @ self.components_
