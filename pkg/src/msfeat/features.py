"""Dense image encoding and spatial pooling."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .base import default_stride
from .exceptions import ConfigError

__all__ = ["FeatureExtractor", "PoolingConfig", "encode_image", "pool"]


@dataclass(frozen=True)
class PoolingConfig:
    """Spatial pooling layout: a ``grid x grid`` partition of the code grid."""

    grid: int = 2
    reducer: str = "mean"

    def __post_init__(self):
        if self.grid not in (1, 2, 3):
            raise ConfigError("pooling grid must be 1, 2 or 3")
        if self.reducer not in ("mean", "max"):
            raise ConfigError(f"unknown reducer {self.reducer!r}")


def encode_image(model, img, p=None, stride=None):
    """Code every grid patch of ``img``.

    Parameters
    ----------
    model : fitted coder
        Any coder exposing ``grid_codes``.
    img : ndarray
    p : int, optional
        Expected patch side; checked against the model.
    stride : int, optional
        Defaults to ``p // 2``.

    Returns
    -------
    ndarray of shape (rows, cols, code_dim)
    """
    if p is not None and p != model.patch_size:
        raise ConfigError(
            f"geometry mismatch: model expects patch dimension {model.input_dim} "
            f"(side {model.patch_size}), requested side {p}"
        )
    return model.grid_codes(img, stride)


def pool(codes, cfg=None):
    """Pool a ``(rows, cols, K)`` code grid into one feature vector.

    Rows and columns are split into ``cfg.grid`` nearly equal bands; each cell
    is reduced per code dimension and cells are concatenated row-major.
    """
    cfg = PoolingConfig() if cfg is None else cfg
    codes = np.asarray(codes, dtype=np.float64)
    if codes.ndim != 3 or codes.shape[0] == 0 or codes.shape[1] == 0:
        raise ConfigError(f"expected a nonempty (rows, cols, K) code grid, got {codes.shape}")
    rows, cols = codes.shape[:2]
    if cfg.grid > rows or cfg.grid > cols:
        raise ConfigError(f"{cfg.grid}x{cfg.grid} pooling needs at least that many "
                          f"grid rows and columns, got {rows}x{cols}")
    reduce = np.mean if cfg.reducer == "mean" else np.max
    cells = []
    for band in np.array_split(codes, cfg.grid, axis=0):
        for cell in np.array_split(band, cfg.grid, axis=1):
            cells.append(reduce(cell, axis=(0, 1)))
    return np.concatenate(cells)


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Learn a patch coder on images, then encode and pool whole images.

    Parameters
    ----------
    coder : PatchCoderMixin
        Unfitted (or fitted, with ``refit=False``) coder.
    n_patches : int, default=10000
        Random training patches for the coder.
    stride : int or None
        Grid stride; defaults to half the patch side.
    grid : {1, 2, 3}, default=2
    reducer : {"mean", "max"}, default="mean"
    l2_normalize : bool, default=True
        Scale each feature vector to unit Euclidean norm.
    refit : bool, default=True
        Fit the coder in :meth:`fit`; set False to reuse a trained coder
        (representation transfer).
    random_state : int or None
        Seed for patch sampling.
    """

    def __init__(self, coder, n_patches=10000, stride=None, grid=2, reducer="mean",
                 l2_normalize=True, refit=True, random_state=None):
        self.coder = coder
        self.n_patches = n_patches
        self.stride = stride
        self.grid = grid
        self.reducer = reducer
        self.l2_normalize = l2_normalize
        self.refit = refit
        self.random_state = random_state

    def fit(self, images, y=None):
        if self.refit:
            self.coder.fit_images(images, self.n_patches, self.random_state)
        self.pooling_ = PoolingConfig(self.grid, self.reducer)
        return self

    def transform(self, images):
        check_is_fitted(self, "pooling_")
        stride = default_stride(self.coder.patch_size) if self.stride is None else self.stride
        shapes, blocks = [], []
        for img in images:
            shape, X = self.coder.image_vectors(img, stride)
            shapes.append(shape)
            blocks.append(X)
        # one encode call over all images keeps the per-call overhead low
        codes = self.coder.transform(np.vstack(blocks))
        out = []
        start = 0
        for shape in shapes:
            n = shape[0] * shape[1]
            grid = codes[start:start + n].reshape(*shape, -1)
            start += n
            out.append(pool(grid, self.pooling_))
        F = np.asarray(out)
        if self.l2_normalize:
            norms = np.linalg.norm(F, axis=1, keepdims=True)
            F = F / np.where(norms > 0, norms, 1.0)
        return F
