"""Shared estimator plumbing for patch coders."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import (ZCAWhitener, check_image, extract_grid, normalize_patches,
                   sample_random_patches, to_grayscale)
from .exceptions import ConfigError

__all__ = ["PatchCoderMixin", "default_stride"]


def default_stride(p):
    return max(1, p // 2)


class PatchCoderMixin(TransformerMixin, BaseEstimator):
    """Base class for coders that map image patches to codes.

    Subclasses implement ``fit(X)`` and ``transform(X)`` on preprocessed
    patch vectors and set ``components_`` (atoms as columns). This mixin adds
    the image-level entry points used by the feature pipeline:
    :meth:`fit_images` samples random patches and fits, and
    :meth:`image_vectors` returns the preprocessed grid patches of one image.

    Subclasses set ``model_kind``, and list fitted array attributes in
    ``_fitted_arrays`` so models can be serialized.
    """

    model_kind = None
    _fitted_arrays = ()

    # -- geometry -----------------------------------------------------------

    @property
    def n_channels(self):
        return 3 if getattr(self, "color", False) else 1

    @property
    def input_dim(self):
        return self.patch_size**2 * self.n_channels

    @property
    def code_dim(self):
        check_is_fitted(self, "components_")
        return self.components_.shape[1]

    def _prepare_image(self, img):
        img = check_image(img)
        if self.n_channels == 1:
            return to_grayscale(img)
        if img.ndim != 3:
            raise ConfigError("color coder needs RGB images")
        return img

    def _preprocess(self, X):
        X = normalize_patches(X)
        if getattr(self, "whiten", False):
            X = self.whitener_.transform(X)
        return X

    def _check_dim(self, X):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.input_dim:
            raise ConfigError(
                f"{type(self).__name__} expects patch dimension {self.input_dim} "
                f"(side {self.patch_size}), got {X.shape[1]}"
            )
        return X

    # -- image entry points -------------------------------------------------

    def sample_patches(self, images, n_patches, random_state=None):
        """Random preprocessed training patches from ``images``."""
        seed = self.random_state if random_state is None else random_state
        imgs = [self._prepare_image(img) for img in images]
        X = sample_random_patches(imgs, self.patch_size, n_patches, seed)
        if getattr(self, "whiten", False):
            self.whitener_ = ZCAWhitener().fit(normalize_patches(X))
        return self._preprocess(X)

    def fit_images(self, images, n_patches=10000, random_state=None):
        """Fit on ``n_patches`` random patches drawn from ``images``."""
        return self.fit(self.sample_patches(images, n_patches, random_state))

    def image_vectors(self, img, stride=None):
        """Preprocessed grid patches of one image.

        Returns
        -------
        grid_shape : tuple of int
        X : ndarray of shape (rows * cols, input_dim)
        """
        stride = default_stride(self.patch_size) if stride is None else stride
        grid = extract_grid(self._prepare_image(img), self.patch_size, stride)
        return grid.shape, self._preprocess(grid.patches)

    def grid_codes(self, img, stride=None):
        """Codes of every grid patch, shaped ``(rows, cols, code_dim)``."""
        shape, X = self.image_vectors(img, stride)
        return self.transform(X).reshape(*shape, -1)

    # -- serialization hooks ------------------------------------------------

    def _get_state(self):
        arrays = {name: getattr(self, name) for name in self._fitted_arrays}
        if getattr(self, "whiten", False):
            arrays["whitener_mean"] = self.whitener_.mean_
            arrays["whitener_components"] = self.whitener_.components_
        return self.get_params(deep=False), arrays

    @classmethod
    def _from_state(cls, params, arrays):
        model = cls(**params)
        for name in cls._fitted_arrays:
            setattr(model, name, arrays[name])
        if params.get("whiten"):
            model.whitener_ = ZCAWhitener()
            model.whitener_.mean_ = arrays["whitener_mean"]
            model.whitener_.components_ = arrays["whitener_components"]
        model._restore()
        return model

    def _restore(self):
        """Rebuild derived attributes after loading fitted arrays."""

    def geometry(self):
        return {"D": self.input_dim, "N": self.code_dim, "p": self.patch_size,
                "M": 1, "color": bool(getattr(self, "color", False))}
