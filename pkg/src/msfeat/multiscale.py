"""Multi-scale spike-and-slab coders.

``StackedS3C`` (S4C) blurs the image with a series of Gaussians, codes each
blurred patch with its own spike-and-slab model and concatenates the codes.
``MultiScaleS3C`` (MS4C) stacks the same patch location across the levels of
a Gaussian pyramid into one joint vector and learns a single model over it,
so every filter spans all scales. It can additionally code the base-scale
RGB patch with a companion model and append that code.
"""

import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted

from .base import PatchCoderMixin, default_stride
from .core import check_image, grid_shape, normalize_patches, to_grayscale
from .exceptions import ConfigError, SizingError
from .s3c import S3CParams, s3c_encode, s3c_learn
from .scalespace import build_pyramid, gaussian_blur, level_centers, multiscale_patches

__all__ = [
    "MultiScaleS3C",
    "StackedS3C",
    "ms4c_encode",
    "ms4c_learn",
    "s4c_encode",
    "s4c_learn",
]

_PARAM_FIELDS = ("W", "b", "mu", "alpha", "beta")


def _seed(seed, offset):
    return None if seed is None else int(seed) + offset


def _pack(prefix, params):
    return {f"{prefix}_{k}": v for k, v in params.arrays().items()}


def _unpack(prefix, arrays):
    return S3CParams(*(arrays[f"{prefix}_{k}"] for k in _PARAM_FIELDS))


class _S3CHyperMixin:
    """Forward shared S3C hyper-parameters to the learning routines."""

    def _learn(self, X, seed):
        return s3c_learn(
            X, self.n_components, self.n_epochs, seed,
            batch_size=self.batch_size, damping=self.damping,
            max_sweeps=self.max_sweeps, tol=self.tol, init=self.init,
            diagonal_beta=self.diagonal_beta, return_trace=True,
        )

    def _encode(self, params, X):
        return s3c_encode(params, X, self.encoding, max_sweeps=self.max_sweeps, tol=self.tol)


class StackedS3C(_S3CHyperMixin, PatchCoderMixin):
    """Stacked spike-and-slab coding over Gaussian blur levels (S4C).

    Parameters
    ----------
    n_components : int, default=64
        Hidden units per scale; codes have ``len(sigmas) * n_components``
        entries.
    patch_size : int, default=8
    sigmas : tuple of float, default=(0.0, 1.0, 2.0)
        Blur widths, strictly increasing.
    tie_params : bool, default=False
        Share one model across all scales instead of one per scale.
    n_epochs, batch_size, damping, encoding, max_sweeps, tol, init, diagonal_beta
        As in :class:`~msfeat.coders.S3CCoder`.
    random_state : int or None
        Patch positions are drawn with this seed for every scale; scale ``j``
        is learned with seed ``random_state + j``.

    Attributes
    ----------
    scale_params_ : list of S3CParams
    components_ : ndarray of shape (D, n_scales * n_components)
        Per-scale filters side by side.
    """

    model_kind = "s4c"

    def __init__(self, n_components=64, patch_size=8, sigmas=(0.0, 1.0, 2.0),
                 tie_params=False, n_epochs=20, batch_size=1000, damping=0.1,
                 encoding="spike", max_sweeps=50, tol=1e-4, init="data",
                 diagonal_beta=False, random_state=None):
        self.n_components = n_components
        self.patch_size = patch_size
        self.sigmas = sigmas
        self.tie_params = tie_params
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.damping = damping
        self.encoding = encoding
        self.max_sweeps = max_sweeps
        self.tol = tol
        self.init = init
        self.diagonal_beta = diagonal_beta
        self.random_state = random_state

    @property
    def n_scales(self):
        return len(self.sigmas)

    @property
    def scale_dim(self):
        return self.patch_size**2

    @property
    def input_dim(self):
        return self.n_scales * self.scale_dim

    @property
    def code_dim(self):
        check_is_fitted(self, "scale_params_")
        return self.n_scales * self.n_components

    def _check_sigmas(self):
        s = np.asarray(self.sigmas, dtype=float)
        if s.size < 1 or np.any(s < 0) or np.any(np.diff(s) <= 0):
            raise ConfigError("sigmas must be nonnegative and strictly increasing")

    def _blocks(self, X):
        return np.split(X, self.n_scales, axis=1)

    def fit(self, X, y=None):
        self._check_sigmas()
        X = self._check_dim(X)
        blocks = self._blocks(X)
        if self.tie_params:
            params, trace = self._learn(np.vstack(blocks), self.random_state)
            self.scale_params_ = [params] * self.n_scales
            self.free_energy_traces_ = [trace]
        else:
            fitted = [self._learn(B, _seed(self.random_state, j)) for j, B in enumerate(blocks)]
            self.scale_params_ = [p for p, _ in fitted]
            self.free_energy_traces_ = [t for _, t in fitted]
        self._restore_components()
        return self

    def _restore_components(self):
        self.components_ = np.hstack([p.W for p in self.scale_params_])

    def transform(self, X):
        check_is_fitted(self, "scale_params_")
        X = self._check_dim(X)
        return np.hstack([self._encode(p, B)
                          for p, B in zip(self.scale_params_, self._blocks(X))])

    # -- images -------------------------------------------------------------

    def _blurred(self, img):
        gray = to_grayscale(check_image(img))
        return [gaussian_blur(gray, s) for s in self.sigmas]

    def sample_patches(self, images, n_patches, random_state=None):
        self._check_sigmas()
        seed = self.random_state if random_state is None else random_state
        stacks = [self._blurred(img) for img in images]
        p = self.patch_size
        for k, img in enumerate(stacks):
            if min(img[0].shape) < p:
                raise SizingError(f"image #{k} has shape {img[0].shape}, smaller than {p}")
        rng = np.random.default_rng(seed)
        which = rng.integers(len(stacks), size=n_patches)
        rows = []
        for k in which:
            h, w = stacks[k][0].shape
            y, x = rng.integers(h - p + 1), rng.integers(w - p + 1)
            rows.append(np.concatenate([b[y:y + p, x:x + p].reshape(-1) for b in stacks[k]]))
        return self._preprocess(np.asarray(rows))

    def _preprocess(self, X):
        return np.hstack([normalize_patches(B) for B in self._blocks(X)])

    def image_vectors(self, img, stride=None):
        p = self.patch_size
        stride = default_stride(p) if stride is None else stride
        blurred = self._blurred(img)
        h, w = blurred[0].shape
        if p > min(h, w):
            raise SizingError(f"patch side {p} exceeds image shape {(h, w)}")
        shape = grid_shape(h, w, p, stride)
        origins = [(y * stride, x * stride) for y in range(shape[0]) for x in range(shape[1])]
        X = np.array([np.concatenate([b[y:y + p, x:x + p].reshape(-1) for b in blurred])
                      for y, x in origins])
        return shape, self._preprocess(X)

    def encode_at(self, img, center):
        """Code of the patch centred at ``center`` (origin ``center - p // 2``)."""
        p = self.patch_size
        y, x = (int(c) - p // 2 for c in center)
        blurred = self._blurred(img)
        h, w = blurred[0].shape
        if y < 0 or x < 0 or y + p > h or x + p > w:
            raise SizingError(f"patch of side {p} at center {tuple(center)} leaves the image")
        v = np.concatenate([b[y:y + p, x:x + p].reshape(-1) for b in blurred])
        return self.transform(self._preprocess(v[None, :]))[0]

    # -- serialization ------------------------------------------------------

    def _get_state(self):
        arrays = {}
        for j, p in enumerate(self.scale_params_):
            arrays.update(_pack(f"scale{j}", p))
        params = self.get_params(deep=False)
        params["sigmas"] = [float(s) for s in params["sigmas"]]
        return params, arrays

    @classmethod
    def _from_state(cls, params, arrays):
        params = dict(params, sigmas=tuple(params["sigmas"]))
        model = cls(**params)
        model.scale_params_ = [_unpack(f"scale{j}", arrays) for j in range(model.n_scales)]
        model._restore_components()
        return model

    def geometry(self):
        return {"D": self.scale_dim, "N": self.n_components, "p": self.patch_size,
                "M": self.n_scales, "color": False}


class MultiScaleS3C(_S3CHyperMixin, PatchCoderMixin):
    """Joint multi-scale spike-and-slab coding on a Gaussian pyramid (MS4C).

    Parameters
    ----------
    n_components : int, default=64
    patch_size : int, default=8
    levels : int, default=3
        Pyramid levels ``M``; the joint visible dimension is ``M * p**2``.
    color : bool, default=False
        Also learn a companion model on base-scale RGB patches
        (``3 * p**2``) and append its code, giving ``2 * n_components``.
    n_epochs, batch_size, damping, encoding, max_sweeps, tol, init, diagonal_beta
        As in :class:`~msfeat.coders.S3CCoder`.
    random_state : int or None

    Attributes
    ----------
    joint_params_ : S3CParams
    color_params_ : S3CParams or None
    components_ : ndarray of shape (levels * p**2, n_components)
        Joint filters; level ``k`` occupies rows ``k*p**2:(k+1)*p**2``.
    """

    model_kind = "ms4c"

    def __init__(self, n_components=64, patch_size=8, levels=3, color=False,
                 n_epochs=20, batch_size=1000, damping=0.1, encoding="spike",
                 max_sweeps=50, tol=1e-4, init="data", diagonal_beta=False,
                 random_state=None):
        self.n_components = n_components
        self.patch_size = patch_size
        self.levels = levels
        self.color = color
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.damping = damping
        self.encoding = encoding
        self.max_sweeps = max_sweeps
        self.tol = tol
        self.init = init
        self.diagonal_beta = diagonal_beta
        self.random_state = random_state

    @property
    def joint_dim(self):
        return self.levels * self.patch_size**2

    @property
    def color_dim(self):
        return 3 * self.patch_size**2

    @property
    def input_dim(self):
        return self.joint_dim + (self.color_dim if self.color else 0)

    @property
    def code_dim(self):
        check_is_fitted(self, "joint_params_")
        return self.n_components * (2 if self.color_params_ is not None else 1)

    def _split(self, X):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] == self.joint_dim:
            return X, None
        if X.shape[1] == self.joint_dim + self.color_dim:
            return X[:, :self.joint_dim], X[:, self.joint_dim:]
        raise ConfigError(
            f"MultiScaleS3C expects dimension {self.joint_dim} or "
            f"{self.joint_dim + self.color_dim} (levels={self.levels}, "
            f"side {self.patch_size}), got {X.shape[1]}"
        )

    def fit(self, X, y=None):
        """Fit on joint vectors, optionally followed by base RGB patches."""
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        joint, rgb = self._split(X)
        if self.color and rgb is None:
            raise ConfigError("color=True needs base-scale RGB columns to fit the companion")
        params, trace = self._learn(joint, self.random_state)
        self.joint_params_ = params
        self.free_energy_trace_ = trace
        self.color_params_ = None
        if rgb is not None and self.color:
            self.color_params_, self.color_free_energy_trace_ = self._learn(
                rgb, _seed(self.random_state, 1))
        self.components_ = self.joint_params_.W
        return self

    fit_vectors = fit

    def transform(self, X):
        check_is_fitted(self, "joint_params_")
        joint, rgb = self._split(X)
        codes = self._encode(self.joint_params_, joint)
        if rgb is None:
            return codes
        if self.color_params_ is None:
            raise ConfigError("color code requested but no color companion was trained")
        return np.hstack([codes, self._encode(self.color_params_, rgb)])

    # -- images -------------------------------------------------------------

    def _pyramid(self, img):
        return build_pyramid(to_grayscale(img), self.levels, min_side=self.patch_size)

    def _valid_centers(self, shape):
        """Level-0 center coordinates whose patch fits every level, per axis."""
        p = self.patch_size
        out = []
        for axis in range(2):
            c = np.arange(shape[axis])
            ok = np.ones(c.size, dtype=bool)
            side = shape[axis]
            for k in range(self.levels):
                o = level_centers(c, k) - p // 2
                ok &= (o >= 0) & (o <= side - p)
                side = -(-side // 2)
            out.append(c[ok])
        return out

    @staticmethod
    def _rgb(img):
        return img if img.ndim == 3 else np.repeat(img[:, :, None], 3, axis=2)

    def _rgb_patches(self, img, origins):
        p = self.patch_size
        rgb = self._rgb(img)
        return normalize_patches(np.array([rgb[y:y + p, x:x + p].reshape(-1)
                                           for y, x in origins]))

    def sample_patches(self, images, n_patches, random_state=None):
        seed = self.random_state if random_state is None else random_state
        imgs = [check_image(img) for img in images]
        pyrs = [self._pyramid(img) for img in imgs]
        valid = [self._valid_centers(img.shape[:2]) for img in imgs]
        for k, (ys, xs) in enumerate(valid):
            if ys.size == 0 or xs.size == 0:
                raise SizingError(
                    f"image #{k} ({imgs[k].shape[:2]}) has no location where a side-"
                    f"{self.patch_size} patch fits all {self.levels} pyramid levels"
                )
        rng = np.random.default_rng(seed)
        which = rng.integers(len(imgs), size=n_patches)
        centers = np.array([(rng.choice(valid[k][0]), rng.choice(valid[k][1])) for k in which])
        joint = np.empty((n_patches, self.joint_dim))
        rgb = np.empty((n_patches, self.color_dim)) if self.color else None
        for k in np.unique(which):
            sel = which == k
            joint[sel] = multiscale_patches(pyrs[k], centers[sel], self.patch_size)
            if self.color:
                rgb[sel] = self._rgb_patches(imgs[k], centers[sel] - self.patch_size // 2)
        return joint if rgb is None else np.hstack([joint, rgb])

    def _vectors_at(self, img, centers, with_color, clip):
        joint = multiscale_patches(self._pyramid(img), centers, self.patch_size, clip=clip)
        if not with_color:
            return joint
        origins = np.asarray(centers) - self.patch_size // 2
        return np.hstack([joint, self._rgb_patches(img, origins)])

    def _resolve_color(self, with_color):
        if with_color is None:
            with_color = self.color_params_ is not None
        if with_color and self.color_params_ is None:
            raise ConfigError("with_color requested but no color companion was trained")
        return with_color

    def image_vectors(self, img, stride=None, with_color=None):
        check_is_fitted(self, "joint_params_")
        with_color = self._resolve_color(with_color)
        img = check_image(img)
        p = self.patch_size
        stride = default_stride(p) if stride is None else stride
        h, w = img.shape[:2]
        if p > min(h, w):
            raise SizingError(f"patch side {p} exceeds image shape {(h, w)}")
        shape = grid_shape(h, w, p, stride)
        centers = np.array([(y * stride + p // 2, x * stride + p // 2)
                            for y in range(shape[0]) for x in range(shape[1])])
        return shape, self._vectors_at(img, centers, with_color, clip=True)

    def grid_codes(self, img, stride=None, with_color=None):
        shape, X = self.image_vectors(img, stride, with_color)
        return self.transform(X).reshape(*shape, -1)

    def encode_at(self, img, center, with_color=None):
        """Code of the multi-scale patch centred at ``center``."""
        check_is_fitted(self, "joint_params_")
        with_color = self._resolve_color(with_color)
        X = self._vectors_at(check_image(img), [center], with_color, clip=False)
        return self.transform(X)[0]

    # -- serialization ------------------------------------------------------

    def _get_state(self):
        arrays = _pack("joint", self.joint_params_)
        if self.color_params_ is not None:
            arrays.update(_pack("color", self.color_params_))
        return self.get_params(deep=False), arrays

    @classmethod
    def _from_state(cls, params, arrays):
        model = cls(**params)
        model.joint_params_ = _unpack("joint", arrays)
        model.color_params_ = _unpack("color", arrays) if "color_W" in arrays else None
        model.components_ = model.joint_params_.W
        return model

    def geometry(self):
        return {"D": self.joint_dim, "N": self.n_components, "p": self.patch_size,
                "M": self.levels, "color": self.color}


# ---------------------------------------------------------------------------
# functional forms


def s4c_learn(images, p, N, sigmas=(0.0, 1.0, 2.0), epochs=10, seed=None,
              n_patches=10000, **kwargs):
    """Learn a :class:`StackedS3C` from images."""
    model = StackedS3C(N, p, tuple(sigmas), n_epochs=epochs, random_state=seed, **kwargs)
    return model.fit_images(images, n_patches)


def s4c_encode(model, img, center, p=None):
    if p is not None and p != model.patch_size:
        raise ConfigError(f"model patch side is {model.patch_size}, got {p}")
    return model.encode_at(img, center)


def ms4c_learn(images, p, N, levels=3, epochs=10, seed=None, n_patches=10000,
               color=False, **kwargs):
    """Learn a :class:`MultiScaleS3C` from images."""
    model = MultiScaleS3C(N, p, levels, color, n_epochs=epochs, random_state=seed, **kwargs)
    return model.fit_images(images, n_patches)


def ms4c_encode(model, img, center, p=None, with_color=False):
    if p is not None and p != model.patch_size:
        raise ConfigError(f"model patch side is {model.patch_size}, got {p}")
    return model.encode_at(img, center, with_color=with_color)
