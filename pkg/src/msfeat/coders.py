"""Single-scale patch coders with a scikit-learn estimator interface.

All coders take preprocessed patch vectors in ``fit``/``transform``; use
:meth:`~msfeat.base.PatchCoderMixin.fit_images` to learn straight from
images.
"""

import numpy as np
from sklearn.utils.validation import check_is_fitted

from .base import PatchCoderMixin
from .dictionary import (AEParams, ae_encode, ae_learn, kmeans_encode,
                         kmeans_learn, sc_encode, sc_learn)
from .s3c import S3CParams, s3c_encode, s3c_learn

__all__ = ["AutoEncoderCoder", "KMeansCoder", "S3CCoder", "SparseCoder"]


class KMeansCoder(PatchCoderMixin):
    """K-means vector quantization with triangle (or hard) encoding.

    Parameters
    ----------
    n_components : int, default=64
        Number of centers.
    patch_size : int, default=8
    max_iter : int, default=100
    encoding : {"triangle", "hard"}, default="triangle"
    color : bool, default=False
        Code RGB patches instead of converting to gray.
    whiten : bool, default=False
        ZCA-whiten patches after standardization.
    random_state : int or None

    Attributes
    ----------
    components_ : ndarray of shape (D, n_components)
    wcss_history_ : list of float
    """

    model_kind = "km"
    _fitted_arrays = ("components_",)

    def __init__(self, n_components=64, patch_size=8, max_iter=100,
                 encoding="triangle", color=False, whiten=False, random_state=None):
        self.n_components = n_components
        self.patch_size = patch_size
        self.max_iter = max_iter
        self.encoding = encoding
        self.color = color
        self.whiten = whiten
        self.random_state = random_state

    def fit(self, X, y=None):
        X = self._check_dim(X)
        self.components_, self.wcss_history_ = kmeans_learn(
            X, self.n_components, self.max_iter, self.random_state, return_history=True
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        return kmeans_encode(self.components_, self._check_dim(X), self.encoding)


class SparseCoder(PatchCoderMixin):
    """L1 sparse coding with unit-ball constrained atoms.

    Parameters
    ----------
    n_components : int, default=64
    patch_size : int, default=8
    beta : float, default=1.0
        Weight of the L1 penalty in ``||v - W s||^2 + beta ||s||_1``.
    max_iter : int, default=50
        Outer alternating-minimization iterations.
    tol : float, default=1e-8
        KKT residual for encoding.
    """

    model_kind = "sc"
    _fitted_arrays = ("components_",)

    def __init__(self, n_components=64, patch_size=8, beta=1.0, max_iter=50,
                 tol=1e-8, color=False, whiten=False, random_state=None):
        self.n_components = n_components
        self.patch_size = patch_size
        self.beta = beta
        self.max_iter = max_iter
        self.tol = tol
        self.color = color
        self.whiten = whiten
        self.random_state = random_state

    def fit(self, X, y=None):
        X = self._check_dim(X)
        self.components_, self.objective_history_ = sc_learn(
            X, self.n_components, self.beta, self.max_iter, self.random_state,
            return_history=True,
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        return sc_encode(self.components_, self._check_dim(X), self.beta, tol=self.tol)


class AutoEncoderCoder(PatchCoderMixin):
    """Sigmoid autoencoder trained on squared reconstruction error.

    The decoder output lives in (0, 1), so standardized patches are further
    mapped affinely into ``[0.1, 0.9]`` per patch before training and
    encoding.

    Parameters
    ----------
    n_components : int, default=64
    patch_size : int, default=8
    learning_rate : float, default=0.5
    n_epochs : int, default=20
    batch_size : int, default=32
    """

    model_kind = "ae"
    _fitted_arrays = ("components_", "intercept_", "decoder_weights_", "decoder_intercept_")

    def __init__(self, n_components=64, patch_size=8, learning_rate=0.5, n_epochs=20,
                 batch_size=32, color=False, whiten=False, random_state=None):
        self.n_components = n_components
        self.patch_size = patch_size
        self.learning_rate = learning_rate
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.color = color
        self.whiten = whiten
        self.random_state = random_state

    def _preprocess(self, X):
        X = super()._preprocess(X)
        lo = X.min(axis=1, keepdims=True)
        span = X.max(axis=1, keepdims=True) - lo
        flat = span <= 0
        return np.where(flat, 0.5, 0.1 + 0.8 * (X - lo) / np.where(flat, 1.0, span))

    @property
    def params_(self):
        check_is_fitted(self, "components_")
        return AEParams(self.components_, self.intercept_,
                        self.decoder_weights_, self.decoder_intercept_)

    def fit(self, X, y=None):
        X = self._check_dim(X)
        params, self.loss_history_ = ae_learn(
            X, self.n_components, self.learning_rate, self.n_epochs,
            self.random_state, batch_size=self.batch_size, return_history=True,
        )
        self.components_ = params.W
        self.intercept_ = params.b
        self.decoder_weights_ = params.W_dec
        self.decoder_intercept_ = params.b_dec
        return self

    def transform(self, X):
        return ae_encode(self.params_, self._check_dim(X))


class S3CCoder(PatchCoderMixin):
    """Spike-and-slab sparse coding learned by minibatch variational EM.

    Parameters
    ----------
    n_components : int, default=64
        Number of hidden units (filters).
    patch_size : int, default=8
    n_epochs : int, default=20
    batch_size : int, default=1000
        Minibatch size; each minibatch gets one damped M-step.
    damping : float, default=0.1
        Step size towards each minibatch M-step solution.
    encoding : {"spike", "product"}, default="spike"
        Use the spike marginals ``hhat`` or ``hhat * shat`` as the code.
    max_sweeps : int, default=50
    tol : float, default=1e-4
        Mean-field convergence tolerance on the spike marginals.
    init : {"random", "data"}, default="data"
        Start the filters at random training patches or random directions.
    diagonal_beta : bool, default=False
        Learn one visible precision per dimension instead of a scalar.

    Attributes
    ----------
    components_ : ndarray of shape (D, n_components)
        Unit-norm filters.
    spike_bias_, slab_mean_, slab_precision_ : ndarray of shape (n_components,)
    visible_precision_ : ndarray of shape (1,) or (D,)
    free_energy_trace_ : list of float
        Mean free energy per epoch.
    """

    model_kind = "s3c"
    _fitted_arrays = ("components_", "spike_bias_", "slab_mean_",
                      "slab_precision_", "visible_precision_")

    def __init__(self, n_components=64, patch_size=8, n_epochs=20, batch_size=1000,
                 damping=0.1, encoding="spike", max_sweeps=50, tol=1e-4,
                 init="data", diagonal_beta=False, color=False, whiten=False,
                 random_state=None):
        self.n_components = n_components
        self.patch_size = patch_size
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.damping = damping
        self.encoding = encoding
        self.max_sweeps = max_sweeps
        self.tol = tol
        self.init = init
        self.diagonal_beta = diagonal_beta
        self.color = color
        self.whiten = whiten
        self.random_state = random_state

    @property
    def params_(self):
        check_is_fitted(self, "components_")
        return S3CParams(self.components_, self.spike_bias_, self.slab_mean_,
                         self.slab_precision_, self.visible_precision_)

    def _set_params(self, params):
        self.components_ = params.W
        self.spike_bias_ = params.b
        self.slab_mean_ = params.mu
        self.slab_precision_ = params.alpha
        self.visible_precision_ = params.beta

    def fit(self, X, y=None):
        X = self._check_dim(X)
        params, self.free_energy_trace_ = s3c_learn(
            X, self.n_components, self.n_epochs, self.random_state,
            batch_size=self.batch_size, damping=self.damping,
            max_sweeps=self.max_sweeps, tol=self.tol, init=self.init,
            diagonal_beta=self.diagonal_beta, return_trace=True,
        )
        self._set_params(params)
        return self

    def transform(self, X):
        return s3c_encode(self.params_, self._check_dim(X), self.encoding,
                          max_sweeps=self.max_sweeps, tol=self.tol)
