"""Spike-and-slab sparse coding.

Generative model, for hidden units ``i`` and visible dimensions ``d``::

    h_i ~ Bernoulli(sigmoid(b_i))
    s_i | h_i ~ N(h_i * mu_i, 1 / alpha_i)
    v_d | h, s ~ N(W[d, :] @ (h * s), 1 / beta_d)

Inference uses a fully factorial variational distribution
``Q(h, s) = prod_i Q(h_i) Q(s_i | h_i)`` with ``Q(h_i = 1) = hhat_i``,
``Q(s_i | h_i = 1) = N(shat_i, tau_i)`` and ``Q(s_i | h_i = 0)`` pinned to the
prior ``N(0, 1 / alpha_i)``. With that pinning the ``h_i = 0`` slab branch
cancels from the free energy, leaving per sample::

    F = sum_i [ hhat log hhat + (1 - hhat) log(1 - hhat)
                - hhat b + softplus(b) ]
      + sum_i hhat [ -log(alpha tau) / 2 - 1/2 + alpha ((shat - mu)^2 + tau) / 2 ]
      + sum_d beta_d (v_d - W[d] @ m)^2 / 2 + sum_i c_i Var(z_i) / 2
      - sum_d log(beta_d) / 2 + D log(2 pi) / 2

where ``m = hhat * shat``, ``Var(z_i) = hhat (shat^2 + tau) - m_i^2`` and
``c_i = sum_d beta_d W[d, i]^2``. ``F >= -log p(v)`` with equality when Q is
the exact posterior.

Minimizing ``F`` over unit ``i`` with every other unit held fixed has the
closed form (``u_i = W[:, i] @ diag(beta) @ (v - sum_{j != i} W[:, j] m_j)``)::

    tau_i  = 1 / (alpha_i + c_i)
    shat_i = (alpha_i mu_i + u_i) tau_i
    hhat_i = sigmoid(b_i + (alpha_i mu_i + u_i)^2 tau_i / 2
                     - alpha_i mu_i^2 / 2 + log(alpha_i tau_i) / 2)

so a sequential sweep over units is exact coordinate descent and never
increases ``F``.
"""

import itertools
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit, logsumexp, xlogy
from scipy.stats import multivariate_normal

from .exceptions import CapacityError, ConfigError, NumericalError

logger = logging.getLogger(__name__)

__all__ = [
    "PosteriorExact",
    "S3CParams",
    "VariationalState",
    "e_step",
    "exact_posterior",
    "free_energy",
    "m_step",
    "s3c_encode",
    "s3c_init",
    "s3c_learn",
    "s3c_sample",
]

_LOG_2PI = np.log(2 * np.pi)
MAX_EXACT_UNITS = 12


@dataclass
class S3CParams:
    """Parameters of a spike-and-slab sparse coding model.

    ``beta`` has shape ``(1,)`` for a shared scalar precision or ``(D,)`` for
    a diagonal one.
    """

    W: np.ndarray
    b: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def n_visible(self):
        return self.W.shape[0]

    @property
    def n_hidden(self):
        return self.W.shape[1]

    @property
    def scalar_beta(self):
        return self.beta.shape == (1,)

    def beta_vec(self):
        return np.broadcast_to(self.beta, (self.n_visible,))

    def copy(self):
        return S3CParams(*(a.copy() for a in self.arrays().values()))

    def arrays(self):
        return {"W": self.W, "b": self.b, "mu": self.mu,
                "alpha": self.alpha, "beta": self.beta}

    def validate(self, norm_tol=1e-9):
        D, N = self.W.shape
        for name, arr, shape in (("b", self.b, (N,)), ("mu", self.mu, (N,)),
                                 ("alpha", self.alpha, (N,))):
            if arr.shape != shape:
                raise ConfigError(f"{name} has shape {arr.shape}, expected {shape}")
        if self.beta.shape not in ((1,), (D,)):
            raise ConfigError(f"beta has shape {self.beta.shape}, expected (1,) or ({D},)")
        for name, arr in self.arrays().items():
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"parameter {name} has non-finite entries")
        if np.any(self.alpha <= 0) or np.any(self.beta <= 0):
            raise ConfigError("alpha and beta must be positive")
        norms = np.linalg.norm(self.W, axis=0)
        if np.any(np.abs(norms - 1) > norm_tol):
            raise ConfigError("columns of W must have unit norm")
        return self


@dataclass
class VariationalState:
    """Factorial posterior approximation; arrays are ``(N,)`` or ``(n, N)``."""

    hhat: np.ndarray
    shat: np.ndarray
    tau: np.ndarray
    n_sweeps: int = 0

    def copy(self):
        return VariationalState(self.hhat.copy(), self.shat.copy(),
                                self.tau.copy(), self.n_sweeps)


def s3c_init(D, N, seed=None, *, b=-1.0, mu=1.0, alpha=1.0, beta=10.0,
             diagonal_beta=False):
    """Draw isotropic unit-norm filters and constant priors."""
    if D < 1 or N < 1:
        raise ConfigError("D and N must be >= 1")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((D, N))
    W /= np.linalg.norm(W, axis=0)
    return S3CParams(
        W=W,
        b=np.full(N, float(b)),
        mu=np.full(N, float(mu)),
        alpha=np.full(N, float(alpha)),
        beta=np.full(D if diagonal_beta else 1, float(beta)),
    )


def s3c_sample(params, n, seed=None):
    """Draw ``n`` samples from the generative model.

    Returns
    -------
    V : ndarray of shape (n, D)
    H : ndarray of shape (n, N)
    S : ndarray of shape (n, N)
    """
    rng = np.random.default_rng(seed)
    N, D = params.n_hidden, params.n_visible
    H = (rng.random((n, N)) < expit(params.b)).astype(np.float64)
    S = H * params.mu + rng.standard_normal((n, N)) / np.sqrt(params.alpha)
    noise = rng.standard_normal((n, D)) / np.sqrt(params.beta_vec())
    return (H * S) @ params.W.T + noise, H, S


# ---------------------------------------------------------------------------
# exact posterior by enumeration


@dataclass
class PosteriorExact:
    """Exact posterior ``p(h, s | v)`` for small ``N``.

    Attributes
    ----------
    configs : ndarray of shape (2**N, N)
        Every spike vector, as 0/1 floats.
    weights : ndarray of shape (2**N,)
        ``p(h | v)`` for each configuration.
    means, covs : list of ndarray
        Gaussian ``s_A | h, v`` over the active units of each configuration.
    Eh, Ehs : ndarray of shape (N,)
        Exact marginals ``E[h_i]`` and ``E[h_i s_i]``.
    log_evidence : float
        ``log p(v)``.
    """

    configs: np.ndarray
    weights: np.ndarray
    means: list
    covs: list
    Eh: np.ndarray
    Ehs: np.ndarray
    log_evidence: float


def exact_posterior(params, v):
    """Enumerate all ``2**N`` spike configurations.

    For an active set ``A`` the slabs integrate out in closed form:
    ``p(v | h) = N(v | W_A mu_A, W_A diag(alpha_A)^-1 W_A^T + diag(beta)^-1)``
    and ``s_A | h, v`` is Gaussian with precision
    ``diag(alpha_A) + W_A^T diag(beta) W_A``.
    """
    N = params.n_hidden
    if N > MAX_EXACT_UNITS:
        raise CapacityError(
            f"exact enumeration supports at most {MAX_EXACT_UNITS} units, got {N}"
        )
    v = np.asarray(v, dtype=np.float64)
    W, mu, alpha = params.W, params.mu, params.alpha
    beta = params.beta_vec()
    noise_cov = np.diag(1.0 / beta)
    log_g1 = -np.logaddexp(0.0, -params.b)
    log_g0 = -np.logaddexp(0.0, params.b)

    configs = np.array(list(itertools.product((0.0, 1.0), repeat=N)))
    logw = np.empty(len(configs))
    means, covs = [], []
    for k, h in enumerate(configs):
        A = h.astype(bool)
        WA = W[:, A]
        cov = noise_cov + (WA / alpha[A]) @ WA.T
        logw[k] = (np.sum(np.where(A, log_g1, log_g0))
                   + multivariate_normal.logpdf(v, WA @ mu[A], cov))
        prec = np.diag(alpha[A]) + (WA.T * beta) @ WA
        c = np.linalg.inv(prec) if A.any() else np.zeros((0, 0))
        means.append(c @ (alpha[A] * mu[A] + WA.T @ (beta * v)))
        covs.append(c)
    log_evidence = logsumexp(logw)
    weights = np.exp(logw - log_evidence)

    Eh = np.zeros(N)
    Ehs = np.zeros(N)
    for h, w, m in zip(configs, weights, means):
        A = h.astype(bool)
        Eh[A] += w
        Ehs[A] += w * m
    return PosteriorExact(configs, weights, means, covs, Eh, Ehs, float(log_evidence))


# ---------------------------------------------------------------------------
# variational inference


def _precision_terms(params):
    Wb = params.W * params.beta_vec()[:, None]
    c = np.sum(params.W * Wb, axis=0)
    return Wb, c


def free_energy(params, V, state):
    """Variational free energy per sample (the negative ELBO).

    Returns a scalar for a single visible vector, else an ``(n,)`` array.
    """
    V = np.asarray(V, dtype=np.float64)
    single = V.ndim == 1
    V = np.atleast_2d(V)
    h = np.atleast_2d(state.hhat)
    s = np.atleast_2d(state.shat)
    tau = np.atleast_2d(state.tau)
    _, c = _precision_terms(params)
    beta = params.beta_vec()
    b, mu, alpha = params.b, params.mu, params.alpha

    m = h * s
    var = h * (s**2 + tau) - m**2
    resid = V - m @ params.W.T
    lik = (0.5 * (resid**2) @ beta + 0.5 * var @ c
           - 0.5 * np.sum(np.log(beta)) + 0.5 * V.shape[1] * _LOG_2PI)
    spike = np.sum(xlogy(h, h) + xlogy(1 - h, 1 - h)
                   - h * b + np.logaddexp(0.0, b), axis=1)
    slab = np.sum(h * (-0.5 * np.log(alpha * tau) - 0.5
                       + 0.5 * alpha * ((s - mu) ** 2 + tau)), axis=1)
    F = lik + spike + slab
    return F[0] if single else F


def _initial_state(params, n):
    _, c = _precision_terms(params)
    hhat = np.tile(expit(params.b), (n, 1))
    shat = np.tile(params.mu, (n, 1)).astype(np.float64)
    tau = np.tile(1.0 / (params.alpha + c), (n, 1))
    return VariationalState(hhat, shat, tau)


def e_step(params, V, max_sweeps=100, tol=1e-6, init=None, *, trace=False):
    """Mean-field inference by sequential coordinate updates.

    Parameters
    ----------
    params : S3CParams
    V : ndarray of shape (D,) or (n, D)
    max_sweeps : int
        Upper bound on full passes over the hidden units.
    tol : float
        A sample stops updating once no spike marginal moved by more than
        ``tol`` during a sweep.
    init : VariationalState, optional
        Warm start. Defaults to ``hhat = sigmoid(b)``, ``shat = mu``.
    trace : bool
        Also return the free energy after initialization and after every
        sweep, as a list of ``(n,)`` arrays.

    Returns
    -------
    state : VariationalState
    trace : list of ndarray
        Only when ``trace=True``.
    """
    V = np.asarray(V, dtype=np.float64)
    single = V.ndim == 1
    V = np.atleast_2d(V)
    n = V.shape[0]
    N = params.n_hidden
    W = params.W
    Wb, c = _precision_terms(params)
    alpha, mu, b = params.alpha, params.mu, params.b
    tau_vec = 1.0 / (alpha + c)
    am = alpha * mu
    # constant part of the spike log-odds
    z0 = b - 0.5 * am * mu + 0.5 * np.log(alpha * tau_vec)

    if init is None:
        state = _initial_state(params, n)
    else:
        state = VariationalState(
            np.array(np.atleast_2d(init.hhat), dtype=np.float64),
            np.array(np.atleast_2d(init.shat), dtype=np.float64),
            np.tile(tau_vec, (n, 1)),
        )
    hhat, shat = state.hhat, state.shat
    history = [free_energy(params, V, state)] if trace else None

    # lin_i = alpha_i mu_i + (v - sum_{j != i} m_j W_j)^T beta W_i, via the Gram
    # matrix so each unit costs O(n N) rather than O(n D)
    G = W.T @ Wb
    G[np.diag_indices(N)] = 0.0
    VW = V @ Wb + am
    active = np.arange(n)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        h = hhat[active]
        s = shat[active]
        m = h * s
        base = VW[active]
        h_old = h.copy()
        for i in range(N):
            lin = base[:, i] - m @ G[i]
            s[:, i] = lin * tau_vec[i]
            h[:, i] = expit(z0[i] + 0.5 * lin**2 * tau_vec[i])
            m[:, i] = h[:, i] * s[:, i]
        bad = ~np.isfinite(h) | ~np.isfinite(s)
        if np.any(bad):
            unit = int(np.argwhere(bad)[0][1])
            raise NumericalError(f"non-finite variational state at hidden unit {unit}")
        hhat[active] = h
        shat[active] = s
        if trace:
            history.append(free_energy(params, V, VariationalState(hhat, shat, state.tau)))
        moved = np.max(np.abs(h - h_old), axis=1)
        active = active[moved > tol]
        if active.size == 0:
            break

    state.n_sweeps = sweeps
    if single:
        state = VariationalState(hhat[0], shat[0], state.tau[0], sweeps)
    return (state, history) if trace else state


def s3c_encode(params, V, mode="spike", max_sweeps=100, tol=1e-4, init=None):
    """Encode visible vectors.

    ``mode="spike"`` returns the spike marginals ``hhat`` (in [0, 1]);
    ``mode="product"`` returns ``hhat * shat``.
    """
    if mode not in ("spike", "product"):
        raise ConfigError(f"unknown S3C encoding mode {mode!r}")
    state = e_step(params, V, max_sweeps=max_sweeps, tol=tol, init=init)
    if mode == "spike":
        return state.hhat
    return state.hhat * state.shat


# ---------------------------------------------------------------------------
# learning


def _w_objective(W, P, S, beta):
    # sum_d beta_d/2 (W_d S W_d^T - 2 W_d P_d) without the data constant
    return 0.5 * np.sum(beta * (np.einsum("dn,nm,dm->d", W, S, W)
                                - 2 * np.sum(W * P, axis=1)))


def _sphere_column(t, scale, beta, old):
    """Minimize ``scale/2 sum beta x^2 - sum beta t x`` over the unit sphere."""
    size = np.linalg.norm(t)
    if not size > 1e-12:
        # a unit without posterior mass leaves the objective flat
        return old
    if np.all(beta == beta[0]):
        return t / size
    bt = beta * t
    diag = scale * beta
    lo = -diag.min()

    def norm_gap(lam):
        return np.linalg.norm(bt / (diag + lam)) - 1.0

    hi = max(lo, 0.0) + np.linalg.norm(bt) + 1.0
    while norm_gap(hi) > 0:
        hi *= 2.0
    eps = 1e-12 * max(1.0, abs(lo))
    if norm_gap(lo + eps) < 0:
        # hard case: fall back to the normalized unconstrained direction
        x = bt / np.maximum(diag + lo + eps, eps)
        return x / np.linalg.norm(x)
    lam = brentq(norm_gap, lo + eps, hi, xtol=1e-14, rtol=1e-14, maxiter=500)
    x = bt / (diag + lam)
    return x / np.linalg.norm(x)


def _update_w(W_old, P, S, beta, ridge, n_sweeps=5):
    N = W_old.shape[1]
    S_reg = S
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        logger.warning("singular slab statistics; adding %g to the diagonal", ridge)
        S_reg = S + ridge * np.eye(N)
    W = np.linalg.solve(S_reg, P.T).T
    norms = np.linalg.norm(W, axis=0)
    W = np.where(norms > 0, W / np.where(norms > 0, norms, 1.0), W_old)
    if _w_objective(W, P, S, beta) > _w_objective(W_old, P, S, beta):
        W = W_old.copy()
    # exact column-wise minimization on the unit sphere; never increases
    for _ in range(n_sweeps):
        for i in range(N):
            t = P[:, i] - W @ S[:, i] + W[:, i] * S[i, i]
            W[:, i] = _sphere_column(t, S[i, i], beta, W[:, i])
    return W


def m_step(params, V, state, ridge=1e-6):
    """Closed-form parameter update given a fixed factorial posterior.

    Updates ``b``, then ``(mu, alpha)``, then ``W`` (unit-norm columns), then
    ``beta``; each block is an exact (or, for ``W``, monotone) minimization
    of the batch free energy.
    """
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    h = np.atleast_2d(state.hhat)
    s = np.atleast_2d(state.shat)
    tau = np.atleast_2d(state.tau)
    if V.shape[0] == 0:
        raise ConfigError("m_step needs a nonempty batch")
    n, D = V.shape
    new = params.copy()

    hbar = h.mean(axis=0)
    new.b = logit(np.clip(hbar, 1e-7, 1 - 1e-7))

    hsum = h.sum(axis=0)
    live = hsum > 1e-12 * n
    safe = np.where(live, hsum, 1.0)
    new.mu = np.where(live, np.sum(h * s, axis=0) / safe, params.mu)
    spread = np.sum(h * ((s - new.mu) ** 2 + tau), axis=0)
    new.alpha = np.where(live & (spread > 0), safe / np.where(spread > 0, spread, 1.0),
                         params.alpha)

    m = h * s
    S = m.T @ m
    S[np.diag_indices_from(S)] = np.sum(h * (s**2 + tau), axis=0)
    P = V.T @ m
    beta = params.beta_vec()
    new.W = _update_w(params.W, P, S, beta, ridge)

    var = h * (s**2 + tau) - m**2
    resid = V - m @ new.W.T
    err = np.sum(resid**2, axis=0) + (new.W**2) @ var.sum(axis=0)
    err = np.maximum(err, 1e-12 * n)
    if params.scalar_beta:
        new.beta = np.array([n * D / err.sum()])
    else:
        new.beta = n / err
    return new


def _damp(old, new, rate):
    W = (1 - rate) * old.W + rate * new.W
    norms = np.linalg.norm(W, axis=0)
    W = np.where(norms > 0, W / np.where(norms > 0, norms, 1.0), new.W)
    mix = {k: (1 - rate) * getattr(old, k) + rate * getattr(new, k)
           for k in ("b", "mu", "alpha", "beta")}
    return replace(old, W=W, **mix)


def s3c_learn(V, N, epochs=10, seed=None, *, batch_size=1000, damping=0.1,
              max_sweeps=50, tol=1e-4, init=None, init_params=None,
              diagonal_beta=False, return_trace=False):
    """Minibatch variational EM.

    Parameters
    ----------
    V : ndarray of shape (n, D)
    N : int
        Number of hidden units.
    epochs : int
    seed : int or None
    batch_size : int, default=1000
    damping : float, default=0.1
        Weight of the fresh M-step solution; the rest stays on the old
        parameters.
    max_sweeps, tol
        Forwarded to :func:`e_step`.
    init : {"random", "data"} or None
        Filter initialization: isotropic directions (default) or randomly
        chosen normalized training vectors.
    init_params : S3CParams, optional
        Start from these parameters instead.
    return_trace : bool
        Also return the epoch-mean free energy trace.
    """
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    n, D = V.shape
    if not 0 < damping <= 1:
        raise ConfigError("damping must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    if init_params is not None:
        params = init_params.copy()
    else:
        params = s3c_init(D, N, rng, diagonal_beta=diagonal_beta)
        if init == "data":
            pick = V[rng.choice(n, size=N, replace=n < N)].T.copy()
            norms = np.linalg.norm(pick, axis=0)
            ok = norms > 1e-12
            params.W[:, ok] = pick[:, ok] / norms[ok]
        elif init not in (None, "random"):
            raise ConfigError(f"unknown init {init!r}")
    trace = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            batch = V[order[start:start + batch_size]]
            state = e_step(params, batch, max_sweeps=max_sweeps, tol=tol)
            total += float(np.sum(free_energy(params, batch, state)))
            params = _damp(params, m_step(params, batch, state), damping)
        trace.append(total / n)
        logger.debug("epoch %d free energy %.6f", len(trace), trace[-1])
    return (params, trace) if return_trace else params
