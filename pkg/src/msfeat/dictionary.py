"""Baseline dictionary learners: K-means, sparse coding and an autoencoder.

Each learner has a learn routine working on a patch matrix ``X`` of shape
``(n, D)`` and an encode routine mapping patches to codes. Dictionaries are
stored with atoms as columns, ``W`` of shape ``(D, N)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import ConfigError, ConvergenceError, NumericalError

__all__ = [
    "AEParams",
    "ae_encode",
    "ae_forward",
    "ae_init",
    "ae_learn",
    "ae_loss_and_grad",
    "kkt_residual",
    "kmeans_encode",
    "kmeans_learn",
    "sc_encode",
    "sc_learn",
    "sc_objective",
    "soft_threshold",
]


# ---------------------------------------------------------------------------
# K-means


def _sq_dists(X, C):
    d = (np.sum(X**2, axis=1)[:, None] - 2 * X @ C.T + np.sum(C**2, axis=1)[None, :])
    return np.maximum(d, 0.0)


def _kmeanspp(X, N, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    closest = _sq_dists(X, centers[0][None, :])[:, 0]
    for _ in range(1, N):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers.append(X[idx])
        closest = np.minimum(closest, _sq_dists(X, X[idx][None, :])[:, 0])
    return np.array(centers)


def kmeans_learn(X, N, iters=100, seed=None, *, return_history=False):
    """Lloyd's algorithm from k-means++ seeding.

    Empty clusters are reseeded to the point farthest from its assigned
    center, so the within-cluster sum of squares never increases.

    Returns
    -------
    W : ndarray of shape (D, N)
        Centers as columns.
    history : list of float
        WCSS at every assignment step, only with ``return_history=True``.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < N:
        raise ConfigError(f"need at least {N} patches for {N} centers, got {n}")
    if iters < 1:
        raise ConfigError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, N, rng)
    history = []
    labels = None
    for _ in range(iters):
        d = _sq_dists(X, C)
        new_labels = np.argmin(d, axis=1)
        history.append(float(d[np.arange(n), new_labels].sum()))
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=N)
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        nonempty = counts > 0
        C[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not np.all(nonempty):
            own = np.sum((X - C[labels]) ** 2, axis=1)
            for j in np.flatnonzero(~nonempty):
                far = int(np.argmax(own))
                C[j] = X[far]
                own[far] = -1.0
                labels[far] = j
    W = C.T.copy()
    return (W, history) if return_history else W


def kmeans_encode(W, X, mode="triangle"):
    """Encode patches against K-means centers.

    ``mode="triangle"`` gives ``max(0, mean_k d_k - d_j)`` with Euclidean
    distances ``d_j``; ``mode="hard"`` gives a one-hot nearest-center code.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d = np.sqrt(_sq_dists(X, W.T))
    if mode == "hard":
        out = np.zeros_like(d)
        out[np.arange(len(d)), np.argmin(d, axis=1)] = 1.0
        return out
    if mode != "triangle":
        raise ConfigError(f"unknown K-means encoding {mode!r}")
    return np.maximum(0.0, d.mean(axis=1, keepdims=True) - d)


# ---------------------------------------------------------------------------
# sparse coding


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def sc_objective(W, X, S, beta):
    """``sum_i ||x_i - W s_i||^2 + beta ||s_i||_1``."""
    R = np.atleast_2d(X) - np.atleast_2d(S) @ W.T
    return float(np.sum(R**2) + beta * np.sum(np.abs(S)))


def kkt_residual(W, X, S, beta):
    """Per-sample worst violation of the lasso optimality conditions."""
    X = np.atleast_2d(X)
    S = np.atleast_2d(S)
    grad = 2 * (S @ W.T - X) @ W
    on = np.abs(grad + beta * np.sign(S))
    off = np.maximum(np.abs(grad) - beta, 0.0)
    return np.max(np.where(S != 0, on, off), axis=1)


def sc_encode(W, X, beta, tol=1e-9, max_sweeps=20000, init=None):
    """Solve ``min_s ||x - W s||^2 + beta ||s||_1`` for every row of ``X``.

    Cyclic coordinate descent with covariance updates, vectorized across
    samples, until the KKT residual of every sample is below ``tol``.
    Samples that linger are periodically polished by solving the
    stationarity equations exactly on their current support and sign
    pattern; the polished code is kept only if it passes the KKT check.

    Raises
    ------
    ConvergenceError
        If ``max_sweeps`` passes do not reach ``tol``.
    """
    if beta <= 0:
        raise ConfigError("beta must be positive")
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    n, N = X.shape[0], W.shape[1]
    G = W.T @ W
    diag = np.diag(G).copy()
    safe = np.where(diag > 0, diag, 1.0)
    Q = X @ W
    S = np.zeros((n, N)) if init is None else np.array(np.atleast_2d(init), dtype=np.float64)
    half = beta / 2.0

    active = np.arange(n)
    for sweep in range(max_sweeps):
        s = S[active]
        c = Q[active] - s @ G
        for j in range(N):
            target = c[:, j] + diag[j] * s[:, j]
            new = np.where(diag[j] > 0, soft_threshold(target, half) / safe[j], 0.0)
            delta = new - s[:, j]
            if np.any(delta):
                c -= np.outer(delta, G[j])
                s[:, j] = new
        S[active] = s
        res = kkt_residual(W, X[active], s, beta)
        active = active[res >= tol]
        if active.size and sweep % 25 == 24:
            done = [i for i in active if _polish(W, X[i], S, i, G, Q[i], half, beta, tol)]
            active = np.setdiff1d(active, done)
        if active.size == 0:
            break
    else:
        worst = float(np.max(kkt_residual(W, X[active], S[active], beta)))
        raise ConvergenceError(
            f"lasso coordinate descent did not converge in {max_sweeps} sweeps "
            f"(KKT residual {worst:.3e})",
            residual=worst,
        )
    return S[0] if single else S


def _polish(W, x, S, i, G, q, half, beta, tol):
    s = S[i].copy()
    support = np.flatnonzero(s)
    # a dependent support admits a line of solutions with the same fit;
    # slide along it (never raising the l1 norm) until an entry hits zero
    while support.size:
        _, sv, vt = np.linalg.svd(W[:, support], full_matrices=True)
        rank = int(np.sum(sv > sv[0] * 1e-12)) if sv.size else 0
        if rank == support.size:
            break
        z = vt[-1]
        if np.sign(s[support]) @ z > 0:
            z = -z
        shrinking = s[support] * z < 0
        if not np.any(shrinking):
            return False
        steps = -s[support][shrinking] / z[shrinking]
        k = int(np.argmin(steps))
        s[support] += steps[k] * z
        s[support[np.flatnonzero(shrinking)[k]]] = 0.0
        support = np.flatnonzero(s)
    if support.size == 0:
        return False
    sign = np.sign(s[support])
    sol = np.linalg.solve(G[np.ix_(support, support)], q[support] - half * sign)
    if np.any(np.sign(sol) != sign):
        return False
    cand = np.zeros_like(s)
    cand[support] = sol
    if kkt_residual(W, x[None], cand[None], beta)[0] >= tol:
        return False
    S[i] = cand
    return True


def _dictionary_update(W, X, S, rng, n_sweeps=3):
    D, N = W.shape
    A = S.T @ S
    B = X.T @ S
    W_new = W.copy()
    used = np.diag(A) > 0
    if np.any(used):
        Au = A[np.ix_(used, used)]
        Wu = np.linalg.lstsq(Au + 1e-12 * np.eye(Au.shape[0]), B[:, used].T, rcond=None)[0].T
        Wu /= np.maximum(1.0, np.linalg.norm(Wu, axis=0))
        cand = W.copy()
        cand[:, used] = Wu
        # the l1 term is fixed while S is
        if sc_objective(cand, X, S, 0.0) <= sc_objective(W, X, S, 0.0):
            W_new = cand
    # exact block-coordinate minimization per atom on the unit ball
    for _ in range(n_sweeps):
        for j in np.flatnonzero(used):
            u = W_new[:, j] + (B[:, j] - W_new @ A[:, j]) / A[j, j]
            W_new[:, j] = u / max(1.0, np.linalg.norm(u))
    # atoms no sample uses do not affect the objective; restart them on data
    for j in np.flatnonzero(~used):
        x = X[rng.integers(X.shape[0])]
        nrm = np.linalg.norm(x)
        W_new[:, j] = x / nrm if nrm > 0 else W_new[:, j]
    return W_new


def sc_learn(X, N, beta, iters=100, seed=None, *, tol=1e-6, return_history=False):
    """Alternating minimization for sparse coding under ``||W_j|| <= 1``.

    Starts from isotropic random atoms. Codes are warm-started lasso
    solutions (to KKT residual ``tol``); the dictionary step keeps the
    better of the projected least-squares solution and the previous
    dictionary, then runs per-atom block-coordinate sweeps, so the objective
    is non-increasing.

    Returns
    -------
    W : ndarray of shape (D, N)
    history : list of float
        Objective after each code step, only with ``return_history=True``.
    """
    if beta <= 0:
        raise ConfigError("beta must be positive")
    X = np.asarray(X, dtype=np.float64)
    n, D = X.shape
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((D, N))
    W /= np.linalg.norm(W, axis=0)
    S = None
    history = []
    for _ in range(iters):
        S = sc_encode(W, X, beta, tol=tol, init=S)
        history.append(sc_objective(W, X, S, beta))
        W = _dictionary_update(W, X, S, rng)
    return (W, history) if return_history else W


# ---------------------------------------------------------------------------
# autoencoder


@dataclass
class AEParams:
    """Sigmoid autoencoder: ``s = f(v W + b)``, ``v~ = f(s W_dec + b_dec)``.

    ``W`` is ``(D, N)`` and ``W_dec`` is ``(N, D)``.
    """

    W: np.ndarray
    b: np.ndarray
    W_dec: np.ndarray
    b_dec: np.ndarray

    def arrays(self):
        return {"W": self.W, "b": self.b, "W_dec": self.W_dec, "b_dec": self.b_dec}

    def copy(self):
        return AEParams(self.W.copy(), self.b.copy(), self.W_dec.copy(), self.b_dec.copy())


def ae_init(D, N, seed=None):
    rng = np.random.default_rng(seed)
    r = 4 * np.sqrt(6.0 / (D + N))
    return AEParams(rng.uniform(-r, r, (D, N)), np.zeros(N),
                    rng.uniform(-r, r, (N, D)), np.zeros(D))


def ae_forward(params, X):
    """Return ``(codes, reconstructions)``."""
    S = expit(X @ params.W + params.b)
    return S, expit(S @ params.W_dec + params.b_dec)


def ae_encode(params, X):
    return expit(np.asarray(X, dtype=np.float64) @ params.W + params.b)


def ae_loss_and_grad(params, X):
    """Mean squared reconstruction error and its gradient."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    S, Y = ae_forward(params, X)
    loss = float(np.sum((X - Y) ** 2) / n)
    d2 = 2.0 * (Y - X) / n * Y * (1 - Y)
    d1 = (d2 @ params.W_dec.T) * S * (1 - S)
    grad = AEParams(X.T @ d1, d1.sum(axis=0), S.T @ d2, d2.sum(axis=0))
    return loss, grad


def ae_learn(X, N, lr=0.1, epochs=20, seed=None, *, batch_size=32,
             return_history=False):
    """Minibatch gradient descent on the squared reconstruction error.

    Returns
    -------
    params : AEParams
    history : list of float
        Mean minibatch loss per epoch, only with ``return_history=True``.
    """
    if lr <= 0:
        raise ConfigError("lr must be positive")
    X = np.asarray(X, dtype=np.float64)
    n, D = X.shape
    rng = np.random.default_rng(seed)
    params = ae_init(D, N, rng)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            batch = X[order[start:start + batch_size]]
            loss, g = ae_loss_and_grad(params, batch)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"autoencoder loss diverged in epoch {epoch}; try a smaller lr"
                )
            for name in ("W", "b", "W_dec", "b_dec"):
                setattr(params, name, getattr(params, name) - lr * getattr(g, name))
            losses.append(loss * len(batch))
        history.append(sum(losses) / n)
    return (params, history) if return_history else params
