"""Independent reference implementations used by the tests.

These are written for clarity rather than speed and share no code with the
package beyond plain numpy/scipy.
"""

import numpy as np
from scipy import integrate


def one_unit_posterior(W, b, mu, alpha, beta, v):
    """Exact posterior of a single-unit spike-and-slab model by quadrature.

    Integrates the slab numerically instead of in closed form. Densities are
    taken relative to ``p(v | h=0)`` so nothing underflows.

    Returns
    -------
    Eh, Ehs : float
        ``P(h=1 | v)`` and ``E[h s | v]``.
    """
    w = np.asarray(W, dtype=np.float64).ravel()
    c = beta * (w @ w)
    r = beta * (w @ v)

    def log_ratio(s):
        # log N(v; w s, 1/beta) - log N(v; 0, 1/beta) + log N(s; mu, 1/alpha)
        return (r * s - 0.5 * c * s * s
                + 0.5 * np.log(alpha / (2 * np.pi)) - 0.5 * alpha * (s - mu) ** 2)

    prec = alpha + c
    mode = (alpha * mu + r) / prec
    sd = 1.0 / np.sqrt(prec)
    peak = log_ratio(mode)
    lo, hi = mode - 40 * sd, mode + 40 * sd
    kw = dict(points=[mode], limit=200, epsabs=0.0, epsrel=1e-13)
    z, _ = integrate.quad(lambda s: np.exp(log_ratio(s) - peak), lo, hi, **kw)
    # the first moment can vanish, so a purely relative target is unreachable
    kw["epsabs"] = 1e-13 * z * sd
    m1, _ = integrate.quad(lambda s: s * np.exp(log_ratio(s) - peak), lo, hi, **kw)
    # prior odds times the slab evidence ratio
    log_odds = b + peak + np.log(z)
    Eh = 1.0 / (1.0 + np.exp(-log_odds))
    return Eh, Eh * m1 / z


def blur_reference(img, kernel):
    """2-D separable correlation with half-sample symmetric padding, by loops."""
    k = np.asarray(kernel)
    r = len(k) // 2
    padded = np.pad(img, r, mode="symmetric")
    K = np.outer(k, k)
    out = np.empty_like(img, dtype=np.float64)
    for y in range(img.shape[0]):
        for x in range(img.shape[1]):
            out[y, x] = np.sum(padded[y:y + 2 * r + 1, x:x + 2 * r + 1] * K)
    return out


def lbp_reference(img, R, P):
    """Plain LBP codes by per-pixel bilinear interpolation."""
    m = int(np.ceil(R))
    h, w = img.shape
    codes = np.zeros((h - 2 * m, w - 2 * m), dtype=np.int64)
    for y in range(m, h - m):
        for x in range(m, w - m):
            code = 0
            for k in range(P):
                t = 2 * np.pi * k / P
                sy = y + round(-R * np.sin(t), 12)
                sx = x + round(R * np.cos(t), 12)
                y0, x0 = int(np.floor(sy)), int(np.floor(sx))
                fy, fx = sy - y0, sx - x0
                val = (1 - fy) * (1 - fx) * img[y0, x0]
                if fx > 0:
                    val += (1 - fy) * fx * img[y0, x0 + 1]
                if fy > 0:
                    val += fy * (1 - fx) * img[y0 + 1, x0]
                if fx > 0 and fy > 0:
                    val += fy * fx * img[y0 + 1, x0 + 1]
                if val >= img[y, x] - 1e-12:
                    code |= 1 << k
            codes[y - m, x - m] = code
    return codes


def pool_reference(codes, grid, reducer):
    rows, cols, _ = codes.shape
    # the larger bands come first: sizes q + 1 (r times) then q
    def bounds(n):
        q, r = divmod(n, grid)
        sizes = [q + 1] * r + [q] * (grid - r)
        return np.concatenate([[0], np.cumsum(sizes)])

    ybounds, xbounds = bounds(rows), bounds(cols)
    out = []
    f = np.mean if reducer == "mean" else np.max
    for i in range(grid):
        for j in range(grid):
            cell = codes[ybounds[i]:ybounds[i + 1], xbounds[j]:xbounds[j + 1]]
            out.append(f(cell.reshape(-1, codes.shape[2]), axis=0))
    return np.concatenate(out)


def low_coherence_dictionary(D, N, rng, limit=0.2):
    """Random unit-norm columns with pairwise |cosine| below ``limit``."""
    while True:
        W = rng.standard_normal((D, N))
        W /= np.linalg.norm(W, axis=0)
        G = np.abs(W.T @ W)
        np.fill_diagonal(G, 0.0)
        if G.max() < limit:
            return W


def matched_cosines(W_learned, W_true):
    """|cosine| of each true atom with its Hungarian-matched learned atom."""
    from scipy.optimize import linear_sum_assignment

    A = W_learned / np.linalg.norm(W_learned, axis=0)
    B = W_true / np.linalg.norm(W_true, axis=0)
    C = np.abs(A.T @ B)
    r, c = linear_sum_assignment(-C)
    return C[r, c]
