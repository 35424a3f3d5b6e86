"""Linear and exp-chi2 kernel SVMs (one-vs-rest), a 3-NN baseline, evaluation."""

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ConfigError, ConvergenceError

logger = logging.getLogger(__name__)

__all__ = [
    "Chi2KernelSVM",
    "Evaluation",
    "KNNClassifier",
    "LinearSVM",
    "chi2_distances",
    "chi2_kernel",
    "default_gamma",
    "evaluate",
    "select_C",
    "svm_train",
]

CHI2_EPS = 1e-10


def _nonnegative(X, name):
    X = np.asarray(X, dtype=np.float64)
    if np.any(X < 0):
        logger.warning("%s has negative entries; clipping to zero for the chi2 kernel", name)
        X = np.maximum(X, 0.0)
    return X


def chi2_distances(X, Y=None):
    """Pairwise ``sum_i (x_i - y_i)^2 / (x_i + y_i + eps)``."""
    X = _nonnegative(np.atleast_2d(X), "X")
    Y = X if Y is None else _nonnegative(np.atleast_2d(Y), "Y")
    out = np.empty((X.shape[0], Y.shape[0]))
    # row blocks bound the (n, m, d) temporary
    step = max(1, int(2e6 // max(1, Y.size)))
    for i in range(0, X.shape[0], step):
        A = X[i:i + step, None, :]
        out[i:i + step] = np.sum((A - Y[None]) ** 2 / (A + Y[None] + CHI2_EPS), axis=2)
    return out


def chi2_kernel(X, Y=None, gamma=1.0):
    """``exp(-gamma * chi2(x, y))``; vectors give a scalar, matrices a Gram."""
    if np.ndim(X) == 1 and (Y is None or np.ndim(Y) == 1):
        Y = X if Y is None else Y
        return float(np.exp(-gamma * chi2_distances(X, Y)[0, 0]))
    return np.exp(-gamma * chi2_distances(X, Y))


def default_gamma(X, max_pairs=10000, seed=0):
    """Inverse mean chi2 distance over (at most ``max_pairs``) training pairs."""
    X = np.atleast_2d(X)
    n = X.shape[0]
    rng = np.random.default_rng(seed)
    if n * (n - 1) // 2 <= max_pairs:
        i, j = np.triu_indices(n, 1)
    else:
        i = rng.integers(n, size=max_pairs)
        j = rng.integers(n, size=max_pairs)
        keep = i != j
        i, j = i[keep], j[keep]
    A = _nonnegative(X[i], "X")
    B = _nonnegative(X[j], "X")
    mean = np.mean(np.sum((A - B) ** 2 / (A + B + CHI2_EPS), axis=1)) if len(i) else 0.0
    return 1.0 / mean if mean > 0 else 1.0


# ---------------------------------------------------------------------------
# binary solvers


def _dual_cd(X, y, C, tol, max_iter, rng):
    """Hinge-loss dual coordinate descent; returns ``(w, alpha, gap, primal)``."""
    n, d = X.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    qii = np.einsum("ij,ij->i", X, X)
    gap = np.inf
    primal = 0.0
    for _ in range(max_iter):
        for i in rng.permutation(n):
            if qii[i] == 0:
                continue
            g = y[i] * (X[i] @ w) - 1.0
            a = alpha[i]
            new = min(max(a - g / qii[i], 0.0), C)
            if new != a:
                w += (new - a) * y[i] * X[i]
                alpha[i] = new
        ww = w @ w
        primal = 0.5 * ww + C * np.sum(np.maximum(0.0, 1.0 - y * (X @ w)))
        dual = alpha.sum() - 0.5 * ww
        gap = primal - dual
        if gap <= tol * abs(primal):
            return w, alpha, gap, primal
    raise ConvergenceError(
        f"linear SVM dual coordinate descent did not converge in {max_iter} epochs "
        f"(duality gap {gap:.3e}, primal {primal:.3e})",
        residual=gap,
    )


def _smo(K, y, C, tol, max_iter):
    """SMO with maximal-violating-pair selection on a precomputed Gram matrix.

    Solves ``min 1/2 a^T Q a - sum(a)``, ``0 <= a <= C``, ``y^T a = 0`` with
    ``Q = (y y^T) * K``. Returns ``(alpha, rho, violation)``; the decision
    function is ``sum_j a_j y_j K(x_j, x) - rho``.
    """
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    Q = K * np.outer(y, y)
    violation = np.inf
    for _ in range(max_iter):
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * grad
        i = np.flatnonzero(up)[np.argmax(score[up])]
        j = np.flatnonzero(low)[np.argmin(score[low])]
        violation = score[i] - score[j]
        if violation < tol:
            break
        # move along y_i e_i - y_j e_j keeps y^T a fixed
        curv = K[i, i] + K[j, j] - 2 * K[i, j]
        curv = curv if curv > 1e-12 else 1e-12
        step = violation / curv
        # box limits for t in a_i += y_i t, a_j -= y_j t
        hi_i = C - alpha[i] if y[i] > 0 else alpha[i]
        hi_j = alpha[j] if y[j] > 0 else C - alpha[j]
        step = min(step, hi_i, hi_j)
        di = y[i] * step
        dj = -y[j] * step
        alpha[i] += di
        alpha[j] += dj
        grad += Q[:, i] * di + Q[:, j] * dj
        alpha[i] = min(max(alpha[i], 0.0), C)
        alpha[j] = min(max(alpha[j], 0.0), C)
    else:
        raise ConvergenceError(
            f"SMO did not converge in {max_iter} iterations (KKT violation {violation:.3e})",
            residual=violation,
        )
    free = (alpha > 1e-12) & (alpha < C - 1e-12)
    yg = y * grad
    if np.any(free):
        rho = float(np.mean(yg[free]))
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        lo = np.max(yg[up]) if np.any(up) else -np.inf
        hi = np.min(yg[low]) if np.any(low) else np.inf
        rho = float((lo + hi) / 2) if np.isfinite(lo) and np.isfinite(hi) else float(
            lo if np.isfinite(lo) else hi)
    return alpha, rho, float(violation)


# ---------------------------------------------------------------------------
# estimators


class _OneVsRest(ClassifierMixin, BaseEstimator):
    def _targets(self, y):
        self.classes_ = unique_labels(y)
        if len(self.classes_) < 2:
            raise ConfigError("need at least two classes")
        return [np.where(y == c, 1.0, -1.0) for c in self.classes_]

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


class LinearSVM(_OneVsRest):
    """One-vs-rest linear SVM trained by dual coordinate descent.

    The bias is learned as the weight of an appended constant feature.

    Parameters
    ----------
    C : float, default=1.0
    tol : float, default=1e-4
        Stop once the duality gap is below ``tol * |primal objective|``.
    max_iter : int, default=2000
        Epochs over the training set.
    standardize : bool, default=True
        Train on z-scored features (training mean and std; constant
        features are only centered). ``coef_`` and ``intercept_`` are mapped
        back to the raw feature space.
    random_state : int or None
        Seeds the coordinate order.

    Attributes
    ----------
    coef_ : ndarray of shape (n_classes, n_features)
    intercept_ : ndarray of shape (n_classes,)
    duality_gaps_ : ndarray of shape (n_classes,)
    """

    kind = "linear"

    def __init__(self, C=1.0, tol=1e-4, max_iter=2000, standardize=True, random_state=0):
        self.C = C
        self.tol = tol
        self.max_iter = max_iter
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if self.standardize:
            shift = X.mean(axis=0)
            scale = X.std(axis=0)
            scale = np.where(scale > 1e-12, scale, 1.0)
        else:
            shift, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
        Xa = np.hstack([(X - shift) / scale, np.ones((X.shape[0], 1))])
        rng = np.random.default_rng(self.random_state)
        coefs, gaps, primals = [], [], []
        for t in self._targets(y):
            w, _, gap, primal = _dual_cd(Xa, t, self.C, self.tol, self.max_iter, rng)
            coefs.append(w)
            gaps.append(gap)
            primals.append(primal)
        W = np.array(coefs)
        self.coef_ = np.ascontiguousarray(W[:, :-1] / scale)
        self.intercept_ = W[:, -1] - self.coef_ @ shift
        self.duality_gaps_ = np.array(gaps)
        self.primal_objectives_ = np.array(primals)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_.T + self.intercept_


class Chi2KernelSVM(_OneVsRest):
    """One-vs-rest SVM with the exp-chi2 kernel, trained by SMO.

    Parameters
    ----------
    C : float, default=1.0
    gamma : float or None
        Kernel width; ``None`` uses :func:`default_gamma` on the training set.
    tol : float, default=1e-3
        Maximal KKT violation at termination.
    max_iter : int, default=100000

    Attributes
    ----------
    support_vectors_ : ndarray
        Training features referenced by at least one class.
    dual_coef_ : ndarray of shape (n_classes, n_support)
        ``alpha * y`` per class.
    intercept_ : ndarray of shape (n_classes,)
    gamma_ : float
    """

    kind = "chi2"

    def __init__(self, C=1.0, gamma=None, tol=1e-3, max_iter=100000):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        X = _nonnegative(X, "features")
        self.gamma_ = default_gamma(X) if self.gamma is None else float(self.gamma)
        K = chi2_kernel(X, X, self.gamma_)
        coefs, rhos, viol = [], [], []
        for t in self._targets(y):
            alpha, rho, v = _smo(K, t, self.C, self.tol, self.max_iter)
            coefs.append(alpha * t)
            rhos.append(rho)
            viol.append(v)
        coefs = np.array(coefs)
        used = np.any(coefs != 0, axis=0)
        self.support_ = np.flatnonzero(used)
        self.support_vectors_ = X[used]
        # contiguous, so a reloaded model takes the same BLAS path bit for bit
        self.dual_coef_ = np.ascontiguousarray(coefs[:, used])
        self.intercept_ = -np.array(rhos)
        self.kkt_violations_ = np.array(viol)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "dual_coef_")
        X = check_array(X, dtype=np.float64)
        K = chi2_kernel(X, self.support_vectors_, self.gamma_)
        return K @ self.dual_coef_.T + self.intercept_


class KNNClassifier(ClassifierMixin, BaseEstimator):
    """k-nearest-neighbour majority vote (ties go to the nearest member).

    Parameters
    ----------
    n_neighbors : int, default=3
    metric : {"euclidean", "chi2"}, default="euclidean"
    """

    kind = "knn"

    def __init__(self, n_neighbors=3, metric="euclidean"):
        self.n_neighbors = n_neighbors
        self.metric = metric

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, self._y_idx = np.unique(y, return_inverse=True)
        self.X_ = X
        return self

    def _dist(self, X):
        if self.metric == "chi2":
            return chi2_distances(X, self.X_)
        if self.metric != "euclidean":
            raise ConfigError(f"unknown metric {self.metric!r}")
        return np.sum(X**2, 1)[:, None] - 2 * X @ self.X_.T + np.sum(self.X_**2, 1)[None]

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = check_array(X, dtype=np.float64)
        order = np.argsort(self._dist(X), axis=1, kind="stable")[:, :self.n_neighbors]
        out = []
        for row in order:
            votes = np.bincount(self._y_idx[row], minlength=len(self.classes_))
            best = np.flatnonzero(votes == votes.max())
            # nearest neighbour among the tied classes decides
            out.append(next(self._y_idx[r] for r in row if self._y_idx[r] in best))
        return self.classes_[np.array(out)]


C_GRID = (0.1, 1.0, 10.0)


def _make(kind, C, gamma, seed, kwargs):
    if kind == "linear":
        return LinearSVM(C=C, random_state=seed, **kwargs)
    if kind in ("chi2", "exp-chi2"):
        return Chi2KernelSVM(C=C, gamma=gamma, **kwargs)
    if kind in ("knn", "3nn"):
        return KNNClassifier(**kwargs)
    raise ConfigError(f"unknown classifier kind {kind!r}")


def select_C(features, labels, kind="linear", grid=C_GRID, folds=3, gamma=None, seed=0,
             **kwargs):
    """Pick ``C`` from ``grid`` by stratified k-fold accuracy on the training set.

    Ties go to the smaller ``C``. Returns ``(best_C, mean_accuracies)``.
    """
    from sklearn.model_selection import StratifiedKFold

    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    scores = []
    for C in grid:
        acc = []
        for tr, va in splitter.split(X, y):
            model = _make(kind, C, gamma, seed, kwargs).fit(X[tr], y[tr])
            acc.append(np.mean(model.predict(X[va]) == y[va]))
        scores.append(float(np.mean(acc)))
    return float(grid[int(np.argmax(scores))]), scores


def svm_train(features, labels, kind="linear", C=1.0, gamma=None, seed=0, **kwargs):
    """Train a one-vs-rest classifier of the given kind.

    ``C="cv"`` selects ``C`` from :data:`C_GRID` with :func:`select_C`; the
    choice is stored as ``model.selected_C_``.
    """
    if isinstance(C, str):
        if C != "cv":
            raise ConfigError(f"C must be a number or 'cv', got {C!r}")
        C, scores = select_C(features, labels, kind, gamma=gamma, seed=seed, **kwargs)
        model = _make(kind, C, gamma, seed, kwargs).fit(features, labels)
        model.selected_C_, model.cv_scores_ = C, scores
        return model
    return _make(kind, C, gamma, seed, kwargs).fit(features, labels)


@dataclass
class Evaluation:
    """Accuracy and confusion matrix (rows: true class, columns: predicted)."""

    accuracy: float
    confusion: np.ndarray
    classes: np.ndarray

    def as_dict(self):
        return {"accuracy": self.accuracy, "confusion": self.confusion.tolist(),
                "classes": [c.item() if hasattr(c, "item") else c for c in self.classes]}


def evaluate(model, features, labels):
    labels = np.asarray(labels)
    pred = model.predict(features)
    classes = np.union1d(getattr(model, "classes_", np.unique(labels)), np.unique(labels))
    index = {c: k for k, c in enumerate(classes)}
    conf = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(labels, pred):
        conf[index[t], index[p]] += 1
    return Evaluation(float(np.mean(pred == labels)), conf, classes)
