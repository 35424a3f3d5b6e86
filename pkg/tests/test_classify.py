import numpy as np
import pytest
from sklearn.metrics.pairwise import chi2_kernel as sk_chi2_kernel
from sklearn.svm import SVC, LinearSVC

from msfeat.classify import (C_GRID, Chi2KernelSVM, KNNClassifier, LinearSVM, _smo,
                             chi2_distances, chi2_kernel, default_gamma, evaluate, select_C,
                             svm_train)
from msfeat.exceptions import ConfigError, ConvergenceError


def blobs(rng, n=30, d=5, k=3, spread=0.3):
    centers = rng.random((k, d)) * 3
    X = np.vstack([c + spread * rng.standard_normal((n, d)) for c in centers])
    return np.abs(X), np.repeat(np.arange(k), n)


def test_chi2_kernel_matches_sklearn(rng):
    X, Y = rng.random((6, 4)), rng.random((5, 4))
    np.testing.assert_allclose(chi2_kernel(X, Y, 0.7), sk_chi2_kernel(X, Y, gamma=0.7),
                               rtol=1e-8)
    assert chi2_kernel(X[0], X[0]) == 1.0
    assert isinstance(chi2_kernel(X[0], Y[0]), float)


def test_chi2_distance_zero_bins():
    assert chi2_distances(np.zeros((1, 3)))[0, 0] == 0.0


def test_chi2_negative_inputs_are_clipped(caplog):
    with caplog.at_level("WARNING"):
        d = chi2_distances(np.array([[-1.0, 1.0]]), np.array([[0.0, 1.0]]))
    assert d[0, 0] == 0.0 and "clipping" in caplog.text


def test_default_gamma_is_inverse_mean_distance(rng):
    X = rng.random((10, 3))
    D = chi2_distances(X)
    iu = np.triu_indices(10, 1)
    assert abs(default_gamma(X) - 1 / D[iu].mean()) < 1e-12


def test_smo_matches_libsvm(rng):
    X, y = blobs(rng, k=2, spread=1.0)
    t = np.where(y == 0, 1.0, -1.0)
    K = chi2_kernel(X, X, 0.5)
    alpha, rho, viol = _smo(K, t, 1.0, 1e-6, 100000)
    ref = SVC(C=1.0, kernel="precomputed", tol=1e-8).fit(K, t)
    ours = K @ (alpha * t) - rho
    np.testing.assert_allclose(ours, ref.decision_function(K), atol=1e-3)
    assert viol <= 1e-6


def test_linear_primal_matches_liblinear(rng):
    X, y = blobs(rng, k=2, spread=1.5)
    t = np.where(y == 0, 1.0, -1.0)
    ours = LinearSVM(C=1.0, tol=1e-8, standardize=False).fit(X, t)
    # liblinear regularizes the bias like any weight when intercept_scaling=1
    ref = LinearSVC(C=1.0, loss="hinge", tol=1e-10, max_iter=100000,
                    intercept_scaling=1.0).fit(X, t)

    def primal(w, b):
        return 0.5 * (w @ w + b * b) + np.sum(np.maximum(0, 1 - t * (X @ w + b)))

    p_ours = primal(ours.coef_[1], ours.intercept_[1])
    p_ref = primal(ref.coef_[0], ref.intercept_[0])
    assert p_ours <= p_ref * (1 + 1e-4)


def test_linear_standardized_coefficients_in_raw_space(rng):
    X, y = blobs(rng)
    X = X * np.array([1, 10, 100, 0.1, 1])
    m = LinearSVM(C=1.0).fit(X, y)
    Z = (X - X.mean(0)) / X.std(0)
    m2 = LinearSVM(C=1.0, standardize=False).fit(Z, y)
    np.testing.assert_allclose(m.decision_function(X), m2.decision_function(Z), atol=1e-8)


def test_linear_convergence_error(rng):
    X, y = blobs(rng, spread=2)
    with pytest.raises(ConvergenceError):
        LinearSVM(C=100.0, tol=1e-12, max_iter=1).fit(X, y)


@pytest.mark.parametrize("model", [LinearSVM(), Chi2KernelSVM(), KNNClassifier()],
                         ids=["linear", "chi2", "knn"])
def test_classifiers_separate_blobs(rng, model):
    X, y = blobs(rng)
    assert np.mean(model.fit(X, y).predict(X) == y) > 0.95


def test_string_labels_roundtrip(rng):
    X, y = blobs(rng)
    names = np.array(["a", "b", "c"])[y]
    assert set(LinearSVM().fit(X, names).predict(X)) <= {"a", "b", "c"}


def test_single_class_rejected():
    with pytest.raises(ConfigError):
        LinearSVM().fit(np.eye(3), [1, 1, 1])


def test_knn_tie_goes_to_nearest():
    X = np.array([[0.0], [1.0], [2.0], [10.0]])
    y = np.array([0, 1, 2, 2])
    # three neighbours with one vote each: the closest one decides
    assert KNNClassifier(3).fit(X, y).predict([[0.9]])[0] == 1
    assert KNNClassifier(1, metric="chi2").fit(X, y).predict([[9.0]])[0] == 2
    with pytest.raises(ConfigError):
        KNNClassifier(metric="cosine").fit(X, y).predict(X)


def test_select_C_and_cv_train(rng):
    X, y = blobs(rng, spread=1.0)
    best, scores = select_C(X, y)
    assert best in C_GRID and len(scores) == len(C_GRID)
    m = svm_train(X, y, C="cv")
    assert m.selected_C_ == best
    with pytest.raises(ConfigError):
        svm_train(X, y, C="auto")
    with pytest.raises(ConfigError):
        svm_train(X, y, kind="forest")


def test_evaluate_confusion():
    class Fixed:
        classes_ = np.array([0, 1])

        def predict(self, X):
            return np.array([0, 1, 1, 1])

    ev = evaluate(Fixed(), None, [0, 0, 1, 1])
    assert ev.accuracy == 0.75
    assert ev.confusion.tolist() == [[1, 1], [0, 2]]
    assert ev.as_dict()["classes"] == [0, 1]
