import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msfeat.coders import KMeansCoder
from msfeat.exceptions import ConfigError
from msfeat.features import FeatureExtractor, PoolingConfig, encode_image, pool

from oracles import pool_reference


def test_pool_known_values():
    codes = np.arange(16, dtype=float).reshape(4, 4, 1)
    np.testing.assert_array_equal(pool(codes, PoolingConfig(2, "mean")), [2.5, 4.5, 10.5, 12.5])
    np.testing.assert_array_equal(pool(codes, PoolingConfig(2, "max")), [5, 7, 13, 15])
    np.testing.assert_array_equal(pool(codes, PoolingConfig(1)), [7.5])


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 9), st.integers(3, 9), st.integers(1, 4), st.sampled_from([1, 2, 3]),
       st.sampled_from(["mean", "max"]), st.integers(0, 1000))
def test_pool_matches_reference(rows, cols, K, grid, reducer, seed):
    codes = np.random.default_rng(seed).random((rows, cols, K))
    np.testing.assert_allclose(pool(codes, PoolingConfig(grid, reducer)),
                               pool_reference(codes, grid, reducer), atol=1e-15)


def test_pool_rejects_small_grid():
    with pytest.raises(ConfigError):
        pool(np.zeros((1, 4, 2)), PoolingConfig(2))
    with pytest.raises(ConfigError):
        PoolingConfig(4)
    with pytest.raises(ConfigError):
        PoolingConfig(2, "median")


@pytest.fixture(scope="module")
def km(tiny_corpus):
    return KMeansCoder(6, 6, max_iter=10, random_state=0).fit_images(tiny_corpus["train"][0], 300)


def test_encode_image_geometry_check(km, tiny_corpus):
    assert encode_image(km, tiny_corpus["test"][0][0]).shape == (7, 7, 6)
    assert encode_image(km, tiny_corpus["test"][0][0], stride=6).shape == (4, 4, 6)
    with pytest.raises(ConfigError, match="side 6"):
        encode_image(km, tiny_corpus["test"][0][0], p=8)


def test_constant_image_encodes_finitely(km):
    assert np.all(np.isfinite(encode_image(km, np.full((24, 24), 0.4))))


def test_extractor_matches_manual_pipeline(km, tiny_corpus):
    imgs = tiny_corpus["test"][0][:4]
    fe = FeatureExtractor(km, grid=2, refit=False).fit(None)
    F = fe.transform(imgs)
    for img, row in zip(imgs, F):
        ref = pool(encode_image(km, img), PoolingConfig(2))
        np.testing.assert_allclose(row, ref / np.linalg.norm(ref), atol=1e-12)
    assert F.shape == (4, 24)


def test_extractor_fit_learns_coder(tiny_corpus):
    fe = FeatureExtractor(KMeansCoder(5, 6, max_iter=5), n_patches=200, grid=1,
                          l2_normalize=False, random_state=0)
    F = fe.fit_transform(tiny_corpus["train"][0][:5])
    assert F.shape == (5, 5) and hasattr(fe.coder, "components_")
