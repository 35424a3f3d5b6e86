import numpy as np
import pytest

from msfeat.exceptions import ConfigError, SizingError
from msfeat.lbp import (MLBP_RINGS, LBPConfig, LBPTransformer, lbp_code, lbp_histogram,
                        n_bins, ring_codes)

from oracles import lbp_reference


def test_lbp_code_definition():
    assert lbp_code([1, 0, 1, 1, 0, 0, 0, 1], 0.5) == 0b10001101
    assert lbp_code([0.5] * 8, 0.5) == 255


def test_bin_counts():
    assert n_bins("plain", 8) == 256
    assert n_bins("uniform", 8) == 59
    assert n_bins("ri", 8) == 36
    assert n_bins("ri-uniform", 8) == 10
    assert LBPConfig("ri-uniform", MLBP_RINGS).bins == [10, 18, 26]


@pytest.mark.parametrize("R,P", [(1, 8), (2, 8), (1.5, 12), (2, 16)])
def test_plain_codes_match_loop_reference(rng, R, P):
    img = rng.random((14, 15))
    np.testing.assert_array_equal(ring_codes(img, R, P), lbp_reference(img, R, P))


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_plain_codes_match_skimage(rng):
    sk = pytest.importorskip("skimage.feature")
    img = rng.random((20, 20))
    ours = ring_codes(img, 1, 8)
    ref = sk.local_binary_pattern(img, 8, 1, method="default")[1:-1, 1:-1]
    np.testing.assert_array_equal(ours, ref.astype(np.int64))


def test_ri_uniform_counts_ones(rng):
    img = rng.random((12, 12))
    plain = ring_codes(img, 1, 8)
    riu = ring_codes(img, 1, 8, "ri-uniform")
    for c, r in zip(plain.ravel(), riu.ravel()):
        bits = [(c >> k) & 1 for k in range(8)]
        trans = sum(bits[k] != bits[k - 1] for k in range(8))
        assert r == (sum(bits) if trans <= 2 else 9)


def test_uniform_indices_distinct():
    # every uniform 8-bit pattern gets its own bin, non-uniform share the last
    from msfeat.lbp import _map_codes
    codes = np.arange(256)
    bits = ((codes[:, None] >> np.arange(8)) & 1)
    idx = _map_codes(bits, "uniform")
    trans = np.sum(bits != np.roll(bits, 1, axis=1), axis=1)
    assert len(set(idx[trans <= 2])) == 58
    assert set(idx[trans > 2]) == {58}


@pytest.mark.parametrize("variant", ["ri", "ri-uniform"])
@pytest.mark.parametrize("rings", [((1, 8),), MLBP_RINGS[:2]])
def test_rotation_invariance(rng, variant, rings):
    if variant == "ri" and any(P > 16 for _, P in rings):
        pytest.skip("table too large")
    img = rng.random((21, 21))
    cfg = LBPConfig(variant, rings)
    h = lbp_histogram(img, cfg)
    for k in (1, 2, 3):
        np.testing.assert_array_equal(lbp_histogram(np.rot90(img, k), cfg), h)


def test_histograms_sum_to_one(rng):
    for variant in ("plain", "uniform", "ri", "ri-uniform"):
        cfg = LBPConfig(variant, ((1, 8), (2, 8)))
        h = lbp_histogram(rng.random((16, 16)), cfg)
        assert abs(h[:cfg.bins[0]].sum() - 1) < 1e-12


def test_constant_image_all_ones_code():
    h = lbp_histogram(np.full((8, 8), 0.3), LBPConfig("plain"))
    assert h[255] == 1.0


def test_errors():
    with pytest.raises(SizingError):
        ring_codes(np.zeros((4, 4)), 2, 8)
    with pytest.raises(ConfigError):
        LBPConfig("plain", ((3, 24),))
    with pytest.raises(ConfigError):
        LBPConfig("fancy")


def test_transformer(rng):
    imgs = [rng.random((10, 10, 3)), rng.random((12, 9))]
    F = LBPTransformer("ri-uniform", MLBP_RINGS[:2]).fit(imgs).transform(imgs)
    assert F.shape == (2, 28)
