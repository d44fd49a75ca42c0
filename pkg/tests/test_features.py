import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etcml.cipher import encrypt, induced_pixel_map, keygen, to_signed_permutation
from etcml.dataset_io import synth_dataset
from etcml.errors import ConfigError, DimensionError
from etcml.features import (
    FeaturePipeline,
    Reducer,
    ZScoreStats,
    apply_reducer,
    apply_zscore,
    fit_reducer,
    fit_zscore,
    flatten,
    out_dim_for_ratio,
    pull_back_indices,
)
from etcml.svm import KernelSpec, gram


def test_flatten():
    assert flatten(np.array([[0, 1], [2, 3]], np.uint8)).tolist() == [0, 1, 2, 3]
    assert flatten(np.zeros((192, 160), np.uint8)).shape == (30720,)
    assert flatten(np.zeros((3, 4, 5), np.uint8)).shape == (3, 20)


def test_zscore_hand_values():
    stats = fit_zscore(np.array([[0.0, 5.0], [2.0, 5.0]]))
    assert stats.mean.tolist() == [1.0, 5.0]
    assert stats.std.tolist() == [1.0, 0.0]
    assert stats.constant_mask.tolist() == [False, True]
    assert apply_zscore(np.array([3.0, 9.0]), stats).tolist() == [2.0, 0.0]
    assert np.all(apply_zscore(stats.mean, stats) == 0)


def test_zscore_constant_column():
    stats = fit_zscore(np.array([[5.0], [5.0], [5.0]]))
    assert stats.std[0] == 0 and stats.constant_mask[0]


def test_zscore_needs_two_rows():
    with pytest.raises(DimensionError):
        fit_zscore(np.ones((1, 3)))


def test_zscore_dim_mismatch():
    with pytest.raises(DimensionError):
        apply_zscore(np.ones(3), fit_zscore(np.ones((2, 2))))


def test_reflection_negates_zscore(rng):
    x = rng.integers(0, 256, (30, 5)).astype(float)
    sp, sn = fit_zscore(x), fit_zscore(255 - x)
    assert np.allclose(sn.mean, 255 - sp.mean, rtol=0, atol=1e-12)
    assert np.allclose(sn.std, sp.std, rtol=1e-13)
    assert np.allclose(apply_zscore(255 - x, sn), -apply_zscore(x, sp), rtol=1e-12, atol=1e-13)


def test_stats_json_round_trip(rng):
    stats = fit_zscore(rng.standard_normal((5, 4)))
    back = ZScoreStats.from_dict(stats.to_dict())
    assert np.array_equal(back.mean, stats.mean) and np.array_equal(back.std, stats.std)


def test_reducer_dims_and_identity(rng):
    r = fit_reducer("subsample", 30720, out_dim_for_ratio(30720, 1 / 20), seed=1)
    assert r.out_dim == 1536
    assert len(np.unique(r.indices)) == 1536 and np.all(np.diff(r.indices) > 0)
    ident = fit_reducer("identity", 7, 7)
    v = rng.standard_normal(7)
    assert np.array_equal(apply_reducer(ident, v), v)


@pytest.mark.parametrize("kind", ["subsample", "gaussian"])
def test_reducer_seeded(kind):
    a, b = fit_reducer(kind, 64, 16, 3), fit_reducer(kind, 64, 16, 3)
    c = fit_reducer(kind, 64, 16, 4)
    if kind == "subsample":
        assert np.array_equal(a.indices, b.indices) and not np.array_equal(a.indices, c.indices)
    else:
        assert np.array_equal(a.matrix, b.matrix) and not np.array_equal(a.matrix, c.matrix)


@pytest.mark.parametrize("in_dim, out_dim", [(5, 6), (5, 0)])
def test_reducer_bad_dims(in_dim, out_dim):
    with pytest.raises(ConfigError):
        fit_reducer("subsample", in_dim, out_dim)


def test_apply_subsample_and_gaussian():
    r = Reducer.from_indices([0, 2], 3)
    assert apply_reducer(r, np.array([7.0, 8.0, 9.0])).tolist() == [7.0, 9.0]
    g = fit_reducer("gaussian", 10, 4, 0)
    assert np.all(apply_reducer(g, np.zeros(10)) == 0)
    with pytest.raises(DimensionError):
        apply_reducer(g, np.zeros(9))


def test_gaussian_reducer_distance_concentration():
    r = fit_reducer("gaussian", 1024, 256, seed=5)
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, 1000, 1024))
    ratio = ((apply_reducer(r, a) - apply_reducer(r, b)) ** 2).sum(1) / ((a - b) ** 2).sum(1)
    assert np.mean((ratio >= 0.7) & (ratio <= 1.3)) >= 0.99


def test_reducer_json_round_trip():
    for r in (fit_reducer("subsample", 50, 10, 2), fit_reducer("gaussian", 20, 5, 2), fit_reducer("identity", 4, 4)):
        back = Reducer.from_dict(r.to_dict())
        v = np.arange(r.in_dim, dtype=float)
        assert np.array_equal(apply_reducer(back, v), apply_reducer(r, v))
    assert "matrix" not in fit_reducer("gaussian", 20, 5, 2).to_dict()


def test_pull_back_identity_map_and_size():
    r = fit_reducer("subsample", 64, 10, 1)
    pmap = induced_pixel_map(keygen(0), 8, 8, 8)
    ident = type(pmap)(np.arange(64), np.zeros(64, bool))
    assert np.array_equal(pull_back_indices(r, ident), r.indices)
    assert len(pull_back_indices(r, pmap)) == 10
    with pytest.raises(ConfigError):
        pull_back_indices(fit_reducer("identity", 64, 64), pmap)


def _zscore_pair(images, key, block=8):
    xp = flatten(images)
    xe = flatten(encrypt(images, key, block))
    return apply_zscore(xp, fit_zscore(xp)), apply_zscore(xe, fit_zscore(xe))


def test_encryption_is_signed_permutation_after_zscore():
    ds = synth_dataset(4, 10, 32, 32, seed=1)
    key = keygen(17)
    sp = to_signed_permutation(induced_pixel_map(key, 32, 32, 8))
    zp, ze = _zscore_pair(ds.images, key)
    np.testing.assert_allclose(ze, sp.apply(zp), rtol=1e-12, atol=1e-12)


@given(st.integers(0, 2**63), st.integers(0, 2**32))
@settings(max_examples=15, deadline=None)
def test_inner_products_and_distances_preserved(key_seed, data_seed):
    imgs = np.random.default_rng(data_seed).integers(0, 256, (12, 16, 16), dtype=np.uint8)
    imgs[:, :8, :8] = 77  # a constant block: zero-variance features
    zp, ze = _zscore_pair(imgs, keygen(key_seed))
    assert np.max(np.abs(ze @ ze.T - zp @ zp.T)) < 1e-9
    dp = ((zp[:, None] - zp[None]) ** 2).sum(-1)
    de = ((ze[:, None] - ze[None]) ** 2).sum(-1)
    assert np.max(np.abs(np.sqrt(dp) - np.sqrt(de))) < 1e-9


@pytest.mark.parametrize("key_seed", [0, 1, 2])
def test_subsample_pull_back_gram(key_seed):
    ds = synth_dataset(4, 10, 32, 32, seed=key_seed)
    key = keygen(key_seed)
    r = fit_reducer("subsample", 1024, 128, seed=key_seed + 100)
    back = Reducer.from_indices(pull_back_indices(r, induced_pixel_map(key, 32, 32, 8)), 1024)
    ze = FeaturePipeline(r).fit_transform(flatten(encrypt(ds.images, key, 8)))
    zp = FeaturePipeline(back).fit_transform(flatten(ds.images))
    for kind in ("linear", "rbf"):
        spec = KernelSpec(kind)
        assert np.max(np.abs(gram(spec, ze) - gram(spec, zp))) < 1e-9


def test_pipeline_requires_fit():
    with pytest.raises(ConfigError):
        FeaturePipeline(fit_reducer("identity", 3, 3)).transform(np.zeros(3))
