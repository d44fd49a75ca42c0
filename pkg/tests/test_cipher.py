import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etcml.cipher import (
    EtcKey,
    cipher_plan,
    decrypt,
    dihedral_block,
    dihedral_inverse,
    encrypt,
    induced_pixel_map,
    keygen,
    load_key,
    negpos_block,
    save_key,
    to_signed_permutation,
)
from etcml.errors import DimensionError

images = st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1)).map(
    lambda t: np.random.default_rng(t[2]).integers(0, 256, (8 * t[0], 8 * t[1]), dtype=np.uint8)
)
keys = st.integers(0, 2**64 - 1).map(keygen)


def test_keygen_deterministic():
    assert keygen(0) == keygen(0)


def test_keygen_pinned_values():
    assert keygen(0).to_dict() == {
        "k1": "7b2c18fc7784b954",
        "k2": "dc9bf176619bcc7f",
        "k3": "de0b0168f3a628c6",
    }
    assert keygen(1).k1 == 0x68C3657180350804
    assert keygen(0).k1 != keygen(1).k1


def test_key_file_round_trip(tmp_path):
    key = keygen()
    save_key(key, tmp_path / "k.json", block=8)
    loaded, block = load_key(tmp_path / "k.json")
    assert loaded == key and block == 8
    d = json.loads((tmp_path / "k.json").read_text())
    assert set(d) == {"k1", "k2", "k3", "block"}
    assert all(len(d[k]) == 16 for k in ("k1", "k2", "k3"))


def test_negpos():
    b = np.array([[100, 37]], np.uint8)
    assert negpos_block(b, 1).tolist() == [[155, 218]]
    assert negpos_block(b, 0).tolist() == [[100, 37]]
    assert np.array_equal(negpos_block(negpos_block(b, 1), 1), b)


def test_dihedral_conventions():
    b = np.array([[1, 2], [3, 4]])
    assert dihedral_block(b, 0).tolist() == [[1, 2], [3, 4]]
    assert dihedral_block(b, 1).tolist() == [[3, 1], [4, 2]]
    assert dihedral_block(b, 2).tolist() == [[4, 3], [2, 1]]
    assert dihedral_block(b, 4).tolist() == [[2, 1], [4, 3]]


def test_dihedral_group_has_eight_distinct_elements_and_inverses(rng):
    b = rng.integers(0, 256, (4, 4))
    seen = {dihedral_block(b, t).tobytes() for t in range(8)}
    assert len(seen) == 8
    for t in range(8):
        assert np.array_equal(dihedral_block(dihedral_block(b, t), dihedral_inverse(t)), b)


def test_dihedral_rejects_non_square():
    with pytest.raises(DimensionError):
        dihedral_block(np.zeros((2, 3)), 1)


def test_round_trip_many(rng):
    for _ in range(100):
        img = rng.integers(0, 256, (32, 32), dtype=np.uint8)
        key = keygen(int(rng.integers(2**63)))
        assert np.array_equal(decrypt(encrypt(img, key, 8), key, 8), img)


@given(images, keys, st.sampled_from([1, 2, 4, 8]))
@settings(max_examples=60, deadline=None)
def test_round_trip_property(img, key, block):
    assert np.array_equal(decrypt(encrypt(img, key, block), key, block), img)


def test_encrypt_is_deterministic_and_preserves_shape(rng):
    img = rng.integers(0, 256, (16, 24), dtype=np.uint8)
    a = encrypt(img, keygen(3), 8)
    assert a.shape == img.shape
    assert np.array_equal(a, encrypt(img, keygen(3), 8))


def test_batch_matches_single(rng):
    imgs = rng.integers(0, 256, (5, 16, 16), dtype=np.uint8)
    key = keygen(4)
    batch = encrypt(imgs, key, 8)
    for img, enc in zip(imgs, batch):
        assert np.array_equal(encrypt(img, key, 8), enc)


@given(images, keys)
@settings(max_examples=40, deadline=None)
def test_folded_histogram_preserved(img, key):
    # every pixel is moved and possibly reflected about 127.5
    fold = lambda a: np.sort(np.minimum(a, 255 - a).ravel())
    assert np.array_equal(fold(encrypt(img, key, 8)), fold(img))


def test_wrong_key_fails_to_decrypt():
    img = np.random.default_rng(7).integers(0, 256, (32, 32), dtype=np.uint8)
    enc = encrypt(img, keygen(7), 8)
    assert not np.array_equal(decrypt(enc, keygen(8), 8), img)


def test_wrong_block_size_never_crashes():
    img = np.random.default_rng(1).integers(0, 256, (32, 32), dtype=np.uint8)
    key = keygen(1)
    enc = encrypt(img, key, 8)
    assert not np.array_equal(decrypt(enc, key, 4), img)
    with pytest.raises(DimensionError):
        decrypt(enc, key, 12)


@pytest.mark.parametrize("shape, block", [((30, 32), 8), ((32, 32), 0), ((32, 32), -8)])
def test_encrypt_rejects_bad_geometry(shape, block):
    with pytest.raises(DimensionError):
        encrypt(np.zeros(shape, np.uint8), keygen(0), block)


def test_rekeying_one_component_changes_only_its_stage():
    base = keygen(10)
    other = keygen(11)
    n = 16
    p0 = cipher_plan(base, n)
    for field, attr in (("k1", "perm"), ("k2", "transform"), ("k3", "flip")):
        key = EtcKey(**{**base.__dict__, field: getattr(other, field)})
        p = cipher_plan(key, n)
        for a in ("perm", "transform", "flip"):
            same = np.array_equal(getattr(p, a), getattr(p0, a))
            assert same == (a != attr)


def test_induced_map_relation(rng):
    for _ in range(5):
        key = keygen(int(rng.integers(2**63)))
        pmap = induced_pixel_map(key, 48, 32, 8)
        assert np.array_equal(np.sort(pmap.perm), np.arange(48 * 32))
        for _ in range(20):
            img = rng.integers(0, 256, (32, 48), dtype=np.uint8)
            flat = img.ravel().astype(int)
            enc = encrypt(img, key, 8).ravel().astype(int)
            expected = np.where(pmap.flip, 255 - flat, flat)
            assert np.array_equal(enc[pmap.perm], expected)


def test_induced_flip_constant_per_source_block():
    pmap = induced_pixel_map(keygen(5), 32, 16, 8)
    flip = pmap.flip.reshape(2, 8, 4, 8).transpose(0, 2, 1, 3).reshape(8, 64)
    assert np.all(flip == flip[:, :1])
    assert 0 < flip[:, 0].sum() < 8  # both branches occur for this key


def test_signed_permutation_properties(rng):
    sp = to_signed_permutation(induced_pixel_map(keygen(2), 16, 16, 4))
    v = rng.standard_normal(256)
    assert np.isclose(np.linalg.norm(sp.apply(v)), np.linalg.norm(v), rtol=1e-14)
    assert np.array_equal(sp.apply_inverse(sp.apply(v)), v)
    assert np.array_equal(sp.inverse().apply(sp.apply(v)), v)
    m = sp.matrix()
    assert np.allclose(m @ m.T, np.eye(256))
    assert np.allclose(m @ v, sp.apply(v))


def test_signed_permutation_without_flips():
    pmap = induced_pixel_map(keygen(2), 16, 16, 4)
    pmap = type(pmap)(pmap.perm, np.zeros_like(pmap.flip))
    assert np.all(to_signed_permutation(pmap).sign == 1)
