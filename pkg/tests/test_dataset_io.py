import json

import numpy as np
import pytest

from etcml.dataset_io import (
    LabeledDataset,
    SplitSpec,
    load_dataset_dir,
    read_manifest,
    read_pgm,
    read_ppm,
    rgb_to_plane_concat,
    rgb_to_ycbcr,
    save_dataset_dir,
    split_per_identity,
    synth_dataset,
    write_manifest,
    write_pgm,
    write_ppm,
)
from etcml.errors import (
    InvalidImageError,
    MaxvalError,
    TruncatedDataError,
    UnsupportedFormatError,
    ConfigError,
)


def test_read_pgm_header_and_pixels(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5 2 2 255\n" + bytes([0, 64, 128, 255]))
    img = read_pgm(p)
    assert img.shape == (2, 2)
    assert img.tolist() == [[0, 64], [128, 255]]


def test_read_pgm_with_comment(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n3 1\n255\n" + bytes([1, 2, 3]))
    assert read_pgm(p).tolist() == [[1, 2, 3]]


@pytest.mark.parametrize(
    "payload, error",
    [
        (b"P2 2 2 255\n0 64 128 255\n", UnsupportedFormatError),
        (b"P5 2 2 65535\n" + bytes(8), MaxvalError),
        (b"P5 2 2 255\n" + bytes(3), TruncatedDataError),
        (b"P5 2", TruncatedDataError),
    ],
)
def test_read_pgm_errors(tmp_path, payload, error):
    p = tmp_path / "bad.pgm"
    p.write_bytes(payload)
    with pytest.raises(error):
        read_pgm(p)


def test_read_pgm_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_pgm(tmp_path / "nope.pgm")


def test_write_single_pixel_exact_bytes(tmp_path):
    p = tmp_path / "one.pgm"
    write_pgm(np.zeros((1, 1), np.uint8), p)
    assert p.read_bytes() == b"P5 1 1 255\n\x00"


def test_pgm_round_trip_many(tmp_path, rng):
    for i in range(100):
        h, w = rng.integers(1, 40, size=2)
        img = rng.integers(0, 256, (h, w), dtype=np.uint8)
        p = tmp_path / f"{i}.pgm"
        write_pgm(img, p)
        assert np.array_equal(read_pgm(p), img)


def test_write_rejects_empty(tmp_path):
    with pytest.raises(InvalidImageError):
        write_pgm(np.zeros((0, 0), np.uint8), tmp_path / "e.pgm")


def test_write_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_pgm(np.zeros((2, 2), np.uint8), tmp_path / "missing" / "x.pgm")


def test_ppm_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (5, 7, 3), dtype=np.uint8)
    write_ppm(img, tmp_path / "c.ppm")
    assert np.array_equal(read_ppm(tmp_path / "c.ppm"), img)


def test_gray_pixel_maps_to_neutral_chroma():
    for v in (0, 17, 128, 200, 255):
        ycc = rgb_to_ycbcr(np.full((1, 1, 3), v, np.uint8))
        assert ycc[0, 0].tolist() == [v, 128, 128]


def test_plane_concat_shape_and_order(rng):
    rgb = rng.integers(0, 256, (4, 4, 3), dtype=np.uint8)
    out = rgb_to_plane_concat(rgb)
    assert out.shape == (4, 12)
    ycc = rgb_to_ycbcr(rgb)
    assert np.array_equal(out[:, :4], ycc[..., 0])
    assert np.array_equal(out[:, 4:8], ycc[..., 1])
    assert np.array_equal(out[:, 8:], ycc[..., 2])


def test_y_plane_against_direct_formula(rng):
    rgb = rng.integers(0, 256, (6, 9, 3), dtype=np.uint8)
    r, g, b = (rgb[..., k].astype(float) for k in range(3))
    direct = np.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5)
    assert np.array_equal(rgb_to_plane_concat(rgb)[:, :9], direct.astype(np.uint8))
    # gray content survives within rounding
    gray = rng.integers(0, 256, (6, 9), dtype=np.uint8)
    y = rgb_to_plane_concat(np.repeat(gray[..., None], 3, axis=2))[:, :9]
    assert np.max(np.abs(y.astype(int) - gray)) <= 1


def _labeled(counts):
    ids = np.repeat(np.arange(len(counts)), counts)
    return LabeledDataset(np.zeros((len(ids), 2, 2), np.uint8), ids)


def test_split_half_of_64():
    train, test = split_per_identity(_labeled([64, 64, 64]), SplitSpec(1, 0.5))
    assert np.bincount(train.identity).tolist() == [32, 32, 32]
    assert np.bincount(test.identity).tolist() == [32, 32, 32]


def test_split_odd_count_uses_ceil():
    train, test = split_per_identity(_labeled([5]), SplitSpec(1, 0.5))
    assert (len(train), len(test)) == (3, 2)


def test_split_deterministic_disjoint_complete():
    ds = synth_dataset(3, 7, 8, 8, seed=2)
    ds.paths = [f"{i}.pgm" for i in range(len(ds))]
    a = split_per_identity(ds, SplitSpec(42))
    b = split_per_identity(ds, SplitSpec(42))
    assert a[0].paths == b[0].paths and a[1].paths == b[1].paths
    assert set(a[0].paths).isdisjoint(a[1].paths)
    assert sorted(a[0].paths + a[1].paths) == sorted(ds.paths)
    c = split_per_identity(ds, SplitSpec(43))
    assert c[0].paths != a[0].paths


def test_split_requires_two_images():
    with pytest.raises(ConfigError):
        split_per_identity(_labeled([3, 1]), SplitSpec())


def test_synth_shape_and_labels():
    ds = synth_dataset(4, 10, 16, 16)
    assert ds.images.shape == (40, 16, 16)
    assert sorted(set(ds.identity.tolist())) == [0, 1, 2, 3]


def test_synth_deterministic():
    a = synth_dataset(3, 4, 8, 8, seed=5)
    b = synth_dataset(3, 4, 8, 8, seed=5)
    assert a.images.tobytes() == b.images.tobytes()


def test_synth_rejects_zero_dims():
    with pytest.raises(InvalidImageError):
        synth_dataset(2, 2, 0, 8)


def test_synth_large_separation_is_1nn_separable():
    ds = synth_dataset(4, 10, 16, 16, separation=5.0, seed=3)
    x = ds.images.reshape(len(ds), -1).astype(float)
    d = ((x[:, None] - x[None]) ** 2).sum(-1)
    np.fill_diagonal(d, np.inf)
    assert np.mean(ds.identity[d.argmin(1)] == ds.identity) > 0.95


def test_dataset_dir_and_manifest_round_trip(tmp_path):
    ds = synth_dataset(2, 3, 8, 8)
    paths = save_dataset_dir(ds, tmp_path / "data")
    loaded = load_dataset_dir(tmp_path / "data")
    assert loaded.paths == paths
    assert np.array_equal(loaded.images, ds.images)
    assert np.array_equal(loaded.identity, ds.identity)
    write_manifest(paths, tmp_path / "m.json")
    assert read_manifest(tmp_path / "m.json") == paths
    assert json.loads((tmp_path / "m.json").read_text()) == paths
