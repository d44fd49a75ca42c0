"""Netpbm codecs, color plane concatenation, dataset loading and splitting.

Images are plain numpy arrays: grayscale is ``(height, width)`` uint8 and
RGB is ``(height, width, 3)`` uint8, both row-major.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    ConfigError,
    InvalidImageError,
    MaxvalError,
    TruncatedDataError,
    UnsupportedFormatError,
)
from .prng import SplitMix64


def validate_gray(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidImageError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer) or arr.min() < 0 or arr.max() > 255:
            raise InvalidImageError("pixel values must be 8-bit integers")
        arr = arr.astype(np.uint8)
    return arr


def validate_rgb(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidImageError(f"expected (height, width, 3), got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise InvalidImageError("RGB pixels must be uint8")
    return arr


# -- Netpbm ---------------------------------------------------------------

def _read_header(data: bytes, n_fields: int):
    """Parse whitespace-separated header tokens (with ``#`` comments).

    Returns the tokens and the offset of the first raster byte.
    """
    tokens = []
    pos = 0
    while len(tokens) < n_fields:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedDataError("header ended early")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def _decode(data: bytes, magic: bytes, channels: int) -> np.ndarray:
    if data[:2] != magic:
        raise UnsupportedFormatError(
            f"expected magic {magic.decode()}, got {data[:2]!r}"
        )
    tokens, offset = _read_header(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise UnsupportedFormatError("malformed header") from None
    if maxval != 255:
        raise MaxvalError(f"maxval must be 255, got {maxval}")
    if width <= 0 or height <= 0:
        raise InvalidImageError("zero-sized image")
    n = width * height * channels
    raster = data[offset : offset + n]
    if len(raster) < n:
        raise TruncatedDataError(f"expected {n} pixel bytes, found {len(raster)}")
    arr = np.frombuffer(raster, dtype=np.uint8).copy()
    shape = (height, width) if channels == 1 else (height, width, channels)
    return arr.reshape(shape)


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM with maxval 255."""
    return _decode(Path(path).read_bytes(), b"P5", 1)


def read_ppm(path) -> np.ndarray:
    """Read a binary (P6) PPM with maxval 255."""
    return _decode(Path(path).read_bytes(), b"P6", 3)


def _atomic_write(path, payload: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_pgm(image, path):
    img = validate_gray(image)
    h, w = img.shape
    _atomic_write(path, b"P5 %d %d 255\n" % (w, h) + img.tobytes())


def write_ppm(image, path):
    img = validate_rgb(image)
    h, w, _ = img.shape
    _atomic_write(path, b"P6 %d %d 255\n" % (w, h) + img.tobytes())


# -- color ----------------------------------------------------------------

def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def rgb_to_ycbcr(image) -> np.ndarray:
    """Full-range BT.601 conversion, rounded half away from zero to uint8."""
    rgb = validate_rgb(image).astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    out = np.stack([y, cb, cr], axis=-1)
    return np.clip(_round_half_away(out), 0, 255).astype(np.uint8)


def rgb_to_plane_concat(image) -> np.ndarray:
    """Convert to YCbCr and place the Y, Cb, Cr planes side by side.

    An ``h x w`` color image becomes an ``h x 3w`` grayscale image.
    """
    ycc = rgb_to_ycbcr(image)
    return np.concatenate([ycc[..., 0], ycc[..., 1], ycc[..., 2]], axis=1)


# -- datasets -------------------------------------------------------------

@dataclass
class LabeledDataset:
    """A stack of equally sized grayscale images with identity labels.

    ``client`` optionally assigns each image to a key-holding client.
    ``paths`` keeps the source file of each image when loaded from disk.
    """

    images: np.ndarray  # (n, h, w) uint8
    identity: np.ndarray  # (n,) int
    client: np.ndarray | None = None
    paths: list | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images)
        if self.images.ndim != 3 or self.images.dtype != np.uint8:
            raise InvalidImageError("images must be an (n, h, w) uint8 stack")
        self.identity = np.asarray(self.identity, dtype=np.int64)
        if len(self.identity) != len(self.images):
            raise ConfigError("images and identity lengths differ")
        if self.client is not None:
            self.client = np.asarray(self.client, dtype=np.int64)
            if len(self.client) != len(self.images):
                raise ConfigError("images and client lengths differ")
        if self.paths is not None and len(self.paths) != len(self.images):
            raise ConfigError("images and paths lengths differ")

    def __len__(self):
        return len(self.images)

    @property
    def shape(self):
        return self.images.shape[1:]

    def subset(self, index) -> LabeledDataset:
        index = np.asarray(index, dtype=np.int64)
        return LabeledDataset(
            images=self.images[index],
            identity=self.identity[index],
            client=None if self.client is None else self.client[index],
            paths=None if self.paths is None else [self.paths[i] for i in index],
        )


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    train_fraction: Fraction | float = Fraction(1, 2)

    def fraction(self) -> Fraction:
        f = Fraction(self.train_fraction).limit_denominator(10**6)
        if not 0 < f < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        return f


def split_indices(identity, spec: SplitSpec):
    """Per-identity seeded shuffle; the first ``ceil(f * n)`` go to train.

    Identities are visited in ascending label order and all draws come
    from one ``SplitMix64(spec.seed)`` stream.
    """
    identity = np.asarray(identity)
    frac = spec.fraction()
    rng = SplitMix64(spec.seed)
    train, test = [], []
    for label in np.unique(identity):
        members = np.flatnonzero(identity == label)
        if len(members) < 2:
            raise ConfigError(f"identity {label} has fewer than 2 images")
        shuffled = members[rng.permutation(len(members))]
        n_train = math.ceil(frac * len(members))
        train.extend(shuffled[:n_train].tolist())
        test.extend(shuffled[n_train:].tolist())
    return np.asarray(sorted(train), dtype=np.int64), np.asarray(sorted(test), dtype=np.int64)


def split_per_identity(dataset: LabeledDataset, spec: SplitSpec):
    train, test = split_indices(dataset.identity, spec)
    return dataset.subset(train), dataset.subset(test)


def _smooth_field(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    field = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    return field / field.std()


def synth_dataset(
    n_identities: int = 8,
    per_identity: int = 20,
    width: int = 32,
    height: int = 32,
    separation: float = 0.3,
    seed: int = 0,
    noise_scale: float = 12.0,
) -> LabeledDataset:
    """Labeled face surrogate: smooth identity templates plus per-sample noise.

    Every image is ``128 + base + separation * noise_scale * template_id +
    noise``, where ``base`` is a smooth field shared by all identities and
    the noise mixes a smooth component, a random brightness ramp and white
    noise, all with standard deviation on the order of ``noise_scale``.
    Identity structure therefore grows linearly with ``separation``.
    """
    if min(n_identities, per_identity) < 1:
        raise ConfigError("counts must be at least 1")
    if width <= 0 or height <= 0:
        raise InvalidImageError("zero dimensions")
    if separation < 0:
        raise ConfigError("separation must be non-negative")
    rng = np.random.default_rng(seed)
    shape = (height, width)
    sigma = max(height, width) / 8.0
    base = 30.0 * _smooth_field(rng, shape, sigma)
    yy, xx = np.mgrid[0:height, 0:width]
    yy = yy / max(height - 1, 1) - 0.5
    xx = xx / max(width - 1, 1) - 0.5
    images, labels = [], []
    for ident in range(n_identities):
        template = separation * noise_scale * _smooth_field(rng, shape, sigma)
        for _ in range(per_identity):
            ramp = rng.standard_normal(2) @ np.stack([xx.ravel(), yy.ravel()])
            noise = (
                0.6 * _smooth_field(rng, shape, sigma / 2)
                + 0.6 * ramp.reshape(shape)
                + 0.5 * rng.standard_normal(shape)
            )
            img = 128.0 + base + template + noise_scale * noise
            images.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
            labels.append(ident)
    return LabeledDataset(np.stack(images), np.asarray(labels))


def load_dataset_dir(root) -> LabeledDataset:
    """Load ``root/<identity>/<image>.pgm``; identities are labeled 0.. in
    sorted directory-name order."""
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"dataset directory {root} does not exist")
    images, labels, paths = [], [], []
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    for label, sub in enumerate(dirs):
        for f in sorted(sub.glob("*.pgm")):
            images.append(read_pgm(f))
            labels.append(label)
            paths.append(f.relative_to(root).as_posix())
    if not images:
        raise ConfigError(f"no .pgm files under {root}")
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise InvalidImageError(f"images differ in size: {sorted(shapes)}")
    return LabeledDataset(np.stack(images), np.asarray(labels), paths=paths)


def save_dataset_dir(dataset: LabeledDataset, root) -> list:
    """Write a dataset as ``root/<identity>/<index>.pgm``; returns the
    relative paths in dataset order."""
    root = Path(root)
    paths = []
    for i, (img, label) in enumerate(zip(dataset.images, dataset.identity)):
        rel = f"id{label:03d}/{i:05d}.pgm"
        (root / rel).parent.mkdir(parents=True, exist_ok=True)
        write_pgm(img, root / rel)
        paths.append(rel)
    return paths


def write_manifest(paths, path):
    _atomic_write(path, (json.dumps(list(paths), indent=1) + "\n").encode())


def read_manifest(path) -> list:
    return json.loads(Path(path).read_text())
