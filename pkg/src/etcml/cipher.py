"""Block-based EtC image encryption.

Encryption of a grayscale image with square ``b x b`` blocks:

1. the blocks are shuffled with a Fisher-Yates permutation keyed by ``k1``;
2. each block (in output order) gets one of the 8 dihedral transforms,
   drawn from the ``k2`` stream;
3. each block (in output order) is inverted (``p -> 255 - p``) when a bit
   drawn from the ``k3`` stream is set.

Output block ``i`` is taken from source block ``perm[i]``. Because every
stage only moves pixels or reflects them about 127.5, the whole cipher is
a pixel permutation plus per-block flips; ``induced_pixel_map`` returns it.
"""

from __future__ import annotations

import json
import secrets
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset_io import _atomic_write
from .errors import ConfigError, DimensionError, InvalidImageError
from .prng import MASK64, SplitMix64, mix64

# domain tags for deriving the three key components from a master seed
_KEY_TAGS = (0x4B31_6574_6331_0001, 0x4B32_6574_6332_0002, 0x4B33_6574_6333_0003)


@dataclass(frozen=True)
class EtcKey:
    k1: int  # block permutation
    k2: int  # dihedral transforms
    k3: int  # negative-positive bits

    def __post_init__(self):
        for name in ("k1", "k2", "k3"):
            v = getattr(self, name)
            if not 0 <= v <= MASK64:
                raise ConfigError(f"{name} must be a 64-bit unsigned value")

    def to_dict(self, block: int | None = None) -> dict:
        d = {"k1": f"{self.k1:016x}", "k2": f"{self.k2:016x}", "k3": f"{self.k3:016x}"}
        if block is not None:
            d["block"] = int(block)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> EtcKey:
        try:
            return cls(*(int(d[k], 16) for k in ("k1", "k2", "k3")))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"malformed key: {exc}") from None


def keygen(seed: int | None = None) -> EtcKey:
    """Derive a key from a 64-bit master seed, or from system entropy."""
    if seed is None:
        seed = secrets.randbits(64)
    seed = int(seed) & MASK64
    return EtcKey(*(mix64(seed ^ tag) for tag in _KEY_TAGS))


def save_key(key: EtcKey, path, block: int = 8):
    _atomic_write(path, (json.dumps(key.to_dict(block), indent=2) + "\n").encode())


def load_key(path):
    """Returns ``(key, block)``; ``block`` is None when the file omits it."""
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"key file {path} is not JSON: {exc}") from None
    return EtcKey.from_dict(d), d.get("block")


# -- block primitives -----------------------------------------------------

def negpos_block(block, r: int) -> np.ndarray:
    block = np.asarray(block, dtype=np.uint8)
    return 255 - block if r else block.copy()


def dihedral_block(block, t: int) -> np.ndarray:
    """Element ``t`` of D4 on the last two axes.

    0 identity, 1-3 rotation by 90/180/270 degrees clockwise, 4 horizontal
    mirror, 5-7 horizontal mirror after rotation by 90/180/270 clockwise.
    """
    block = np.asarray(block)
    if block.ndim < 2 or block.shape[-1] != block.shape[-2]:
        raise DimensionError(f"dihedral transforms need square blocks, got {block.shape}")
    if not 0 <= t < 8:
        raise ValueError("t must be in 0..7")
    out = np.rot90(block, k=-(t % 4), axes=(-2, -1))
    if t >= 4:
        out = np.flip(out, axis=-1)
    return np.ascontiguousarray(out)


def dihedral_inverse(t: int) -> int:
    return (4 - t) % 4 if t < 4 else t


# -- whole-image cipher ---------------------------------------------------

@dataclass(frozen=True)
class BlockGeometry:
    block: int
    blocks_x: int
    blocks_y: int

    @classmethod
    def for_shape(cls, shape, block: int) -> BlockGeometry:
        height, width = shape[-2:]
        if block <= 0:
            raise DimensionError("block size must be positive")
        if width % block or height % block:
            raise DimensionError(
                f"image {width}x{height} is not divisible into {block}x{block} blocks"
            )
        return cls(block, width // block, height // block)

    @property
    def n_blocks(self) -> int:
        return self.blocks_x * self.blocks_y


@dataclass(frozen=True)
class CipherPlan:
    """Per-block decisions for one key and block count."""

    perm: np.ndarray  # output block i <- source block perm[i]
    transform: np.ndarray  # dihedral element per output block
    flip: np.ndarray  # negative-positive bit per output block


def cipher_plan(key: EtcKey, n_blocks: int) -> CipherPlan:
    perm = SplitMix64(key.k1).permutation(n_blocks)
    rng2 = SplitMix64(key.k2)
    transform = np.array([rng2.bounded(8) for _ in range(n_blocks)], dtype=np.int64)
    rng3 = SplitMix64(key.k3)
    flip = np.array([rng3.bit() for _ in range(n_blocks)], dtype=bool)
    return CipherPlan(perm, transform, flip)


def _to_blocks(arr: np.ndarray, geo: BlockGeometry) -> np.ndarray:
    lead = arr.shape[:-2]
    b = geo.block
    blocks = arr.reshape(*lead, geo.blocks_y, b, geo.blocks_x, b)
    blocks = np.moveaxis(blocks, -3, -2)  # (..., by, bx, b, b)
    return blocks.reshape(*lead, geo.n_blocks, b, b)


def _from_blocks(blocks: np.ndarray, geo: BlockGeometry) -> np.ndarray:
    lead = blocks.shape[:-3]
    b = geo.block
    arr = blocks.reshape(*lead, geo.blocks_y, geo.blocks_x, b, b)
    arr = np.moveaxis(arr, -2, -3)
    return arr.reshape(*lead, geo.blocks_y * b, geo.blocks_x * b)


def _apply_transforms(blocks: np.ndarray, transform: np.ndarray) -> np.ndarray:
    out = np.empty_like(blocks)
    for t in np.unique(transform):
        sel = transform == t
        out[..., sel, :, :] = dihedral_block(blocks[..., sel, :, :], int(t))
    return out


def _check_pixels(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim not in (2, 3) or arr.size == 0:
        raise InvalidImageError(f"expected an image or a stack of images, got {arr.shape}")
    if arr.dtype != np.uint8:
        raise InvalidImageError("pixels must be uint8")
    return arr


def scramble(arr, key: EtcKey, block: int) -> np.ndarray:
    """Apply only the pixel-moving stages (permutation + dihedral) to an
    array of any dtype."""
    arr = np.asarray(arr)
    geo = BlockGeometry.for_shape(arr.shape, block)
    plan = cipher_plan(key, geo.n_blocks)
    blocks = _to_blocks(arr, geo)[..., plan.perm, :, :]
    return _from_blocks(_apply_transforms(blocks, plan.transform), geo)


def encrypt(image, key: EtcKey, block: int = 8) -> np.ndarray:
    """Encrypt an ``(h, w)`` image or an ``(n, h, w)`` stack with one key."""
    img = _check_pixels(image)
    geo = BlockGeometry.for_shape(img.shape, block)
    plan = cipher_plan(key, geo.n_blocks)
    blocks = _apply_transforms(_to_blocks(img, geo)[..., plan.perm, :, :], plan.transform)
    blocks[..., plan.flip, :, :] = 255 - blocks[..., plan.flip, :, :]
    return _from_blocks(blocks, geo)


def decrypt(image, key: EtcKey, block: int = 8) -> np.ndarray:
    img = _check_pixels(image)
    geo = BlockGeometry.for_shape(img.shape, block)
    plan = cipher_plan(key, geo.n_blocks)
    blocks = _to_blocks(img, geo).copy()
    blocks[..., plan.flip, :, :] = 255 - blocks[..., plan.flip, :, :]
    inverse_t = np.array([dihedral_inverse(int(t)) for t in plan.transform])
    blocks = _apply_transforms(blocks, inverse_t)
    source = np.empty_like(blocks)
    source[..., plan.perm, :, :] = blocks
    return _from_blocks(source, geo)


# -- algebraic view -------------------------------------------------------

@dataclass(frozen=True)
class PixelMap:
    """Pixel-level action of encryption on flattened images.

    ``flatten(encrypt(I))[perm[j]]`` is ``255 - I[j]`` if ``flip[j]`` else
    ``I[j]``, where ``j`` indexes source pixels.
    """

    perm: np.ndarray
    flip: np.ndarray

    def apply(self, flat) -> np.ndarray:
        flat = np.asarray(flat)
        out = np.empty_like(flat)
        out[..., self.perm] = np.where(self.flip, 255 - flat, flat)
        return out


@dataclass(frozen=True)
class SignedPermutation:
    """The orthogonal map ``v -> S P v`` with ``(S P v)[perm[j]] = sign[j] v[j]``."""

    perm: np.ndarray
    sign: np.ndarray

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        out = np.empty_like(v)
        out[..., self.perm] = self.sign * v
        return out

    def apply_inverse(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        return self.sign * w[..., self.perm]

    def inverse(self) -> SignedPermutation:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(len(self.perm))
        return SignedPermutation(inv, self.sign[inv])

    def matrix(self) -> np.ndarray:
        n = len(self.perm)
        m = np.zeros((n, n))
        m[self.perm, np.arange(n)] = self.sign
        return m


def induced_pixel_map(key: EtcKey, width: int, height: int, block: int = 8) -> PixelMap:
    geo = BlockGeometry.for_shape((height, width), block)
    plan = cipher_plan(key, geo.n_blocks)
    source_index = np.arange(width * height, dtype=np.int64).reshape(height, width)
    moved = scramble(source_index, key, block).ravel()
    perm = np.empty_like(moved)
    perm[moved] = np.arange(moved.size)
    # flip bit of the output block each destination pixel lies in
    dest_flip = _from_blocks(
        np.broadcast_to(plan.flip[:, None, None], (geo.n_blocks, block, block)), geo
    ).ravel()
    return PixelMap(perm=perm, flip=dest_flip[perm])


def to_signed_permutation(pixel_map: PixelMap) -> SignedPermutation:
    sign = np.where(pixel_map.flip, -1.0, 1.0)
    return SignedPermutation(pixel_map.perm.copy(), sign)
