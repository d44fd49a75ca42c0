"""Flattening, dimensionality reduction and z-score normalization.

The central fact this module carries: if the encrypted feature matrix is
a pixel permutation of the plain one with some columns reflected
(``x -> 255 - x``), then z-scoring each side with its own statistics makes
the encrypted vectors exactly a signed permutation of the plain vectors,
so inner products and distances agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .prng import SplitMix64, normal_block

REDUCER_KINDS = ("identity", "subsample", "gaussian")


def flatten(images) -> np.ndarray:
    """Row-major pixels as float64; ``(h, w) -> (h*w,)``, ``(n, h, w) -> (n, h*w)``."""
    arr = np.asarray(images)
    if arr.ndim == 2:
        return arr.reshape(-1).astype(np.float64)
    if arr.ndim == 3:
        return arr.reshape(len(arr), -1).astype(np.float64)
    raise DimensionError(f"cannot flatten array of shape {arr.shape}")


@dataclass(frozen=True)
class ZScoreStats:
    mean: np.ndarray
    std: np.ndarray

    @property
    def constant_mask(self) -> np.ndarray:
        return self.std == 0

    @property
    def dim(self) -> int:
        return len(self.mean)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d) -> ZScoreStats:
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_zscore(data) -> ZScoreStats:
    """Per-feature mean and population standard deviation."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DimensionError("fit_zscore needs a 2-D matrix with at least 2 rows")
    mean = x.mean(axis=0)
    std = np.sqrt(((x - mean) ** 2).mean(axis=0))
    return ZScoreStats(mean, std)


def apply_zscore(v, stats: ZScoreStats) -> np.ndarray:
    """Standardize a vector or the rows of a matrix; constant features map to 0."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != stats.dim:
        raise DimensionError(f"feature dim {v.shape[-1]} != stats dim {stats.dim}")
    const = stats.constant_mask
    safe_std = np.where(const, 1.0, stats.std)
    z = (v - stats.mean) / safe_std
    return np.where(const, 0.0, z)


@dataclass(frozen=True)
class Reducer:
    """Linear map from ``in_dim`` to ``out_dim`` features.

    ``indices`` is set for ``subsample`` and ``matrix`` for ``gaussian``
    (shape ``(out_dim, in_dim)``, entries N(0, 1) / sqrt(out_dim)).
    """

    kind: str
    in_dim: int
    out_dim: int
    seed: int = 0
    indices: np.ndarray | None = None
    matrix: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_indices(cls, indices, in_dim: int, seed: int = 0) -> Reducer:
        """Subsample reducer reading exactly ``indices``, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        if len(np.unique(idx)) != len(idx) or idx.min() < 0 or idx.max() >= in_dim:
            raise ConfigError("indices must be distinct and within range")
        return cls("subsample", in_dim, len(idx), seed, indices=idx)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim, "seed": self.seed}
        if self.kind == "subsample":
            d["indices"] = self.indices.tolist()
        return d

    @classmethod
    def from_dict(cls, d) -> Reducer:
        if d["kind"] == "subsample" and "indices" in d:
            return cls.from_indices(d["indices"], d["in_dim"], d.get("seed", 0))
        return fit_reducer(d["kind"], d["in_dim"], d["out_dim"], d.get("seed", 0))


def out_dim_for_ratio(in_dim: int, ratio) -> int:
    """``round(in_dim * ratio)`` clipped to ``[1, in_dim]``."""
    return int(min(in_dim, max(1, round(in_dim * float(ratio)))))


def gaussian_matrix(in_dim: int, out_dim: int, seed: int) -> np.ndarray:
    # each row owns a fixed slice of the stream so rows can be regenerated independently
    pairs_per_row = (in_dim + 1) // 2
    m = np.empty((out_dim, in_dim))
    for r in range(out_dim):
        m[r] = normal_block(seed, r * pairs_per_row, pairs_per_row)[:in_dim]
    return m / np.sqrt(out_dim)


def fit_reducer(kind: str, in_dim: int, out_dim: int, seed: int = 0) -> Reducer:
    if kind not in REDUCER_KINDS:
        raise ConfigError(f"unknown reducer kind {kind!r}")
    if not 1 <= out_dim <= in_dim:
        raise ConfigError(f"need 1 <= out_dim <= in_dim, got {out_dim} and {in_dim}")
    if kind == "identity":
        if out_dim != in_dim:
            raise ConfigError("identity reducer requires out_dim == in_dim")
        return Reducer(kind, in_dim, out_dim, seed)
    if kind == "subsample":
        idx = np.sort(SplitMix64(seed).sample_without_replacement(in_dim, out_dim))
        return Reducer(kind, in_dim, out_dim, seed, indices=idx)
    return Reducer(kind, in_dim, out_dim, seed, matrix=gaussian_matrix(in_dim, out_dim, seed))


def apply_reducer(reducer: Reducer, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != reducer.in_dim:
        raise DimensionError(f"input dim {v.shape[-1]} != reducer in_dim {reducer.in_dim}")
    if reducer.kind == "identity":
        return v.copy()
    if reducer.kind == "subsample":
        return v[..., reducer.indices]
    return v @ reducer.matrix.T


def pull_back_indices(reducer: Reducer, pixel_map) -> np.ndarray:
    """Plain-domain coordinates read by a subsampler applied to ciphertexts.

    Entry ``k`` is the source pixel that lands on encrypted coordinate
    ``reducer.indices[k]``; order follows the reducer's indices.
    """
    if reducer.kind != "subsample":
        raise ConfigError("pull_back_indices requires a subsample reducer")
    inverse = np.empty_like(pixel_map.perm)
    inverse[pixel_map.perm] = np.arange(len(pixel_map.perm))
    return inverse[reducer.indices]


@dataclass
class FeaturePipeline:
    """Reduce, then z-score with statistics fitted on the training rows."""

    reducer: Reducer
    stats: ZScoreStats | None = None

    def fit(self, train_features) -> FeaturePipeline:
        self.stats = fit_zscore(apply_reducer(self.reducer, train_features))
        return self

    def transform(self, features) -> np.ndarray:
        if self.stats is None:
            raise ConfigError("pipeline is not fitted")
        return apply_zscore(apply_reducer(self.reducer, features), self.stats)

    def fit_transform(self, train_features) -> np.ndarray:
        return self.fit(train_features).transform(train_features)
