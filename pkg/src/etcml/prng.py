"""Deterministic SplitMix64 generator.

Every keyed random decision in the package (block permutations, dihedral
draws, flip bits, dataset splits, reducer realizations) goes through this
generator so results are identical on every platform.

SplitMix64 keeps a Weyl-sequence state ``s_i = seed + (i + 1) * GAMMA``
and outputs ``mix64(s_i)``. Because the state is counter-like, a block of
outputs can also be produced with vectorized numpy arithmetic; the
sequential and vectorized paths return the same numbers.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential SplitMix64 stream with unbiased bounded draws."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def bounded(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection sampling."""
        if n <= 0:
            raise ValueError("bound must be positive")
        # reject the top partial bucket so x % n is unbiased
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def bit(self) -> int:
        return self.next_u64() >> 63

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.bounded(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.asarray(perm, dtype=np.int64)

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        """First ``k`` positions of a forward partial Fisher-Yates shuffle."""
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        pool = list(range(n))
        for i in range(k):
            j = i + self.bounded(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return np.asarray(pool[:k], dtype=np.int64)


def u64_block(seed: int, start: int, count: int) -> np.ndarray:
    """Outputs ``start .. start + count - 1`` of ``SplitMix64(seed)``.

    Equal to calling ``next_u64`` repeatedly on a fresh generator after
    skipping ``start`` draws.
    """
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(int(seed) & MASK64) + idx * np.uint64(GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def normal_block(seed: int, start_pair: int, n_pairs: int) -> np.ndarray:
    """``2 * n_pairs`` standard normals via Box-Muller.

    Pair ``p`` consumes stream outputs ``2p`` and ``2p + 1``; the first
    maps to ``(0, 1]`` (never zero, so the log is finite), the second to
    ``[0, 1)``.
    """
    raw = u64_block(seed, 2 * start_pair, 2 * n_pairs).reshape(n_pairs, 2)
    scale = 2.0 ** -53
    u1 = ((raw[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * scale
    u2 = (raw[:, 1] >> np.uint64(11)).astype(np.float64) * scale
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty((n_pairs, 2))
    out[:, 0] = radius * np.cos(angle)
    out[:, 1] = radius * np.sin(angle)
    return out.reshape(-1)


def derive_seed(seed: int, tag: int) -> int:
    """Domain-separated child seed."""
    return mix64((int(seed) ^ mix64(int(tag) & MASK64)) + GAMMA)
