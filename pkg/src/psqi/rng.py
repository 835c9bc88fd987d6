"""Frozen pseudo-random streams.

Every random draw in the package goes through :class:`GaussianStream` so that
results depend only on explicit integer seeds and not on numpy's
``Generator`` method implementations, which numpy does not promise to keep
stable between releases.

Contract (recorded in output metadata as :data:`PRNG_ID`):

* bits: PCG64 (``numpy.random.PCG64``) seeded through ``SeedSequence(seed)``,
  consumed with ``random_raw``; both are stable across numpy versions.
* uniforms: the top 53 bits of each 64-bit word, ``u1 = (k + 1) / 2**53`` in
  (0, 1] and ``u2 = k / 2**53`` in [0, 1).
* normals: Box-Muller, ``r = sqrt(-2 ln u1)``, emitting ``r cos(2 pi u2)`` then
  ``r sin(2 pi u2)`` for each consumed pair of words.
"""
from __future__ import annotations

import hashlib

import numpy as np

PRNG_ID = "pcg64-seedsequence/box-muller-v1"

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0**-53


def normalize_seed(seed: int) -> int:
    """Map any Python int onto the unsigned 64-bit range."""
    return int(seed) & _MASK64


def derive_seed(master_seed: int, window_id: str | int, stream: str) -> int:
    """Mix a master seed, a window identifier and a stream tag into a 64-bit seed.

    The mixing function is BLAKE2b (8-byte digest) over the UTF-8 text
    ``"<master_seed>/<window_id>/<stream>"``, read little-endian.
    """
    text = f"{normalize_seed(master_seed)}/{window_id}/{stream}".encode("utf-8")
    digest = hashlib.blake2b(text, digest_size=8).digest()
    return int.from_bytes(digest, "little")


class GaussianStream:
    """Sequential standard-normal draws from a seeded PCG64 bit stream."""

    def __init__(self, seed: int):
        self.seed = normalize_seed(seed)
        self._bits = np.random.PCG64(self.seed)
        self._spare: float | None = None

    def _pairs(self, n_pairs: int) -> np.ndarray:
        raw = self._bits.random_raw(2 * n_pairs).reshape(n_pairs, 2) >> np.uint64(11)
        u1 = (raw[:, 0].astype(np.float64) + 1.0) * _TWO_M53
        u2 = raw[:, 1].astype(np.float64) * _TWO_M53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * n_pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        """Uniforms on [low, high) from the top 53 bits of fresh words."""
        shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
        n = int(np.prod(shape)) if shape else 1
        raw = self._bits.random_raw(n) >> np.uint64(11)
        u = low + (high - low) * (raw.astype(np.float64) * _TWO_M53)
        return float(u[0]) if size is None else u.reshape(shape)

    def integers(self, low: int, high: int) -> int:
        """One integer in [low, high)."""
        return low + min(int(self.uniform() * (high - low)), high - low - 1)

    def standard_normal(self, size) -> np.ndarray:
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape))
        head = []
        if self._spare is not None and n > 0:
            head.append(self._spare)
            self._spare = None
        need = n - len(head)
        if need > 0:
            drawn = self._pairs((need + 1) // 2)
            if drawn.size > need:
                self._spare = float(drawn[-1])
                drawn = drawn[:need]
            values = np.concatenate([np.asarray(head, dtype=np.float64), drawn])
        else:
            values = np.asarray(head[:n], dtype=np.float64)
        return values.reshape(shape)
