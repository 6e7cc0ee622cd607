"""Counter-based random streams.

Every random draw in the package comes from a Philox stream keyed by a seed and
a tuple of integers (experiment, method, frame index, ...).  Streams with
different keys are independent, so results never depend on scheduling order.

Uniforms take the top 53 bits of each raw 64-bit Philox word.  Normals use the
Marsaglia polar method on pairs of uniforms mapped to (-1, 1); rejected pairs
are discarded in draw order.  Only ``Philox.random_raw`` is relied upon, which
keeps frozen fixtures independent of numpy's higher-level sampling code.
"""

from __future__ import annotations

import hashlib

import numpy as np

_TWO53 = float(1 << 53)


def _key(seed: int, keys) -> np.ndarray:
    parts = [int(seed)] + [_as_int(k) for k in keys]
    ss = np.random.SeedSequence(entropy=parts[0] & ((1 << 128) - 1), spawn_key=tuple(p & 0xFFFFFFFF for p in parts[1:]))
    return ss.generate_state(2, dtype=np.uint64)


def _as_int(k) -> int:
    if isinstance(k, (int, np.integer)):
        return int(k)
    digest = hashlib.sha256(str(k).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


class Stream:
    """A deterministic random stream identified by ``(seed, *keys)``."""

    def __init__(self, seed: int, *keys):
        self.seed = int(seed)
        self.keys = keys
        self._bitgen = np.random.Philox(key=_key(seed, keys))

    def child(self, *keys) -> "Stream":
        return Stream(self.seed, *self.keys, *keys)

    def uniform(self, size, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        n = int(np.prod(size))
        raw = self._bitgen.random_raw(n)
        u = (raw >> np.uint64(11)).astype(np.float64) / _TWO53
        return (low + (high - low) * u).reshape(size)

    def normal(self, size) -> np.ndarray:
        n = int(np.prod(size))
        out = np.empty(n, dtype=np.float64)
        filled = 0
        while filled < n:
            need = n - filled
            pairs = max(16, int(need * 0.65) + 8)
            v = self.uniform((pairs, 2), -1.0, 1.0)
            s = v[:, 0] ** 2 + v[:, 1] ** 2
            ok = (s > 0.0) & (s < 1.0)
            v, s = v[ok], s[ok]
            f = np.sqrt(-2.0 * np.log(s) / s)
            draws = (v * f[:, None]).reshape(-1)
            take = min(need, draws.size)
            out[filled:filled + take] = draws[:take]
            filled += take
        return out.reshape(size)

    def complex_normal(self, size, variance: float = 1.0) -> np.ndarray:
        """CN(0, variance): real and imaginary parts each carry variance/2."""
        size = (size,) if np.isscalar(size) else tuple(size)
        g = self.normal(size + (2,)) * np.sqrt(variance / 2.0)
        return g[..., 0] + 1j * g[..., 1]

    def integers(self, low: int, high: int, size) -> np.ndarray:
        return np.floor(self.uniform(size, low, high)).astype(np.int64).clip(low, high - 1)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")

    def bits(self, size) -> np.ndarray:
        raw = self._bitgen.random_raw(int(np.prod(size)))
        return (raw >> np.uint64(63)).astype(np.uint8).reshape(size)
