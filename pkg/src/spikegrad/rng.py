"""Deterministic counter-based random numbers (SplitMix64).

Every random draw in this library routes through :class:`Rng` so that a run
is a pure function of its seed.  The generator is the SplitMix64 finalizer
applied to ``seed + k * GOLDEN`` for a monotonically increasing draw counter
``k``; it has no hidden state besides that counter, is identical on every
platform, and batches of any size can be produced in one vectorized call.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# float64 has a 53-bit mantissa; top 53 bits of the u64 give uniform [0, 1)
_INV_2_53 = 1.0 / float(1 << 53)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer over an array of uint64 counters."""
    with np.errstate(over="ignore"):
        z = x * np.uint64(1)  # copy
        z ^= z >> np.uint64(30)
        z *= _MIX1
        z ^= z >> np.uint64(27)
        z *= _MIX2
        z ^= z >> np.uint64(31)
    return z


class Rng:
    """Seeded deterministic generator.

    Two instances with the same seed produce the same sequence of draws,
    independent of draw batch sizes in between only if the draw *calls*
    match; the counter advances by the number of values consumed.
    """

    def __init__(self, seed: int):
        self.seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = np.uint64(0)

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(1, n + 1, dtype=np.uint64) + self._counter
        with np.errstate(over="ignore"):
            stream = self.seed + idx * _GOLDEN
        self._counter += np.uint64(n)
        return _splitmix64(stream)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray | float:
        """Uniform draws in [low, high)."""
        shape = () if size is None else (tuple(size) if isinstance(size, (tuple, list)) else (size,))
        n = int(np.prod(shape)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        out = low + (high - low) * u
        return float(out[0]) if size is None else out.reshape(shape)

    def normal(self, size=None) -> np.ndarray | float:
        """Standard normal draws via Box-Muller (two uniforms per pair)."""
        shape = () if size is None else (tuple(size) if isinstance(size, (tuple, list)) else (size,))
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u = (self._raw(2 * m) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        u1 = u[:m]
        u2 = u[m:]
        r = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 in (0, 1], so log is finite
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return float(z[0]) if size is None else z.reshape(shape)

    def integers(self, low: int, high: int, size=None) -> np.ndarray | int:
        """Integer draws in [low, high). Modulo reduction; span must be < 2^32."""
        span = int(high) - int(low)
        if span <= 0:
            raise ValueError("integers() needs high > low")
        if span >= 1 << 32:
            raise ValueError("integer span too large")
        shape = () if size is None else (tuple(size) if isinstance(size, (tuple, list)) else (size,))
        n = int(np.prod(shape)) if shape else 1
        vals = (self._raw(n) % np.uint64(span)).astype(np.int64) + int(low)
        return int(vals[0]) if size is None else vals.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic shuffle of arange(n) by sorting random 64-bit keys."""
        keys = self._raw(n)
        return np.argsort(keys, kind="stable")

    def spawn(self, tag: int) -> "Rng":
        """Derive an independent child stream (e.g. per epoch or per worker)."""
        with np.errstate(over="ignore"):
            mixed = self.seed + np.uint64(tag) * _MIX2
        child_seed = _splitmix64(np.array([mixed], dtype=np.uint64))[0]
        return Rng(int(child_seed))


def uniform_fanin_init(rng: Rng, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Weight init: uniform in +/- sqrt(1/fan_in)."""
    bound = float(np.sqrt(1.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape)
