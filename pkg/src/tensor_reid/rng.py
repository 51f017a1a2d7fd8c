"""Portable, seedable random stream.

Draw ``i`` (0-based) of a stream with seed ``s`` is the SplitMix64 output
``mix(s + (i + 1) * GOLDEN)`` taken modulo 2**64, where ``mix`` is the
standard SplitMix64 finalizer. Because each draw depends only on its
counter, blocks of draws are generated with vectorized uint64 arithmetic
and the sequence is identical on every platform and in every language that
implements the same three lines.

* uniform: ``(u64 >> 11) * 2**-53`` in [0, 1)
* normal: Box-Muller on consecutive uniform pairs ``(a, b)``, emitting
  ``r cos(2 pi b)`` then ``r sin(2 pi b)`` with ``r = sqrt(-2 ln(1 - a))``
* permutation: stable argsort of ``n`` uniform draws
* child streams: seed ``mix(s ^ mix((index + 1) * CHILD))``
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
CHILD = 0xD1B54A32D192ED03
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix64(value):
    """SplitMix64 finalizer on a Python int."""
    return int(_mix(np.array([value & MASK64], dtype=np.uint64))[0])


class SplitMix64:
    def __init__(self, seed=0):
        self.seed = int(seed) & MASK64
        self.counter = 0

    def spawn(self, index):
        """Independent stream derived from ``(seed, index)``."""
        return SplitMix64(mix64(self.seed ^ mix64(((int(index) + 1) * CHILD) & MASK64)))

    def next_u64(self, size):
        size = int(size)
        start = self.counter + 1
        self.counter += size
        with np.errstate(over="ignore"):
            steps = np.arange(start, start + size, dtype=np.uint64)
            state = np.uint64(self.seed) + steps * np.uint64(GOLDEN)
            return _mix(state)

    def uniform(self, size):
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape))
        out = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return out.reshape(shape)

    def normal(self, size):
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape))
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        angle = 2.0 * np.pi * u[:, 1]
        z = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]).ravel()
        return z[:n].reshape(shape)

    def permutation(self, n):
        return np.argsort(self.uniform(int(n)), kind="stable")
