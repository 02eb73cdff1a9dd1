"""Counter-based random streams.

Every draw is a pure function of ``(seed, stream, index)``: the stream key is
derived by hashing the seed and stream id, and draw ``i`` is the SplitMix64
output ``mix(key + (i + 1) * GOLDEN)``. Only 64-bit integer arithmetic is
involved, so sequences are identical on every platform and numpy version.

Sampling without replacement uses Robert Floyd's algorithm (one bounded draw
per selected element, drawn in increasing ``j`` order) and returns the chosen
indices sorted.
"""

import math

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z):
    """SplitMix64 finalizer on a Python int."""
    z &= MASK
    z = ((z ^ (z >> 30)) * _M1) & MASK
    z = ((z ^ (z >> 27)) * _M2) & MASK
    return z ^ (z >> 31)


def _mix64_array(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))


def _tag(value):
    if isinstance(value, str):
        h = 0xCBF29CE484222325
        for byte in value.encode():
            h = ((h ^ byte) * 0x100000001B3) & MASK
        return h
    return int(value) & MASK


class RngStream:
    """A reproducible stream of 64-bit draws keyed by ``(seed, stream)``."""

    def __init__(self, seed, stream=0):
        self.seed = int(seed) & MASK
        self.stream = int(stream) & MASK
        self._key = mix64(mix64(self.seed) ^ mix64(self.stream + GOLDEN))
        self.counter = 0

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream}, counter={self.counter})"

    def spawn(self, *tags):
        """Child stream whose id depends on this stream's id and ``tags``."""
        sid = self.stream
        for tag in tags:
            sid = mix64(sid ^ mix64(_tag(tag) + GOLDEN))
        return RngStream(self.seed, sid)

    def next_u64(self):
        self.counter += 1
        return mix64(self._key + self.counter * GOLDEN)

    def raw(self, size):
        """``size`` consecutive draws as a uint64 array."""
        start = self.counter + 1
        self.counter += size
        idx = np.arange(start, start + size, dtype=np.uint64)
        with np.errstate(over="ignore"):
            state = np.uint64(self._key) + idx * np.uint64(GOLDEN)
        return _mix64_array(state)

    def uniform(self, size=None):
        """Doubles in [0, 1) with 53 random bits."""
        if size is None:
            return (self.next_u64() >> 11) * 2.0**-53
        return (self.raw(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, size):
        """Standard normals by the Box-Muller transform."""
        half = (size + 1) // 2
        u1 = 1.0 - self.uniform(half)  # in (0, 1]
        u2 = self.uniform(half)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * math.pi * u2), r * np.sin(2 * math.pi * u2)])
        return z[:size]

    def randbelow(self, bound):
        """Exactly uniform integer in ``[0, bound)`` by rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % bound

    def sample_without_replacement(self, n, k):
        """Uniform random ``k``-subset of ``range(n)``, sorted (Floyd's algorithm)."""
        if not 0 <= k <= n:
            raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
        if k == n:
            return np.arange(n, dtype=np.int64)
        chosen = set()
        for j in range(n - k, n):
            t = self.randbelow(j + 1)
            chosen.add(j if t in chosen else t)
        return np.array(sorted(chosen), dtype=np.int64)

    def permutation(self, n):
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.array(perm, dtype=np.int64)

    def categorical(self, cumulative):
        """Index drawn from the law whose CDF is ``cumulative`` (last entry 1)."""
        u = self.uniform()
        idx = int(np.searchsorted(cumulative, u, side="right"))
        return min(idx, len(cumulative) - 1)


def hashed_uniform(seed, ids):
    """Stateless uniforms in [0, 1) for integer draw ids under ``seed``."""
    key = mix64(mix64(int(seed) & MASK) ^ 0xD1B54A32D192ED03)
    ids = np.asarray(ids, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = np.uint64(key) + (ids + np.uint64(1)) * np.uint64(GOLDEN)
    return (_mix64_array(state) >> np.uint64(11)).astype(np.float64) * 2.0**-53
