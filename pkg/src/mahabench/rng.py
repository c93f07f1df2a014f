"""Deterministic, portable random number generation.

Everything random in this package flows through :class:`Rng`, a counter-mode
splitmix64 generator.  The i-th raw output for a given seed is::

    mix64((seed + (i + 1) * 0x9E3779B97F4A7C15) mod 2**64)

where ``mix64`` is the splitmix64 finalizer

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

(all arithmetic modulo 2**64).  Because the stream is a pure function of
(seed, counter), draws are reproducible byte-for-byte across runs and
platforms; derived quantities (uniforms, Box-Muller normals) are IEEE-754
doubles and reproduce exactly wherever libm is correctly rounded.

Derived streams are decorrelated by reseeding:
``child = mix64(seed XOR mix64(tag + GOLDEN))``, folding one 64-bit tag at a
time.  String tags are hashed with FNV-1a (64-bit).
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U64 = np.uint64
_INV_2_53 = float(2.0**-53)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> _U64(30)
    z *= _U64(_MIX1)
    z ^= z >> _U64(27)
    z *= _U64(_MIX2)
    z ^= z >> _U64(31)
    return z


def mix64(z: int) -> int:
    """splitmix64 finalizer on a Python int (mod 2**64)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a hash of a string, used to turn names into stream tags."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


def derive_seed(seed: int, *tags: int | str) -> int:
    """Fold tags into ``seed`` to produce an independent child seed."""
    s = seed & MASK64
    for tag in tags:
        t = fnv1a64(tag) if isinstance(tag, str) else tag & MASK64
        s = mix64(s ^ mix64((t + GOLDEN) & MASK64))
    return s


class Rng:
    """Counter-mode splitmix64 stream.

    Instances are cheap; the whole state is (seed, counter).  All drawing
    methods consume a documented number of raw 64-bit outputs, so a given
    call sequence is reproducible by construction.
    """

    def __init__(self, seed: int):
        self._seed = seed & MASK64
        self._counter = 0

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw uint64 outputs."""
        start = self._counter + 1
        self._counter += n
        idx = np.arange(start, start + n, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = _U64(self._seed) + idx * _U64(GOLDEN)
            return _mix64_array(z)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in [0, 1), 53-bit resolution."""
        return (self.raw(n) >> _U64(11)).astype(np.float64) * _INV_2_53

    def normal(self, shape) -> np.ndarray:
        """Standard normals of the given shape via Box-Muller pairs."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        count = int(np.prod(shape)) if shape else 1
        pairs = (count + 1) // 2
        # u1 in (0, 1] so log() is finite; u2 in [0, 1).
        u1 = ((self.raw(pairs) >> _U64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = self.uniform(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:count]
        return z.reshape(shape)

    def below(self, bound: int) -> int:
        """One integer uniform on {0, ..., bound-1}."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        u = float(self.uniform(1)[0])
        return min(int(u * bound), bound - 1)

    def integers(self, lo: int, hi: int, n: int) -> np.ndarray:
        """``n`` integers uniform on the inclusive range {lo, ..., hi}."""
        if hi < lo:
            raise ValueError("empty range")
        span = hi - lo + 1
        vals = np.minimum((self.uniform(n) * span).astype(np.int64), span - 1)
        return vals + lo

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def spawn(self, *tags: int | str) -> "Rng":
        """Independent child stream keyed by tags (counter not shared)."""
        return Rng(derive_seed(self._seed, *tags))
