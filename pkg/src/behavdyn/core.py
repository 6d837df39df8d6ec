"""Planar vectors and the seeded, counter-based random stream.

The random stream is a pure value: ``(seed, counter)``.  Word ``k`` of a
stream is ``splitmix64(key + (k + 1) * GAMMA)`` where ``key`` is the
SplitMix64 finalizer applied to the seed.  Because every word is a function
of ``(seed, k)`` alone, draws can be taken one at a time or in vectorized
blocks with identical results, and a stream can be serialized mid-sequence
and restored exactly.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "Vec2",
    "RandomStream",
    "vec_combine",
    "vec_norm_dir",
    "stream_draw",
    "derive_seed",
]

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / 9007199254740992.0


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise InvalidArgumentError(f"non-finite input: {v!r}")


@dataclass(frozen=True)
class Vec2:
    """Immutable planar vector."""

    x: float
    y: float

    def __add__(self, other):
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        return Vec2(self.x - other.x, self.y - other.y)

    def __neg__(self):
        return Vec2(-self.x, -self.y)

    def __mul__(self, c):
        return Vec2(c * self.x, c * self.y)

    __rmul__ = __mul__

    def norm(self):
        return math.hypot(self.x, self.y)

    def unit(self):
        return vec_norm_dir(self)[1]

    def as_tuple(self):
        return (self.x, self.y)


def vec_combine(c1, v1, c2, v2):
    """Return ``c1*v1 + c2*v2`` component-wise.

    Covers addition (``c1 = c2 = 1``), the flip/negation used by the update
    rules (``c2 = -1``) and scaling (``c2 = 0``).
    """
    _check_finite(c1, c2, v1.x, v1.y, v2.x, v2.y)
    return Vec2(c1 * v1.x + c2 * v2.x, c1 * v1.y + c2 * v2.y)


def vec_norm_dir(v):
    """Return ``(norm, direction)``; the zero vector has direction ``(0, 0)``."""
    _check_finite(v.x, v.y)
    n = math.hypot(v.x, v.y)
    if n == 0.0:
        return 0.0, Vec2(0.0, 0.0)
    return n, Vec2(v.x / n, v.y / n)


# -- random stream -----------------------------------------------------------


def _mix64(z):
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & _MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z):
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_MUL1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_MUL2)
    return z ^ (z >> np.uint64(31))


def _key_to_int(key):
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK64
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(parent, *keys):
    """Stable 64-bit child seed from a parent seed and identifying keys.

    Keys may be integers or strings.  The derivation only uses integer
    arithmetic modulo 2**64 and BLAKE2b for strings, so it is identical on
    every platform.
    """
    h = _mix64(_key_to_int(parent) ^ 0x5851F42D4C957F2D)
    for key in keys:
        h = _mix64((h ^ _mix64(_key_to_int(key) + _GAMMA)) + _GAMMA)
    return h


@dataclass(frozen=True)
class RandomStream:
    """Counter-based uniform/normal generator.

    Attributes
    ----------
    seed : int
        64-bit unsigned seed.
    counter : int
        Number of 64-bit words consumed so far.
    """

    seed: int
    counter: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _MASK64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        if self.counter < 0:
            raise InvalidArgumentError("counter must be non-negative")

    @property
    def _key(self):
        return _mix64(int(self.seed))

    def _words(self, n):
        k = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        z = np.uint64(self._key) + k * np.uint64(_GAMMA)
        return _mix64_array(z)

    def draw(self):
        """Return ``(u, next_stream)`` with ``u`` uniform on [0, 1)."""
        z = (self._key + (self.counter + 1) * _GAMMA) & _MASK64
        u = (_mix64(z) >> 11) * _INV_2_53
        return u, RandomStream(self.seed, self.counter + 1)

    def uniforms(self, n):
        """Return ``(array of n uniforms, next_stream)``.

        Equal to ``n`` successive calls of :meth:`draw`.
        """
        if n < 0:
            raise InvalidArgumentError("n must be non-negative")
        w = self._words(n)
        u = (w >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return u, RandomStream(self.seed, self.counter + n)

    def normals(self, n):
        """Return ``(array of n standard normals, next_stream)``.

        Box-Muller on consecutive uniform pairs ``(u1, u2)`` using only the
        cosine branch: ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``.  Consumes
        ``2 n`` words.
        """
        u, nxt = self.uniforms(2 * n)
        u1 = u[0::2]
        u2 = u[1::2]
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        return z, nxt

    def spawn(self, *keys):
        """Independent child stream keyed by ``keys``."""
        return RandomStream(derive_seed(self.seed, *keys))

    def to_dict(self):
        return {"seed": int(self.seed), "counter": int(self.counter)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["seed"]), int(d["counter"]))


def stream_draw(s):
    """Pure transition ``s -> (u, s')``."""
    return s.draw()
