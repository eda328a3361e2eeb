"""Deterministic counter-based random streams for resampling.

The resampling engine needs the same draw sequence from every backend
(compiled or pure Python) on every platform, under any number of worker
threads.  NumPy's generators do not give that guarantee across internal
code paths, so we use SplitMix64: draw ``j`` of the stream keyed by ``key``
is ``mix(key + j * GAMMA)`` computed in 64-bit wrapping arithmetic.  Being
counter-based, a whole batch of draws vectorizes with no sequential state.

Sub-streams form a tree: ``derive(key, i)`` yields the key of child ``i``
using a second, unrelated mixing function so that child keys never collide
with draw values.  The bootstrap engine assigns one node per outer
replicate, per retry attempt, and per inner replicate, which makes results
independent of how work is scheduled across threads.
"""

from __future__ import annotations

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF

# SplitMix64 increment and finalizer constants.
GAMMA = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

# Key-derivation increment and finalizer constants (murmur3 variant);
# deliberately distinct from the draw path.
_DERIVE_GAMMA = 0xD1B54A32D192ED03
_DER_A = 0xFF51AFD7ED558CCD
_DER_B = 0xC4CEB9FE1A85EC53


def mix_draw(z: int) -> int:
    """SplitMix64 output function on one 64-bit state value."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK
    return z ^ (z >> 31)


def _mix_key(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 33)) * _DER_A) & _MASK
    z = ((z ^ (z >> 33)) * _DER_B) & _MASK
    return z ^ (z >> 33)


def derive(key: int, index: int) -> int:
    """Key of child ``index`` (>= 0) of the stream keyed by ``key``."""
    if index < 0:
        raise ValueError("child index must be non-negative")
    return _mix_key(key + (index + 1) * _DERIVE_GAMMA)


def root_key(seed: int) -> int:
    """Map a user seed (any 64-bit unsigned integer) to a root stream key."""
    if not 0 <= seed <= _MASK:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return _mix_key(seed ^ GAMMA)


def draws(key: int, count: int, start: int = 0) -> np.ndarray:
    """Draws ``start+1 .. start+count`` of stream ``key`` as uint64.

    Vectorized batch form of ``mix_draw(key + j*GAMMA)``; one stream yields
    the same values whether taken one at a time or in batches.
    """
    j = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(key & _MASK) + j * np.uint64(GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
    return z ^ (z >> np.uint64(31))


class Stream:
    """A positioned view of one SplitMix64 stream.

    Mutable (it tracks how many draws were consumed) and therefore not
    shared across threads; the bootstrap engine gives every work unit its
    own stream.
    """

    __slots__ = ("key", "_consumed")

    def __init__(self, key: int):
        self.key = key & _MASK
        self._consumed = 0

    @classmethod
    def from_seed(cls, seed: int) -> "Stream":
        return cls(root_key(seed))

    def take(self, count: int) -> np.ndarray:
        """Next ``count`` uint64 draws, advancing the stream position."""
        out = draws(self.key, count, start=self._consumed)
        self._consumed += count
        return out

    def indices(self, n: int, count: int) -> np.ndarray:
        """Next ``count`` uniform indices in ``[0, n)``."""
        return (self.take(count) % np.uint64(n)).astype(np.int64)

    def child(self, index: int) -> "Stream":
        """Independent sub-stream; does not consume draws from this one."""
        return Stream(derive(self.key, index))

    def __repr__(self) -> str:
        return f"Stream(key=0x{self.key:016x}, consumed={self._consumed})"
