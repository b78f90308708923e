"""Deterministic seed derivation for parallel trials.

Campaign trial t gets seed ``splitmix64(master + t * GOLDEN)``; device and
source generators inside one trial are derived with distinct stream tags.
The mix is the standard splitmix64 finalizer, a 64-bit avalanche permutation,
so neighbouring trial indices yield statistically unrelated generator seeds
while remaining reproducible across platforms.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(v: int) -> int:
    v = (v + _GOLDEN) & _MASK
    v = ((v ^ (v >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    v = ((v ^ (v >> 27)) * 0x94D049BB133111EB) & _MASK
    return (v ^ (v >> 31)) & _MASK


def derive_seed(master: int, index: int, tag: int = 0) -> int:
    """Seed for sub-stream `index` (trial) and `tag` (role within a trial)."""
    return splitmix64((master & _MASK) + index * _GOLDEN + tag * 0x1D8E4E27C47D124F)
