"""Deterministic seed derivation.

Python's builtin hash() is salted per process, so stage seeds are derived
with 64-bit FNV-1a instead. Every randomized component hashes the one
user-facing seed with a stage label; per-node walk streams additionally mix
in the node id (see _kernels.node_stream_state for the kernel-side twin).
"""

from __future__ import annotations

_FNV_OFFSET64 = 0xCBF29CE484222325
_FNV_PRIME64 = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET64
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME64) & _MASK64
    return h


def derive_seed(seed: int, label: str) -> int:
    """Mix a base seed with a stage label into a stable 64-bit seed."""
    h = _fnv1a64(int(seed & _MASK64).to_bytes(8, "little"))
    h ^= _fnv1a64(label.encode("utf-8"))
    h = (h * _FNV_PRIME64) & _MASK64
    # final avalanche (splitmix64 finalizer) so nearby seeds decorrelate
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (h ^ (h >> 31)) & _MASK64
