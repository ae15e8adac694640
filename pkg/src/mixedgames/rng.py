"""Counter-based deterministic random numbers.

Every variate is a pure function of an integer key tuple, so any draw can
be reproduced in isolation: there is no generator state to advance.  The
mixer is the splitmix64 finalizer applied to each key component in turn;
uniforms take the top 53 bits.  Distinct lanes (the last key component)
give independent streams for the two players' per-interval coordinates.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_SEED0 = 0x8AC7230489E80000


def _mix64(z: int) -> int:
    z = (z * 0xBF58476D1CE4E5B9) & _MASK
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return z


def mix_key(*keys: int) -> int:
    """Collapse an integer key tuple into one well-mixed 64-bit word."""
    h = _SEED0
    for k in keys:
        h = (h + _GAMMA + (int(k) & _MASK)) & _MASK
        h = _mix64(h)
    return h


def unit_uniform(*keys: int) -> float:
    """Uniform draw in [0, 1) determined entirely by the key tuple."""
    return (mix_key(*keys) >> 11) * 2.0 ** -53


def unit_uniform_array(base_keys: tuple, indices, lane: int) -> np.ndarray:
    """Vectorized `unit_uniform(*base_keys, i, lane)` over an index array.

    Bitwise identical to the scalar path.
    """
    h = _SEED0
    for k in base_keys:
        h = (h + _GAMMA + (int(k) & _MASK)) & _MASK
        h = _mix64(h)
    idx = np.asarray(indices, dtype=np.uint64)
    z = np.full(idx.shape, h, dtype=np.uint64)
    z = _mix_vec(z + np.uint64(_GAMMA) + idx)
    z = _mix_vec(z + np.uint64(_GAMMA) + np.uint64(lane & _MASK))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def _mix_vec(z: np.ndarray) -> np.ndarray:
    z = z * np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z = z * np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z
