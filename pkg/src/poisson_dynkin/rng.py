"""Counter-based random numbers keyed by (seed, path, draw, channel).

Every draw is a pure function of its coordinates, so a path's random numbers
do not depend on how paths are batched or split across workers.  The
generator is Philox4x32-10 (Salmon et al., SC'11), evaluated on whole numpy
arrays of counters at once.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "philox4x32",
    "uniform_pair",
    "exponential",
    "standard_normal",
    "CH_GAP_SUP",
    "CH_GAP_INF",
    "CH_GAUSS",
    "CH_COLOR",
    "CH_AUX",
]

# Sub-channels.  Disjoint channels never share a counter.
CH_GAP_SUP = 0  # inter-arrival gaps, common / sup / merged stream
CH_GAP_INF = 1  # inter-arrival gaps, inf-only stream
CH_GAUSS = 2  # diffusion increments
CH_COLOR = 3  # two-colour marks of the merged stream
CH_AUX = 4  # anything else (e.g. single-step DPE sampling)

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(c0, c1, c2, c3, k0, k1, rounds: int = 10):
    """Philox4x32 block function on arrays of 32-bit counter words.

    Inputs broadcast against each other.  Returns four uint64 arrays holding
    the 32-bit output words.
    """
    x0, x1, x2, x3 = (np.asarray(c, dtype=np.uint64) & _MASK for c in (c0, c1, c2, c3))
    x0, x1, x2, x3 = np.broadcast_arrays(x0, x1, x2, x3)
    k0 = np.uint64(int(k0) & 0xFFFFFFFF)
    k1 = np.uint64(int(k1) & 0xFFFFFFFF)
    for i in range(rounds):
        if i:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * x0
        p1 = _M1 * x2
        hi0, lo0 = p0 >> _SHIFT, p0 & _MASK
        hi1, lo1 = p1 >> _SHIFT, p1 & _MASK
        x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
    return x0, x1, x2, x3


def _split_seed(seed: int) -> tuple[int, int]:
    seed = int(seed)
    if seed < 0 or seed >= 1 << 64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


def uniform_pair(seed: int, path, draw, channel: int):
    """Two independent U[0, 1) doubles (53-bit) per (path, draw) coordinate."""
    k0, k1 = _split_seed(seed)
    path = np.asarray(path, dtype=np.uint64)
    w0, w1, w2, w3 = philox4x32(path & _MASK, draw, channel, path >> _SHIFT, k0, k1)
    scale = 1.0 / 9007199254740992.0  # 2**-53
    u1 = ((w0 >> np.uint64(5)) * np.uint64(67108864) + (w1 >> np.uint64(6))).astype(np.float64) * scale
    u2 = ((w2 >> np.uint64(5)) * np.uint64(67108864) + (w3 >> np.uint64(6))).astype(np.float64) * scale
    return u1, u2


def exponential(seed: int, path, draw, channel: int, rate: float):
    """Exponential(rate) variates; the second uniform is returned as a spare."""
    u1, u2 = uniform_pair(seed, path, draw, channel)
    return -np.log1p(-u1) / rate, u2


def standard_normal(seed: int, path, draw, channel: int = CH_GAUSS):
    """Standard normals by Box-Muller (cosine branch only)."""
    u1, u2 = uniform_pair(seed, path, draw, channel)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
