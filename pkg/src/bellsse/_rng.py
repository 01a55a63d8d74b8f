"""Counter-free xoshiro256** generator usable inside numba kernels.

The kernels need a generator whose whole state is a plain uint64[4]
array, so it can live in a checkpoint file and make runs bit-for-bit
reproducible.  Seeding goes through numpy's SeedSequence, one spawn per
chain."""

from __future__ import annotations

import numpy as np
from numba import njit

_U64 = np.uint64


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << k) | (x >> (_U64(64) - k))


@njit(cache=True, inline="always")
def rng_next(state):
    """Advance the uint64[4] state, return 64 random bits."""
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    result = _rotl(s1 * _U64(5), _U64(7)) * _U64(9)
    t = s1 << _U64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, _U64(45))
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
    return result


@njit(cache=True, inline="always")
def rng_uniform(state):
    """Uniform in [0, 1) with 53 random bits."""
    return (rng_next(state) >> _U64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def rng_below(state, n):
    """Uniform integer in [0, n).  Fine for the small n used here."""
    return np.int64(rng_uniform(state) * n)


def make_state(seed) -> np.ndarray:
    """Fresh generator state from an int seed or a SeedSequence."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    state = ss.generate_state(4, dtype=np.uint64).copy()
    if not state.any():
        state[0] = 1
    return state


def spawn_states(seed, n: int) -> list[np.ndarray]:
    """Independent per-chain states derived from one master seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [make_state(child) for child in ss.spawn(n)]
