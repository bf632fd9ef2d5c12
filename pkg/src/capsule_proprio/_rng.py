"""Counter-based random streams.

Noise in the simulator is keyed by (seed, sensor, timestep) rather than drawn
from a sequential generator, so frames can be produced in any order or in
parallel and still come out bit-identical.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = x + _GOLDEN
        x = (x ^ (x >> np.uint64(30))) * _M1
        x = (x ^ (x >> np.uint64(27))) * _M2
        x = x ^ (x >> np.uint64(31))
    return x


def hash_keys(*keys):
    """Mix integer keys (broadcastable arrays) into one uint64 per element."""
    h = np.zeros(np.broadcast(*[np.asarray(k) for k in keys]).shape, dtype=np.uint64)
    for k in keys:
        k = np.asarray(k).astype(np.int64).astype(np.uint64)
        h = _splitmix64(h ^ k)
    return h


def uniform(*keys):
    """Uniform doubles in the open interval (0, 1)."""
    h = hash_keys(*keys)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) / float(1 << 53)


def normal(*keys):
    """Standard normal draws via Box-Muller on two hashed uniforms."""
    u1 = uniform(*keys, 1)
    u2 = uniform(*keys, 2)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def derive_seed(*keys):
    """Derive a 32-bit child seed from integer keys."""
    return int(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys]).generate_state(1)[0])
