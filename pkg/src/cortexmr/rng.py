"""Counter-based uniform draws keyed by (seed, stream, neuron, iteration, draw).

Every random number in a simulation is a pure function of its key, so the
MapReduce path and the sequential oracle see the same values no matter how
work is split or ordered.

Mixing function (bit-exact contract for other implementations)::

    mix(z)  = splitmix64 finalizer applied to (z + 0x9E3779B97F4A7C15) mod 2**64
    x = mix(seed)
    x = mix(x ^ stream)      # Build = 1, Thalamic = 2, Fault = 3
    x = mix(x ^ neuron_id)
    x = mix(x ^ iter)
    x = mix(x ^ draw)
    uniform01 = (x >> 11) * 2**-53

where the splitmix64 finalizer is::

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 2.0 ** -53


class Stream(enum.IntEnum):
    BUILD = 1
    THALAMIC = 2
    FAULT = 3


@dataclass(frozen=True)
class RandomKey:
    seed: int
    stream: Stream
    neuron_id: int
    iter: int = 0
    draw: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        for name in ("neuron_id", "iter", "draw"):
            value = getattr(self, name)
            if not 0 <= value <= MASK64:
                raise ValueError(f"{name} must be in [0, 2**64), got {value}")


def _mix(z: int) -> int:
    z = (z + GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def hash_key(seed: int, stream: int, neuron_id: int, iter: int = 0, draw: int = 0) -> int:
    x = _mix(seed)
    x = _mix(x ^ int(stream))
    x = _mix(x ^ neuron_id)
    x = _mix(x ^ iter)
    return _mix(x ^ draw)


def uniform(seed: int, stream: int, neuron_id: int, iter: int = 0, draw: int = 0) -> float:
    """Uniform draw in [0, 1) for the given key fields (no validation)."""
    return (hash_key(seed, stream, neuron_id, iter, draw) >> 11) * _INV53


def uniform01(key: RandomKey) -> float:
    return uniform(key.seed, key.stream, key.neuron_id, key.iter, key.draw)


# -- vectorised path -------------------------------------------------------

def _mix_array(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64
    z = z + np.uint64(GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def uniform_array(seed, stream, neuron_id, iter=0, draw=0) -> np.ndarray:
    """Broadcasting version of :func:`uniform`; bit-identical to the scalar path."""
    parts = np.broadcast_arrays(
        *(np.asarray(p, dtype=np.uint64) for p in (seed, neuron_id, iter, draw))
    )
    seed_a, nid, it, dr = parts
    x = _mix_array(seed_a.copy())
    x = _mix_array(x ^ np.uint64(int(stream)))
    x = _mix_array(x ^ nid)
    x = _mix_array(x ^ it)
    x = _mix_array(x ^ dr)
    return (x >> np.uint64(11)).astype(np.float64) * _INV53
