"""Counter-based random variates with platform-stable streams.

All randomness in the package flows through :class:`NormalStream`, which maps
Philox counter output through the inverse normal CDF.  Each variate is a pure
function of ``(seed, position)``: no rejection step, no platform-dependent
state, so (seed, index) -> variate is bit-stable everywhere.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    # SplitMix64 finalizer; a bijection on 64-bit integers.
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(master_seed: int, index: int) -> int:
    """Derive the ``index``-th child seed of ``master_seed``.

    Deterministic, and injective in ``index`` for a fixed master seed: the
    child is the SplitMix64 output at stream position ``index`` of a stream
    keyed by the master, and every stage of that map is a bijection.
    """
    if index < 0:
        raise ValueError("index must be nonnegative")
    state = (_mix64(int(master_seed)) + (index + 1) * _GOLDEN) & _MASK64
    return _mix64(state)


class NormalStream:
    """Sequential stream of standard normal variates for one seed.

    Uniforms are drawn from a Philox counter generator as
    ``u = (raw >> 11 + 0.5) * 2**-53`` (strictly inside (0, 1)) and mapped
    through ``ndtri``.  Successive calls continue the stream, so chunked
    consumption yields the same variates as one big draw.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._bitgen = Philox(key=self.seed)

    def normals(self, shape) -> np.ndarray:
        if isinstance(shape, (int, np.integer)):
            shape = (int(shape),)
        size = 1
        for s in shape:
            size *= int(s)
        raw = self._bitgen.random_raw(size)
        u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        return ndtri(u).reshape(shape)
