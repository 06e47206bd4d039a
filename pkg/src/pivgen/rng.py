"""Counter-based random streams for scheduling-independent reproducibility.

Every draw is a pure function of ``(seed, stream tag, batch, pair, lane,
counter)``: there is no generator state to advance, so the emitted values do
not depend on thread count, evaluation order, or how work is partitioned.

The mix function is the splitmix64 output permutation (Steele et al.'s
constants). It is part of the on-disk contract: changing it changes every
generated dataset, so it must stay fixed across versions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

# Purpose tags. Distinct tags give statistically independent streams for the
# same (batch, pair) indices.
STREAM_POSITION = 0x01
STREAM_APPEARANCE = 0x02
STREAM_PERTURB = 0x03
STREAM_HIDE = 0x04
STREAM_NOISE = 0x05


def mix64(x: int) -> int:
    """splitmix64 finalizer on one 64-bit word (Python-int reference)."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX_A) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX_B) & _MASK64
    return x ^ (x >> 31)


def _fold(key: int, word: int) -> int:
    """Absorb one index word into a key. Non-commutative, so the fold order
    (stream, batch, pair, lane) is significant."""
    return mix64(key ^ mix64((word + _GOLDEN) & _MASK64))


def _bulk_mix(state: np.ndarray) -> np.ndarray:
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class RngKey:
    """Addresses one random stream: values are indexed by a counter only.

    ``stream`` is one of the STREAM_* tags; ``batch``/``pair`` locate the
    image pair; ``lane`` separates multiple draws of the same purpose within
    one operation (e.g. the x and y noise of a perturbation).
    """

    seed: int
    stream: int
    batch: int = 0
    pair: int = 0
    lane: int = 0

    def with_stream(self, stream: int, lane: int = 0) -> "RngKey":
        return replace(self, stream=stream, lane=lane)

    def with_lane(self, lane: int) -> "RngKey":
        return replace(self, lane=lane)

    def base(self) -> int:
        k = self.seed & _MASK64
        for word in (self.stream, self.batch, self.pair, self.lane):
            k = _fold(k, word & _MASK64)
        return k

    def raw(self, count: int, offset: int = 0) -> np.ndarray:
        """uint64 words ``offset .. offset+count-1`` of this stream."""
        counters = np.arange(1 + offset, 1 + offset + count, dtype=np.uint64)
        state = np.uint64(self.base()) + counters * np.uint64(_GOLDEN)
        return _bulk_mix(state)

    def uniform(self, count: int, low: float = 0.0, high: float = 1.0,
                offset: int = 0) -> np.ndarray:
        """float64 uniforms on the open interval (low, high).

        The open interval keeps the inverse-normal transform finite and is
        harmless for continuous sampling.
        """
        bits = self.raw(count, offset) >> np.uint64(11)
        u = (bits.astype(np.float64) + 0.5) * 2.0 ** -53
        return low + (high - low) * u

    def normal(self, count: int, std: float = 1.0, offset: int = 0) -> np.ndarray:
        """Zero-mean Gaussians via the inverse normal CDF (deterministic,
        branch-free, one uniform per output)."""
        return std * ndtri(self.uniform(count, offset=offset))


def pair_key(seed: int, batch: int, pair: int) -> RngKey:
    """Root key for one image pair; operations select their stream tag."""
    return RngKey(seed=seed, stream=0, batch=batch, pair=pair)
