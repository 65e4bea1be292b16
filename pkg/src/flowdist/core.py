"""Foundational value types and the deterministic random-stream contract.

All latent math is done in float64; 32-bit precision only appears at the
file-codec boundaries. Randomness comes exclusively from :class:`RngStream`,
a thin wrapper over numpy's Philox 4x64 counter-based generator, so that every
downstream sampling operation is byte-reproducible across runs and platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "LatentState",
    "NoiseSchedule",
    "ConditioningVector",
    "RngStream",
    "standard_normal_vector",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class LatentState:
    """A flat real vector with shape metadata.

    ``data`` always stores the flattened float64 view; ``shape`` records the
    logical extents (e.g. ``(C, H, W)`` or ``(D,)``). ``timestep_tag`` marks
    which diffusion timestep the state lives at, when known.
    """

    data: np.ndarray
    shape: tuple[int, ...]
    timestep_tag: Optional[int] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64).ravel()
        object.__setattr__(self, "data", data)
        shape = tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        if any(s <= 0 for s in shape):
            raise InvalidArgumentError(f"shape extents must be positive, got {shape}")
        if math.prod(shape) != data.size:
            raise InvalidArgumentError(
                f"shape {shape} implies {math.prod(shape)} entries, data has {data.size}"
            )
        if not np.all(np.isfinite(data)):
            raise InvalidArgumentError("latent data must be finite")
        data.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.data.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def with_data(self, data: np.ndarray, timestep_tag: Optional[int] = None) -> "LatentState":
        """New state with the same shape, replacing data and timestep tag."""
        return LatentState(data, self.shape, timestep_tag)

    @staticmethod
    def from_vector(vec: Sequence[float], timestep_tag: Optional[int] = None) -> "LatentState":
        arr = np.asarray(vec, dtype=np.float64).ravel()
        return LatentState(arr, (arr.size,), timestep_tag)


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal-retention coefficients alpha_bar[0..T].

    alpha_bar[0] is exactly 1 and the sequence is strictly decreasing inside
    (0, 1]. The paper uses several symbols for this one quantity; this type is
    its single home.
    """

    alpha_bar: np.ndarray
    kind: str = "linear-beta"

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64).ravel()
        object.__setattr__(self, "alpha_bar", ab)
        if ab.size < 2:
            raise InvalidArgumentError("schedule needs at least T=1 step")
        if ab[0] != 1.0:
            raise InvalidArgumentError("alpha_bar[0] must be exactly 1")
        if np.any(np.diff(ab) >= 0):
            raise InvalidArgumentError("alpha_bar must be strictly decreasing")
        if np.any(ab <= 0) or np.any(ab > 1):
            raise InvalidArgumentError("alpha_bar values must lie in (0, 1]")
        ab.setflags(write=False)

    @property
    def T(self) -> int:
        return self.alpha_bar.size - 1


@dataclass(frozen=True)
class ConditioningVector:
    """Abstract conditioning embedding (stands in for a text embedding)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64).ravel()
        object.__setattr__(self, "data", data)
        if not np.all(np.isfinite(data)):
            raise InvalidArgumentError("conditioning vector must be finite")
        data.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.data.size


@dataclass
class RngStream:
    """One independent, replayable random stream.

    Backed by numpy's Philox 4x64 counter-based bit generator with
    ``key = stream_id * 2**64 + seed``, so distinct stream ids give
    statistically independent sequences and identical (seed, stream_id)
    pairs replay the identical scalar sequence on every platform.
    """

    seed: int
    stream_id: int = 0
    _gen: Optional[np.random.Generator] = field(default=None, repr=False, compare=False)

    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = ((self.stream_id & _MASK64) << 64) | (self.seed & _MASK64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def normal(self, dim: int) -> np.ndarray:
        """dim i.i.d. N(0,1) draws; advances the stream."""
        if dim < 1:
            raise InvalidArgumentError("dim must be >= 1")
        return self.generator().standard_normal(int(dim))

    def uniform_int(self, low: int, high: int) -> int:
        """One integer uniform in [low, high]; advances the stream."""
        return int(self.generator().integers(low, high + 1))

    def clone(self) -> "RngStream":
        """A fresh stream at the start position of the same (seed, stream_id)."""
        return RngStream(self.seed, self.stream_id)

    def substream(self, k: int) -> "RngStream":
        """Derived stream: id = stream_id * 2**16 + k (mod 2**64)."""
        return RngStream(self.seed, ((self.stream_id << 16) + k) & _MASK64)


def standard_normal_vector(rng: RngStream, dim: int) -> np.ndarray:
    """dim i.i.d. draws from N(0, 1), advancing the stream."""
    return rng.normal(dim)
