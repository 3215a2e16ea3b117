"""Block descriptors: mean-pooled, l2-normalised frame features.

The frozen visual encoder is replaced by a seeded random projection. Any
callable matching :class:`Encoder` can be plugged in instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from framesink.tensor import as_vec

MIN_MEAN_NORM = 1e-12


@dataclass(frozen=True, eq=False)
class BlockDescriptor:
    f: np.ndarray
    block_index: int = 0

    def __post_init__(self):
        if abs(float(np.linalg.norm(self.f)) - 1.0) > 1e-9:
            raise ValueError("descriptor must have unit norm")

    @property
    def dim(self) -> int:
        return self.f.size

    def __eq__(self, other):
        if not isinstance(other, BlockDescriptor):
            return NotImplemented
        return self.block_index == other.block_index and np.array_equal(self.f, other.f)


class Encoder(Protocol):
    def __call__(self, frames: Sequence[np.ndarray]) -> list[np.ndarray]: ...


def encode_block(features: Sequence, block_index: int = 0) -> BlockDescriptor:
    """Mean-pool frame features and normalise to unit length.

    The per-coordinate sum is exactly rounded (``math.fsum``), so the result
    does not depend on frame order at all, not even in the last bit.
    """
    feats = [as_vec(x) for x in features]
    if not feats:
        raise ValueError("cannot encode a block with no frames")
    d = feats[0].size
    if any(x.size != d for x in feats):
        raise ValueError("frame features have mixed dimensions")
    stacked = np.stack(feats)
    mean = np.array([math.fsum(col) for col in stacked.T]) / len(feats)
    norm = float(np.linalg.norm(mean))
    if norm < MIN_MEAN_NORM:
        raise ValueError(f"mean frame feature has norm {norm:.3g}; normalisation undefined")
    return BlockDescriptor(mean / norm, block_index)


def projection_matrix(encoder_seed: int, input_dim: int, d: int) -> np.ndarray:
    rng = np.random.default_rng(encoder_seed)
    return rng.standard_normal((d, input_dim)) / math.sqrt(d)


class SyntheticEncoder:
    """Fixed random projection from flattened frame latents to ``d`` features."""

    def __init__(self, encoder_seed: int, input_dim: int, d: int = 64):
        if d < 2:
            raise ValueError("descriptor dimension must be at least 2")
        self.encoder_seed = encoder_seed
        self.d = d
        self.matrix = projection_matrix(encoder_seed, input_dim, d)

    def __call__(self, frames: Sequence[np.ndarray]) -> list[np.ndarray]:
        return [self.matrix @ np.asarray(fr, dtype=np.float64).ravel() for fr in frames]


def synthetic_encode(latent_block: Sequence, encoder_seed: int, d: int) -> list[np.ndarray]:
    """Encode each frame of ``latent_block`` (frames x ...) into a ``d``-dim feature."""
    frames = [np.asarray(fr, dtype=np.float64).ravel() for fr in latent_block]
    if not frames:
        return []
    return SyntheticEncoder(encoder_seed, frames[0].size, d)(frames)
