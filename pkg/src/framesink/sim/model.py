"""Seeded stand-in for the generator's attention layers.

Each layer owns fixed Q/K/V projections of the token latents. Layers read the
emitted latents directly (no residual stream), so a block's cached KV depends
only on the emitted stream and the seed, never on the context policy.
"""
from __future__ import annotations

import hashlib
import math

import numpy as np

from framesink.descriptor import SyntheticEncoder
from framesink.memory import LayerKV
from framesink.sim.config import RolloutConfig
from framesink.tensor import RopeParams, rope_rotate_tensor


QK_TIE = 0.8


def seed_streams(seed: int) -> dict[str, np.random.SeedSequence]:
    scenario, encoder, model = np.random.SeedSequence(seed).spawn(3)
    return {"scenario": scenario, "encoder": encoder, "model": model}


def checksum(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()[:16]


class ToyModel:
    def __init__(self, config: RolloutConfig):
        self.config = config
        self.rope = RopeParams(config.head_dim, config.rope_base)
        dim = config.model_dim
        rng = np.random.default_rng(seed_streams(config.seed)["model"])
        scale = 1.0 / math.sqrt(dim)
        self.wq, self.wk, self.wv = [], [], []
        for _ in range(config.n_layers):
            wq = rng.standard_normal((dim, dim)) * scale
            # keys share most of the query subspace so similar content attracts attention
            wk = QK_TIE * wq + math.sqrt(1 - QK_TIE**2) * rng.standard_normal((dim, dim)) * scale
            self.wq.append(wq)
            self.wk.append(wk)
            self.wv.append(rng.standard_normal((dim, dim)) * scale)

    def start_position(self, block_index: int) -> int:
        return block_index * self.config.block_tokens

    def _heads(self, flat: np.ndarray) -> np.ndarray:
        return flat.reshape(flat.shape[0], self.config.H, self.config.head_dim)

    def queries(self, layer: int, tokens: np.ndarray, block_index: int, rotate: bool = True) -> np.ndarray:
        q = self._heads(tokens @ self.wq[layer])
        return rope_rotate_tensor(q, self.start_position(block_index), self.rope) if rotate else q

    def keys(self, layer: int, tokens: np.ndarray, block_index: int, rotate: bool = True) -> np.ndarray:
        k = self._heads(tokens @ self.wk[layer])
        return rope_rotate_tensor(k, self.start_position(block_index), self.rope) if rotate else k

    def values(self, layer: int, tokens: np.ndarray) -> np.ndarray:
        return self._heads(tokens @ self.wv[layer])

    def layer_kv(self, layer: int, tokens: np.ndarray, block_index: int) -> LayerKV:
        """Cached KV for one block: keys carry RoPE phase at their absolute positions."""
        return LayerKV(layer, self.keys(layer, tokens, block_index), self.values(layer, tokens))

    def tokens_for_queries(self, layer: int, target: np.ndarray, block_index: int,
                           rotated: bool = True) -> np.ndarray:
        """Token latents whose layer queries equal ``target`` (tokens, H, head_dim).

        With ``rotated`` the target is the post-RoPE query, so the RoPE phase is
        removed first. The projection is square and almost surely invertible.
        """
        if rotated:
            target = rope_rotate_tensor(target, self.start_position(block_index), self.rope, inverse=True)
        flat = target.reshape(target.shape[0], -1)
        return np.linalg.solve(self.wq[layer].T, flat.T).T


def make_encoder(config: RolloutConfig) -> SyntheticEncoder:
    seed = int(seed_streams(config.seed)["encoder"].generate_state(1)[0])
    return SyntheticEncoder(seed, config.tokens_per_frame * config.model_dim, config.d)
