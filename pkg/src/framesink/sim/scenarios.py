"""Seeded synthetic block emitters standing in for the video generator.

Every emitter yields latents shaped ``(L, tokens_per_frame, model_dim)`` and
depends only on the config, so all three context policies see the same
stream for a given seed.

* ``drift``: the content direction rotates slowly along a great circle.
* ``revisit``: content lives in epochs; some later epochs return to the
  direction of an epoch several epochs back.
* ``adversarial``: revisit content, plus periodic blocks whose queries are
  solved for so that every head of one layer prefers the block that retrieval
  is about to return over the local window.
"""
from __future__ import annotations

import math

import numpy as np

from framesink.descriptor import BlockDescriptor, SyntheticEncoder, encode_block
from framesink.memory import admits
from framesink.retrieval import rank_by_relevance
from framesink.sim.config import RolloutConfig
from framesink.sim.model import ToyModel, seed_streams

NOISE = 0.01
DRIFT_PERIOD = 240          # blocks per full turn of the drift direction
EPOCH_BLOCKS = 12
FRESH_EPOCHS = 4            # epochs before the first revisit
ATTACK_PERIOD = 6
ATTACK_PHASE = 3


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


class BlockSource:
    def __init__(self, config: RolloutConfig):
        self.config = config
        self.rng = np.random.default_rng(seed_streams(config.seed)["scenario"])
        self.shape = (config.L, config.tokens_per_frame, config.model_dim)
        self.emitted = 0

    def emit(self) -> np.ndarray:
        block = self._emit(self.emitted)
        self.emitted += 1
        return block

    def _emit(self, j: int) -> np.ndarray:
        raise NotImplementedError

    def _around(self, directions: np.ndarray) -> np.ndarray:
        """Per-frame unit directions (L, model_dim) plus isotropic token noise."""
        noise = self.rng.standard_normal(self.shape) * NOISE
        return directions[:, None, :] + noise

    def revisit_target(self, j: int) -> tuple[int, int] | None:
        """Block range ``[start, end)`` that block ``j`` revisits, if any."""
        return None

    def attacked_layer(self, j: int) -> int | None:
        return None


class DriftSource(BlockSource):
    def __init__(self, config):
        super().__init__(config)
        basis = np.linalg.qr(self.rng.standard_normal((config.model_dim, 2)))[0]
        self.u, self.v = basis[:, 0], basis[:, 1]

    def direction(self, t: float) -> np.ndarray:
        angle = 2 * math.pi * t / DRIFT_PERIOD
        return math.cos(angle) * self.u + math.sin(angle) * self.v

    def _emit(self, j):
        L = self.config.L
        dirs = np.stack([self.direction(j + f / L) for f in range(L)])
        return self._around(dirs)


def epoch_plan(epoch: int) -> tuple[int, bool]:
    """(content id, is_revisit) for an epoch.

    Four fresh epochs, then alternating revisit/fresh: the revisits return to
    content 1, 2, 3, ... in turn, each at least three epochs later.
    """
    if epoch < FRESH_EPOCHS:
        return epoch, False
    r = epoch - FRESH_EPOCHS
    if r % 2 == 0:
        return r // 2 + 1, True
    return FRESH_EPOCHS + r // 2, False


def first_epoch_of(content: int) -> int:
    if content < FRESH_EPOCHS:
        return content
    return FRESH_EPOCHS + 1 + 2 * (content - FRESH_EPOCHS)


class RevisitSource(BlockSource):
    def __init__(self, config):
        super().__init__(config)
        self.directions: dict[int, np.ndarray] = {}

    def _direction(self, content: int) -> np.ndarray:
        if content not in self.directions:
            self.directions[content] = _unit(self.rng.standard_normal(self.config.model_dim))
        return self.directions[content]

    def _emit(self, j):
        content, _ = epoch_plan(j // EPOCH_BLOCKS)
        direction = self._direction(content)
        return self._around(np.tile(direction, (self.config.L, 1)))

    def revisit_target(self, j):
        epoch = j // EPOCH_BLOCKS
        content, revisit = epoch_plan(epoch)
        # only once the whole window sits inside the revisit epoch
        if not revisit or j - self.config.W < epoch * EPOCH_BLOCKS:
            return None
        start = first_epoch_of(content) * EPOCH_BLOCKS
        return start, start + EPOCH_BLOCKS


class AdversarialSource(RevisitSource):
    """Revisit content with periodic consensus-forcing blocks.

    The source replays the novelty rule and top-k ranking on its own stream,
    which is exactly what the memory bank will do, so it knows the entry the
    next retrieval returns before emitting the block. The replay ignores
    ``cold_cap`` eviction.
    """

    def __init__(self, config, model: ToyModel, encoder: SyntheticEncoder):
        super().__init__(config)
        self.model = model
        self.encoder = encoder
        self.latents: list[np.ndarray] = []
        self.descriptors: list[BlockDescriptor] = []
        self.stored: list[BlockDescriptor] = []
        self.attacks: dict[int, int] = {}

    def _tokens(self, block: np.ndarray) -> np.ndarray:
        return block.reshape(-1, self.config.model_dim)

    def _emit(self, j):
        block = super()._emit(j)
        if j % ATTACK_PERIOD == ATTACK_PHASE:
            crafted = self._craft(j)
            if crafted is not None:
                block = crafted
        self._observe(j, block)
        return block

    def _observe(self, j, block):
        desc = encode_block(self.encoder(block), j)
        self.latents.append(block)
        self.descriptors.append(desc)
        cfg = self.config
        if admits(self.stored, desc, cfg.tau_dedup, cfg.effective_init_count).admitted:
            self.stored.append(desc)

    def _craft(self, j):
        cfg, model = self.config, self.model
        window = list(range(max(0, j - cfg.W), j))
        if not window:
            return None
        candidates = [d for d in self.stored if d.block_index not in window]
        if not candidates:
            return None
        ranked = rank_by_relevance(candidates, [self.descriptors[w] for w in window], cfg.k)
        target = ranked.block_indices[0]
        layer = len(self.attacks) % cfg.n_layers
        post = cfg.affinity_post_rope

        def mean_keys(blocks):
            keys = [model.keys(layer, self._tokens(self.latents[b]), b, rotate=post) for b in blocks]
            return np.concatenate(keys).mean(axis=0)

        # every head's mean query points along (retrieved mean key - local mean key)
        pull = mean_keys([target]) - mean_keys(window)
        queries = np.broadcast_to(pull, (cfg.block_tokens,) + pull.shape).copy()
        tokens = model.tokens_for_queries(layer, queries, j, rotated=post)
        tokens /= np.linalg.norm(tokens, axis=1).max()
        self.attacks[j] = layer
        return tokens.reshape(self.shape)

    def attacked_layer(self, j):
        return self.attacks.get(j)


def make_source(config: RolloutConfig, model: ToyModel, encoder: SyntheticEncoder) -> BlockSource:
    if config.scenario == "drift":
        return DriftSource(config)
    if config.scenario == "revisit":
        return RevisitSource(config)
    return AdversarialSource(config, model, encoder)
