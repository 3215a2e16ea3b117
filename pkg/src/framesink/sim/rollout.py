"""Streaming rollout loop over the three context policies."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from framesink.descriptor import BlockDescriptor, SyntheticEncoder, encode_block
from framesink.gate import GateDecision, evaluate_layer, gate_segments
from framesink.memory import LayerKV, MemoryBank, MemoryEntry
from framesink.retrieval import retrieve_topk
from framesink.sim.config import RolloutConfig
from framesink.sim.model import ToyModel, checksum, make_encoder
from framesink.sim.scenarios import BlockSource, make_source
from framesink.tensor import attention, rope_rotate_tensor


@dataclass
class StepRecord:
    block_index: int
    policy: str
    retrieved: list[tuple[int, float]]
    anchors: list[int]
    rho: list[list[float]]
    gate: list[int]
    gate_rate: float | None
    context_tokens: list[int]
    hot_footprint: int
    bank_size: int
    admitted: bool | None
    max_similarity: float | None
    revisit_hit: bool | None
    attention_output_checksum: list[str]


@dataclass
class _Block:
    index: int
    tokens: np.ndarray          # (block_tokens, model_dim)
    descriptor: BlockDescriptor
    queries: list[np.ndarray]   # per layer, post-RoPE
    kv: list[LayerKV]           # per layer, keys post-RoPE


@dataclass
class RolloutState:
    config: RolloutConfig
    model: ToyModel
    encoder: SyntheticEncoder
    source: BlockSource
    bank: MemoryBank
    window: deque = field(default_factory=deque)
    sinks: list[tuple[int, list[LayerKV]]] = field(default_factory=list)  # (frame, per-layer kv)
    next_block: int = 0
    gate_evaluations: int = 0
    gate_closures: int = 0
    last_gates: list[GateDecision] = field(default_factory=list)


def init_state(config: RolloutConfig) -> RolloutState:
    model = ToyModel(config)
    encoder = make_encoder(config)
    state = RolloutState(
        config=config,
        model=model,
        encoder=encoder,
        source=make_source(config, model, encoder),
        bank=MemoryBank(config.tau_dedup, config.effective_init_count, config.cold_cap),
    )
    return state


def emit_block(state: RolloutState, config: RolloutConfig | None = None) -> np.ndarray:
    """Next synthetic latent block, shaped (L, tokens_per_frame, model_dim)."""
    return state.source.emit()


def _concat_layers(blocks, n_layers: int, heads: int, head_dim: int) -> list[LayerKV]:
    out = []
    for ell in range(n_layers):
        if blocks:
            keys = np.concatenate([b.kv[ell].keys for b in blocks])
            values = np.concatenate([b.kv[ell].values for b in blocks])
        else:
            keys = values = np.zeros((0, heads, head_dim))
        out.append(LayerKV(ell, keys, values))
    return out


def _affinity_inputs(state: RolloutState, block: _Block, ell: int, segments, seg_starts, local, window):
    """Query and key tensors handed to the gate for one layer.

    Post-RoPE by default. The pre-RoPE variant strips the phase from cached
    keys using their known absolute positions.
    """
    if state.config.affinity_post_rope:
        return block.queries[ell], [seg[ell].keys for seg in segments], local[ell].keys
    rope, model = state.model.rope, state.model
    q = rope_rotate_tensor(block.queries[ell], model.start_position(block.index), rope, inverse=True)

    def unrotate(keys, start):
        return rope_rotate_tensor(keys, start, rope, inverse=True)

    ret = [unrotate(seg[ell].keys, start) for seg, start in zip(segments, seg_starts)]
    loc = [unrotate(w.kv[ell].keys, model.start_position(w.index)) for w in window]
    return q, ret, np.concatenate(loc)


def _sink_segment(state: RolloutState, window_indices: set[int]):
    """Static sink frames that are not already inside the window, as one segment."""
    cfg = state.config
    frames = [(f, kv) for f, kv in state.sinks if f // cfg.L not in window_indices]
    if not frames:
        return None
    # frames are contiguous from 0, so the segment starts at the first kept frame
    seg = []
    for ell in range(cfg.n_layers):
        seg.append(LayerKV(ell, np.concatenate([kv[ell].keys for _, kv in frames]),
                           np.concatenate([kv[ell].values for _, kv in frames])))
    start = frames[0][0] * cfg.tokens_per_frame
    return seg, start, sorted({f // cfg.L for f, _ in frames})


def step(state: RolloutState, config: RolloutConfig | None = None) -> StepRecord:
    """Generate, contextualise and store one block."""
    cfg = state.config
    model = state.model
    j = state.next_block
    latents = emit_block(state)
    tokens = latents.reshape(-1, cfg.model_dim)
    desc = encode_block(state.encoder(latents), j)
    block = _Block(
        index=j,
        tokens=tokens,
        descriptor=desc,
        queries=[model.queries(ell, tokens, j) for ell in range(cfg.n_layers)],
        kv=[model.layer_kv(ell, tokens, j) for ell in range(cfg.n_layers)],
    )

    window = list(state.window)
    window_indices = {w.index for w in window}
    local = _concat_layers(window, cfg.n_layers, cfg.H, cfg.head_dim)

    segments, seg_starts, retrieved, anchors = [], [], [], []
    kind = cfg.policy.kind
    if kind == "dysink" and window:
        result = retrieve_topk(state.bank, [w.descriptor for w in window], window_indices, cfg.k)
        retrieved = list(result.selected)
        anchors = sorted(result.block_indices)
        state.bank.retier(anchors)
        segments = [state.bank.get(b).kv for b in anchors]
        seg_starts = [model.start_position(b) for b in anchors]
    elif kind == "dysink":
        state.bank.retier([])
    elif kind == "static":
        sink = _sink_segment(state, window_indices)
        if sink is not None:
            seg, start, anchors = sink
            segments, seg_starts = [seg], [start]

    gates = []
    use_gate = kind != "window" and cfg.sink_gate and segments
    for ell in range(cfg.n_layers):
        if use_gate:
            q, ret, loc = _affinity_inputs(state, block, ell, segments, seg_starts, local, window)
            decision = evaluate_layer(q, ret, loc, cfg.tau_gate, ell)
            state.gate_evaluations += 1
            state.gate_closures += 1 - decision.g
        else:
            decision = GateDecision(ell, (), 1, cfg.tau_gate)
        gates.append(decision)
    state.last_gates = gates

    ctx = gate_segments([g.g for g in gates], segments, local)
    scale = 1.0 / math.sqrt(cfg.head_dim)
    sums = []
    for ell in range(cfg.n_layers):
        keys = np.concatenate([ctx[ell].keys, block.kv[ell].keys])
        values = np.concatenate([ctx[ell].values, block.kv[ell].values])
        sums.append(checksum(attention(block.queries[ell], keys, values, scale)))

    admitted = max_sim = None
    if kind == "dysink":
        decision = state.bank.try_insert(MemoryEntry(desc, block.kv, j, cfg.L))
        admitted, max_sim = decision.admitted, decision.max_similarity
    elif kind == "static":
        for f in range(cfg.L):
            frame = j * cfg.L + f
            if frame < cfg.policy.sink_frames:
                lo, hi = f * cfg.tokens_per_frame, (f + 1) * cfg.tokens_per_frame
                state.sinks.append((frame, [LayerKV(ell, kv.keys[lo:hi], kv.values[lo:hi])
                                            for ell, kv in enumerate(block.kv)]))

    state.window.append(block)
    while len(state.window) > cfg.W:
        state.window.popleft()
    state.next_block += 1

    target = state.source.revisit_target(j)
    hit = None if target is None else any(target[0] <= a < target[1] for a in anchors)
    gate_rate = state.gate_closures / state.gate_evaluations if state.gate_evaluations else None
    return StepRecord(
        block_index=j,
        policy=str(cfg.policy),
        retrieved=retrieved,
        anchors=anchors,
        rho=[list(g.rho) for g in gates],
        gate=[g.g for g in gates],
        gate_rate=gate_rate,
        context_tokens=[ctx[ell].tokens for ell in range(cfg.n_layers)],
        hot_footprint=state.bank.hot_footprint(),
        bank_size=len(state.bank),
        admitted=admitted,
        max_similarity=max_sim,
        revisit_hit=hit,
        attention_output_checksum=sums,
    )


def run_rollout(config: RolloutConfig, state: RolloutState | None = None) -> list[StepRecord]:
    state = state or init_state(config)
    return [step(state) for _ in range(config.total_blocks)]
