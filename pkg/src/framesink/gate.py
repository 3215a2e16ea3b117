"""Per-layer sink anomaly gate.

For one layer, every head summarises the current block's queries as their
token mean and compares its mean raw dot product with a retrieved block's keys
against the same quantity for the local window keys. ``rho`` is the share of
heads that prefer the retrieved block; when any retrieved block pulls more
than ``tau_gate`` of the heads, the layer drops all retrieved KV and attends to
the local window only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from framesink.memory import LayerKV, MemoryEntry
from framesink.retrieval import AttentionContext, concat_layer
from framesink.tensor import as_head_tensor


@dataclass(frozen=True)
class GateDecision:
    layer: int
    rho: tuple[float, ...]
    g: int
    tau_gate: float
    counts: tuple[int, ...] = field(default=())

    @property
    def evaluated(self) -> bool:
        return bool(self.rho)


def representative_query(q) -> np.ndarray:
    """Token mean per head: returns an ``(heads, head_dim)`` array."""
    q = as_head_tensor(q)
    if q.shape[0] == 0:
        raise ValueError("representative query needs at least one token")
    return q.mean(axis=0)


def affinity(q_bar_h, keys_h) -> float:
    """Mean raw inner product between one head's query summary and its keys.

    ``keys_h`` is ``(tokens, head_dim)``. No softmax and no scaling.
    """
    keys_h = np.asarray(keys_h, dtype=np.float64)
    if keys_h.ndim != 2 or keys_h.shape[0] == 0:
        raise ValueError("affinity needs a non-empty (tokens, head_dim) key set")
    return float((keys_h @ np.asarray(q_bar_h, dtype=np.float64)).mean())


def head_affinities(q_bar: np.ndarray, keys) -> np.ndarray:
    keys = as_head_tensor(keys)
    if keys.shape[0] == 0:
        raise ValueError("affinity over an empty key set")
    if keys.shape[1:] != q_bar.shape:
        raise ValueError(f"key heads/head_dim {keys.shape[1:]} do not match query {q_bar.shape}")
    return np.array([affinity(q_bar[h], keys[:, h, :]) for h in range(q_bar.shape[0])])


def consensus_count(q, k_ret, k_loc) -> int:
    q_bar = representative_query(q)
    return int(np.count_nonzero(head_affinities(q_bar, k_ret) > head_affinities(q_bar, k_loc)))


def consensus_fraction(q, k_ret, k_loc) -> float:
    """Fraction of heads whose retrieved-block affinity strictly beats the local one."""
    heads = as_head_tensor(q).shape[1]
    return consensus_count(q, k_ret, k_loc) / heads


def gate_decision(rhos: Sequence[float], tau_gate: float, layer: int = 0,
                  counts: Sequence[int] = ()) -> GateDecision:
    if not 0 < tau_gate < 1:
        raise ValueError("tau_gate must lie in (0, 1)")
    rhos = tuple(float(r) for r in rhos)
    if any(not 0 <= r <= 1 for r in rhos):
        raise ValueError(f"rho values must lie in [0, 1], got {rhos}")
    g = int(not rhos or max(rhos) <= tau_gate)
    return GateDecision(layer, rhos, g, tau_gate, tuple(counts))


def evaluate_layer(q, retrieved_keys: Sequence[np.ndarray], k_loc, tau_gate: float,
                   layer: int = 0) -> GateDecision:
    """Consensus fractions for every retrieved segment of one layer, then the gate bit."""
    heads = as_head_tensor(q).shape[1]
    counts = [consensus_count(q, k, k_loc) for k in retrieved_keys]
    return gate_decision([c / heads for c in counts], tau_gate, layer, counts)


def _per_layer(g, n_layers: int) -> list[int]:
    if isinstance(g, (int, np.integer, bool)):
        return [int(g)] * n_layers
    bits = [int(b) for b in g]
    if len(bits) != n_layers:
        raise ValueError(f"got {len(bits)} gate bits for {n_layers} layers")
    return bits


def gate_segments(g, segments: Sequence[Sequence[LayerKV]], local_kv: Sequence[LayerKV]) -> AttentionContext:
    """Build each layer's context from its own gate bit; other layers are untouched."""
    n_layers = len(local_kv)
    bits = _per_layer(g, n_layers)
    layers = []
    for ell, bit in enumerate(bits):
        if any(len(seg) != n_layers for seg in segments):
            raise ValueError("retrieved segments and local KV have different layer counts")
        chosen = [seg[ell] for seg in segments] if bit else []
        layers.append(concat_layer(chosen + [local_kv[ell]], ell))
    return AttentionContext(layers)


def gated_context(g, retrieved: Sequence[MemoryEntry], local_kv: Sequence[LayerKV]) -> AttentionContext:
    """Retrieved + local KV where the gate is open, local KV alone where it is shut.

    ``g`` is a single bit applied to every layer, or one bit per layer.
    """
    ordered = sorted(retrieved, key=lambda e: e.block_index)
    return gate_segments(g, [e.kv for e in ordered], local_kv)
