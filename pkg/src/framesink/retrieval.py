"""Relevance scoring, top-k selection and KV context composition."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from framesink.descriptor import BlockDescriptor
from framesink.memory import LayerKV, MemoryBank, MemoryEntry
from framesink.tensor import cosine


@dataclass(frozen=True)
class RetrievalResult:
    selected: tuple[tuple[int, float], ...]
    k_requested: int

    @property
    def k_returned(self) -> int:
        return len(self.selected)

    @property
    def block_indices(self) -> list[int]:
        return [idx for idx, _ in self.selected]


@dataclass(eq=False)
class LayerContext:
    layer: int
    keys: np.ndarray
    values: np.ndarray
    segment_boundaries: tuple[int, ...]

    @property
    def tokens(self) -> int:
        return self.keys.shape[0]

    def segments(self) -> list[tuple[np.ndarray, np.ndarray]]:
        edges = self.segment_boundaries
        return [(self.keys[a:b], self.values[a:b]) for a, b in zip(edges, edges[1:])]


@dataclass(eq=False)
class AttentionContext:
    layers: list[LayerContext]

    def __getitem__(self, ell: int) -> LayerContext:
        return self.layers[ell]

    def __len__(self):
        return len(self.layers)


def relevance_score(entry: BlockDescriptor, window: Sequence[BlockDescriptor]) -> float:
    """Mean cosine between ``entry`` and each descriptor of the current window."""
    if not window:
        raise ValueError("relevance needs at least one window descriptor")
    return sum(cosine(w.f, entry.f) for w in window) / len(window)


def rank_by_relevance(candidates: Iterable[BlockDescriptor], window: Sequence[BlockDescriptor],
                      k: int) -> RetrievalResult:
    if k < 1:
        raise ValueError("k must be at least 1")
    scored = [(c.block_index, relevance_score(c, window)) for c in candidates]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return RetrievalResult(tuple(scored[:k]), k)


def retrieve_topk(bank: MemoryBank, window: Sequence[BlockDescriptor],
                  window_block_indices: Iterable[int], k: int) -> RetrievalResult:
    """Top-``k`` bank entries outside the window, best score first.

    Equal scores go to the earlier block. Fewer than ``k`` eligible entries
    just yields a shorter result.
    """
    eligible = bank.eligible_entries(window_block_indices)
    if not eligible:
        if k < 1:
            raise ValueError("k must be at least 1")
        return RetrievalResult((), k)
    return rank_by_relevance([e.descriptor for e in eligible], window, k)


def concat_layer(parts: Sequence[LayerKV], layer: int) -> LayerContext:
    """Concatenate one layer's KV segments along the token axis."""
    if not parts:
        raise ValueError("nothing to concatenate")
    inner = {p.keys.shape[1:] for p in parts}
    if len(inner) > 1:
        raise ValueError(f"heads/head_dim differ across segments: {inner}")
    edges = tuple(np.cumsum([0] + [p.tokens for p in parts]).tolist())
    keys = np.concatenate([p.keys for p in parts], axis=0)
    values = np.concatenate([p.values for p in parts], axis=0)
    return LayerContext(layer, keys, values, edges)


def concat_segments(segments: Sequence[Sequence[LayerKV]], n_layers: int | None = None) -> AttentionContext:
    """Token-axis concatenation of per-layer KV segments, in the given order."""
    segments = [list(seg) for seg in segments]
    if n_layers is None:
        if not segments:
            raise ValueError("cannot infer layer count from zero segments")
        n_layers = len(segments[0])
    layers = []
    for ell in range(n_layers):
        parts = []
        for seg in segments:
            if len(seg) != n_layers:
                raise ValueError(f"segment has {len(seg)} layers, expected {n_layers}")
            if seg[ell].layer != ell:
                raise ValueError(f"segment layer order broken: got {seg[ell].layer} at position {ell}")
            parts.append(seg[ell])
        layers.append(concat_layer(parts, ell))
    return AttentionContext(layers)


def compose_context(retrieved: Sequence[MemoryEntry], local_kv: Sequence[LayerKV]) -> AttentionContext:
    """Retrieved blocks (ascending block index) followed by the local window."""
    ordered = sorted(retrieved, key=lambda e: e.block_index)
    return concat_segments([e.kv for e in ordered] + [list(local_kv)], n_layers=len(local_kv))
