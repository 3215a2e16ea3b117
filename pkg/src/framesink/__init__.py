"""Bounded-memory attention context selection for streaming block generation:
a descriptor-indexed memory bank, relevance retrieval, KV composition and a
per-layer inter-head consensus gate, plus a seeded rollout simulator."""

__version__ = "0.1.0"
