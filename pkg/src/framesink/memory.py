"""Memory bank of past blocks: descriptor index, layer-wise KV, hot/cold tiers.

Thread-safety contract: one writer at a time (``try_insert``, ``set_tier``,
``retier``); readers (``eligible_entries``, ``hot_footprint``) may overlap each
other but not a write. The simulator is single-threaded per bank.
"""
from __future__ import annotations

import copy
import enum
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from framesink.descriptor import BlockDescriptor
from framesink.tensor import as_head_tensor, cosine


class Tier(enum.IntEnum):
    HOT = 0
    COLD = 1


@dataclass(eq=False)
class LayerKV:
    layer: int
    keys: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.keys = as_head_tensor(self.keys)
        self.values = as_head_tensor(self.values)
        if self.keys.shape != self.values.shape:
            raise ValueError(f"keys {self.keys.shape} and values {self.values.shape} differ in shape")

    @property
    def tokens(self) -> int:
        return self.keys.shape[0]

    def __eq__(self, other):
        if not isinstance(other, LayerKV):
            return NotImplemented
        return (self.layer == other.layer
                and np.array_equal(self.keys, other.keys)
                and np.array_equal(self.values, other.values))


@dataclass(eq=False)
class MemoryEntry:
    descriptor: BlockDescriptor
    kv: list[LayerKV]
    block_index: int
    frames: int
    tier: Tier = Tier.COLD

    def __post_init__(self):
        layers = sorted(item.layer for item in self.kv)
        if layers != list(range(len(self.kv))):
            raise ValueError(f"kv must cover layers 0..{len(self.kv) - 1} exactly once, got {layers}")
        self.kv = sorted(self.kv, key=lambda item: item.layer)
        shapes = {item.keys.shape for item in self.kv}
        if len(shapes) > 1:
            raise ValueError(f"per-layer KV shapes differ: {shapes}")
        if self.frames < 1:
            raise ValueError("an entry spans at least one frame")

    def layer(self, ell: int) -> LayerKV:
        return self.kv[ell]

    def __eq__(self, other):
        if not isinstance(other, MemoryEntry):
            return NotImplemented
        return (self.block_index == other.block_index and self.frames == other.frames
                and self.tier == other.tier and self.descriptor == other.descriptor
                and self.kv == other.kv)


@dataclass(frozen=True)
class Admission:
    """Outcome of :meth:`MemoryBank.try_insert`.

    ``max_similarity`` is ``None`` when the entry was admitted unconditionally
    during initialisation.
    """
    admitted: bool
    max_similarity: float | None = None


def max_similarity(existing: Iterable[BlockDescriptor], candidate: BlockDescriptor) -> float | None:
    sims = [cosine(candidate.f, d.f) for d in existing]
    return max(sims) if sims else None


def admits(existing: Sequence[BlockDescriptor], candidate: BlockDescriptor,
           tau_dedup: float, init_count: int) -> Admission:
    """Novelty rule shared by the bank and by anything that needs to predict it."""
    if len(existing) < init_count:
        return Admission(True)
    best = max_similarity(existing, candidate)
    return Admission(best is None or best <= tau_dedup, best)


@dataclass(eq=False)
class MemoryBank:
    tau_dedup: float = 0.98
    init_count: int = 3
    cold_cap: int | None = None
    entries: list[MemoryEntry] = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.tau_dedup <= 1:
            raise ValueError("tau_dedup must lie in (0, 1]")
        if self.init_count < 0:
            raise ValueError("init_count must be non-negative")
        if self.cold_cap is not None and self.cold_cap < 0:
            raise ValueError("cold_cap must be non-negative")

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, MemoryBank):
            return NotImplemented
        return (self.tau_dedup == other.tau_dedup and self.init_count == other.init_count
                and self.cold_cap == other.cold_cap and self.entries == other.entries)

    def copy(self) -> MemoryBank:
        return copy.deepcopy(self)

    @property
    def block_indices(self) -> list[int]:
        return [e.block_index for e in self.entries]

    def get(self, block_index: int) -> MemoryEntry:
        for e in self.entries:
            if e.block_index == block_index:
                return e
        raise KeyError(f"no entry for block {block_index}")

    def try_insert(self, entry: MemoryEntry) -> Admission:
        """Admit ``entry`` unless it is a near-duplicate of something already stored.

        The first ``init_count`` entries are always admitted. After that an
        entry goes in only when its largest cosine to every stored descriptor
        is at most ``tau_dedup``. A rejected entry leaves the bank untouched,
        so the older near-duplicate is the one that survives.
        """
        if self.entries:
            last = self.entries[-1]
            if entry.block_index <= last.block_index:
                raise ValueError(f"block_index {entry.block_index} is not after {last.block_index}")
            if entry.descriptor.dim != last.descriptor.dim:
                raise ValueError("descriptor dimension differs from existing entries")
        decision = admits([e.descriptor for e in self.entries], entry.descriptor,
                          self.tau_dedup, self.init_count)
        if decision.admitted:
            self.entries.append(entry)
            self._enforce_cold_cap()
        return decision

    def _enforce_cold_cap(self):
        if self.cold_cap is None:
            return
        cold = [e for e in self.entries if e.tier is Tier.COLD]
        drop = {e.block_index for e in cold[:max(0, len(cold) - self.cold_cap)]}
        if drop:
            self.entries = [e for e in self.entries if e.block_index not in drop]

    def set_tier(self, block_index: int, tier: Tier) -> MemoryBank:
        self.get(block_index).tier = Tier(tier)
        return self

    def retier(self, hot: Iterable[int]) -> None:
        """Make exactly ``hot`` resident; everything else is offloaded."""
        hot = set(hot)
        missing = hot - set(self.block_indices)
        if missing:
            raise KeyError(f"no entries for blocks {sorted(missing)}")
        for e in self.entries:
            e.tier = Tier.HOT if e.block_index in hot else Tier.COLD
        self._enforce_cold_cap()

    def eligible_entries(self, window_block_indices: Iterable[int]) -> list[MemoryEntry]:
        window = set(window_block_indices)
        return [e for e in self.entries if e.block_index not in window]

    def hot_footprint(self) -> int:
        """Number of latent frames whose KV is currently hot."""
        return sum(e.frames for e in self.entries if e.tier is Tier.HOT)


# -- snapshot serialization (layout documented in docs/bank_format.md) --------

MAGIC = b"FSNKBANK"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHHdqqIIIII")
_ENTRY = struct.Struct("<qBII")


def dump_bank(bank: MemoryBank) -> bytes:
    first = bank.entries[0] if bank.entries else None
    d = first.descriptor.dim if first else 0
    n_layers = len(first.kv) if first else 0
    heads, head_dim = first.kv[0].keys.shape[1:] if first and first.kv else (0, 0)
    cap = -1 if bank.cold_cap is None else bank.cold_cap
    out = [_HEADER.pack(MAGIC, FORMAT_VERSION, 0, bank.tau_dedup, bank.init_count, cap,
                        len(bank.entries), d, n_layers, heads, head_dim)]
    le = np.dtype("<f8")
    for e in bank.entries:
        out.append(_ENTRY.pack(e.block_index, int(e.tier), e.frames, e.kv[0].tokens if e.kv else 0))
        out.append(e.descriptor.f.astype(le).tobytes())
        for item in e.kv:
            out.append(item.keys.astype(le).tobytes())
            out.append(item.values.astype(le).tobytes())
    return b"".join(out)


def load_bank(data: bytes) -> MemoryBank:
    magic, version, _flags, tau, init_count, cap, n, d, n_layers, heads, head_dim = \
        _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError("not a memory bank snapshot")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    off = _HEADER.size
    le = np.dtype("<f8")

    def take(count):
        nonlocal off
        arr = np.frombuffer(data, dtype=le, count=count, offset=off).astype(np.float64)
        off += 8 * count
        return arr

    bank = MemoryBank(tau, init_count, None if cap < 0 else cap)
    for _ in range(n):
        block_index, tier, frames, tokens = _ENTRY.unpack_from(data, off)
        off += _ENTRY.size
        desc = BlockDescriptor(take(d), block_index)
        shape = (tokens, heads, head_dim)
        size = tokens * heads * head_dim
        kv = []
        for ell in range(n_layers):
            keys = take(size).reshape(shape)
            kv.append(LayerKV(ell, keys, take(size).reshape(shape)))
        bank.entries.append(MemoryEntry(desc, kv, block_index, frames, Tier(tier)))
    if off != len(data):
        raise ValueError(f"trailing bytes in snapshot ({len(data) - off})")
    return bank
