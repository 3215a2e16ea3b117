import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_entry, unit
from framesink.descriptor import BlockDescriptor
from framesink.memory import LayerKV, MemoryBank, MemoryEntry, Tier, dump_bank, load_bank
from oracles import mp_cosine, replay_admissions


def entry_with(rng, index, f):
    return make_entry(rng, index, f=f, d=len(f))


class TestTryInsert:
    def test_empty_bank_admits(self, rng):
        bank = MemoryBank(0.98, init_count=1)
        assert bank.try_insert(make_entry(rng, 0)).admitted
        assert len(bank) == 1

    def test_exact_duplicate_rejected(self, rng):
        u = unit(rng.standard_normal(8))
        bank = MemoryBank(0.98, init_count=1)
        bank.try_insert(entry_with(rng, 0, u))
        decision = bank.try_insert(entry_with(rng, 1, u))
        assert not decision.admitted
        assert decision.max_similarity == pytest.approx(1.0, abs=1e-15)

    def test_boundary_is_inclusive(self, rng):
        bank = MemoryBank(0.98, init_count=1)
        bank.try_insert(entry_with(rng, 0, [1.0, 0.0]))
        # cos = 0.98 exactly in binary64 for this pair
        cand = np.array([0.98, np.sqrt(1 - 0.98**2)])
        assert float(np.dot(cand / np.linalg.norm(cand), [1.0, 0.0])) == 0.98
        assert bank.try_insert(entry_with(rng, 1, cand)).admitted

    def test_initialisation_admits_duplicates(self, rng):
        u = unit(rng.standard_normal(8))
        bank = MemoryBank(0.98, init_count=3)
        assert all(bank.try_insert(entry_with(rng, i, u)).admitted for i in range(3))
        assert not bank.try_insert(entry_with(rng, 3, u)).admitted

    def test_rejection_leaves_bank_untouched(self, rng):
        u = unit(rng.standard_normal(8))
        bank = MemoryBank(0.98, init_count=1)
        bank.try_insert(entry_with(rng, 0, u))
        bank.set_tier(0, Tier.HOT)
        before = bank.copy()
        bank.try_insert(entry_with(rng, 5, u))
        assert bank == before

    def test_replay_oracle_on_random_stream(self, rng):
        base = [unit(rng.standard_normal(6)) for _ in range(4)]
        descriptors = []
        for _ in range(50):
            f = base[rng.integers(4)] + rng.standard_normal(6) * rng.choice([0.01, 0.1, 0.5])
            descriptors.append(unit(f))
        bank = MemoryBank(0.98, init_count=3)
        for i, f in enumerate(descriptors):
            bank.try_insert(entry_with(rng, i, f))
        assert bank.block_indices == replay_admissions(descriptors, 0.98, 3)

    def test_ordering_and_dimension_errors(self, rng):
        bank = MemoryBank(0.98, init_count=1)
        bank.try_insert(make_entry(rng, 3))
        with pytest.raises(ValueError):
            bank.try_insert(make_entry(rng, 3))
        with pytest.raises(ValueError):
            bank.try_insert(make_entry(rng, 4, d=5))

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            MemoryBank(0.0)
        with pytest.raises(ValueError):
            MemoryBank(1.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 0.999))
def test_admission_soundness_and_monotone_indices(seed, tau):
    r = np.random.default_rng(seed)
    bank = MemoryBank(tau, init_count=2)
    index = 0
    for _ in range(30):
        index += int(r.integers(1, 4))
        bank.try_insert(make_entry(r, index, f=r.standard_normal(4), d=4, n_layers=1, tokens=1, heads=1, head_dim=2))
    idx = bank.block_indices
    assert all(a < b for a, b in zip(idx, idx[1:]))
    for pos in range(2, len(bank)):
        f = bank.entries[pos].descriptor.f
        assert max(float(mp_cosine(f, e.descriptor.f)) for e in bank.entries[:pos]) <= tau + 1e-12


class TestTiers:
    def test_round_trip_is_lossless(self, rng):
        bank = MemoryBank(0.98, init_count=5)
        bank.try_insert(make_entry(rng, 0))
        kv_before = [LayerKV(x.layer, x.keys.copy(), x.values.copy()) for x in bank.get(0).kv]
        bank.set_tier(0, Tier.HOT).set_tier(0, Tier.COLD).set_tier(0, Tier.HOT)
        assert bank.get(0).tier is Tier.HOT
        assert bank.get(0).kv == kv_before

    def test_missing_index(self, rng):
        bank = MemoryBank()
        with pytest.raises(KeyError):
            bank.set_tier(7, Tier.HOT)
        with pytest.raises(KeyError):
            bank.retier([7])

    def test_retier_makes_exactly_those_hot(self, rng):
        bank = MemoryBank(0.98, init_count=10)
        for i in range(5):
            bank.try_insert(make_entry(rng, i))
        bank.retier([1, 3])
        assert [e.block_index for e in bank.entries if e.tier is Tier.HOT] == [1, 3]

    def test_hot_footprint(self, rng):
        bank = MemoryBank(0.98, init_count=10)
        for i in range(4):
            bank.try_insert(make_entry(rng, i, frames=3))
        assert bank.hot_footprint() == 0
        bank.retier([0, 2])
        assert bank.hot_footprint() == 6

    def test_hot_footprint_matches_count(self, rng):
        bank = MemoryBank(0.98, init_count=100)
        for i in range(30):
            bank.try_insert(make_entry(rng, i, frames=int(rng.integers(1, 5))))
        for e in bank.entries:
            e.tier = Tier(int(rng.integers(2)))
        assert bank.hot_footprint() == sum(e.frames for e in bank.entries if e.tier == Tier.HOT)

    def test_cold_cap_evicts_oldest_cold(self, rng):
        bank = MemoryBank(0.98, init_count=100, cold_cap=2)
        for i in range(2):
            bank.try_insert(make_entry(rng, i))
        bank.retier([0])
        bank.try_insert(make_entry(rng, 2))
        assert bank.block_indices == [0, 1, 2]
        bank.try_insert(make_entry(rng, 3))
        assert bank.block_indices == [0, 2, 3]


class TestEligible:
    def test_empty_window_returns_all(self, rng):
        bank = MemoryBank(0.98, init_count=10)
        for i in range(4):
            bank.try_insert(make_entry(rng, i))
        assert bank.eligible_entries(set()) == bank.entries

    def test_full_window_returns_nothing(self, rng):
        bank = MemoryBank(0.98, init_count=10)
        for i in range(4):
            bank.try_insert(make_entry(rng, i))
        assert bank.eligible_entries({0, 1, 2, 3, 9}) == []

    def test_matches_set_difference(self, rng):
        for _ in range(50):
            bank = MemoryBank(0.98, init_count=100)
            indices = sorted(set(rng.integers(0, 40, 15).tolist()))
            for i in indices:
                bank.try_insert(make_entry(rng, i, n_layers=1, tokens=1))
            window = set(rng.integers(0, 40, 5).tolist())
            got = [e.block_index for e in bank.eligible_entries(window)]
            assert got == sorted(set(indices) - window)


def test_entry_layer_coverage(rng):
    kv = [LayerKV(0, np.zeros((2, 1, 2)), np.zeros((2, 1, 2))), LayerKV(0, np.zeros((2, 1, 2)), np.zeros((2, 1, 2)))]
    with pytest.raises(ValueError):
        MemoryEntry(BlockDescriptor(np.array([1.0, 0.0])), kv, 0, 1)
    with pytest.raises(ValueError):
        LayerKV(0, np.zeros((2, 1, 2)), np.zeros((3, 1, 2)))


class TestSnapshot:
    def test_round_trip(self, rng):
        bank = MemoryBank(0.9, init_count=2, cold_cap=None)
        for i in range(6):
            bank.try_insert(make_entry(rng, i * 2))
        bank.retier([2])
        data = dump_bank(bank)
        assert data[:8] == b"FSNKBANK"
        assert load_bank(data) == bank

    def test_empty_bank(self):
        bank = MemoryBank(0.98, 3, cold_cap=5)
        assert load_bank(dump_bank(bank)) == bank

    def test_layout_size(self, rng):
        bank = MemoryBank(0.98, init_count=5)
        for i in range(3):
            bank.try_insert(make_entry(rng, i, d=8, n_layers=2, tokens=6, heads=2, head_dim=4))
        header, entry_header = 56, 17
        per_entry = entry_header + 8 * 8 + 2 * 2 * 6 * 2 * 4 * 8
        assert len(dump_bank(bank)) == header + 3 * per_entry

    def test_bad_input(self, rng):
        with pytest.raises(ValueError):
            load_bank(b"NOTABANK" + bytes(52))
        bank = MemoryBank(0.98, init_count=5)
        bank.try_insert(make_entry(rng, 0))
        with pytest.raises(ValueError):
            load_bank(dump_bank(bank) + b"\0")
