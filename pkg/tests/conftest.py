import numpy as np
import pytest

from framesink.memory import LayerKV, MemoryEntry
from framesink.descriptor import BlockDescriptor

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def make_entry(rng, block_index, *, f=None, d=8, n_layers=2, tokens=6, heads=2, head_dim=4, frames=3):
    f = unit(rng.standard_normal(d)) if f is None else unit(f)
    kv = [LayerKV(ell, rng.standard_normal((tokens, heads, head_dim)),
                  rng.standard_normal((tokens, heads, head_dim))) for ell in range(n_layers)]
    return MemoryEntry(BlockDescriptor(f, block_index), kv, block_index, frames)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
