"""Dense math shared by the cache, retrieval, gate and simulator modules.

Head tensors are plain ``float64`` arrays shaped ``(tokens, heads, head_dim)``;
vectors are 1-D ``float64`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RopeParams:
    head_dim: int
    base: float = 10000.0

    def __post_init__(self):
        if self.head_dim <= 0 or self.head_dim % 2:
            raise ValueError(f"head_dim must be a positive even integer, got {self.head_dim}")
        if not self.base > 1:
            raise ValueError(f"rope base must be > 1, got {self.base}")

    @property
    def inv_freq(self) -> np.ndarray:
        # one frequency per interleaved pair (2i, 2i+1)
        return self.base ** (-np.arange(0, self.head_dim, 2, dtype=np.float64) / self.head_dim)


def as_vec(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("vector has non-finite entries")
    return a


def as_head_tensor(t) -> np.ndarray:
    a = np.asarray(t, dtype=np.float64)
    if a.ndim != 3:
        raise ValueError(f"expected (tokens, heads, head_dim), got shape {a.shape}")
    if a.shape[1] < 1 or a.shape[2] < 1:
        raise ValueError(f"heads and head_dim must be positive, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor has non-finite entries")
    return a


def _angles(positions: np.ndarray, params: RopeParams) -> np.ndarray:
    return np.multiply.outer(positions.astype(np.float64), params.inv_freq)


def _rotate_pairs(x: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    even, odd = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def rope_rotate(v, position: int, params: RopeParams) -> np.ndarray:
    """Rotate each pair ``(2i, 2i+1)`` of ``v`` by ``position * base**(-2i/head_dim)``."""
    v = as_vec(v)
    if v.size != params.head_dim:
        raise ValueError(f"vector length {v.size} != head_dim {params.head_dim}")
    if position < 0:
        raise ValueError("position must be non-negative")
    theta = _angles(np.asarray(position), params)
    return _rotate_pairs(v, np.cos(theta), np.sin(theta))


def rope_rotate_tensor(t, start_position: int, params: RopeParams, *, inverse: bool = False) -> np.ndarray:
    """Rotate every (token, head) vector; token ``r`` sits at ``start_position + r``.

    ``inverse=True`` undoes a previous rotation at the same positions.
    """
    t = as_head_tensor(t)
    if t.shape[2] != params.head_dim:
        raise ValueError(f"tensor head_dim {t.shape[2]} != rope head_dim {params.head_dim}")
    if start_position < 0:
        raise ValueError("start_position must be non-negative")
    positions = start_position + np.arange(t.shape[0])
    theta = _angles(positions, params)[:, None, :]  # (tokens, 1, head_dim/2)
    sin = np.sin(theta)
    return _rotate_pairs(t, np.cos(theta), -sin if inverse else sin)


def attention(q, k, v, scale: float) -> np.ndarray:
    """Per-head softmax attention of ``q`` over the ``k``/``v`` token axis."""
    q, k, v = as_head_tensor(q), as_head_tensor(k), as_head_tensor(v)
    if k.shape[0] == 0:
        raise ValueError("attention over an empty key set")
    if k.shape != v.shape:
        raise ValueError(f"key/value shape mismatch: {k.shape} vs {v.shape}")
    if q.shape[1:] != k.shape[1:]:
        raise ValueError(f"query/key heads or head_dim mismatch: {q.shape} vs {k.shape}")
    if not scale > 0:
        raise ValueError("scale must be positive")
    logits = np.einsum("thd,rhd->htr", q, k) * scale
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    return np.einsum("htr,rhd->thd", w, v)


def cosine(a, b) -> float:
    a, b = as_vec(a), as_vec(b)
    if a.size != b.size:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine of a zero-norm vector")
    return float(min(1.0, max(-1.0, np.dot(a, b) / (na * nb))))
