"""Request/response models for the rollout service."""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class ConfigModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    L: int = 3
    W: int = 3
    k: int = 2
    tau_dedup: float = 0.98
    tau_gate: float = 0.5
    H: int = 8
    head_dim: int = 16
    d: int = 64
    n_layers: int = 4
    tokens_per_frame: int = 2
    rope_base: float = 10000.0
    seed: int = 0
    policy: str = "dysink"
    total_blocks: int = Field(200, ge=0, le=100_000)
    scenario: str = "drift"
    init_count: Optional[int] = None
    cold_cap: Optional[int] = None
    affinity_post_rope: bool = True
    sink_gate: bool = True


class ConfigText(BaseModel):
    text: str


class RunRequest(BaseModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    include_bank: bool = False


class RunResponse(BaseModel):
    config: ConfigModel
    n_steps: int
    fields: list[str]
    trace: str
    bank_snapshot: Optional[str] = None  # base64 of the binary bank snapshot


class CompareRequest(BaseModel):
    config: ConfigModel = Field(default_factory=ConfigModel)


class PolicySummary(BaseModel):
    policy: str
    steps: int
    mean_context_tokens: float
    max_context_tokens: int
    context_bound_tokens: int
    mean_retrieval_score: Optional[float] = None
    revisit_steps: int
    revisit_hit_rate: Optional[float] = None
    final_bank_size: int
    gate_evaluations: Optional[int] = None
    gate_rate: Optional[float] = None


class CompareResponse(BaseModel):
    scenario: str
    seed: int
    total_blocks: int
    policies: dict[str, PolicySummary]


class Health(BaseModel):
    status: str
    version: str
