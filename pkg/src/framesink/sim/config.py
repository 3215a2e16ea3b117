"""Rollout configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

SCENARIOS = ("drift", "revisit", "adversarial")


@dataclass(frozen=True)
class Policy:
    kind: str  # "window" | "static" | "dysink"
    sink_frames: int = 0

    def __post_init__(self):
        if self.kind not in ("window", "static", "dysink"):
            raise ValueError(f"unknown policy {self.kind!r}")
        if self.kind == "static" and self.sink_frames < 1:
            raise ValueError("static policy needs at least one sink frame")
        if self.kind != "static" and self.sink_frames:
            raise ValueError(f"{self.kind} policy takes no sink frames")

    @classmethod
    def parse(cls, text: str) -> Policy:
        text = text.strip().lower()
        if text.startswith("static:"):
            try:
                frames = int(text.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"bad static policy {text!r}; expected static:<S>") from None
            return cls("static", frames)
        if text == "static":
            raise ValueError("static policy needs a sink frame count: static:<S>")
        return cls(text)

    def __str__(self):
        return f"static:{self.sink_frames}" if self.kind == "static" else self.kind


def _optional_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none") else int(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RolloutConfig:
    L: int = 3                    # latent frames per block
    W: int = 3                    # window size in blocks
    k: int = 2                    # retrieved blocks per step
    tau_dedup: float = 0.98
    tau_gate: float = 0.5
    H: int = 8
    head_dim: int = 16
    d: int = 64                   # descriptor dimension
    n_layers: int = 4
    tokens_per_frame: int = 2
    rope_base: float = 10000.0
    seed: int = 0
    policy: Policy = field(default_factory=lambda: Policy("dysink"))
    total_blocks: int = 200
    scenario: str = "drift"
    init_count: int | None = None  # None -> W
    cold_cap: int | None = None    # None -> offloaded entries are never evicted
    affinity_post_rope: bool = True
    sink_gate: bool = True

    def __post_init__(self):
        if isinstance(self.policy, str):
            object.__setattr__(self, "policy", Policy.parse(self.policy))
        for name in ("L", "W", "k", "H", "head_dim", "d", "n_layers", "tokens_per_frame"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.head_dim % 2:
            raise ValueError("head_dim must be even")
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if not 0 < self.tau_dedup <= 1:
            raise ValueError("tau_dedup must lie in (0, 1]")
        if not 0 < self.tau_gate < 1:
            raise ValueError("tau_gate must lie in (0, 1)")
        if not self.rope_base > 1:
            raise ValueError("rope_base must be > 1")
        if self.total_blocks < 0:
            raise ValueError("total_blocks must be non-negative")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.init_count is not None and self.init_count < 0:
            raise ValueError("init_count must be non-negative")
        if self.cold_cap is not None and self.cold_cap < 0:
            raise ValueError("cold_cap must be non-negative")

    @property
    def model_dim(self) -> int:
        return self.H * self.head_dim

    @property
    def block_tokens(self) -> int:
        return self.L * self.tokens_per_frame

    @property
    def effective_init_count(self) -> int:
        return self.W if self.init_count is None else self.init_count

    def context_bound_frames(self) -> int:
        """Largest number of historical frames a step may attend to."""
        local = self.W * self.L
        if self.policy.kind == "dysink":
            return self.k * self.L + local
        if self.policy.kind == "static":
            return self.policy.sink_frames + local
        return local

    def replace(self, **changes) -> RolloutConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        out["policy"] = str(self.policy)
        return out

    def to_text(self) -> str:
        lines = []
        for name, value in self.to_dict().items():
            if value is None:
                value = "none"
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{name} = {value}")
        return "\n".join(lines) + "\n"


_PARSERS = {
    f.name: f.type for f in dataclasses.fields(RolloutConfig)
}
_CONVERT = {
    "int": int, "float": float, "str": str, "bool": _bool,
    "int | None": _optional_int, "Policy": Policy.parse,
}


def parse_config_text(text: str, base: RolloutConfig | None = None) -> RolloutConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate config key {key!r}")
        try:
            values[key] = _CONVERT[_PARSERS[key]](value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {exc}") from None
    return (base or RolloutConfig()).replace(**values)


def load_config(path: str | Path) -> RolloutConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))
