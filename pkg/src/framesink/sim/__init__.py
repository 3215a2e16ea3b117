from framesink.sim.compare import compare_policies
from framesink.sim.config import Policy, RolloutConfig, load_config, parse_config_text
from framesink.sim.rollout import RolloutState, StepRecord, emit_block, init_state, run_rollout, step
from framesink.sim.trace import TRACE_FIELDS, read_trace, trace_text, write_trace

__all__ = [
    "Policy", "RolloutConfig", "RolloutState", "StepRecord", "TRACE_FIELDS",
    "compare_policies", "emit_block", "init_state", "load_config", "parse_config_text",
    "read_trace", "run_rollout", "step", "trace_text", "write_trace",
]
