"""Run the three context policies on one stream and summarise them side by side."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from statistics import fmean

from framesink.sim.config import Policy, RolloutConfig
from framesink.sim.rollout import StepRecord, init_state, run_rollout


def policies_for(config: RolloutConfig) -> list[Policy]:
    """Window-only, static sink and dynamic sink, sharing one frame budget.

    The static variant keeps the config's sink count when the base policy is
    static; otherwise it gets the frames dynamic retrieval would use (k * L).
    """
    sink = config.policy.sink_frames if config.policy.kind == "static" else config.k * config.L
    return [Policy("window"), Policy("static", sink), Policy("dysink")]


def summarize(config: RolloutConfig, records: list[StepRecord], bank_size: int) -> dict:
    scores = [s for r in records for _, s in r.retrieved]
    context = [t for r in records for t in r.context_tokens]
    revisits = [r.revisit_hit for r in records if r.revisit_hit is not None]
    evaluated = sum(1 for r in records for rho in r.rho if rho)
    closed = sum(1 for r in records for rho, g in zip(r.rho, r.gate) if rho and not g)
    out = {
        "policy": str(config.policy),
        "steps": len(records),
        "mean_context_tokens": fmean(context) if context else 0.0,
        "max_context_tokens": max(context, default=0),
        "context_bound_tokens": config.context_bound_frames() * config.tokens_per_frame,
        "mean_retrieval_score": fmean(scores) if scores else None,
        "revisit_steps": len(revisits),
        "revisit_hit_rate": sum(revisits) / len(revisits) if revisits else None,
        "final_bank_size": bank_size,
    }
    if config.policy.kind != "window":
        out["gate_evaluations"] = evaluated
        out["gate_rate"] = closed / evaluated if evaluated else None
    return out


def _run(config: RolloutConfig) -> dict:
    state = init_state(config)
    records = run_rollout(config, state)
    return summarize(config, records, len(state.bank))


def compare_policies(config: RolloutConfig) -> dict:
    """Summary per policy label, in window / static / dysink order."""
    configs = [config.replace(policy=p) for p in policies_for(config)]
    with ThreadPoolExecutor(max_workers=len(configs)) as pool:
        summaries = list(pool.map(_run, configs))
    return {
        "scenario": config.scenario,
        "seed": config.seed,
        "total_blocks": config.total_blocks,
        "policies": {s["policy"]: s for s in summaries},
    }
