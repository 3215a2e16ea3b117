from __future__ import annotations

import base64

from fastapi import FastAPI, HTTPException

from framesink import __version__
from framesink.memory import dump_bank
from framesink.service.schemas import (
    CompareRequest, CompareResponse, ConfigModel, ConfigText, Health, RunRequest, RunResponse,
)
from framesink.sim import RolloutConfig, compare_policies, init_state, parse_config_text, run_rollout
from framesink.sim.trace import TRACE_FIELDS, trace_text

app = FastAPI(title="framesink", version=__version__)


def _to_config(model: ConfigModel) -> RolloutConfig:
    try:
        return RolloutConfig(**model.model_dump())
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None


@app.get("/health", response_model=Health)
def health():
    return Health(status="ok", version=__version__)


@app.get("/config/defaults", response_model=ConfigModel)
def config_defaults():
    return ConfigModel(**RolloutConfig().to_dict())


@app.post("/config/parse", response_model=ConfigModel)
def config_parse(body: ConfigText):
    try:
        config = parse_config_text(body.text)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None
    return ConfigModel(**config.to_dict())


@app.post("/rollouts", response_model=RunResponse)
def rollouts(req: RunRequest):
    config = _to_config(req.config)
    state = init_state(config)
    records = run_rollout(config, state)
    snapshot = base64.b64encode(dump_bank(state.bank)).decode() if req.include_bank else None
    return RunResponse(config=ConfigModel(**config.to_dict()), n_steps=len(records),
                       fields=list(TRACE_FIELDS), trace=trace_text(records), bank_snapshot=snapshot)


@app.post("/compare", response_model=CompareResponse)
def compare(req: CompareRequest):
    return compare_policies(_to_config(req.config))
