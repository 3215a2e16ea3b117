import base64
import json

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from framesink.cli import main
from framesink.memory import load_bank
from framesink.service.app import app
from framesink.sim import RolloutConfig, init_state, run_rollout, trace_text


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def test_health(client):
    assert client.get("/health").json()["status"] == "ok"


def test_defaults_match_core(client):
    assert client.get("/config/defaults").json() == RolloutConfig().to_dict()


def test_parse_config(client):
    body = client.post("/config/parse", json={"text": "seed = 9\npolicy = static:6\n"}).json()
    assert body["seed"] == 9 and body["policy"] == "static:6"


@pytest.mark.parametrize("text", ["nope = 1", "head_dim = 3"])
def test_parse_config_errors(client, text):
    resp = client.post("/config/parse", json={"text": text})
    assert resp.status_code == 422


def test_rollout_matches_core(client):
    cfg = RolloutConfig(scenario="revisit", total_blocks=25)
    body = client.post("/rollouts", json={"config": cfg.to_dict(), "include_bank": True}).json()
    state = init_state(cfg)
    assert body["trace"] == trace_text(run_rollout(cfg, state))
    assert body["n_steps"] == 25
    assert load_bank(base64.b64decode(body["bank_snapshot"])) == state.bank


def test_rollout_rejects_bad_config(client):
    assert client.post("/rollouts", json={"config": {"policy": "static:0"}}).status_code == 422
    assert client.post("/rollouts", json={"config": {"unknown": 1}}).status_code == 422


def test_compare_endpoint(client):
    body = client.post("/compare", json={"config": {"scenario": "revisit", "total_blocks": 70}}).json()
    pols = body["policies"]
    assert set(pols) == {"window", "static:6", "dysink"}
    assert pols["window"]["gate_rate"] is None
    assert pols["dysink"]["revisit_hit_rate"] > pols["static:6"]["revisit_hit_rate"]


class TestCli:
    def test_run_is_byte_deterministic(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("scenario = adversarial\ntotal_blocks = 20\n")
        runner = CliRunner()
        for name in ("a.jsonl", "b.jsonl"):
            res = runner.invoke(main, ["run", "--config", str(cfg), "--out", str(tmp_path / name)])
            assert res.exit_code == 0, res.output
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_overrides(self, tmp_path):
        out = tmp_path / "t.jsonl"
        res = CliRunner().invoke(main, ["run", "--out", str(out), "--seed", "3", "--policy", "static:6",
                                        "--scenario", "revisit", "--blocks", "7"])
        assert res.exit_code == 0, res.output
        lines = out.read_text().splitlines()
        assert len(lines) == 7 and json.loads(lines[0])["policy"] == "static:6"
        expected = trace_text(run_rollout(RolloutConfig(seed=3, policy="static:6", scenario="revisit", total_blocks=7)))
        assert out.read_text() == expected

    def test_bank_out(self, tmp_path):
        res = CliRunner().invoke(main, ["run", "--out", str(tmp_path / "t"), "--blocks", "9",
                                        "--bank-out", str(tmp_path / "bank.bin")])
        assert res.exit_code == 0, res.output
        assert len(load_bank((tmp_path / "bank.bin").read_bytes())) >= 3

    def test_compare(self, tmp_path):
        out = tmp_path / "s.json"
        res = CliRunner().invoke(main, ["compare", "--out", str(out), "--scenario", "revisit", "--blocks", "60"])
        assert res.exit_code == 0, res.output
        assert set(json.loads(out.read_text())["policies"]) == {"window", "static:6", "dysink"}

    def test_errors_reported(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("colour = red\n")
        res = CliRunner().invoke(main, ["run", "--config", str(bad), "--out", str(tmp_path / "t")])
        assert res.exit_code != 0 and "unknown config key" in res.output
        res = CliRunner().invoke(main, ["run", "--policy", "static", "--out", str(tmp_path / "t")])
        assert res.exit_code != 0 and "static" in res.output
