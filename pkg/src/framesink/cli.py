"""Command-line client for the rollout service."""
from __future__ import annotations

import base64
import json
from pathlib import Path

import click

from framesink.service.client import ServiceClient, ServiceError


def _overrides(f):
    f = click.option("--server", default=None, help="Service URL; runs in-process when omitted.")(f)
    f = click.option("--blocks", type=int, default=None, help="Override total_blocks.")(f)
    f = click.option("--scenario", type=click.Choice(["drift", "revisit", "adversarial"]), default=None)(f)
    f = click.option("--policy", default=None, help="window | static:<S> | dysink")(f)
    f = click.option("--seed", type=int, default=None)(f)
    f = click.option("--out", "out", type=click.Path(dir_okay=False, path_type=Path), required=True)(f)
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                     default=None, help="Flat 'key = value' config file.")(f)
    return f


def _resolve(client, config_path, seed, policy, scenario, blocks) -> dict:
    if config_path is None:
        config = client.defaults()
    else:
        config = client.parse_config(config_path.read_text(encoding="utf-8"))
    for key, value in (("seed", seed), ("policy", policy), ("scenario", scenario), ("total_blocks", blocks)):
        if value is not None:
            config[key] = value
    return config


@click.group()
def main():
    """Streaming context-policy simulator."""


@main.command()
@_overrides
@click.option("--bank-out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Also write the final memory bank snapshot.")
def run(config_path, out, seed, policy, scenario, blocks, server, bank_out):
    """Run one rollout and write its line-delimited trace."""
    try:
        client = ServiceClient(server)
        config = _resolve(client, config_path, seed, policy, scenario, blocks)
        result = client.run(config, include_bank=bank_out is not None)
    except ServiceError as exc:
        raise click.ClickException(str(exc)) from None
    out.write_bytes(result["trace"].encode("utf-8"))
    if bank_out is not None:
        bank_out.write_bytes(base64.b64decode(result["bank_snapshot"]))
    click.echo(f"wrote {result['n_steps']} steps to {out}")


@main.command()
@_overrides
def compare(config_path, out, seed, policy, scenario, blocks, server):
    """Run window-only, static-sink and dynamic-sink policies and summarise them."""
    try:
        client = ServiceClient(server)
        config = _resolve(client, config_path, seed, policy, scenario, blocks)
        summary = client.compare(config)
    except ServiceError as exc:
        raise click.ClickException(str(exc)) from None
    out.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    for name, s in summary["policies"].items():
        click.echo(f"{name:>10}  gate_rate={s.get('gate_rate')}  revisit_hit_rate={s['revisit_hit_rate']}"
                   f"  mean_context_tokens={s['mean_context_tokens']:.2f}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("framesink.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
