"""Command-line client for the experiment service.

Every verb goes through the HTTP API. By default the service runs in-process
over an ASGI transport, so no server needs to be started; pass --server to
talk to a remote instance instead.
"""

from __future__ import annotations

import json
import sys

import click
import httpx

from .config import ExperimentConfig
from .experiment import ABLATION_AXES


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from starlette.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _config_text(config_path: str | None) -> str:
    if config_path:
        with open(config_path) as fh:
            text = fh.read()
        ExperimentConfig.from_text(text)  # fail fast with a line-numbered error
        return text
    return ExperimentConfig().to_text()


def _seed_list(seed_override: str | None) -> list[int] | None:
    if not seed_override:
        return None
    return [int(tok) for tok in seed_override.split(",") if tok.strip()]


def _post(server: str | None, path: str, payload: dict) -> dict:
    with _client(server) as client:
        resp = client.post(path, json=payload)
    if resp.status_code != 200:
        detail = resp.json().get("detail", resp.text)
        raise click.ClickException(f"{path} failed ({resp.status_code}): {detail}")
    return resp.json()


common_options = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                 help="Experiment config file; defaults apply when omitted."),
    click.option("--seed-override", default=None,
                 help="Comma-separated seeds replacing the config's seed list."),
    click.option("--server", default=None,
                 help="Base URL of a running service; in-process when omitted."),
]


def with_common_options(cmd):
    for opt in reversed(common_options):
        cmd = opt(cmd)
    return cmd


@click.group()
def main():
    """Federated evidential active learning experiments."""


@main.command()
@with_common_options
def run(config_path, seed_override, server):
    """Run the full FAL experiment for all seeds."""
    body = _post(server, "/run", {
        "config_text": _config_text(config_path),
        "seed_override": _seed_list(seed_override),
    })
    click.echo(f"run directory: {body['run_dir']} (config {body['config_hash']})")
    for row in body["summary"]:
        click.echo(
            f"  seed {row['seed']}: final acc {row['global_acc']}, bma {row['global_bma']}"
        )


@main.command()
@click.option("--axis", type=click.Choice(ABLATION_AXES), required=True)
@with_common_options
def ablate(axis, config_path, seed_override, server):
    """Sweep one ablation axis and write comparison.csv."""
    body = _post(server, "/ablate", {
        "config_text": _config_text(config_path),
        "axis": axis,
        "seed_override": _seed_list(seed_override),
    })
    click.echo(f"run directory: {body['run_dir']} (config {body['config_hash']})")
    for row in body["variants"]:
        click.echo(f"  {row['variant']} seed {row['seed']}: bma {row['global_bma']}")


@main.command(name="shift-report")
@with_common_options
def shift_report(config_path, seed_override, server):
    """Train per seed and print the cross-client KS p-value matrix."""
    body = _post(server, "/shift-report", {
        "config_text": _config_text(config_path),
        "seed_override": _seed_list(seed_override),
    })
    for seed, mat in body["matrices"].items():
        click.echo(f"seed {seed}:")
        for row in mat:
            click.echo("  " + " ".join(f"{p:.4g}" for p in row))


@main.command(name="simplex-grid")
@click.option("--alpha", default="1,1,1", help="Three comma-separated concentrations.")
@click.option("--resolution", default=60, show_default=True)
@click.option("--output", type=click.Path(), default=None,
              help="Write the grid as JSON instead of a summary line.")
@with_common_options
def simplex_grid(alpha, resolution, output, config_path, seed_override, server):
    """Evaluate a Dirichlet density on the barycentric grid."""
    del config_path, seed_override  # accepted for interface uniformity
    values = [float(tok) for tok in alpha.split(",") if tok.strip()]
    body = _post(server, "/simplex-grid", {"alpha": values, "resolution": resolution})
    if output:
        with open(output, "w") as fh:
            json.dump(body, fh)
        click.echo(f"wrote {len(body['cells'])} cells to {output}")
    click.echo(f"riemann sum: {body['riemann_sum']:.6f} over {len(body['cells'])} cells")


@main.command()
@click.option("--run-dir", default=None,
              help="Run directory; defaults to the config's output_dir.")
@with_common_options
def report(run_dir, config_path, seed_override, server):
    """Aggregate a completed run directory into summary files."""
    del seed_override
    if run_dir is None:
        cfg = ExperimentConfig.from_text(_config_text(config_path))
        run_dir = cfg.output_dir
    body = _post(server, "/report", {"run_dir": run_dir})
    for path in body["produced"]:
        click.echo(path)


if __name__ == "__main__":
    sys.exit(main())
