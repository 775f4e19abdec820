"""Thin command-line client of the pipeline service.

Every subcommand builds a request and posts it to the service API. By
default the requests run against an in-process instance of the app (no
daemon needed); ``--server URL`` targets a running instance instead, in
which case paths are resolved on the server.

Exit codes: 0 success, 1 internal failure, 2 invalid input, 3 completed
with warnings (e.g. a partial selection cascade).

``FAMFEAT_THREADS`` caps fold-level training parallelism.
"""

from __future__ import annotations

import json
import sys

import click
import httpx

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID = 2
EXIT_PARTIAL = 3


def _request(server: str | None, endpoint: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server.rstrip("/"), timeout=None) as client:
            return client.post(f"/v1/{endpoint}", json=payload)

    import asyncio

    from .service.app import app  # deferred: keeps --help fast

    async def call():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://famfeat.local", timeout=None
        ) as client:
            return await client.post(f"/v1/{endpoint}", json=payload)

    return asyncio.run(call())


def _post(ctx, endpoint: str, payload: dict) -> None:
    payload = {k: v for k, v in payload.items() if v is not None}
    try:
        response = _request(ctx.obj.get("server"), endpoint, payload)
    except httpx.HTTPError as err:
        click.echo(f"error: cannot reach service: {err}", err=True)
        sys.exit(EXIT_INTERNAL)
    if response.status_code in (400, 422):
        detail = response.json().get("detail", response.text)
        click.echo(f"error: invalid input: {json.dumps(detail) if not isinstance(detail, str) else detail}", err=True)
        sys.exit(EXIT_INVALID)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        click.echo(f"error: {detail}", err=True)
        sys.exit(EXIT_INTERNAL)
    body = response.json()
    click.echo(json.dumps(body["summary"], indent=2, sort_keys=True))
    for warning in body.get("warnings", []):
        click.echo(f"warning: {warning}", err=True)
    if body.get("partial"):
        sys.exit(EXIT_PARTIAL)
    sys.exit(EXIT_OK)


def _common(payload: dict, config: str | None, seed: int | None) -> dict:
    payload["config_path"] = config
    payload["seed"] = seed
    return payload


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Send requests to a running service instead of in-process.")
@click.pass_context
def main(ctx, server):
    """EEG familiarity-response feature pipeline."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


def _config_options(fn):
    fn = click.option("--seed", type=int, default=None, help="Override the config seed.")(fn)
    fn = click.option("--config", type=str, default=None, metavar="PATH",
                      help="Pipeline config JSON (defaults apply when omitted).")(fn)
    return fn


@main.command()
@click.option("--spec", "spec_path", required=True, metavar="PATH", help="Synthesis spec JSON.")
@click.option("--out", required=True, metavar="DIR")
@click.option("--seed", type=int, default=None, help="Override the spec seed.")
@click.pass_context
def synth(ctx, spec_path, out, seed):
    """Generate a synthetic recordings dataset."""
    _post(ctx, "synth", {"spec_path": spec_path, "out": out, "seed": seed})


@main.command()
@click.option("--in", "in_path", required=True, metavar="DIR", help="Recordings dataset.")
@click.option("--out", required=True, metavar="DIR", help="Epochs dataset to write.")
@_config_options
@click.pass_context
def preprocess(ctx, in_path, out, config, seed):
    """Band-pass filter, remove ocular artifacts, slice epochs."""
    _post(ctx, "preprocess", _common({"in": in_path, "out": out}, config, seed))


@main.command()
@click.option("--in", "in_path", required=True, metavar="DIR", help="Epochs dataset.")
@click.option("--out", required=True, metavar="PATH", help="Feature CSV to write.")
@_config_options
@click.pass_context
def extract(ctx, in_path, out, config, seed):
    """Compute the feature table of an epochs dataset."""
    _post(ctx, "extract", _common({"in": in_path, "out": out}, config, seed))


@main.command()
@click.option("--in", "in_path", required=True, metavar="PATH", help="Feature CSV.")
@click.option("--out", required=True, metavar="DIR", help="Selection report directory.")
@click.option("--pair", required=True, metavar="A,B", help="Class pair, comma separated.")
@_config_options
@click.pass_context
def select(ctx, in_path, out, pair, config, seed):
    """Run the three-stage feature-selection cascade for one class pair."""
    parts = [p.strip() for p in pair.split(",")]
    if len(parts) != 2 or not all(parts):
        click.echo("error: --pair must be two comma-separated class labels", err=True)
        sys.exit(EXIT_INVALID)
    _post(
        ctx,
        "select",
        _common({"in": in_path, "out": out, "class_a": parts[0], "class_b": parts[1]},
                config, seed),
    )


@main.command()
@click.option("--in", "in_path", required=True, metavar="PATH", help="Feature CSV.")
@click.option("--out", required=True, metavar="DIR", help="Model + eval output directory.")
@click.option("--features", default=None, metavar="PATH",
              help="Selection report (dir or report.tsv) or newline-separated feature list.")
@click.option("--pair", default=None, metavar="A,B",
              help="Restrict a multi-class table to one class pair first.")
@click.option("--name", default="", help="Run name recorded in the eval artifact.")
@_config_options
@click.pass_context
def train(ctx, in_path, out, features, pair, name, config, seed):
    """Kernel-width search, cross-validated evaluation and model artifact."""
    class_a = class_b = None
    if pair is not None:
        parts = [p.strip() for p in pair.split(",")]
        if len(parts) != 2 or not all(parts):
            click.echo("error: --pair must be two comma-separated class labels", err=True)
            sys.exit(EXIT_INVALID)
        class_a, class_b = parts
    _post(
        ctx,
        "train",
        _common(
            {"in": in_path, "out": out, "features": features,
             "class_a": class_a, "class_b": class_b, "name": name},
            config, seed,
        ),
    )


@main.command(name="eval")
@click.option("--in", "in_path", required=True, metavar="PATH", help="Feature CSV.")
@click.option("--model", required=True, metavar="PATH", help="Model artifact (model.json).")
@click.option("--out", required=True, metavar="PATH", help="Eval JSON to write.")
@click.option("--name", default="", help="Run name recorded in the eval artifact.")
@click.pass_context
def eval_cmd(ctx, in_path, model, out, name):
    """Apply a saved model to a feature table."""
    _post(ctx, "eval", {"in": in_path, "model": model, "out": out, "name": name})


@main.command()
@click.option("--eval", "evals", multiple=True, metavar="PATH", help="Eval JSON (repeatable).")
@click.option("--selection", "selections", multiple=True, metavar="PATH",
              help="Selection report dir or report.tsv (repeatable).")
@click.option("--out", required=True, metavar="DIR")
@click.pass_context
def report(ctx, evals, selections, out):
    """Summary tables and distribution figures."""
    _post(ctx, "report", {"evals": list(evals), "selections": list(selections), "out": out})


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8714, show_default=True, type=int)
def serve(host, port):
    """Run the pipeline service."""
    import uvicorn

    uvicorn.run("famfeat.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
