"""Command line interface: a thin client of the simulation service.

By default the service runs in-process (no network); --server points the
same client at a remote instance instead.  The CLI's only responsibilities
are config handling, writing returned artifacts plus the run manifest to
the output directory, and mapping run status to exit codes:

    0  success
    1  configuration/validation error
    2  numerical failure (no task succeeded)
    3  partial results (some tasks failed; see the manifest)
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

import httpx
from pydantic import ValidationError

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .serialize import Artifact, build_manifest, write_artifacts
from .service.models import RunResponse

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_PARTIAL = 3

RUN_COMMANDS = ("spectrum", "evolve", "gate", "bell", "adiabaticity")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tweezersim",
        description="Two-atom optical-tweezer collision gate simulator",
    )
    parser.add_argument("--version", action="version", version=f"tweezersim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file (defaults used when omitted)")
        p.add_argument("--out", default=None, help="output directory (default: <config output.directory>/<command>)")
        p.add_argument("--workers", type=int, default=None, help="worker pool size")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted-path config override (repeatable); flags win over file values",
        )
        p.add_argument("--server", default=None, help="base URL of a running service (default: in-process)")
        return p

    add_run_command("spectrum", "single- and two-particle spectra vs separation")
    add_run_command("evolve", "propagate the pair state at one or more well speeds")
    gate = add_run_command("gate", "accumulate phases and classify the entangling gate")
    gate.add_argument(
        "--verify-propagation",
        action="store_true",
        help="cross-check accumulated phases against direct propagation",
    )
    add_run_command("bell", "selective-excitation Bell scheme feasibility and separation")
    adia = add_run_command("adiabaticity", "minimum gap, speed bound, optional speed scan")
    adia.add_argument("--scan", action="store_true", help="run the speed-fidelity scan")

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8077)
    return parser


def _load(args) -> RunConfig:
    overrides = list(args.override)
    if getattr(args, "verify_propagation", False):
        overrides.append("gate.verify_propagation=true")
    if getattr(args, "scan", False):
        overrides.append("adiabaticity.scan=true")
    return load_config(args.config, overrides)


def _post_run(args, command: str, cfg: RunConfig) -> RunResponse:
    params = {}
    if args.workers is not None:
        params["workers"] = args.workers
    body = cfg.canonical_dict()
    if args.server:
        with httpx.Client(base_url=args.server, timeout=None) as client:
            resp = client.post(f"/run/{command}", json=body, params=params)
    else:
        from fastapi.testclient import TestClient

        from .service.app import create_app

        with TestClient(create_app()) as client:
            resp = client.post(f"/run/{command}", json=body, params=params)
    if resp.status_code == 422:
        raise ConfigError(f"config rejected by service: {resp.text}")
    resp.raise_for_status()
    return RunResponse.model_validate(resp.json())


def _write_outputs(args, command: str, cfg: RunConfig, response: RunResponse) -> str:
    out_dir = args.out or f"{cfg.output.directory}/{command}"
    artifacts = [Artifact(name=a.name, kind=a.kind, data=a.payload()) for a in response.artifacts]
    manifest = build_manifest(
        command=command,
        version=response.version,
        config_echo=response.config,
        tasks=[t.model_dump() for t in response.tasks],
        artifacts=artifacts,
        status=response.status,
        started_utc=response.started_utc,
        finished_utc=response.finished_utc,
    )
    manifest_path = write_artifacts(out_dir, artifacts, manifest)
    return str(manifest_path)


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service.app import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return EXIT_OK

    try:
        cfg = _load(args)
    except (ConfigError, ValidationError) as exc:
        _log(f"configuration error: {exc}")
        return EXIT_CONFIG

    try:
        response = _post_run(args, args.command, cfg)
    except ConfigError as exc:
        _log(str(exc))
        return EXIT_CONFIG
    except httpx.HTTPError as exc:
        _log(f"service request failed: {exc}")
        return EXIT_NUMERICAL

    for task in response.tasks:
        if task.status != "ok":
            _log(f"task {task.name} failed: {(task.error or '').splitlines()[0] if task.error else 'unknown'}")

    manifest_path = _write_outputs(args, args.command, cfg, response)
    _log(f"{args.command}: status={response.status} artifacts={len(response.artifacts)}")
    print(json.dumps({"status": response.status, "manifest": manifest_path}))

    if response.status == "ok":
        return EXIT_OK
    if response.status == "partial":
        return EXIT_PARTIAL
    return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
