"""Command-line client for the planning service.

Each subcommand builds the same request model the HTTP API accepts and
either executes it in-process (default) or posts it to a running service
(``--server http://host:port``). Exit codes: 0 success, 1 configuration
error, 2 runtime/numerical error.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Any

from pydantic import ValidationError

from .errors import ConfigurationError, IppError
from .service import handlers, schemas

ROUTES = {
    "run": ("/mission/run", schemas.MissionRunRequest, handlers.run_mission_handler),
    "benchmark": ("/benchmark/run", schemas.BenchmarkRunRequest, handlers.run_benchmark_handler),
    "render": ("/render", schemas.RenderRequest, handlers.render_handler),
    "export-state": ("/state/export", schemas.StateExportRequest, handlers.export_state_handler),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ippsim")
    parser.add_argument("--server", help="base URL of a running service; default runs in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single mission")
    run.add_argument("--config", help="mission config JSON file")
    run.add_argument("--seed", type=int)
    run.add_argument("--planner", choices=["greedy", "mcts", "cmaes", "coverage"])
    run.add_argument("--out", help="directory for episode/metrics CSV output")
    run.add_argument("--timings", action="store_true", help="also write measured replan times")

    bench = sub.add_parser("benchmark", help="run a static/varying benchmark sweep")
    bench.add_argument("--config", help="benchmark config JSON file")
    bench.add_argument("--seed", type=int, help="master seed")
    bench.add_argument("--planner", action="append", choices=["greedy", "mcts", "cmaes", "coverage"])
    bench.add_argument("--protocol", choices=["static", "varying"])
    bench.add_argument("--missions", type=int)
    bench.add_argument("--parallel", type=int)
    bench.add_argument("--out", help="output directory for summary/episode CSVs")
    bench.add_argument("--timings", action="store_true", help="record wall-clock replan times")

    render = sub.add_parser("render", help="render a CSV grid to a PPM heatmap")
    render.add_argument("--grid", required=True, help="CSV grid of values in [0, 1]")
    render.add_argument("--out", required=True, help="output PPM path")
    render.add_argument("--scale", type=int, default=1)
    render.add_argument("--path", help="episode CSV whose poses are overlaid")

    export = sub.add_parser("export-state", help="dump the planning-state raster as layered CSV")
    export.add_argument("--config", help="mission config JSON file")
    export.add_argument("--seed", type=int)
    export.add_argument("--steps", type=int, default=0, help="mission steps to advance first")
    export.add_argument("--out", required=True, help="output CSV path")

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _load_json(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot load config {path}: {exc}") from exc


def _build_request(args: argparse.Namespace):
    if args.command == "run":
        config = _load_json(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        if args.planner is not None:
            config["planner"] = args.planner
        return schemas.MissionRunRequest(
            config=schemas.MissionConfigModel(**config),
            out_dir=args.out,
            record_timings=args.timings,
        )
    if args.command == "benchmark":
        config = _load_json(args.config)
        if args.seed is not None:
            config["master_seed"] = args.seed
        if args.planner:
            config["planners"] = args.planner
        if args.protocol is not None:
            config["protocol"] = args.protocol
        if args.missions is not None:
            config["missions"] = args.missions
        if args.parallel is not None:
            config["parallel"] = args.parallel
        if args.timings:
            config["record_timings"] = True
        config.setdefault("out_dir", args.out)
        if args.out is not None:
            config["out_dir"] = args.out
        return schemas.BenchmarkRunRequest(**config)
    if args.command == "render":
        return schemas.RenderRequest(
            grid_csv=args.grid, out_path=args.out, scale=args.scale,
            overlay_episode_csv=args.path,
        )
    config = _load_json(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    return schemas.StateExportRequest(
        config=schemas.MissionConfigModel(**config), steps=args.steps, out_path=args.out
    )


def _dispatch(args: argparse.Namespace, request) -> dict[str, Any]:
    route, _, handler = ROUTES[args.command]
    if args.server:
        import httpx

        response = httpx.post(
            args.server.rstrip("/") + route, json=request.model_dump(), timeout=None
        )
        if response.status_code == 400:
            raise ConfigurationError(response.json().get("detail", "bad request"))
        if response.status_code != 200:
            raise IppError(f"server error {response.status_code}: {response.text}")
        return response.json()
    return handler(request).model_dump()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        uvicorn.run("ippsim.service.app:app", host=args.host, port=args.port)
        return 0
    try:
        request = _build_request(args)
        result = _dispatch(args, request)
    except (ConfigurationError, ValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except IppError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(_compact(args.command, result), indent=2, sort_keys=True))
    return 0


def _compact(command: str, result: dict[str, Any]) -> dict[str, Any]:
    # Keep CLI output readable; full per-step data stays in the CSV artifacts.
    if command == "run":
        result = dict(result)
        result.pop("steps", None)
    return result


if __name__ == "__main__":
    sys.exit(main())
