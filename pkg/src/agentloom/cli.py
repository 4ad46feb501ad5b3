"""Command-line frontend for running, inspecting, replaying, and serving runs.

Exit codes are part of the contract: 0 for success, 1 when a run finishes
failed or aborted, 2 for usage errors, and 3 when verification or replay
finds a problem with a recorded run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml

from .backends import BackendError, HttpBackend, ScriptedBackend, load_script
from .checkpoints.sources import AutoApproveSource, ConsoleSource
from .core import (
    ParameterError,
    ParamSpec,
    PipelineSpec,
    SpecError,
    load_pipeline_spec,
    new_run,
    validate_pipeline_spec,
)
from .orchestrator.engine import RunResult, run_pipeline
from .pipelines import CATALOG_NAMES, catalog, entry, instantiate
from .provenance import (
    EventLog,
    ProvenanceError,
    ReplayError,
    open_run_dir,
    read_manifest,
    replay,
    verify,
)
from .provenance.events import ProvenanceEvent
from .toolkit.registry import ToolContext
from .toolkit.standard import build_standard_registry

# Fixed name so records look the same under `agentloom` and `python -m agentloom.cli`.
logger = logging.getLogger("agentloom.cli")

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_USAGE = 2
EXIT_VERIFICATION = 3

DEFAULT_LOG_DIR = "runs"


class UsageError(Exception):
    """A problem with how the command was invoked (exit code 2)."""


# ------------------------------------------------------------------ output --


def _snippet(text: str, width: int = 100) -> str:
    flat = " ".join(text.split())
    return flat if len(flat) <= width else flat[: width - 1] + "…"


class ProgressRenderer:
    """Turns the provenance event stream into ``[INFO]`` progress lines.

    Stage completion has no event of its own (the next event after a stage
    ends belongs to whatever comes next), so the renderer watches the run's
    completed-stages list and flushes "Complete." lines as it grows.
    """

    def __init__(self, run, show_checkpoints: bool = True, out=None) -> None:
        self.run = run
        self.show_checkpoints = show_checkpoints
        self._out = out or sys.stdout
        self._completed_seen = 0

    def info(self, text: str) -> None:
        print(f"[INFO] {text}", file=self._out, flush=True)

    def _flush_completed(self) -> None:
        done = self.run.completed_stages
        while self._completed_seen < len(done):
            self.info(f"Stage {done[self._completed_seen]}: Complete.")
            self._completed_seen += 1

    def __call__(self, event: ProvenanceEvent) -> None:
        kind, p = event.kind, event.payload
        if kind == "message":
            self._flush_completed()
            mkind = p.get("kind")
            if mkind == "task":
                stage_id = self.run.stage_cursor or "?"
                try:
                    roster = ", ".join(self.run.spec.stage(stage_id).roster)
                except KeyError:
                    roster = "?"
                self.info(f"Stage {stage_id} started (roster: {roster})")
            elif mkind == "agent-output":
                self.info(f"{p.get('sender', '?')}: {_snippet(p.get('content', ''))}")
            elif mkind == "human-feedback":
                self.info(f"human feedback: {_snippet(p.get('content', ''))}")
            elif mkind == "control":
                self.info(p.get("content", ""))
        elif kind == "tool-invoke":
            attempt = p.get("attempt", 1)
            retry = f" (attempt {attempt})" if isinstance(attempt, int) and attempt > 1 else ""
            self.info(f"{p.get('agent', '?')} calls {p.get('tool', '?')}{retry}")
        elif kind == "checkpoint-open" and self.show_checkpoints:
            print(f"CHECKPOINT: {p.get('prompt', '')}", file=self._out, flush=True)
        elif kind == "checkpoint-decide":
            decision = p.get("decision", {})
            what = decision.get("kind", "?")
            if decision.get("feedback"):
                what += f" — {_snippet(decision['feedback'], 80)}"
            self.info(f"Checkpoint {p.get('checkpoint_id')}: {what} (by {p.get('decided_by')})")
        elif kind == "escalation":
            note = f": {p['note']}" if p.get("note") else ""
            self.info(
                f"Escalation in stage {p.get('stage')}: {p.get('event')} -> {p.get('action')}{note}"
            )
        elif kind == "run-status":
            status = p.get("status")
            if status == "awaiting-human":
                self.info("Awaiting human decision...")
            elif status == "running" and p.get("from") == "awaiting-human":
                self.info("Resumed.")
            elif status in ("completed", "failed", "aborted"):
                self._flush_completed()


def _print_summary(result: RunResult, run_dir: Path, out=None) -> None:
    out = out or sys.stdout
    doc = result.to_dict()
    rows = [
        ("Run", doc["run_id"]),
        ("Pipeline", result.run.spec.name),
        ("Status", doc["status"]),
        ("Stages completed", ", ".join(doc["stages_completed"]) or "none"),
    ]
    if doc["stages_skipped"]:
        rows.append(("Stages skipped", ", ".join(doc["stages_skipped"])))
    if doc["failed_stage"]:
        rows.append(("Failed stage", doc["failed_stage"]))
    rows += [
        ("Messages", f"{doc['messages']} ({doc['agent_outputs']} agent outputs)"),
        ("Tool calls", str(doc["tool_calls"])),
        ("Checkpoints", str(doc["checkpoints"])),
        ("Escalations", str(doc["escalations"])),
        ("Wall time", f"{doc['wall_seconds']:.2f}s"),
        ("Log", str(run_dir)),
    ]
    width = max(len(label) for label, _ in rows) + 1
    print("--- EXECUTION SUMMARY ---", file=out)
    for label, value in rows:
        print(f"{label + ':':<{width}} {value}", file=out)
    if doc["status"] == "completed":
        print("Process completed successfully.", file=out)
    else:
        cause = doc.get("cause") or "no cause recorded"
        print(f"Process {doc['status']}: {cause}", file=out)


# ------------------------------------------------------------- run plumbing --


def _make_backend(value: str):
    if value == "live":
        return HttpBackend()
    if value.startswith("scripted:"):
        path = value.split(":", 1)[1]
        if not path:
            raise UsageError("--backend scripted: needs a script path")
        try:
            return ScriptedBackend(load_script(path))
        except OSError as exc:
            raise UsageError(f"cannot read backend script: {exc}") from exc
        except (BackendError, ValueError, yaml.YAMLError) as exc:
            raise UsageError(f"bad backend script {path}: {exc}") from exc
    raise UsageError(f"--backend must be 'live' or 'scripted:<path>', got {value!r}")


def _coerce_param(pspec: ParamSpec, raw: str) -> Any:
    try:
        if pspec.type == "int":
            return int(raw)
        if pspec.type == "float":
            return float(raw)
        if pspec.type == "bool":
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError as exc:
        raise UsageError(f"parameter {pspec.name!r} expects {pspec.type}, got {raw!r}") from exc


def _parse_kv_params(pairs: Sequence[str], spec: PipelineSpec) -> Dict[str, Any]:
    params: Dict[str, Any] = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"--param expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        pspec = spec.param(key)
        if pspec is None:
            raise UsageError(f"pipeline {spec.name!r} declares no parameter {key!r}")
        params[key] = _coerce_param(pspec, raw)
    return params


def _execute(spec: PipelineSpec, params: Dict[str, Any], ns: argparse.Namespace) -> int:
    backend = _make_backend(ns.backend)
    registry = build_standard_registry()
    report = validate_pipeline_spec(spec, registry.names())
    if not report.ok:
        for v in report.violations:
            print(f"agentloom: invalid pipeline: [{v.code}] {v.path}: {v.detail}", file=sys.stderr)
        return EXIT_USAGE

    run = new_run(spec, params, ns.seed)
    log_root = Path(ns.log_dir)
    run_dir = log_root / run.run_id
    if (run_dir / "events.ndjson").exists():
        raise UsageError(
            f"run directory {run_dir} already has a recorded run "
            "(same spec, params, and seed); pick another --seed or --log-dir"
        )

    decisions = AutoApproveSource() if ns.auto_approve else ConsoleSource()
    listeners: List[Any] = []
    if not ns.quiet:
        # the console source prints its own CHECKPOINT prompt when it asks
        listeners.append(ProgressRenderer(run, show_checkpoints=ns.auto_approve))
    if ns.json_events:
        listeners.append(
            lambda ev: print(json.dumps(ev.to_dict(), sort_keys=True), flush=True)
        )

    if not ns.quiet:
        print(spec.banner or spec.name)
        print("[INFO] Initializing agents... Done.")
        print(f"[INFO] Run {run.run_id} (pipeline {spec.name}, seed {ns.seed})")

    toolctx = ToolContext(backend=backend, fixtures=ns.fixtures, seed=ns.seed)
    with EventLog(log_root, run.run_id) as log:
        result = run_pipeline(
            run, backend, registry, decisions, log, toolctx=toolctx, listeners=listeners
        )
    _print_summary(result, run_dir)
    return EXIT_OK if result.ok else EXIT_RUN_FAILED


# -------------------------------------------------------------- subcommands --


def _cmd_catalog_run(name: str, ns: argparse.Namespace) -> int:
    declared = entry(name).params
    params = {
        p.name: getattr(ns, p.name)
        for p in declared
        if getattr(ns, p.name, None) is not None
    }
    spec = instantiate(name, params)
    return _execute(spec, params, ns)


def _cmd_run(ns: argparse.Namespace) -> int:
    if ns.spec:
        try:
            text = Path(ns.spec).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read pipeline document: {exc}") from exc
        try:
            spec = load_pipeline_spec(text)
        except SpecError as exc:
            raise UsageError(f"bad pipeline document: {exc}") from exc
        params = _parse_kv_params(ns.param, spec)
        bound_spec = spec
    else:
        try:
            base = entry(ns.pipeline).spec
        except KeyError:
            raise UsageError(
                f"unknown catalog pipeline {ns.pipeline!r}; see `agentloom list`"
            ) from None
        params = _parse_kv_params(ns.param, base)
        bound_spec = instantiate(ns.pipeline, params)
    return _execute(bound_spec, params, ns)


def _cmd_list(ns: argparse.Namespace) -> int:
    entries = catalog()
    if ns.json:
        print(json.dumps([e.to_dict() for e in entries], indent=2, sort_keys=True))
        return EXIT_OK
    rows = [("NAME", "KIND", "CHECKPOINTS", "PARAMS")]
    for e in entries:
        flags = ", ".join(p.name + ("" if p.required else "?") for p in e.params) or "-"
        rows.append((e.name, "concrete" if e.concrete else "roster", str(e.checkpoints), flags))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    for row in rows:
        print(f"{row[0]:<{widths[0]}}  {row[1]:<{widths[1]}}  {row[2]:<{widths[2]}}  {row[3]}")
    return EXIT_OK


def _cmd_verify(ns: argparse.Namespace) -> int:
    run_dir = Path(ns.run)
    try:
        manifest = read_manifest(run_dir)
        log = open_run_dir(run_dir)
    except (OSError, ProvenanceError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot open run directory {run_dir}: {exc}") from exc
    report = verify(manifest, log)
    if ns.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    elif report.ok:
        print(f"OK: {report.event_count} events verified in {run_dir}")
    else:
        print(f"FAILED: {len(report.violations)} violation(s) in {run_dir}")
        for violation in report.violations:
            print(f"  - {violation}")
    return EXIT_OK if report.ok else EXIT_VERIFICATION


def _cmd_replay(ns: argparse.Namespace) -> int:
    run_dir = Path(ns.run)
    try:
        manifest = read_manifest(run_dir)
        log = open_run_dir(run_dir)
    except (OSError, ProvenanceError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot open run directory {run_dir}: {exc}") from exc
    try:
        result = replay(manifest, log, out_root=ns.out)
    except ReplayError as exc:  # includes TamperError
        print(f"REPLAY FAILED: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION
    print(
        f"Replay of {manifest.run_id} matched the recording "
        f"({result.messages} messages, status {result.run.status.value})."
    )
    if ns.out:
        print(f"Replay log written to {Path(ns.out) / manifest.run_id}")
    return EXIT_OK


def _cmd_serve(ns: argparse.Namespace) -> int:
    # imported lazily: uvicorn is only needed by this subcommand
    import uvicorn

    from .checkpoints.api import RunHost, build_app

    host = RunHost()
    log_root = Path(ns.log_dir)
    attached = 0
    if log_root.is_dir():
        for candidate in sorted(log_root.iterdir()):
            if not (candidate / "manifest.json").exists():
                continue
            try:
                host.attach(candidate)
                attached += 1
            except (ValueError, ProvenanceError, OSError) as exc:
                logger.warning("skipping %s: %s", candidate, exc)
    if attached:
        print(f"[INFO] Attached {attached} recorded run(s) from {log_root}")

    if ns.start:
        try:
            base = entry(ns.start).spec
        except KeyError:
            raise UsageError(
                f"unknown catalog pipeline {ns.start!r}; see `agentloom list`"
            ) from None
        params = _parse_kv_params(ns.param, base)
        spec = instantiate(ns.start, params)
        backend = _make_backend(ns.backend)
        toolctx = ToolContext(backend=backend, fixtures=ns.fixtures, seed=ns.seed)
        run_id = host.start(
            spec, backend, log_root, params=params, seed=ns.seed, toolctx=toolctx
        )
        print(f"[INFO] Started run {run_id} (pipeline {ns.start}); decide checkpoints via the API")

    static_dir = ns.static
    if static_dir and not Path(static_dir).is_dir():
        raise UsageError(f"--static {static_dir} is not a directory")
    app = build_app(host, token=ns.token, static_dir=static_dir)
    print(f"[INFO] Serving on http://{ns.host}:{ns.port} (logs under {log_root})")
    uvicorn.run(app, host=ns.host, port=ns.port, log_level="warning")
    return EXIT_OK


# ------------------------------------------------------------------- parser --


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backend",
        default="live",
        help="model backend: 'live' (HTTP, see AGENTLOOM_API_* env) or 'scripted:<path>'",
    )
    parser.add_argument(
        "--auto-approve",
        action="store_true",
        help="approve every checkpoint instead of asking on the console",
    )
    parser.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    parser.add_argument(
        "--log-dir", default=DEFAULT_LOG_DIR, help=f"run log root (default {DEFAULT_LOG_DIR}/)"
    )
    parser.add_argument(
        "--fixtures",
        action="store_true",
        help="serve bundled fixture data to tools that would otherwise need credentials",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress [INFO] progress lines")
    parser.add_argument(
        "--json-events",
        action="store_true",
        help="mirror every provenance event to stdout as one JSON object per line",
    )


def _param_flags(name: str) -> List[str]:
    flag = "--" + name.replace("_", "-")
    return [flag, "--" + name] if "_" in name else [flag]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agentloom",
        description="Agentic research pipelines with checkpoints, provenance, and replay.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    for name in ("ideation", "literature", "model", "data"):
        e = entry(name)
        p = sub.add_parser(name, help=e.spec.banner or f"run the {name} pipeline")
        for pspec in e.params:
            p.add_argument(
                *_param_flags(pspec.name),
                dest=pspec.name,
                required=pspec.required,
                help=pspec.description or None,
            )
        _add_run_flags(p)
        p.set_defaults(handler=lambda ns, _name=name: _cmd_catalog_run(_name, ns))

    p = sub.add_parser("run", help="run a pipeline document or any catalog entry")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--spec", help="path to a pipeline document")
    target.add_argument("--pipeline", help="catalog entry name (see `agentloom list`)")
    p.add_argument(
        "--param",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="bind a declared pipeline parameter (repeatable)",
    )
    _add_run_flags(p)
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("list", help="list the shipped pipeline catalog")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(handler=_cmd_list)

    p = sub.add_parser("verify", help="check a recorded run's digests and structure")
    p.add_argument("--run", required=True, metavar="DIR", help="run directory")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.set_defaults(handler=_cmd_verify)

    p = sub.add_parser("replay", help="re-execute a recorded run and compare transcripts")
    p.add_argument("--run", required=True, metavar="DIR", help="run directory")
    p.add_argument("--out", metavar="DIR", help="keep the replay's own log under this root")
    p.set_defaults(handler=_cmd_replay)

    p = sub.add_parser("serve", help="serve the HTTP API (and dashboard, if built)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8711)
    p.add_argument(
        "--log-dir",
        default=DEFAULT_LOG_DIR,
        help="attach recorded runs from here; live runs log here too",
    )
    p.add_argument("--static", help="directory of built dashboard files to serve at /")
    p.add_argument(
        "--token",
        default=None,
        help="bearer token for the API (default: AGENTLOOM_DASH_TOKEN, open if unset)",
    )
    p.add_argument("--start", metavar="NAME", help="start one catalog pipeline under the server")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--backend", default="live")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixtures", action="store_true")
    p.set_defaults(handler=_cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    try:
        return ns.handler(ns)
    except UsageError as exc:
        print(f"agentloom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"agentloom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("agentloom: interrupted", file=sys.stderr)
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
