"""agentloom: staged multi-agent research workflows with human checkpoints and replay.

The package is organized around a small set of subsystems:

- :mod:`agentloom.core` -- pipeline documents, validation, run state
- :mod:`agentloom.runtime` / :mod:`agentloom.backends` -- per-agent turns and model backends
- :mod:`agentloom.toolkit` -- the tool registry and the concrete research/data tools
- :mod:`agentloom.orchestrator` -- scheduling, termination, escalation, the run loop
- :mod:`agentloom.checkpoints` -- human-in-the-loop records, decision sources, HTTP API
- :mod:`agentloom.provenance` -- event log, manifests, verification, replay
- :mod:`agentloom.pipelines` -- the shipped pipeline catalog
- :mod:`agentloom.cli` -- the ``agentloom`` command
"""

__version__ = "0.1.0"

FORMAT_VERSION = 1
