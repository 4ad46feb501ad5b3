"""Shipped JSON schemas stay aligned with the loaders and real artifacts."""

import json
from pathlib import Path

import pytest
import yaml
from jsonschema import Draft202012Validator

from agentloom.backends import ScriptFormatError, script_from_doc
from agentloom.checkpoints.store import Decision
from agentloom.cli import main
from agentloom.core import SpecError, load_pipeline_spec
from agentloom.pipelines import CATALOG_NAMES, catalog_text

REPO = Path(__file__).resolve().parents[1]
SCHEMAS = REPO / "schemas"
DEMO_SCRIPTS = sorted((REPO / "demo" / "scripts").glob("*.yaml"))

SCHEMA_FILES = [
    "pipeline.schema.json",
    "script.schema.json",
    "event.schema.json",
    "manifest.schema.json",
    "decision.schema.json",
]


def validator(name):
    schema = json.loads((SCHEMAS / name).read_text())
    Draft202012Validator.check_schema(schema)
    return Draft202012Validator(schema)


def errors(name, doc):
    return [e.message for e in validator(name).iter_errors(doc)]


@pytest.fixture(scope="module")
def recorded_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    code = main(
        [
            "model", "--model-type", "DSGE", "--focus", "fiscal policy impacts",
            "--backend", f"scripted:{REPO / 'demo' / 'scripts' / 'model.yaml'}",
            "--auto-approve", "--fixtures", "--log-dir", str(root), "--seed", "3",
        ]
    )
    assert code == 0
    (run_dir,) = [p for p in root.iterdir() if (p / "events.ndjson").exists()]
    return run_dir


class TestSchemaFiles:
    @pytest.mark.parametrize("name", SCHEMA_FILES)
    def test_schema_is_itself_valid(self, name):
        validator(name)


class TestPipelineSchema:
    @pytest.mark.parametrize("name", CATALOG_NAMES)
    def test_catalog_documents_conform(self, name):
        doc = yaml.safe_load(catalog_text(name))
        assert errors("pipeline.schema.json", doc) == []

    def test_demo_spec_conforms(self):
        doc = yaml.safe_load((REPO / "demo" / "specs" / "sketch.yaml").read_text())
        assert errors("pipeline.schema.json", doc) == []

    def test_schema_and_loader_agree_on_unknown_keys(self):
        doc = yaml.safe_load(catalog_text("model"))
        doc["flavor"] = "mint"
        assert errors("pipeline.schema.json", doc)
        with pytest.raises(SpecError):
            load_pipeline_spec(yaml.safe_dump(doc))

    def test_schema_and_loader_agree_on_double_termination(self):
        doc = yaml.safe_load(catalog_text("model"))
        doc["stages"][0]["termination"] = {"sentinel": "DONE", "max_turns": 3}
        assert errors("pipeline.schema.json", doc)
        with pytest.raises(SpecError):
            load_pipeline_spec(yaml.safe_dump(doc))


class TestScriptSchema:
    @pytest.mark.parametrize("path", DEMO_SCRIPTS, ids=lambda p: p.stem)
    def test_demo_scripts_conform(self, path):
        doc = yaml.safe_load(path.read_text())
        assert errors("script.schema.json", doc) == []
        script_from_doc(doc)  # and the parser agrees

    def test_schema_and_parser_agree_on_bad_turn(self):
        doc = {"format_version": 1, "entries": [{"agent": "A", "turn": -1}]}
        assert errors("script.schema.json", doc)
        with pytest.raises(ScriptFormatError):
            script_from_doc(doc)

    def test_schema_and_parser_agree_on_version(self):
        doc = {"format_version": 2, "entries": []}
        assert errors("script.schema.json", doc)
        with pytest.raises(ScriptFormatError):
            script_from_doc(doc)


class TestRecordedArtifacts:
    def test_every_event_line_conforms(self, recorded_run):
        check = validator("event.schema.json")
        lines = (recorded_run / "events.ndjson").read_text().splitlines()
        assert len(lines) >= 40
        for line in lines:
            check.validate(json.loads(line))

    def test_manifest_conforms(self, recorded_run):
        doc = json.loads((recorded_run / "manifest.json").read_text())
        assert errors("manifest.schema.json", doc) == []


class TestDecisionSchema:
    def test_decision_dicts_conform(self):
        docs = [
            Decision(kind="approve").to_dict(),
            Decision(kind="abort").to_dict(),
            Decision(kind="revise", feedback="tighten §2", rerun=True).to_dict(),
            Decision(kind="revise", feedback="carry forward", rerun=False,
                     revised_task="Redo with levels, not logs.").to_dict(),
        ]
        for doc in docs:
            assert errors("decision.schema.json", doc) == [], doc

    def test_api_body_with_decided_by_conforms(self):
        body = {"kind": "approve", "decided_by": "reviewer@example.org"}
        assert errors("decision.schema.json", body) == []

    def test_schema_and_model_agree_on_revise_without_feedback(self):
        assert errors("decision.schema.json", {"kind": "revise"})
        with pytest.raises(ValueError):
            Decision.from_dict({"kind": "revise"})

    def test_schema_and_model_agree_on_feedback_outside_revise(self):
        doc = {"kind": "approve", "feedback": "nice"}
        assert errors("decision.schema.json", doc)
        with pytest.raises(ValueError):
            Decision.from_dict(doc)
