import textwrap

import pytest

from agentloom.core import load_pipeline_spec

MINIMAL_DOC = textwrap.dedent(
    """
    name: minimal
    version: "1"
    agents:
      - name: Solo
        system_message: You are Solo. End your reply with DONE.
    stages:
      - id: only
        roster: [Solo]
        scheduling: round-robin
        task: Say something useful.
        termination: {sentinel: DONE}
    """
)

TRIO_DOC = textwrap.dedent(
    """
    name: trio
    version: "1"
    agents:
      - name: Theorist
        system_message: You develop theory.
      - name: ModelDesigner
        system_message: You design models.
      - name: Calibrator
        system_message: You calibrate models.
    stages:
      - id: discuss
        roster: [Theorist, ModelDesigner, Calibrator]
        scheduling: round-robin
        task: Discuss the framework.
        termination: {all_spoken: 2}
    """
)


@pytest.fixture
def minimal_spec():
    return load_pipeline_spec(MINIMAL_DOC)


@pytest.fixture
def trio_spec():
    return load_pipeline_spec(TRIO_DOC)
