from __future__ import annotations

import json
import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from peel.chain_model import load_chain  # noqa: E402
from peel.llm.backends import MockBackend, MockScript  # noqa: E402
from peel.llm.ensemble import EnsembleConfig, fixed_clock  # noqa: E402

TABLE2 = Path(str(resources.files("peel") / "data" / "table2"))


@pytest.fixture
def table2_dir() -> Path:
    return TABLE2


@pytest.fixture
def boomer():
    return load_chain(TABLE2 / "boomer_lecun.json")


@pytest.fixture
def doomer():
    return load_chain(TABLE2 / "doomer_yampolskiy.json")


@pytest.fixture
def doomer_dict():
    return json.loads((TABLE2 / "doomer_yampolskiy.json").read_text(encoding="utf-8"))


@pytest.fixture
def boomer_dict():
    return json.loads((TABLE2 / "boomer_lecun.json").read_text(encoding="utf-8"))


def mock_config(entries, cache_dir=None, **kw) -> EnsembleConfig:
    """An ensemble whose three roles answer from one scripted list."""
    script = MockScript(list(entries))
    return EnsembleConfig(
        worker_a=MockBackend("mock-worker-a", script),
        worker_b=MockBackend("mock-worker-b", script),
        integrator=MockBackend("mock-integrator", script),
        cache_dir=cache_dir,
        clock=fixed_clock,
        **kw,
    )
