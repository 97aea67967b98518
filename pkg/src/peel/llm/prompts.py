"""Versioned prompt templates shipped with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from string import Template

from ..canon import digest

# templates each task kind depends on; editing any of them changes that kind's version
TASK_TEMPLATES = {
    "segment": ("segment.system", "segment.user"),
    "summarize": ("summarize.system", "summarize.user", "summarize_integrate.user"),
    "extract": (
        "extract.system",
        "extract.user",
        "validate.user",
        "extract_eval.system",
        "extract_faithfulness.user",
        "extract_logic.user",
        "extract_decide.user",
    ),
    "classify_topic_attitude": ("classify.system", "classify.user", "classify_integrate.user"),
    "disagree": ("disagree.system", "disagree.user", "disagree_compare.user", "disagree_synthesize.user"),
    "aggregate_classify": ("aggregate.system", "aggregate.user", "aggregate_integrate.user"),
}


class PromptSet:
    """A directory of ``<name>.txt`` templates plus a ``VERSION`` file."""

    def __init__(self, directory=None):
        if directory is None:
            directory = resources.files("peel.llm") / "prompts"
        self.directory = Path(str(directory))
        self.set_version = (self.directory / "VERSION").read_text(encoding="utf-8").strip()
        self._cache: dict[str, str] = {}

    def text(self, name: str) -> str:
        if name not in self._cache:
            self._cache[name] = (self.directory / f"{name}.txt").read_text(encoding="utf-8")
        return self._cache[name]

    def render(self, name: str, **values) -> str:
        return Template(self.text(name)).substitute({k: str(v) for k, v in values.items()})

    def version(self, task_kind: str) -> str:
        texts = {name: self.text(name) for name in TASK_TEMPLATES[task_kind]}
        return f"{self.set_version}:{digest(texts)[:12]}"

    def versions(self) -> dict[str, str]:
        return {kind: self.version(kind) for kind in TASK_TEMPLATES}
