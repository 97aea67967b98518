"""Transcript ingestion, write-once run artifacts and the resumable run manifest."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from .canon import digest, pretty_json
from .errors import ArtifactExists, CorruptArtifact, EmptyTranscript, FormatError, MissingStage
from .llm.cache import atomic_write_text

# --- transcripts -----------------------------------------------------------------


@dataclass(frozen=True)
class Turn:
    number: int
    speaker: str
    text: str


@dataclass(frozen=True)
class Transcript:
    episode: str
    title: str
    turns: tuple[Turn, ...]

    def __post_init__(self):
        for i, t in enumerate(self.turns, start=1):
            if t.number != i:
                raise FormatError(f"turn numbers must run 1..n, found {t.number} at position {i}")

    @property
    def speakers(self) -> list[str]:
        seen: dict[str, None] = {}
        for t in self.turns:
            seen.setdefault(t.speaker, None)
        return list(seen)

    def span(self, start: int, end: int) -> tuple[Turn, ...]:
        return self.turns[start - 1 : end]

    def to_dict(self) -> dict:
        return {
            "episode": self.episode,
            "title": self.title,
            "turns": [{"turn": t.number, "speaker": t.speaker, "text": t.text} for t in self.turns],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Transcript":
        turns = tuple(Turn(int(t["turn"]), t["speaker"], t["text"]) for t in d["turns"])
        return cls(str(d["episode"]), d.get("title", ""), turns)


_PREFIX = re.compile(r"^([^:\s][^:]{0,79}):\s*(.*)$")


def _parse_jsonl(lines: list[str]) -> list[tuple[str, str]]:
    out = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", n) from None
        if not isinstance(obj, dict):
            raise FormatError("each line must be a JSON object", n)
        for key in ("speaker", "text"):
            if not isinstance(obj.get(key), str):
                raise FormatError(f"missing or non-string {key!r}", n)
        speaker = obj["speaker"].strip()
        if not speaker:
            raise FormatError("empty speaker", n)
        out.append((speaker, obj["text"].strip()))
    return out


def _parse_prefixed(lines: list[str]) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    for n, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        m = _PREFIX.match(line.strip())
        if m:
            out.append((m.group(1).strip(), m.group(2).strip()))
        elif out:
            # an unprefixed line continues the previous turn
            speaker, text = out[-1]
            out[-1] = (speaker, f"{text} {line.strip()}".strip())
        else:
            raise FormatError("expected 'SPEAKER: text'", n)
    return out


def ingest_transcript(path, episode: Optional[str] = None, title: Optional[str] = None) -> Transcript:
    """Read a ``.jsonl`` file of ``{speaker, text}`` objects or ``SPEAKER: text`` plain text.

    The format is chosen by the first non-blank character: ``{`` means JSON
    lines.  The episode defaults to the file stem.
    """
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    if not raw.strip():
        raise EmptyTranscript(f"{path} is empty")
    lines = raw.splitlines()
    pairs = _parse_jsonl(lines) if raw.lstrip().startswith("{") else _parse_prefixed(lines)
    if not pairs:
        raise EmptyTranscript(f"{path} has no turns")
    turns = tuple(Turn(i, s, t) for i, (s, t) in enumerate(pairs, start=1))
    return Transcript(episode or path.stem, title or path.stem, turns)


def speaker_blocks(transcript: Transcript) -> list[tuple[str, int, int]]:
    """Maximal runs of consecutive turns by the same speaker, as ``(speaker, start, end)``."""
    blocks: list[tuple[str, int, int]] = []
    for t in transcript.turns:
        if blocks and blocks[-1][0] == t.speaker:
            blocks[-1] = (t.speaker, blocks[-1][1], t.number)
        else:
            blocks.append((t.speaker, t.number, t.number))
    return blocks


# --- artifacts -------------------------------------------------------------------

STAGES = ("segment", "summarize", "extract", "classify", "pairs", "disagree", "aggregate", "stats", "report")

STAGE_DIRS = {
    "segment": "segments",
    "summarize": "summaries",
    "extract": "chains",
    "classify": "classified",
    "pairs": "pairs",
    "disagree": "disagreement",
    "aggregate": "aggregation",
    "stats": "stats",
    "report": "report",
}


class ArtifactStore:
    """Files under one run directory; each path is written at most once.

    Writing identical bytes again is a no-op, so an interrupted stage can be
    re-executed.  Writing different bytes raises :class:`ArtifactExists`.
    """

    def __init__(self, root):
        self.root = Path(root)

    def path(self, rel: str) -> Path:
        return self.root / rel

    def write_text(self, rel: str, text: str) -> str:
        p = self.path(rel)
        h = digest(text.encode("utf-8"))
        if p.exists():
            if digest(p.read_bytes()) != h:
                raise ArtifactExists(f"{rel} already exists with different content")
            return h
        atomic_write_text(p, text)
        return h

    def write_json(self, rel: str, obj: Any) -> str:
        return self.write_text(rel, pretty_json(obj))

    def read_json(self, rel: str) -> Any:
        return json.loads(self.path(rel).read_text(encoding="utf-8"))

    def file_digest(self, rel: str) -> Optional[str]:
        p = self.path(rel)
        return digest(p.read_bytes()) if p.exists() else None


@dataclass
class StageRecord:
    input_digest: str
    artifacts: dict[str, str] = field(default_factory=dict)
    complete: bool = False

    @property
    def output_digest(self) -> str:
        return digest(self.artifacts)


@dataclass
class RunManifest:
    run_id: str
    config_digest: str
    prompt_versions: dict[str, str] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    stages: dict[str, StageRecord] = field(default_factory=dict)
    orders: dict[str, list[str]] = field(default_factory=dict)
    created_at: str = ""
    updated_at: str = ""

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_digest": self.config_digest,
            "prompt_versions": self.prompt_versions,
            "inputs": self.inputs,
            "stages": {
                name: {"input_digest": r.input_digest, "artifacts": r.artifacts, "complete": r.complete}
                for name, r in self.stages.items()
            },
            "orders": self.orders,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(
            run_id=d["run_id"],
            config_digest=d["config_digest"],
            prompt_versions=dict(d.get("prompt_versions", {})),
            inputs=dict(d.get("inputs", {})),
            stages={
                name: StageRecord(r["input_digest"], dict(r.get("artifacts", {})), bool(r.get("complete")))
                for name, r in d.get("stages", {}).items()
            },
            orders={k: list(v) for k, v in d.get("orders", {}).items()},
            created_at=d.get("created_at", ""),
            updated_at=d.get("updated_at", ""),
        )

    def upstream_digest(self, stage: str) -> str:
        """Digest of everything the stage before ``stage`` produced (or of the inputs)."""
        i = STAGES.index(stage)
        if i == 0:
            return digest(self.inputs)
        prev = self.stages.get(STAGES[i - 1])
        if prev is None or not prev.complete:
            raise MissingStage(f"stage {stage!r} needs {STAGES[i - 1]!r} to complete first")
        return prev.output_digest

    def is_complete(self, stage: str) -> bool:
        rec = self.stages.get(stage)
        return rec is not None and rec.complete


def stage_input_digest(manifest: RunManifest, stage: str, prompt_version: str = "", extra: Any = None) -> str:
    """What a stage's output is a function of: upstream output, config, its prompts, extras."""
    return digest(
        {
            "stage": stage,
            "upstream": manifest.upstream_digest(stage),
            "config": manifest.config_digest,
            "prompt_version": prompt_version,
            "extra": extra,
        }
    )


def verify_manifest(manifest: RunManifest, store: ArtifactStore) -> None:
    """Every artifact claimed by a completed stage exists with the recorded digest."""
    for name in STAGES:
        rec = manifest.stages.get(name)
        if rec is None or not rec.complete:
            continue
        for rel, want in sorted(rec.artifacts.items()):
            got = store.file_digest(rel)
            if got is None:
                raise CorruptArtifact(f"{name}: {rel} is missing")
            if got != want:
                raise CorruptArtifact(f"{name}: {rel} digest {got[:12]} != recorded {want[:12]}")


def resume_run(
    manifest: RunManifest,
    store: Optional[ArtifactStore] = None,
    expected_inputs: Optional[Mapping[str, str]] = None,
) -> str:
    """Name of the first stage that still has to run, or ``"done"``.

    Completed stages are checked against their artifacts on disk when a
    store is given.  ``expected_inputs`` maps stage names to the input
    digest the current configuration would produce; the first completed
    stage whose recorded digest differs is returned, which invalidates it and
    everything after it.
    """
    if store is not None:
        verify_manifest(manifest, store)
    for name in STAGES:
        rec = manifest.stages.get(name)
        if rec is None or not rec.complete:
            return name
        if expected_inputs is not None and name in expected_inputs and expected_inputs[name] != rec.input_digest:
            return name
    return "done"


def invalidated_stages(next_stage: str) -> list[str]:
    """Stages that must be recomputed when ``next_stage`` is the resume point."""
    if next_stage == "done":
        return []
    return list(STAGES[STAGES.index(next_stage) :])


def tree_digest(root, exclude: Iterable[str] = ()) -> dict[str, str]:
    """Relative path to content digest for every file under ``root``."""
    root = Path(root)
    skip = set(exclude)
    return {
        p.relative_to(root).as_posix(): digest(p.read_bytes())
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.relative_to(root).as_posix() not in skip
    }


def manifest_json(manifest: RunManifest) -> str:
    return pretty_json(manifest.to_dict())


__all__ = [
    "ArtifactStore",
    "RunManifest",
    "STAGES",
    "STAGE_DIRS",
    "StageRecord",
    "Transcript",
    "Turn",
    "ingest_transcript",
    "invalidated_stages",
    "manifest_json",
    "resume_run",
    "speaker_blocks",
    "stage_input_digest",
    "tree_digest",
    "verify_manifest",
]
