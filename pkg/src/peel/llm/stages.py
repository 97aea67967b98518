"""Segmentation, speaker summaries and reasoning extraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

from ..chain_model import ReasoningChain, chain_from_dict, chain_to_dict
from ..errors import ChainFormatError, EmptyInput, EmptyTranscript, PeelError
from ..store import Transcript
from ..validator import STRUCTURAL_CODES, validate_chain
from .ensemble import (
    Caller,
    EnsembleConfig,
    EnsembleTaskRecord,
    PayloadError,
    pretty_payload,
    run_ensemble_task,
    run_single_task,
)

# --- segmentation ---------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    summary: str
    start_turn: int
    end_turn: int

    def to_dict(self) -> dict:
        return {"summary": self.summary, "start_turn": self.start_turn, "end_turn": self.end_turn}

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        return cls(d["summary"], int(d["start_turn"]), int(d["end_turn"]))


_SEGMENT_SCHEMA = '{"segments": [{"summary": str, "start_turn": int, "end_turn": int}]}'


def _render_turns(transcript: Transcript, start: int = 1, end: Optional[int] = None) -> str:
    turns = transcript.span(start, end or len(transcript.turns))
    return "\n".join(f"[{t.number}] {t.speaker}: {t.text}" for t in turns)


def parse_segments(obj: Any, n_turns: int) -> list[Segment]:
    """Check a segmentation reply and turn it into :class:`Segment` objects."""
    raw = obj.get("segments") if isinstance(obj, dict) else obj
    if not isinstance(raw, list) or not raw:
        raise PayloadError("expected a non-empty 'segments' list")
    out: list[Segment] = []
    for i, s in enumerate(raw):
        if not isinstance(s, dict):
            raise PayloadError(f"segment {i} is not an object")
        start, end = s.get("start_turn"), s.get("end_turn")
        if not all(isinstance(x, int) and not isinstance(x, bool) for x in (start, end)):
            raise PayloadError(f"segment {i}: start_turn and end_turn must be integers")
        if start > end:
            raise PayloadError(f"segment {i}: start_turn {start} > end_turn {end}")
        if start < 1 or end > n_turns:
            raise PayloadError(f"segment {i}: turns {start}-{end} outside 1-{n_turns}")
        if out and start <= out[-1].end_turn:
            raise PayloadError(
                f"segment {i} ({start}-{end}) overlaps or precedes segment {i - 1} "
                f"({out[-1].start_turn}-{out[-1].end_turn})"
            )
        out.append(Segment(str(s.get("summary", "")).strip(), start, end))
    return out


def segment_transcript(transcript: Transcript, config: EnsembleConfig) -> tuple[list[Segment], EnsembleTaskRecord]:
    """Split a transcript into ordered, non-overlapping chapters with the integrator model."""
    if not transcript.turns:
        raise EmptyTranscript(f"episode {transcript.episode} has no turns")
    p = config.prompts
    n = len(transcript.turns)

    def call(c: Caller):
        prompt = p.render("segment.user", episode=transcript.episode, title=transcript.title, turns=_render_turns(transcript))
        segs = c.json("segment", p.text("segment.system"), prompt, lambda o: parse_segments(o, n), _SEGMENT_SCHEMA)
        return [s.to_dict() for s in segs]

    record = run_single_task("segment", transcript.to_dict(), config, call=call)
    return [Segment.from_dict(d) for d in record.integrated_out], record


# --- summaries --------------------------------------------------------------------


@dataclass(frozen=True)
class SpeakerSummary:
    speaker: str
    episode: str
    text: str
    needs_review: bool

    def to_dict(self) -> dict:
        return {"speaker": self.speaker, "episode": self.episode, "text": self.text, "needs_review": self.needs_review}


def _segments_with(transcript: Transcript, segments: list[Segment], speaker: str) -> list[Segment]:
    return [s for s in segments if any(t.speaker == speaker for t in transcript.span(s.start_turn, s.end_turn))]


def summarize_speaker(
    transcript: Transcript,
    segments: list[Segment],
    speaker: str,
    config: EnsembleConfig,
) -> tuple[SpeakerSummary, EnsembleTaskRecord]:
    """Per-segment worker summaries, concatenated per worker, synthesized by the integrator.

    An empty final summary is legal (the speaker said nothing about AI)
    and is flagged for manual review.
    """
    relevant = _segments_with(transcript, segments, speaker)
    if not relevant:
        raise EmptyInput(f"{speaker} does not speak in any segment of episode {transcript.episode}")
    p = config.prompts
    system = p.text("summarize.system")
    payload = {
        "transcript": transcript.to_dict(),
        "segments": [s.to_dict() for s in relevant],
        "speaker": speaker,
    }

    def worker(c: Caller) -> str:
        parts = []
        for s in relevant:
            prompt = p.render(
                "summarize.user",
                speaker=speaker,
                episode=transcript.episode,
                start_turn=s.start_turn,
                end_turn=s.end_turn,
                excerpt=_render_turns(transcript, s.start_turn, s.end_turn),
            )
            text = c.text(f"segment-{s.start_turn}", system, prompt).strip()
            if text:
                parts.append(text)
        return "\n\n".join(parts)

    def integrator(c: Caller, a: str, b: str) -> str:
        prompt = p.render(
            "summarize_integrate.user",
            speaker=speaker,
            episode=transcript.episode,
            transcript=_render_turns(transcript),
            summary_a=a or "(no output)",
            summary_b=b or "(no output)",
        )
        return c.text("integrate", system, prompt).strip()

    record = run_ensemble_task(
        "summarize",
        payload,
        config,
        worker=worker,
        integrator=integrator,
        notes=lambda final: {"needs_review": not final},
    )
    text = record.integrated_out or ""
    return SpeakerSummary(speaker, transcript.episode, text, not text), record


# --- extraction -------------------------------------------------------------------

_CHAIN_SCHEMA = (
    '{"chains": [{"conclusions": [{"id": "C1", "text": str}], '
    '"premises": [{"id": "P1", "text": str, "type": "factual|forecast|causal|definitional|moral", '
    '"explicitness": "explicit|implicit", "confidence": int 0-100}], '
    '"relationships": [{"id": "R1", "expr": str, "gloss": str}]}]}'
)


def parse_chains(obj: Any, speaker: str, episode: str) -> list[ReasoningChain]:
    """Load model-produced chains and apply the structural validator.

    Schema problems raise a plain :class:`PayloadError`; structural
    violations (V1-V3, V7, V8) raise one marked ``structural``.
    """
    raw = obj.get("chains") if isinstance(obj, dict) and "chains" in obj else obj
    if isinstance(raw, dict):
        raw = [raw]
    if not isinstance(raw, list):
        raise PayloadError("expected an object with a 'chains' list")
    chains = []
    for i, d in enumerate(raw):
        if not isinstance(d, dict):
            raise PayloadError(f"chains[{i}] is not an object")
        d = {**d, "speaker": speaker, "episode": episode}
        try:
            chains.append(chain_from_dict(d))
        except (ChainFormatError, PeelError, ValueError) as exc:
            raise PayloadError(f"chains[{i}]: {exc}") from None
    firsts = [str(ch.conclusions[0].id) for ch in chains]
    if len(set(firsts)) != len(firsts):
        raise PayloadError("each chain must start with a distinct conclusion id")
    problems = []
    for i, ch in enumerate(chains):
        report = validate_chain(ch)
        problems += [f"chains[{i}] {v.code.value} on {v.subject}: {v.detail}" for v in report.violations if v.code in STRUCTURAL_CODES]
    if problems:
        raise PayloadError("; ".join(problems), structural=True)
    return chains


def _chain_structure(d: dict) -> dict:
    # extraction agreement ignores relationship glosses
    return {**d, "relationships": [{k: v for k, v in r.items() if k != "gloss"} for r in d["relationships"]]}


def chains_equivalent(x: list[dict], y: list[dict]) -> bool:
    return [_chain_structure(d) for d in x] == [_chain_structure(d) for d in y]


@dataclass(frozen=True)
class Extraction:
    speaker: str
    episode: str
    chains: tuple[ReasoningChain, ...]


def extract_reasoning(summary: SpeakerSummary, config: EnsembleConfig) -> tuple[Extraction, EnsembleTaskRecord]:
    """Two-step extraction per worker, three-step evaluation by the integrator."""
    if not summary.text.strip():
        raise EmptyInput(f"summary for {summary.speaker} in {summary.episode} is empty")
    p = config.prompts
    speaker, episode = summary.speaker, summary.episode
    base = p.render("extract.user", speaker=speaker, episode=episode, summary=summary.text)
    parse = lambda o: parse_chains(o, speaker, episode)  # noqa: E731
    dump = lambda chains: [chain_to_dict(c) for c in chains]  # noqa: E731

    def worker(c: Caller):
        system = p.text("extract.system")
        first = c.json("extract", system, base, parse, _CHAIN_SCHEMA)
        second_prompt = base + "\n\n" + p.render("validate.user", stage1=pretty_payload({"chains": dump(first)}))
        return dump(c.json("validate", system, second_prompt, parse, _CHAIN_SCHEMA))

    def integrator(c: Caller, a, b):
        system = p.text("extract_eval.system")
        step1 = p.render(
            "extract_faithfulness.user",
            summary=summary.text,
            chains_a=pretty_payload({"chains": a}) if a else "(no output)",
            chains_b=pretty_payload({"chains": b}) if b else "(no output)",
        )
        r1 = c.text("faithfulness", system, step1)
        step2 = p.render("extract_logic.user", previous=f"{step1}\n\n{r1}")
        r2 = c.text("logic", system, step2)
        step3 = p.render("extract_decide.user", previous=f"{step2}\n\n{r2}")
        return dump(c.json("decide", system, step3, parse, _CHAIN_SCHEMA))

    record = run_ensemble_task(
        "extract",
        {"speaker": speaker, "episode": episode, "summary": summary.text},
        config,
        worker=worker,
        integrator=integrator,
        equiv=chains_equivalent,
    )
    chains = tuple(chain_from_dict(d) for d in record.integrated_out)
    return Extraction(speaker, episode, chains), record
