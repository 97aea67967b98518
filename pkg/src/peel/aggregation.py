"""Mapping causal root divergences onto a growing list of core causal questions."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from .chain_model import PremiseType
from .disagreement import Divergence
from .errors import EmptyInput, NotCausal, UnmappedQuestion
from .llm.ensemble import AgreementOutcome, Caller, EnsembleConfig, PayloadError, classify_agreement, run_ensemble_task
from .topics import normalize_label


@dataclass(frozen=True)
class CausalQuestion:
    question_id: str
    text: str
    stances: tuple[str, str]
    origin: str = "model_created"
    theme: Optional[str] = None
    revision: int = 0

    def __post_init__(self):
        if len(self.stances) != 2 or normalize_label(self.stances[0]) == normalize_label(self.stances[1]):
            raise ValueError(f"{self.question_id} needs two distinct stances, got {self.stances!r}")

    def stance(self, label: str) -> Optional[str]:
        key = normalize_label(label)
        return next((s for s in self.stances if normalize_label(s) == key), None)

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "text": self.text,
            "stances": list(self.stances),
            "origin": self.origin,
            "theme": self.theme,
            "revision": self.revision,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CausalQuestion":
        return cls(d["question_id"], d["text"], tuple(d["stances"]), d.get("origin", "model_created"), d.get("theme"), int(d.get("revision", 0)))


@dataclass(frozen=True)
class Assignment:
    divergence_key: str
    question_id: str
    boomer_stance: str
    doomer_stance: str
    agreement: AgreementOutcome
    votes: dict = field(default_factory=dict)
    map_revision: int = 0

    def to_dict(self) -> dict:
        return {
            "divergence_key": self.divergence_key,
            "question_id": self.question_id,
            "boomer_stance": self.boomer_stance,
            "doomer_stance": self.doomer_stance,
            "agreement": self.agreement.value,
            "votes": self.votes,
            "map_revision": self.map_revision,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Assignment":
        return cls(
            d["divergence_key"],
            d["question_id"],
            d["boomer_stance"],
            d["doomer_stance"],
            AgreementOutcome(d["agreement"]),
            d.get("votes", {}),
            int(d.get("map_revision", 0)),
        )


class ConflictMap:
    """Append-only list of causal questions plus the assignments made against it."""

    def __init__(self, questions=(), assignments=(), revision: int = 0, id_prefix: str = ""):
        self.id_prefix = id_prefix
        self.questions: list[CausalQuestion] = []
        self._index: dict[str, CausalQuestion] = {}
        self.assignments: list[Assignment] = list(assignments)
        self.revision = revision
        for q in questions:
            self._insert(q)

    def _insert(self, q: CausalQuestion) -> None:
        key = normalize_label(q.text)
        if key in self._index:
            raise ValueError(f"duplicate question {q.text!r}")
        self.questions.append(q)
        self._index[key] = q

    def find(self, text: str) -> Optional[CausalQuestion]:
        return self._index.get(normalize_label(text))

    def get(self, question_id: str) -> CausalQuestion:
        for q in self.questions:
            if q.question_id == question_id:
                return q
        raise KeyError(question_id)

    def add(self, text: str, stances: tuple[str, str]) -> CausalQuestion:
        found = self.find(text)
        if found is not None:
            return found
        self.revision += 1
        q = CausalQuestion(f"{self.id_prefix}Q{len(self.questions) + 1:03d}", " ".join(text.split()), tuple(stances), revision=self.revision)
        self._insert(q)
        return q

    def snapshot(self) -> dict:
        return {"revision": self.revision, "questions": [[q.text, list(q.stances)] for q in self.questions]}

    def to_dict(self) -> dict:
        return {
            "id_prefix": self.id_prefix,
            "revision": self.revision,
            "questions": [q.to_dict() for q in self.questions],
            "assignments": [a.to_dict() for a in self.assignments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConflictMap":
        return cls(
            [CausalQuestion.from_dict(q) for q in d.get("questions", ())],
            [Assignment.from_dict(a) for a in d.get("assignments", ())],
            int(d.get("revision", 0)),
            d.get("id_prefix", ""),
        )


_ASSIGN_SCHEMA = (
    '{"question": str, "stances": [str, str], "boomer_stance": str, "doomer_stance": str, "new_question": bool}'
)


def parse_assignment(obj: Any, cmap: ConflictMap) -> dict:
    """Validate a vote; an existing question's stances override whatever the model restated."""
    if not isinstance(obj, dict):
        raise PayloadError("expected a JSON object")
    text = obj.get("question")
    if not isinstance(text, str) or not text.strip():
        raise PayloadError("'question' must be a non-empty string")
    bs, ds = obj.get("boomer_stance"), obj.get("doomer_stance")
    if not isinstance(bs, str) or not isinstance(ds, str):
        raise PayloadError("'boomer_stance' and 'doomer_stance' must be strings")
    existing = cmap.find(text)
    if existing is not None:
        stances = existing.stances
        text = existing.text
    else:
        raw = obj.get("stances")
        if not (isinstance(raw, list) and len(raw) == 2 and all(isinstance(s, str) and s.strip() for s in raw)):
            raise PayloadError("a new question needs exactly two stance strings")
        stances = tuple(" ".join(s.split()) for s in raw)
        if normalize_label(stances[0]) == normalize_label(stances[1]):
            raise PayloadError("the two stances must differ")
        text = " ".join(text.split())
    match = lambda s: next((x for x in stances if normalize_label(x) == normalize_label(s)), None)  # noqa: E731
    b, d = match(bs), match(ds)
    if b is None or d is None:
        raise PayloadError(f"stances must be one of {list(stances)}")
    if b == d:
        raise PayloadError("boomer and doomer must take opposite stances")
    return {
        "question": text,
        "stances": list(stances),
        "boomer_stance": b,
        "doomer_stance": d,
        "new_question": existing is None,
    }


def classify_divergence(
    divergence: Divergence,
    cmap: ConflictMap,
    config: EnsembleConfig,
    key: str,
    boomer_text: str = "",
    doomer_text: str = "",
) -> Assignment:
    """Assign one causal root divergence to a question, growing ``cmap`` if needed."""
    if divergence.dtype is not PremiseType.CAUSAL:
        raise NotCausal(f"{key}: divergence type is {divergence.dtype.value if divergence.dtype else 'unknown'}")
    p = config.prompts
    revision = cmap.revision
    listing = "\n".join(f"- {q.text} [{q.stances[0]} | {q.stances[1]}]" for q in cmap.questions) or "(empty)"
    base = p.render(
        "aggregate.user",
        revision=revision,
        questions=listing,
        boomer_ref=divergence.boomer_ref,
        boomer_text=boomer_text,
        doomer_ref=divergence.doomer_ref,
        doomer_text=doomer_text,
        rationale=divergence.rationale,
    )
    system = p.text("aggregate.system")
    parse = lambda o: parse_assignment(o, cmap)  # noqa: E731

    def worker(c: Caller):
        return c.json("vote", system, base, parse, _ASSIGN_SCHEMA)

    def integrator(c: Caller, a, b):
        prompt = p.render(
            "aggregate_integrate.user",
            base=base,
            vote_a=json.dumps(a, ensure_ascii=False) if a else "(no output)",
            vote_b=json.dumps(b, ensure_ascii=False) if b else "(no output)",
        )
        return c.json("reconcile", system, prompt, parse, _ASSIGN_SCHEMA)

    payload = {
        "key": key,
        "divergence": divergence.to_dict(),
        "boomer_text": boomer_text,
        "doomer_text": doomer_text,
        "map": cmap.snapshot(),
    }
    same_q = lambda x, y: normalize_label(x["question"]) == normalize_label(y["question"])  # noqa: E731
    record = run_ensemble_task("aggregate_classify", payload, config, worker=worker, integrator=integrator, equiv=same_q)
    final = record.integrated_out
    q = cmap.add(final["question"], tuple(final["stances"]))
    assignment = Assignment(
        divergence_key=key,
        question_id=q.question_id,
        boomer_stance=final["boomer_stance"],
        doomer_stance=final["doomer_stance"],
        agreement=classify_agreement(record.worker_a_out, record.worker_b_out, final, same_q),
        votes={"worker_a": record.worker_a_out, "worker_b": record.worker_b_out, "integrator": final},
        map_revision=revision,
    )
    cmap.assignments.append(assignment)
    return assignment


def consistency_rate(cmap: ConflictMap) -> float:
    """Share of assignments where the integrator picked the question both workers picked."""
    if not cmap.assignments:
        raise EmptyInput("no assignments")
    return sum(1 for a in cmap.assignments if a.agreement is AgreementOutcome.R3) / len(cmap.assignments)


def load_theme_file(path: Union[str, Path]) -> dict[str, str]:
    """Two-column CSV ``question_id,theme``; a header row is optional."""
    text = Path(path).read_text(encoding="utf-8")
    out = {}
    for i, row in enumerate(csv.reader(io.StringIO(text))):
        if not row or not "".join(row).strip():
            continue
        if len(row) < 2:
            raise ValueError(f"{path}: row {i + 1} needs question_id and theme")
        qid, theme = row[0].strip(), row[1].strip()
        if i == 0 and qid.lower() == "question_id":
            continue
        out[qid] = theme
    return out


def theme_report(cmap: ConflictMap, themes: Union[str, Path, Mapping[str, str]]) -> dict:
    """Assignment counts and shares per human-assigned theme."""
    mapping = dict(themes) if isinstance(themes, Mapping) else load_theme_file(themes)
    missing = [q.question_id for q in cmap.questions if q.question_id not in mapping]
    if missing:
        raise UnmappedQuestion(missing)
    counts = Counter(mapping[a.question_id] for a in cmap.assignments)
    n = sum(counts.values())
    rows = [
        {"theme": t, "count": c, "share": c / n}
        for t, c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    return {"n_assignments": n, "themes": rows}
