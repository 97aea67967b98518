"""Topic and attitude classification against a growing master topic list."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterable, Optional

from .chain_model import Attitude, ReasoningChain
from .errors import PeelError
from .llm.ensemble import AgreementOutcome, Caller, EnsembleConfig, PayloadError, classify_agreement, run_ensemble_task
from .refs import RefLabel

NON_AI_LABEL = "Non-AI topic"
SEED_ORIGIN = "seed"
MODEL_ORIGIN = "model_created"


def normalize_label(label: str) -> str:
    """Case-folded, whitespace-collapsed form used for uniqueness checks."""
    return " ".join(label.split()).casefold()


@dataclass(frozen=True)
class TopicEntry:
    topic_id: str
    label: str
    theme: Optional[str]
    origin: str
    revision: int  # list revision at which the entry appeared

    def to_dict(self) -> dict:
        return {
            "topic_id": self.topic_id,
            "label": self.label,
            "theme": self.theme,
            "origin": self.origin,
            "revision": self.revision,
        }


class TopicList:
    """Append-only topic list; each addition bumps the revision."""

    def __init__(self, entries: Iterable[TopicEntry] = (), revision: int = 0, history: Iterable[dict] = ()):
        self.entries: list[TopicEntry] = []
        self._index: dict[str, TopicEntry] = {}
        self.revision = revision
        self.history: list[dict] = list(history)
        for e in entries:
            self._insert(e)

    def _insert(self, entry: TopicEntry) -> None:
        key = normalize_label(entry.label)
        if key in self._index:
            raise ValueError(f"duplicate topic label {entry.label!r}")
        self.entries.append(entry)
        self._index[key] = entry

    @classmethod
    def seed(cls) -> "TopicList":
        doc = json.loads((resources.files("peel") / "data" / "seed_topics.json").read_text(encoding="utf-8"))
        entries = []
        for block in doc["themes"]:
            for label in block["topics"]:
                entries.append(TopicEntry(f"T{len(entries) + 1:03d}", label, block["theme"], SEED_ORIGIN, 0))
        return cls(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def find(self, label: str) -> Optional[TopicEntry]:
        return self._index.get(normalize_label(label))

    def get(self, topic_id: str) -> TopicEntry:
        for e in self.entries:
            if e.topic_id == topic_id:
                return e
        raise KeyError(topic_id)

    @property
    def themes(self) -> list[str]:
        return list(dict.fromkeys(e.theme for e in self.entries if e.theme))

    @property
    def non_ai(self) -> TopicEntry:
        e = self.find(NON_AI_LABEL)
        if e is None:
            raise PeelError("topic list lacks the non-AI entry")
        return e

    def add(self, label: str, theme: Optional[str] = None, source: str = "") -> TopicEntry:
        """Return the existing entry for ``label`` or append a new one."""
        label = " ".join(label.split())
        found = self.find(label)
        if found is not None:
            return found
        self.revision += 1
        entry = TopicEntry(f"T{len(self.entries) + 1:03d}", label, theme, MODEL_ORIGIN, self.revision)
        self._insert(entry)
        self.history.append({"revision": self.revision, "topic_id": entry.topic_id, "label": label, "source": source})
        return entry

    def snapshot(self) -> dict:
        """The part of the list a classification depends on."""
        return {"revision": self.revision, "labels": [e.label for e in self.entries]}

    def to_dict(self) -> dict:
        return {
            "revision": self.revision,
            "topics": [e.to_dict() for e in self.entries],
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TopicList":
        entries = [
            TopicEntry(e["topic_id"], e["label"], e.get("theme"), e.get("origin", SEED_ORIGIN), int(e.get("revision", 0)))
            for e in d["topics"]
        ]
        return cls(entries, int(d.get("revision", 0)), d.get("history", []))


@dataclass(frozen=True)
class Vote:
    topic: str
    attitude: Attitude
    new_topic: bool = False
    theme: Optional[str] = None
    equivalent: bool = False  # integrator judged the two worker topics equivalent

    def to_dict(self) -> dict:
        d = {"topic": self.topic, "attitude": self.attitude.value, "new_topic": self.new_topic}
        if self.theme:
            d["theme"] = self.theme
        if self.equivalent:
            d["equivalent"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Vote":
        return cls(d["topic"], Attitude(d["attitude"]), bool(d.get("new_topic")), d.get("theme"), bool(d.get("equivalent")))


_VOTE_SCHEMA = '{"topic": str, "attitude": "optimistic|neutral|pessimistic", "new_topic": bool, "theme": str|null}'


def parse_vote(obj: Any, topics: TopicList) -> Vote:
    """Validate a vote and map its topic onto an existing label when one matches."""
    if not isinstance(obj, dict):
        raise PayloadError("expected a JSON object")
    topic = obj.get("topic")
    if not isinstance(topic, str) or not topic.strip():
        raise PayloadError("'topic' must be a non-empty string")
    try:
        attitude = Attitude(str(obj.get("attitude", "")).strip().lower())
    except ValueError:
        raise PayloadError(f"'attitude' must be optimistic, neutral or pessimistic, got {obj.get('attitude')!r}") from None
    existing = topics.find(topic)
    theme = obj.get("theme") if isinstance(obj.get("theme"), str) else None
    equivalent = bool(obj.get("equivalent_votes") or obj.get("equivalent"))
    if existing is not None:
        return Vote(existing.label, attitude, False, existing.theme, equivalent)
    return Vote(" ".join(topic.split()), attitude, True, theme, equivalent)


@dataclass(frozen=True)
class ClassifiedConclusion:
    chain_key: str
    conclusion_id: RefLabel
    topic_id: str
    topic_label: str
    attitude: Attitude
    is_ai_risk: bool
    votes: dict[str, Vote]
    topic_agreement: AgreementOutcome
    attitude_agreement: AgreementOutcome
    ai_agreement: AgreementOutcome
    list_revision: int

    def to_dict(self) -> dict:
        return {
            "chain_key": self.chain_key,
            "conclusion_id": str(self.conclusion_id),
            "topic_id": self.topic_id,
            "topic_label": self.topic_label,
            "attitude": self.attitude.value,
            "is_ai_risk": self.is_ai_risk,
            "votes": {k: v.to_dict() for k, v in sorted(self.votes.items())},
            "agreement": {
                "topic": self.topic_agreement.value,
                "attitude": self.attitude_agreement.value,
                "ai_vs_non_ai": self.ai_agreement.value,
            },
            "list_revision": self.list_revision,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifiedConclusion":
        ag = d["agreement"]
        return cls(
            chain_key=d["chain_key"],
            conclusion_id=RefLabel.parse(d["conclusion_id"]),
            topic_id=d["topic_id"],
            topic_label=d["topic_label"],
            attitude=Attitude(d["attitude"]),
            is_ai_risk=bool(d["is_ai_risk"]),
            votes={k: Vote.from_dict(v) for k, v in d["votes"].items()},
            topic_agreement=AgreementOutcome(ag["topic"]),
            attitude_agreement=AgreementOutcome(ag["attitude"]),
            ai_agreement=AgreementOutcome(ag["ai_vs_non_ai"]),
            list_revision=int(d["list_revision"]),
        )


def _premise_context(chain: ReasoningChain, conclusion_id: RefLabel) -> str:
    sub = chain.restrict_to(conclusion_id)
    return "\n".join(f"{p.id} ({p.ptype.value if p.ptype else 'derived'}): {p.text}" for p in sub.premises)


def assign_topic_attitude(
    chain: ReasoningChain,
    conclusion_id: RefLabel,
    topics: TopicList,
    config: EnsembleConfig,
) -> ClassifiedConclusion:
    """Classify one conclusion; a topic the integrator introduces is appended to ``topics``.

    Both workers vote against the same list revision, so the outcome does
    not depend on which worker finishes first.
    """
    conclusion = chain.conclusion(conclusion_id)
    if conclusion is None:
        raise KeyError(f"{chain.key} has no conclusion {conclusion_id}")
    p = config.prompts
    revision = topics.revision
    listing = "\n".join(f"- {e.label}" + (f" [{e.theme}]" if e.theme else "") for e in topics)
    base = p.render(
        "classify.user",
        revision=revision,
        topics=listing,
        conclusion=conclusion.text,
        premises=_premise_context(chain, conclusion_id) or "(none)",
    )
    system = p.text("classify.system")
    parse = lambda o: parse_vote(o, topics)  # noqa: E731

    def worker(c: Caller):
        return c.json("vote", system, base, parse, _VOTE_SCHEMA).to_dict()

    def integrator(c: Caller, a, b):
        prompt = p.render(
            "classify_integrate.user",
            base=base,
            vote_a=json.dumps(a, ensure_ascii=False) if a else "(no output)",
            vote_b=json.dumps(b, ensure_ascii=False) if b else "(no output)",
        )
        return c.json("reconcile", system, prompt, parse, _VOTE_SCHEMA).to_dict()

    payload = {
        "chain": chain.key,
        "conclusion": conclusion.text,
        "premises": _premise_context(chain, conclusion_id),
        "topics": topics.snapshot(),
    }
    same_topic = lambda x, y: normalize_label(x["topic"]) == normalize_label(y["topic"])  # noqa: E731
    record = run_ensemble_task(
        "classify_topic_attitude", payload, config, worker=worker, integrator=integrator, equiv=same_topic
    )
    votes = {
        role: Vote.from_dict(out)
        for role, out in (("worker_a", record.worker_a_out), ("worker_b", record.worker_b_out), ("integrator", record.integrated_out))
        if out
    }
    final = votes["integrator"]
    entry = topics.find(final.topic) or topics.add(final.topic, final.theme, source=f"{chain.key}/{conclusion_id}")
    a, b = record.worker_a_out, record.worker_b_out
    non_ai = normalize_label(NON_AI_LABEL)
    is_ai = lambda v: None if not v else normalize_label(v["topic"]) != non_ai  # noqa: E731
    return ClassifiedConclusion(
        chain_key=chain.key,
        conclusion_id=conclusion_id,
        topic_id=entry.topic_id,
        topic_label=entry.label,
        attitude=final.attitude,
        is_ai_risk=entry.label != NON_AI_LABEL,
        votes=votes,
        topic_agreement=classify_agreement(a, b, record.integrated_out, same_topic),
        attitude_agreement=classify_agreement(
            a and a["attitude"], b and b["attitude"], final.attitude.value
        ),
        ai_agreement=classify_agreement(
            _boolkey(is_ai(a)), _boolkey(is_ai(b)), _boolkey(is_ai(record.integrated_out))
        ),
        list_revision=revision,
    )


def _boolkey(x: Optional[bool]) -> Optional[str]:
    # booleans as non-empty tokens so False still counts as a present payload
    return None if x is None else ("ai" if x else "non_ai")


# --- consistency table ------------------------------------------------------------


def _rows(counts: list[tuple[str, int]], total: int) -> list[dict]:
    return [{"label": label, "count": n, "share": (n / total) if total else 0.0} for label, n in counts]


def agreement_table(classified: Iterable[ClassifiedConclusion]) -> dict:
    """Consistency between the two workers and the integrator.

    The AI/non-AI block covers every conclusion; the topic and attitude
    blocks cover conclusions finally classified as AI risks.
    """
    items = list(classified)
    ai_items = [c for c in items if c.is_ai_risk]
    O = AgreementOutcome

    all3 = sum(1 for c in items if c.ai_agreement is O.R3)
    ai_block = _rows([("All 3 models agree", all3), ("2 models agree", len(items) - all3)], len(items))

    both = [c for c in ai_items if c.topic_agreement is O.R3]
    selects = [
        c
        for c in ai_items
        if c.topic_agreement in (O.R2_MATCHES_A, O.R2_MATCHES_B) and c.votes.get("integrator") and c.votes["integrator"].equivalent
    ]
    only_a = [c for c in ai_items if c.topic_agreement is O.R2_MATCHES_A and c not in selects]
    only_b = [c for c in ai_items if c.topic_agreement is O.R2_MATCHES_B and c not in selects]
    neither = [c for c in ai_items if c.topic_agreement is O.R1]
    topic_block = _rows(
        [
            ("Integrator agrees with both workers", len(both) + len(selects)),
            ("- Same topic as both workers", len(both)),
            ("- Selects topic from one worker", len(selects)),
            ("Integrator agrees with worker A only", len(only_a)),
            ("Integrator agrees with worker B only", len(only_b)),
            ("Integrator proposes a new topic", len(neither)),
        ],
        len(ai_items),
    )

    att3 = sum(1 for c in ai_items if c.attitude_agreement is O.R3)
    att1 = sum(1 for c in ai_items if c.attitude_agreement in (O.R2_MATCHES_A, O.R2_MATCHES_B))
    att_block = _rows(
        [
            ("All 3 models agree", att3),
            ("Integrator agrees with one worker", att1),
            ("Integrator disagrees with both workers", len(ai_items) - att3 - att1),
        ],
        len(ai_items),
    )
    return {
        "n_conclusions": len(items),
        "n_ai_conclusions": len(ai_items),
        "blocks": {
            "ai_vs_non_ai": ai_block,
            "topic": topic_block,
            "attitude": att_block,
        },
    }


def attitude_by_topic(classified: Iterable[ClassifiedConclusion]) -> list[dict]:
    """Counts of each attitude per AI topic, largest topics first."""
    table: dict[str, dict] = {}
    for c in classified:
        if not c.is_ai_risk:
            continue
        row = table.setdefault(c.topic_id, {"topic_id": c.topic_id, "topic": c.topic_label, **{a.value: 0 for a in Attitude}})
        row[c.attitude.value] += 1
    rows = list(table.values())
    rows.sort(key=lambda r: (-sum(r[a.value] for a in Attitude), r["topic_id"]))
    return rows
