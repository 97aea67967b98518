"""Domain types for reasoning chains and the graph built from them."""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .errors import ChainFormatError, CycleDetected, UnknownNode, UnknownPremiseType
from .refs import RefKind, RefLabel
from .relation_parser import CombineMode, ParseError, RelationKind, Relationship, parse_relation

SCHEMA_VERSION = "1"
PENDING_TYPE = "unspecified-pending-validation"


class PremiseType(str, Enum):
    FACTUAL = "factual"
    FORECAST = "forecast"
    CAUSAL = "causal"
    DEFINITIONAL = "definitional"
    MORAL = "moral"


PREMISE_TYPES = tuple(PremiseType)

_TYPE_ALIASES = {
    "fact": PremiseType.FACTUAL,
    "prediction": PremiseType.FORECAST,
    "moral_outcome": PremiseType.MORAL,
    "moral_action": PremiseType.MORAL,
    "evaluative": PremiseType.MORAL,
}


def normalize_premise_type(raw: str) -> PremiseType:
    """Map a free-text type label onto one of the five canonical types.

    Matching is case-insensitive and ignores surrounding whitespace.
    """
    if raw is None or not str(raw).strip():
        raise UnknownPremiseType(raw)
    key = str(raw).strip().lower()
    try:
        return PremiseType(key)
    except ValueError:
        pass
    if key in _TYPE_ALIASES:
        return _TYPE_ALIASES[key]
    raise UnknownPremiseType(raw)


class Explicitness(str, Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"


class Attitude(str, Enum):
    OPTIMISTIC = "optimistic"
    NEUTRAL = "neutral"
    PESSIMISTIC = "pessimistic"


class Gender(str, Enum):
    FEMALE = "female"
    MALE = "male"
    UNSPECIFIED = "unspecified"


PROFESSIONS = (
    "Academic",
    "Creative / Media / Public Figure",
    "Industry / Tech Executive",
    "Mixed Academic–Industry",
    "Public / Policy / Government / Military",
    "Tech / Industry Researcher / Practitioner",
    "Other",
)


def normalize_profession(raw: str) -> str:
    text = " ".join(str(raw).replace("-", "–").split())
    for p in PROFESSIONS:
        if p.lower() == text.lower():
            return p
    return text


@dataclass(frozen=True)
class SpeakerMeta:
    name: str
    episode: str
    profession: Optional[str] = None
    gender: Gender = Gender.UNSPECIFIED

    def __post_init__(self):
        if self.profession is not None:
            object.__setattr__(self, "profession", normalize_profession(self.profession))
        if self.profession is not None and self.profession not in PROFESSIONS:
            raise ValueError(f"profession {self.profession!r} not in taxonomy")
        if not isinstance(self.gender, Gender):
            object.__setattr__(self, "gender", Gender(self.gender))


@dataclass(frozen=True)
class Premise:
    id: RefLabel
    text: str
    ptype: Optional[PremiseType]  # None while a derived premise awaits typing
    explicitness: Explicitness = Explicitness.EXPLICIT
    confidence: Optional[int] = None
    derived: bool = False

    @property
    def is_implicit(self) -> bool:
        return self.explicitness is Explicitness.IMPLICIT


@dataclass(frozen=True)
class Conclusion:
    id: RefLabel
    text: str
    topic: Optional[str] = None
    attitude: Optional[Attitude] = None


@dataclass(frozen=True)
class ReasoningChain:
    speaker: str
    episode: str
    conclusions: tuple[Conclusion, ...]
    premises: tuple[Premise, ...]
    relationships: tuple[Relationship, ...]
    derived_premises: tuple[Premise, ...] = ()

    @property
    def key(self) -> str:
        first = str(self.conclusions[0].id) if self.conclusions else "C?"
        return f"{self.episode}:{self.speaker}:{first}"

    def premise(self, label: RefLabel) -> Optional[Premise]:
        for p in self.premises:
            if p.id == label:
                return p
        for p in self.derived_premises:
            if p.id == label:
                return p
        return None

    def all_premises(self) -> tuple[Premise, ...]:
        return self.premises + self.derived_premises

    def conclusion(self, label: RefLabel) -> Optional[Conclusion]:
        for c in self.conclusions:
            if c.id == label:
                return c
        return None

    def node_labels(self) -> set[RefLabel]:
        labels = {p.id for p in self.all_premises()}
        labels.update(r.id for r in self.relationships)
        labels.update(c.id for c in self.conclusions)
        return labels

    def restrict_to(self, conclusion_id: RefLabel) -> "ReasoningChain":
        """Sub-chain containing only what supports ``conclusion_id``."""
        dag = build_dag(self)
        keep = dag.ancestors(conclusion_id) | {conclusion_id}
        # a kept relationship's inferred premise belongs to the argument even if nothing cites it
        keep |= {r.target for r in self.relationships if r.id in keep and r.target is not None}
        return replace(
            self,
            conclusions=tuple(c for c in self.conclusions if c.id == conclusion_id),
            premises=tuple(p for p in self.premises if p.id in keep),
            relationships=tuple(r for r in self.relationships if r.id in keep),
            derived_premises=tuple(p for p in self.derived_premises if p.id in keep),
        )

    def with_conclusion(self, conclusion: Conclusion) -> "ReasoningChain":
        return replace(
            self,
            conclusions=tuple(conclusion if c.id == conclusion.id else c for c in self.conclusions),
        )


def materialize_derived(
    premises: Iterable[Premise],
    relationships: Iterable[Relationship],
    known: Iterable[Premise] = (),
) -> tuple[Premise, ...]:
    """Create derived premises for P-targets absent from the premise list.

    Types supplied in ``known`` (e.g. after retyping) are kept; others get
    ``ptype=None`` meaning pending validation.
    """
    listed = {p.id for p in premises}
    known_by_id = {p.id: p for p in known}
    derived = {}
    for rel in relationships:
        t = rel.target
        if t is None or t.kind is not RefKind.PREMISE or t in listed or t in derived:
            continue
        if t in known_by_id:
            derived[t] = replace(known_by_id[t], derived=True)
        else:
            derived[t] = Premise(
                id=t,
                text=rel.gloss or f"(derived by {rel.id})",
                ptype=None,
                explicitness=Explicitness.IMPLICIT,
                confidence=None,
                derived=True,
            )
    return tuple(derived[k] for k in sorted(derived))


# --- JSON schema -----------------------------------------------------------


def _label(raw, where: str) -> RefLabel:
    try:
        return RefLabel.parse(str(raw))
    except ValueError as exc:
        raise ChainFormatError(f"{where}: {exc}") from None


def _premise_from_dict(d: dict, where: str) -> Premise:
    if not isinstance(d, dict):
        raise ChainFormatError(f"{where}: premise must be an object")
    pid = _label(d.get("id"), where)
    if pid.kind is not RefKind.PREMISE:
        raise ChainFormatError(f"{where}: premise id must be a P-label, got {pid}")
    text = d.get("text")
    if not isinstance(text, str) or not text.strip():
        raise ChainFormatError(f"{where}: premise {pid} has empty text")
    raw_type = d.get("type")
    if raw_type == PENDING_TYPE:
        ptype = None
    else:
        try:
            ptype = normalize_premise_type(raw_type)
        except UnknownPremiseType:
            raise ChainFormatError(f"{where}: premise {pid} has unknown type {raw_type!r}") from None
    try:
        explicitness = Explicitness(str(d.get("explicitness", "explicit")).strip().lower())
    except ValueError:
        raise ChainFormatError(f"{where}: premise {pid} explicitness must be explicit/implicit") from None
    conf = d.get("confidence")
    if conf is not None:
        if isinstance(conf, bool) or not isinstance(conf, (int, float)) or conf != int(conf):
            raise ChainFormatError(f"{where}: premise {pid} confidence must be an integer, got {conf!r}")
        conf = int(conf)
    return Premise(pid, text.strip(), ptype, explicitness, conf)


def _relationship_from_dict(d, where: str) -> Relationship:
    if isinstance(d, str):
        line, gloss, mode = d, None, None
    elif isinstance(d, dict):
        expr = d.get("expr")
        if not isinstance(expr, str):
            raise ChainFormatError(f"{where}: relationship needs an 'expr' string")
        rid = d.get("id")
        line = f"{rid}: {expr}" if rid is not None and not expr.lstrip().startswith(str(rid)) else expr
        gloss, mode = d.get("gloss"), d.get("mode")
    else:
        raise ChainFormatError(f"{where}: relationship must be a string or object")
    try:
        rel = parse_relation(line)
    except ParseError as exc:
        raise ChainFormatError(f"{where}: {exc}") from None
    if gloss:
        rel = replace(rel, gloss=str(gloss).strip())
    if mode:
        rel = replace(rel, mode=CombineMode(mode))
    return rel


def chain_from_dict(d: dict) -> ReasoningChain:
    """Load a chain from the canonical JSON document (schema version 1)."""
    if not isinstance(d, dict):
        raise ChainFormatError("chain must be a JSON object")
    version = str(d.get("schema_version", SCHEMA_VERSION))
    if version != SCHEMA_VERSION:
        raise ChainFormatError(f"unsupported schema_version {version!r}")
    conclusions = []
    raw_conclusions = d.get("conclusions")
    if not isinstance(raw_conclusions, list) or not raw_conclusions:
        raise ChainFormatError("chain needs at least one conclusion")
    for i, c in enumerate(raw_conclusions):
        where = f"conclusions[{i}]"
        if not isinstance(c, dict):
            raise ChainFormatError(f"{where}: must be an object")
        cid = _label(c.get("id"), where)
        if cid.kind is not RefKind.CONCLUSION:
            raise ChainFormatError(f"{where}: conclusion id must be a C-label, got {cid}")
        text = c.get("text")
        if not isinstance(text, str) or not text.strip():
            raise ChainFormatError(f"{where}: conclusion {cid} has empty text")
        att = c.get("attitude")
        try:
            att = Attitude(str(att).strip().lower()) if att else None
        except ValueError:
            raise ChainFormatError(f"{where}: unknown attitude {att!r}") from None
        conclusions.append(Conclusion(cid, text.strip(), c.get("topic") or None, att))

    premises = tuple(
        _premise_from_dict(p, f"premises[{i}]") for i, p in enumerate(d.get("premises") or [])
    )
    relationships = tuple(
        _relationship_from_dict(r, f"relationships[{i}]")
        for i, r in enumerate(d.get("relationships") or [])
    )
    known = tuple(
        _premise_from_dict(p, f"derived_premises[{i}]")
        for i, p in enumerate(d.get("derived_premises") or [])
    )
    speaker = d.get("speaker") or ""
    if isinstance(speaker, dict):
        speaker = speaker.get("name", "")
    return ReasoningChain(
        speaker=str(speaker),
        episode=str(d.get("episode") or ""),
        conclusions=tuple(conclusions),
        premises=premises,
        relationships=relationships,
        derived_premises=materialize_derived(premises, relationships, known),
    )


def _premise_to_dict(p: Premise) -> dict:
    return {
        "id": str(p.id),
        "text": p.text,
        "type": p.ptype.value if p.ptype else PENDING_TYPE,
        "explicitness": p.explicitness.value,
        "confidence": p.confidence,
    }


def chain_to_dict(chain: ReasoningChain) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "speaker": chain.speaker,
        "episode": chain.episode,
        "conclusions": [
            {
                "id": str(c.id),
                "text": c.text,
                "topic": c.topic,
                "attitude": c.attitude.value if c.attitude else None,
            }
            for c in chain.conclusions
        ],
        "premises": [_premise_to_dict(p) for p in chain.premises],
        "relationships": [],
    }
    for r in chain.relationships:
        rd = {"id": str(r.id), "expr": r.expr, "gloss": r.gloss}
        if r.mode is not CombineMode.UNSPECIFIED:
            rd["mode"] = r.mode.value
        out["relationships"].append(rd)
    typed = [p for p in chain.derived_premises if p.ptype is not None]
    if typed:
        out["derived_premises"] = [_premise_to_dict(p) for p in typed]
    return out


def load_chain(path) -> ReasoningChain:
    return chain_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_chains(path) -> list[ReasoningChain]:
    """Load chains from a file or a directory of ``*.json`` files.

    A file may hold a single chain or ``{"chains": [...]}``.
    """
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    chains = []
    for f in files:
        doc = json.loads(f.read_text(encoding="utf-8"))
        if isinstance(doc, dict) and "chains" in doc:
            chains.extend(chain_from_dict(c) for c in doc["chains"])
        else:
            chains.append(chain_from_dict(doc))
    return chains


# --- graph -----------------------------------------------------------------


@dataclass
class ChainDag:
    """Reference graph: operand -> relationship -> target."""

    nodes: list[RefLabel]
    succ: dict[RefLabel, list[RefLabel]]
    pred: dict[RefLabel, list[RefLabel]] = field(default_factory=dict)
    _depth: dict[RefLabel, int] = field(default_factory=dict, repr=False)

    @property
    def edge_count(self) -> int:
        return sum(len(v) for v in self.succ.values())

    def edges(self) -> list[tuple[RefLabel, RefLabel]]:
        return [(u, v) for u in self.nodes for v in self.succ[u]]

    def sources(self) -> list[RefLabel]:
        return [n for n in self.nodes if not self.pred[n]]

    def __contains__(self, node) -> bool:
        return node in self.succ

    def topological_order(self) -> list[RefLabel]:
        indeg = {n: len(self.pred[n]) for n in self.nodes}
        ready = deque(n for n in self.nodes if indeg[n] == 0)
        order = []
        while ready:
            n = ready.popleft()
            order.append(n)
            for m in self.succ[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    ready.append(m)
        return order

    def depths(self) -> dict[RefLabel, int]:
        if not self._depth:
            depth = {}
            for n in self.topological_order():
                depth[n] = max((depth[p] + 1 for p in self.pred[n]), default=0)
            self._depth = depth
        return self._depth

    def descendants(self, node: RefLabel) -> set[RefLabel]:
        return self._reach(node, self.succ)

    def ancestors(self, node: RefLabel) -> set[RefLabel]:
        return self._reach(node, self.pred)

    def _reach(self, node, adj) -> set[RefLabel]:
        if node not in self.succ:
            raise UnknownNode(node)
        seen: set[RefLabel] = set()
        stack = list(adj[node])
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(adj[n])
        return seen


def _find_cycle(nodes, succ) -> Optional[list[RefLabel]]:
    white, grey, black = 0, 1, 2
    color = {n: white for n in nodes}
    for start in nodes:
        if color[start] != white:
            continue
        path = [start]
        color[start] = grey
        iters = [iter(succ[start])]
        while iters:
            advanced = False
            for m in iters[-1]:
                if color[m] == grey:
                    return path[path.index(m):] + [m]
                if color[m] == white:
                    color[m] = grey
                    path.append(m)
                    iters.append(iter(succ[m]))
                    advanced = True
                    break
            if not advanced:
                color[path.pop()] = black
                iters.pop()
    return None


def reference_graph(chain: ReasoningChain) -> tuple[list[RefLabel], dict[RefLabel, list[RefLabel]]]:
    """Nodes and successor lists, including dangling references as nodes."""
    nodes = set(chain.node_labels())
    succ: dict[RefLabel, list[RefLabel]] = {}
    for rel in chain.relationships:
        for o in rel.operands:
            nodes.add(o)
            succ.setdefault(o, []).append(rel.id)
        if rel.target is not None:
            nodes.add(rel.target)
            succ.setdefault(rel.id, []).append(rel.target)
    ordered = sorted(nodes)
    for n in ordered:
        succ[n] = sorted(set(succ.get(n, [])))
    return ordered, succ


def find_reference_cycle(chain: ReasoningChain) -> Optional[list[RefLabel]]:
    nodes, succ = reference_graph(chain)
    return _find_cycle(nodes, succ)


def build_dag(chain: ReasoningChain) -> ChainDag:
    """Realize the chain's references as a DAG.

    Node order is P < R < C, then ascending index.  Raises
    :class:`CycleDetected` with the offending node sequence.
    """
    nodes, succ = reference_graph(chain)
    cycle = _find_cycle(nodes, succ)
    if cycle:
        raise CycleDetected(cycle)
    pred: dict[RefLabel, list[RefLabel]] = {n: [] for n in nodes}
    for u in nodes:
        for v in succ[u]:
            pred[v].append(u)
    return ChainDag(nodes=nodes, succ=succ, pred={n: sorted(p) for n, p in pred.items()})


def node_depth(dag: ChainDag, node: RefLabel) -> int:
    """Longest path length from any source node; sources have depth 0."""
    if node not in dag:
        raise UnknownNode(node)
    return dag.depths()[node]


@dataclass(frozen=True)
class EnthymemeStats:
    explicit: dict[PremiseType, int]
    implicit: dict[PremiseType, int]
    total: int

    @property
    def implicit_count(self) -> int:
        return sum(self.implicit.values())

    @property
    def implicit_share(self) -> float:
        return self.implicit_count / self.total if self.total else 0.0

    @property
    def explicit_share(self) -> float:
        return 1.0 - self.implicit_share if self.total else 0.0

    @property
    def is_enthymeme(self) -> bool:
        return self.implicit_count > 0

    def type_count(self, t: PremiseType) -> int:
        return self.explicit[t] + self.implicit[t]

    def implicit_share_of(self, t: PremiseType) -> Optional[float]:
        n = self.type_count(t)
        return self.implicit[t] / n if n else None


def enthymeme_stats(chain: ReasoningChain) -> EnthymemeStats:
    """Explicit/implicit counts per type over the listed premises.

    Derived premises are intermediate results, not stated or unstated
    premises, so they are not counted.
    """
    explicit: Counter = Counter()
    implicit: Counter = Counter()
    for p in chain.premises:
        if p.ptype is None:
            continue
        (implicit if p.is_implicit else explicit)[p.ptype] += 1
    total = sum(explicit.values()) + sum(implicit.values())
    return EnthymemeStats(
        explicit={t: explicit[t] for t in PremiseType},
        implicit={t: implicit[t] for t in PremiseType},
        total=total,
    )


__all__ = [
    "Attitude",
    "ChainDag",
    "Conclusion",
    "EnthymemeStats",
    "Explicitness",
    "Gender",
    "PENDING_TYPE",
    "PREMISE_TYPES",
    "PROFESSIONS",
    "Premise",
    "PremiseType",
    "ReasoningChain",
    "RefKind",
    "RefLabel",
    "RelationKind",
    "Relationship",
    "SCHEMA_VERSION",
    "SpeakerMeta",
    "build_dag",
    "chain_from_dict",
    "chain_to_dict",
    "enthymeme_stats",
    "load_chain",
    "load_chains",
    "materialize_derived",
    "node_depth",
    "normalize_premise_type",
]
