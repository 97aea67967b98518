"""Boomer/doomer pairing, divergence analysis and root selection."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Any, Iterable, Mapping, Optional, Sequence

from .chain_model import Attitude, ChainDag, PremiseType, ReasoningChain, build_dag, chain_to_dict
from .errors import EmptyInput
from .llm.ensemble import AgreementOutcome, Caller, EnsembleConfig, PayloadError, run_ensemble_task
from .refs import RefKind, RefLabel
from .stats import root_type_distribution as _type_distribution

log = logging.getLogger(__name__)

# used when the two sides of a divergence carry different premise types
TYPE_PRECEDENCE = (
    PremiseType.DEFINITIONAL,
    PremiseType.CAUSAL,
    PremiseType.FACTUAL,
    PremiseType.FORECAST,
    PremiseType.MORAL,
)


@dataclass(frozen=True)
class ChainPair:
    topic_id: str
    boomer_key: str
    boomer_conclusion: RefLabel
    doomer_key: str
    doomer_conclusion: RefLabel

    @property
    def pair_key(self) -> str:
        raw = f"{self.boomer_key}:{self.boomer_conclusion}__{self.doomer_key}:{self.doomer_conclusion}"
        return re.sub(r"[^A-Za-z0-9_.-]+", "-", raw)

    def to_dict(self) -> dict:
        return {
            "topic_id": self.topic_id,
            "boomer": {"chain": self.boomer_key, "conclusion": str(self.boomer_conclusion)},
            "doomer": {"chain": self.doomer_key, "conclusion": str(self.doomer_conclusion)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChainPair":
        return cls(
            d["topic_id"],
            d["boomer"]["chain"],
            RefLabel.parse(d["boomer"]["conclusion"]),
            d["doomer"]["chain"],
            RefLabel.parse(d["doomer"]["conclusion"]),
        )


def _attitude(c) -> Attitude:
    a = c.attitude
    return a if isinstance(a, Attitude) else Attitude(a)


def _order(c) -> tuple:
    cid = c.conclusion_id if isinstance(c.conclusion_id, RefLabel) else RefLabel.parse(c.conclusion_id)
    return (c.chain_key, cid.sort_key)


def enumerate_pairs(topic_id: str, classified: Iterable) -> list[ChainPair]:
    """Every optimistic x pessimistic pairing of AI-risk conclusions on one topic.

    Items need ``chain_key``, ``conclusion_id``, ``topic_id``, ``attitude``
    and ``is_ai_risk``.  Neutral conclusions are left out.
    """
    on_topic = [c for c in classified if c.topic_id == topic_id and c.is_ai_risk]
    boomers = sorted((c for c in on_topic if _attitude(c) is Attitude.OPTIMISTIC), key=_order)
    doomers = sorted((c for c in on_topic if _attitude(c) is Attitude.PESSIMISTIC), key=_order)
    label = lambda x: x if isinstance(x, RefLabel) else RefLabel.parse(x)  # noqa: E731
    return [
        ChainPair(topic_id, b.chain_key, label(b.conclusion_id), d.chain_key, label(d.conclusion_id))
        for b, d in product(boomers, doomers)
    ]


@dataclass(frozen=True)
class Divergence:
    id: str
    boomer_ref: RefLabel
    doomer_ref: RefLabel
    dtype: Optional[PremiseType]
    depends_on: frozenset[str] = frozenset()
    rationale: str = ""
    primary: Optional[str] = None  # "boomer", "doomer" or None
    claimed_depends_on: frozenset[str] = frozenset()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "boomer_ref": str(self.boomer_ref),
            "doomer_ref": str(self.doomer_ref),
            "type": self.dtype.value if self.dtype else None,
            "depends_on": sorted(self.depends_on),
            "claimed_depends_on": sorted(self.claimed_depends_on),
            "primary": self.primary,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Divergence":
        return cls(
            id=d["id"],
            boomer_ref=RefLabel.parse(d["boomer_ref"]),
            doomer_ref=RefLabel.parse(d["doomer_ref"]),
            dtype=PremiseType(d["type"]) if d.get("type") else None,
            depends_on=frozenset(d.get("depends_on", ())),
            rationale=d.get("rationale", ""),
            primary=d.get("primary"),
            claimed_depends_on=frozenset(d.get("claimed_depends_on", ())),
        )


# --- root selection ---------------------------------------------------------------


def _reaches(dag: ChainDag, ancestor: RefLabel, node: RefLabel) -> bool:
    return node != ancestor and node in dag.descendants(ancestor)


def strict_dependencies(
    divergences: Sequence[Divergence],
    boomer_dag: ChainDag,
    doomer_dag: ChainDag,
) -> dict[str, frozenset[str]]:
    """For each divergence, the divergences it strictly depends on.

    A depends on B when A's boomer ref lies downstream of B's boomer ref,
    or A's doomer ref downstream of B's doomer ref.  The relation is closed
    transitively; pairs that depend on each other (possible because the two
    sides can order them differently) cancel out, leaving only strict
    dependence.
    """
    ids = [d.id for d in divergences]
    direct = {
        a.id: {
            b.id
            for b in divergences
            if b.id != a.id
            and (_reaches(boomer_dag, b.boomer_ref, a.boomer_ref) or _reaches(doomer_dag, b.doomer_ref, a.doomer_ref))
        }
        for a in divergences
    }
    reach: dict[str, set[str]] = {}
    for start in ids:
        seen: set[str] = set()
        stack = list(direct[start])
        while stack:
            x = stack.pop()
            if x not in seen:
                seen.add(x)
                stack.extend(direct[x])
        seen.discard(start)
        reach[start] = seen
    return {a: frozenset(b for b in reach[a] if a not in reach[b]) for a in ids}


def _tie_key(d: Divergence, bdepth: Mapping, ddepth: Mapping) -> tuple:
    return (bdepth[d.boomer_ref] + ddepth[d.doomer_ref], d.boomer_ref.sort_key, d.doomer_ref.sort_key, d.id)


def minimal_divergences(divergences: Sequence[Divergence], boomer_dag: ChainDag, doomer_dag: ChainDag) -> list[str]:
    """Ids with no strict dependency, best tie-break first."""
    deps = strict_dependencies(divergences, boomer_dag, doomer_dag)
    bdepth, ddepth = boomer_dag.depths(), doomer_dag.depths()
    cands = [d for d in divergences if not deps[d.id]]
    cands.sort(key=lambda d: _tie_key(d, bdepth, ddepth))
    return [d.id for d in cands]


def find_root(divergences: Sequence[Divergence], boomer_dag: ChainDag, doomer_dag: ChainDag) -> str:
    """The divergence nothing else precedes.

    Among several candidates the shallowest wins (sum of the two refs'
    depths), then the smaller ``(boomer_ref, doomer_ref)``.
    """
    if not divergences:
        raise EmptyInput("no divergences")
    return minimal_divergences(divergences, boomer_dag, doomer_dag)[0]


# --- divergence typing --------------------------------------------------------------


def _ref_types(chain: ReasoningChain, dag: ChainDag, ref: RefLabel) -> set[PremiseType]:
    """Premise type of a P-ref; for an R-ref, the types of the premises feeding it."""
    if ref.kind is RefKind.PREMISE:
        p = chain.premise(ref)
        return {p.ptype} if p is not None and p.ptype is not None else set()
    types = set()
    for n in dag.ancestors(ref):
        if n.kind is RefKind.PREMISE and not dag.pred.get(n):
            p = chain.premise(n)
            if p is not None and p.ptype is not None:
                types.add(p.ptype)
    return types


def _first(types: Iterable[PremiseType]) -> Optional[PremiseType]:
    types = set(types)
    return next((t for t in TYPE_PRECEDENCE if t in types), None)


def divergence_type(
    boomer_types: set[PremiseType],
    doomer_types: set[PremiseType],
    primary: Optional[str] = None,
    stated: Optional[PremiseType] = None,
) -> Optional[PremiseType]:
    """Canonical type of a conflict between two sides.

    Same type on both sides wins outright.  Otherwise the side named as
    primary decides, then a stated type that matches one side, then the
    fixed precedence over all candidate types.
    """
    b, d = _first(boomer_types), _first(doomer_types)
    if b is None or d is None:
        return b or d or stated
    if b == d:
        return b
    if primary == "boomer":
        return b
    if primary == "doomer":
        return d
    if stated in (b, d):
        return stated
    return _first({b, d})


# --- reports ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DisagreementReport:
    pair: ChainPair
    is_disagreement: bool
    divergences: tuple[Divergence, ...] = ()
    root: Optional[str] = None
    agreement: Optional[AgreementOutcome] = None
    claimed_root: Optional[str] = None
    tied_roots: tuple[str, ...] = ()
    verdicts: dict = field(default_factory=dict)  # role -> worker/integrator verdict, None if absent

    def __post_init__(self):
        if self.is_disagreement and (not self.divergences or self.root is None):
            raise ValueError("a disagreement needs divergences and a root")

    @property
    def root_divergence(self) -> Optional[Divergence]:
        return next((d for d in self.divergences if d.id == self.root), None)

    @property
    def root_type(self) -> Optional[PremiseType]:
        r = self.root_divergence
        return r.dtype if r else None

    def to_dict(self) -> dict:
        return {
            "pair": self.pair.to_dict(),
            "pair_key": self.pair.pair_key,
            "is_disagreement": self.is_disagreement,
            "divergences": [d.to_dict() for d in self.divergences],
            "root": self.root,
            "root_type": self.root_type.value if self.root_type else None,
            "claimed_root": self.claimed_root,
            "root_mismatch": self.claimed_root is not None and self.claimed_root != self.root,
            "tied_roots": list(self.tied_roots),
            "agreement": self.agreement.value if self.agreement else None,
            "verdicts": {k: self.verdicts[k] for k in sorted(self.verdicts)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DisagreementReport":
        return cls(
            pair=ChainPair.from_dict(d["pair"]),
            is_disagreement=bool(d["is_disagreement"]),
            divergences=tuple(Divergence.from_dict(x) for x in d.get("divergences", ())),
            root=d.get("root"),
            agreement=AgreementOutcome(d["agreement"]) if d.get("agreement") else None,
            claimed_root=d.get("claimed_root"),
            tied_roots=tuple(d.get("tied_roots", ())),
            verdicts=dict(d.get("verdicts", {})),
        )

    @property
    def path(self) -> str:
        """Location relative to a run directory."""
        return f"disagreement/{self.pair.topic_id}/{self.pair.pair_key}.json"


_DISAGREE_SCHEMA = (
    '{"is_disagreement": bool, "divergences": [{"id": str, "boomer_ref": "P19", "doomer_ref": "P6", '
    '"type": str, "primary": "boomer|doomer|both", "depends_on": [str], "rationale": str}], "root": str|null}'
)


def parse_analysis(obj: Any, boomer: ReasoningChain, doomer: ReasoningChain) -> dict:
    """Check a divergence analysis against the two chains; returns a normalized payload."""
    if not isinstance(obj, dict) or not isinstance(obj.get("is_disagreement"), bool):
        raise PayloadError("expected an object with boolean 'is_disagreement'")
    if not obj["is_disagreement"]:
        return {"is_disagreement": False, "divergences": [], "root": None}
    raw = obj.get("divergences")
    if not isinstance(raw, list) or not raw:
        raise PayloadError("a disagreement needs a non-empty 'divergences' list")
    bnodes, dnodes = boomer.node_labels(), doomer.node_labels()
    out, problems = [], []
    for i, d in enumerate(raw):
        if not isinstance(d, dict):
            raise PayloadError(f"divergences[{i}] is not an object")
        try:
            b = RefLabel.parse(str(d.get("boomer_ref")))
            o = RefLabel.parse(str(d.get("doomer_ref")))
        except ValueError as exc:
            raise PayloadError(f"divergences[{i}]: {exc}") from None
        if b not in bnodes:
            problems.append(f"divergences[{i}] boomer_ref {b} does not exist in the boomer chain")
        if o not in dnodes:
            problems.append(f"divergences[{i}] doomer_ref {o} does not exist in the doomer chain")
        stated = d.get("type")
        if stated is not None:
            try:
                stated = PremiseType(str(stated).strip().lower())
            except ValueError:
                raise PayloadError(f"divergences[{i}]: unknown type {stated!r}") from None
        primary = d.get("primary")
        primary = primary if primary in ("boomer", "doomer") else None
        deps = d.get("depends_on") or []
        if not isinstance(deps, list):
            raise PayloadError(f"divergences[{i}]: depends_on must be a list")
        out.append(
            {
                "id": str(d.get("id") or f"D{i + 1}"),
                "boomer_ref": str(b),
                "doomer_ref": str(o),
                "type": stated.value if stated else None,
                "primary": primary,
                "depends_on": sorted(str(x) for x in deps),
                "rationale": str(d.get("rationale", "")).strip(),
            }
        )
    if problems:
        raise PayloadError("; ".join(problems), structural=True)
    ids = [d["id"] for d in out]
    if len(set(ids)) != len(ids):
        raise PayloadError("divergence ids must be unique")
    root = obj.get("root")
    return {"is_disagreement": True, "divergences": out, "root": str(root) if root else None}


def _root_refs(payload: Optional[dict]) -> Optional[tuple]:
    if not payload:
        return None
    if not payload["is_disagreement"]:
        return ("none",)
    by_id = {d["id"]: d for d in payload["divergences"]}
    r = by_id.get(payload.get("root") or "")
    return ("root", r["boomer_ref"], r["doomer_ref"]) if r else ("root", None)


def analyses_equivalent(x: dict, y: dict) -> bool:
    # two analyses agree when they reach the same verdict and the same root pair
    return _root_refs(x) == _root_refs(y)


def build_report(
    pair: ChainPair,
    payload: dict,
    boomer: ReasoningChain,
    doomer: ReasoningChain,
    agreement: Optional[AgreementOutcome] = None,
    verdicts: Optional[dict] = None,
) -> DisagreementReport:
    """Type the divergences, compute dependencies and select the root deterministically."""
    verdicts = verdicts or {}
    if not payload["is_disagreement"]:
        return DisagreementReport(pair, False, agreement=agreement, verdicts=verdicts)
    bdag, ddag = build_dag(boomer), build_dag(doomer)
    divs = []
    for d in payload["divergences"]:
        b, o = RefLabel.parse(d["boomer_ref"]), RefLabel.parse(d["doomer_ref"])
        stated = PremiseType(d["type"]) if d.get("type") else None
        dtype = divergence_type(_ref_types(boomer, bdag, b), _ref_types(doomer, ddag, o), d.get("primary"), stated)
        divs.append(
            Divergence(
                id=d["id"],
                boomer_ref=b,
                doomer_ref=o,
                dtype=dtype,
                rationale=d.get("rationale", ""),
                primary=d.get("primary"),
                claimed_depends_on=frozenset(d.get("depends_on", ())),
            )
        )
    deps = strict_dependencies(divs, bdag, ddag)
    divs = [replace(d, depends_on=deps[d.id]) for d in divs]
    minimal = minimal_divergences(divs, bdag, ddag)
    root = minimal[0]
    claimed = payload.get("root")
    if claimed and claimed != root:
        log.warning("%s: integrator named %s as root, dependency check selects %s", pair.pair_key, claimed, root)
    if len(minimal) > 1:
        log.info("%s: %d candidate roots %s, kept %s", pair.pair_key, len(minimal), minimal, root)
    return DisagreementReport(
        pair=pair,
        is_disagreement=True,
        divergences=tuple(divs),
        root=root,
        agreement=agreement,
        claimed_root=claimed,
        tied_roots=tuple(minimal) if len(minimal) > 1 else (),
        verdicts=verdicts,
    )


def _chain_text(chain: ReasoningChain) -> str:
    return json.dumps(chain_to_dict(chain), ensure_ascii=False, indent=1)


def analyze_pair(
    pair: ChainPair,
    boomer: ReasoningChain,
    doomer: ReasoningChain,
    config: EnsembleConfig,
    topic_label: str = "",
) -> DisagreementReport:
    """Workers list divergences, the integrator compares and merges, then roots are recomputed."""
    boomer = boomer.restrict_to(pair.boomer_conclusion)
    doomer = doomer.restrict_to(pair.doomer_conclusion)
    p = config.prompts
    system = p.text("disagree.system")
    base = p.render(
        "disagree.user",
        topic=topic_label or pair.topic_id,
        boomer_key=pair.boomer_key,
        boomer=_chain_text(boomer),
        doomer_key=pair.doomer_key,
        doomer=_chain_text(doomer),
    )
    parse = lambda o: parse_analysis(o, boomer, doomer)  # noqa: E731

    def worker(c: Caller):
        return c.json("analyze", system, base, parse, _DISAGREE_SCHEMA)

    def integrator(c: Caller, a, b):
        step1 = p.render(
            "disagree_compare.user",
            base=base,
            analysis_a=json.dumps(a, ensure_ascii=False) if a else "(no output)",
            analysis_b=json.dumps(b, ensure_ascii=False) if b else "(no output)",
        )
        r1 = c.text("compare", system, step1)
        step2 = p.render("disagree_synthesize.user", previous=f"{step1}\n\n{r1}")
        return c.json("synthesize", system, step2, parse, _DISAGREE_SCHEMA)

    payload = {
        "pair": pair.to_dict(),
        "boomer": chain_to_dict(boomer),
        "doomer": chain_to_dict(doomer),
        "topic": topic_label,
    }
    record = run_ensemble_task("disagree", payload, config, worker=worker, integrator=integrator, equiv=analyses_equivalent)
    verdicts = {
        role: (out["is_disagreement"] if out else None)
        for role, out in (("worker_a", record.worker_a_out), ("worker_b", record.worker_b_out), ("integrator", record.integrated_out))
    }
    return build_report(pair, record.integrated_out, boomer, doomer, record.agreement, verdicts)


def root_type_distribution(reports: Iterable[DisagreementReport]) -> tuple[dict[PremiseType, float], dict[PremiseType, int]]:
    """Share and count of each root type over reports that found a disagreement."""
    types = [r.root_type for r in reports if r.is_disagreement and r.root_type is not None]
    return _type_distribution(types)


def consistency_table(reports: Iterable[DisagreementReport]) -> dict:
    """How often the two workers and the integrator agreed on verdicts and roots."""
    reports = list(reports)
    n = len(reports)
    all_yes = sum(1 for r in reports if all(r.verdicts.get(k) is True for k in ("worker_a", "worker_b", "integrator")))
    all_no = sum(1 for r in reports if all(r.verdicts.get(k) is False for k in ("worker_a", "worker_b", "integrator")))
    disagreeing = [r for r in reports if r.is_disagreement]
    m = len(disagreeing)
    count = lambda o: sum(1 for r in disagreeing if r.agreement is o)  # noqa: E731
    share = lambda k, d: k / d if d else 0.0  # noqa: E731
    O = AgreementOutcome
    rows = [
        ("Three-way consistency", count(O.R3)),
        ("Integrator agreed with worker A only", count(O.R2_MATCHES_A)),
        ("Integrator agreed with worker B only", count(O.R2_MATCHES_B)),
        ("Introduced by integrator", count(O.R1)),
    ]
    return {
        "total_pairs": n,
        "verdicts": [
            {"label": "All 3 models: disagreement", "count": all_yes, "share": share(all_yes, n)},
            {"label": "All 3 models: no disagreement", "count": all_no, "share": share(all_no, n)},
            {"label": "2 of 3 models", "count": n - all_yes - all_no, "share": share(n - all_yes - all_no, n)},
        ],
        "disagreement_pairs": m,
        "roots": [{"label": label, "count": k, "share": share(k, m)} for label, k in rows],
    }


def disagreeing_chain_pairs(
    reports: Iterable[DisagreementReport],
    chains: Mapping[str, ReasoningChain],
) -> list[tuple[ReasoningChain, ReasoningChain]]:
    """The restricted (boomer, doomer) chains behind every disagreeing report."""
    out = []
    for r in reports:
        if r.is_disagreement:
            out.append(
                (
                    chains[r.pair.boomer_key].restrict_to(r.pair.boomer_conclusion),
                    chains[r.pair.doomer_key].restrict_to(r.pair.doomer_conclusion),
                )
            )
    return out


__all__ = [
    "ChainPair",
    "DisagreementReport",
    "Divergence",
    "TYPE_PRECEDENCE",
    "analyze_pair",
    "build_report",
    "consistency_table",
    "disagreeing_chain_pairs",
    "divergence_type",
    "enumerate_pairs",
    "find_root",
    "minimal_divergences",
    "parse_analysis",
    "root_type_distribution",
    "strict_dependencies",
]
