"""Deterministic structural checks on reasoning chains."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from .chain_model import (
    PremiseType,
    ReasoningChain,
    build_dag,
    find_reference_cycle,
)
from .refs import RefKind, RefLabel
from .relation_parser import RelationKind


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


class ViolationCode(str, Enum):
    V1_DuplicateId = "V1_DuplicateId"
    V2_UnresolvedRef = "V2_UnresolvedRef"
    V3_Cycle = "V3_Cycle"
    V4_UnsupportedConclusion = "V4_UnsupportedConclusion"
    V5_OrphanPremise = "V5_OrphanPremise"
    V6_EvalNotMoral = "V6_EvalNotMoral"
    V7_ConfidenceRange = "V7_ConfidenceRange"
    V8_BadArity = "V8_BadArity"

    @property
    def severity(self) -> Severity:
        return Severity.WARNING if self is ViolationCode.V5_OrphanPremise else Severity.ERROR


# checked after extraction before a chain is accepted
STRUCTURAL_CODES = frozenset(
    {
        ViolationCode.V1_DuplicateId,
        ViolationCode.V2_UnresolvedRef,
        ViolationCode.V3_Cycle,
        ViolationCode.V7_ConfidenceRange,
        ViolationCode.V8_BadArity,
    }
)


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    subject: RefLabel
    detail: str

    @property
    def severity(self) -> Severity:
        return self.code.severity

    def to_dict(self) -> dict:
        return {
            "code": self.code.value,
            "severity": self.severity.value,
            "subject": str(self.subject),
            "detail": self.detail,
        }


@dataclass(frozen=True)
class ValidationReport:
    chain_id: str
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def is_valid(self) -> bool:
        return not self.errors

    @property
    def errors(self) -> list[Violation]:
        return [v for v in self.violations if v.severity is Severity.ERROR]

    @property
    def warnings(self) -> list[Violation]:
        return [v for v in self.violations if v.severity is Severity.WARNING]

    def codes(self, severity: Severity | None = None) -> set[ViolationCode]:
        return {v.code for v in self.violations if severity is None or v.severity is severity}

    def to_dict(self) -> dict:
        return {
            "chain_id": self.chain_id,
            "is_valid": self.is_valid,
            "violations": [v.to_dict() for v in self.violations],
        }


def validate_chain(chain: ReasoningChain) -> ValidationReport:
    """Apply checks V1-V8 and return every finding.

    Violations are ordered by code, then subject label.
    """
    found: list[Violation] = []
    add = lambda code, subject, detail: found.append(Violation(code, subject, detail))  # noqa: E731

    # V1
    ids = [p.id for p in chain.premises] + [r.id for r in chain.relationships] + [c.id for c in chain.conclusions]
    for label, n in Counter(ids).items():
        if n > 1:
            add(ViolationCode.V1_DuplicateId, label, f"{label} defined {n} times")

    # V2
    premise_ids = {p.id for p in chain.all_premises()}
    rel_ids = {r.id for r in chain.relationships}
    conc_ids = {c.id for c in chain.conclusions}
    known = {RefKind.PREMISE: premise_ids, RefKind.RELATIONSHIP: rel_ids, RefKind.CONCLUSION: conc_ids}
    for rel in chain.relationships:
        refs = list(rel.operands) + ([rel.target] if rel.target is not None else [])
        for ref in refs:
            if ref not in known[ref.kind]:
                add(ViolationCode.V2_UnresolvedRef, rel.id, f"{rel.id} references undefined {ref}")

    # V3
    cycle = find_reference_cycle(chain)
    if cycle:
        add(ViolationCode.V3_Cycle, min(cycle), "cycle: " + " -> ".join(str(n) for n in cycle))

    # V4 / V5 use edge structure, which exists even when the graph is cyclic
    targets = {r.target for r in chain.relationships if r.target is not None}
    used_as_operand = {o for r in chain.relationships for o in r.operands}
    for c in chain.conclusions:
        if c.id not in targets:
            add(ViolationCode.V4_UnsupportedConclusion, c.id, f"no relationship leads to {c.id}")
    for p in chain.premises:
        if p.id not in used_as_operand and p.id not in targets:
            add(ViolationCode.V5_OrphanPremise, p.id, f"{p.id} is never used")

    # V6
    for rel in chain.relationships:
        if rel.kind is not RelationKind.EVALUATE or len(rel.operands) < 2:
            continue
        judged = rel.operands[1]
        if judged.kind is RefKind.PREMISE and judged not in premise_ids:
            continue  # already V2
        prem = chain.premise(judged)
        if prem is None or prem.ptype is not PremiseType.MORAL:
            what = "a relationship" if prem is None else (prem.ptype.value if prem.ptype else "untyped")
            add(ViolationCode.V6_EvalNotMoral, rel.id, f"{rel.id} evaluates with {judged}, which is {what}")

    # V7
    for p in chain.premises:
        if p.confidence is not None and not 0 <= p.confidence <= 100:
            add(ViolationCode.V7_ConfidenceRange, p.id, f"confidence {p.confidence} outside [0, 100]")

    # V8
    for rel in chain.relationships:
        for problem in rel.arity_problems():
            add(ViolationCode.V8_BadArity, rel.id, problem)

    found.sort(key=lambda v: (v.code.value, v.subject.sort_key, v.detail))
    return ValidationReport(chain.key, tuple(found))


_NORMATIVE_SUPPORT = {PremiseType.FACTUAL, PremiseType.FORECAST}


def coherence_gap_report(chain: ReasoningChain) -> list[RefLabel]:
    """Conclusions that look like enthymeme sites.

    A conclusion is flagged when nothing in its support evaluates anything
    and every premise feeding it is an explicit factual or forecast claim:
    the step from description to the conclusion's judgement is unstated.
    """
    dag = build_dag(chain)
    rel_by_id = {r.id: r for r in chain.relationships}
    flagged = []
    for c in chain.conclusions:
        support = dag.ancestors(c.id)
        if not support:
            continue
        if any(rel_by_id[n].kind is RelationKind.EVALUATE for n in support if n in rel_by_id):
            continue
        leaves = [chain.premise(n) for n in support if n.kind is RefKind.PREMISE]
        leaves = [p for p in leaves if p is not None and not p.derived]
        if leaves and all(not p.is_implicit and p.ptype in _NORMATIVE_SUPPORT for p in leaves):
            flagged.append(c.id)
    return sorted(flagged)
