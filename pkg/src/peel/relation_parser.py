"""Parser for the relationship notation used in extracted reasoning chains.

A relationship line looks like ``R1: P1 + P2 => P32 -> gloss text``.  The
grammar is::

    RELDEF   := RLabel ':' EXPR [IMP TARGET] [GLOSSSEP text]
    EXPR     := OPERAND (PLUS OPERAND)* | OPERAND EVAL OPERAND
    OPERAND  := PLabel | RLabel
    TARGET   := PLabel | CLabel | RLabel
    IMP      := '⇒' | '=>'
    PLUS     := '+'
    EVAL     := '∧' | '^'
    GLOSSSEP := '→' | '->' | ','

The arrow ``→`` only introduces free text; implication is ``⇒``/``=>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .errors import PeelError
from .refs import RefKind, RefLabel


class RelationKind(str, Enum):
    COMBINE = "combine"
    IMPLY = "imply"
    EVALUATE = "evaluate"


class CombineMode(str, Enum):
    CONJUNCTIVE = "conjunctive"
    DISJUNCTIVE = "disjunctive"
    UNSPECIFIED = "unspecified"


@dataclass(frozen=True)
class Relationship:
    id: RefLabel
    kind: RelationKind
    operands: tuple[RefLabel, ...]
    target: Optional[RefLabel] = None
    gloss: Optional[str] = None
    mode: CombineMode = CombineMode.UNSPECIFIED

    def __post_init__(self):
        object.__setattr__(self, "operands", tuple(self.operands))
        if not isinstance(self.kind, RelationKind):
            object.__setattr__(self, "kind", RelationKind(self.kind))
        if not isinstance(self.mode, CombineMode):
            object.__setattr__(self, "mode", CombineMode(self.mode))

    @property
    def expr(self) -> str:
        """Canonical expression without the id prefix and gloss."""
        op = " ^ " if self.kind is RelationKind.EVALUATE else " + "
        text = op.join(str(o) for o in self.operands)
        if self.target is not None:
            text += f" => {self.target}"
        return text

    def arity_problems(self) -> list[str]:
        """Return human-readable arity violations (empty when well-formed)."""
        problems = []
        n = len(self.operands)
        if self.id.kind is not RefKind.RELATIONSHIP:
            problems.append(f"relationship id must be an R-label, got {self.id}")
        for o in self.operands:
            if o.kind is RefKind.CONCLUSION:
                problems.append(f"conclusion {o} cannot be an operand")
        if self.kind is RelationKind.COMBINE:
            if n < 2:
                problems.append(f"combination needs at least 2 operands, got {n}")
            if self.target is not None and self.target.kind is not RefKind.PREMISE:
                problems.append(f"combination target must be a premise, got {self.target}")
        elif self.kind is RelationKind.IMPLY:
            if n != 1:
                problems.append(f"implication needs exactly 1 source, got {n}")
            if self.target is None:
                problems.append("implication needs a target")
        else:
            if n != 2:
                problems.append(f"evaluation needs exactly 2 operands, got {n}")
            if self.target is not None:
                problems.append("evaluation takes no target")
        return problems

    def structure(self) -> tuple:
        """Structural identity ignoring the gloss."""
        return (self.id, self.kind, self.operands, self.target)


class ParseError(PeelError, ValueError):
    """Raised for lines outside the grammar.

    ``offset`` is a byte offset into the UTF-8 encoded line; ``expected`` is
    the set of token names that would have been accepted there.
    """

    def __init__(self, message: str, line: str, pos: int, expected=()):
        self.line = line
        self.char_offset = pos
        nbytes = len(line.encode("utf-8"))
        offset = len(line[:pos].encode("utf-8"))
        self.offset = max(0, min(offset, nbytes - 1))
        self.expected = frozenset(expected)
        exp = f" (expected {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{message} at byte {self.offset}{exp}: {line!r}")


class MixedOperators(ParseError):
    """``+`` and ``∧`` used within one expression."""


_IMP = ("⇒", "=>")
_EVAL = ("∧", "^")
_PLUS = ("+",)
_GLOSS = ("→", "->", ",")


class _Scanner:
    def __init__(self, line: str):
        self.line = line
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.line) and self.line[self.pos].isspace():
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.line)

    def peek(self, tokens) -> Optional[str]:
        self.skip_ws()
        for tok in tokens:
            if self.line.startswith(tok, self.pos):
                return tok
        return None

    def take(self, tokens) -> Optional[str]:
        tok = self.peek(tokens)
        if tok is not None:
            self.pos += len(tok)
        return tok

    def label(self, kinds: str, expected: set[str]) -> RefLabel:
        self.skip_ws()
        start = self.pos
        if start < len(self.line) and self.line[start] in kinds:
            end = start + 1
            while end < len(self.line) and self.line[end].isdigit():
                end += 1
            if end > start + 1:
                index = int(self.line[start + 1:end])
                if index >= 1:
                    self.pos = end
                    return RefLabel(RefKind(self.line[start]), index)
        raise ParseError("expected a label", self.line, start, expected)


def parse_relation(line: str) -> Relationship:
    """Parse one relationship line into a :class:`Relationship`.

    Arity is not enforced here; see :meth:`Relationship.arity_problems`.
    """
    s = _Scanner(line)
    rid = s.label("R", {"R-label"})
    if s.take((":",)) is None:
        raise ParseError("expected ':' after relationship id", line, s.pos, {"':'"})

    operand_expected = {"P-label", "R-label"}
    operands = [s.label("PR", operand_expected)]
    kind = RelationKind.COMBINE
    if s.peek(_EVAL):
        s.take(_EVAL)
        kind = RelationKind.EVALUATE
        operands.append(s.label("PR", operand_expected))
        s.skip_ws()
        if s.peek(_PLUS):
            raise MixedOperators("'+' and '∧' mixed in one expression", line, s.pos, ())
        if s.peek(_EVAL):
            raise ParseError("evaluation is binary", line, s.pos, {"'=>'", "gloss separator", "end of line"})
    else:
        while s.peek(_PLUS):
            s.take(_PLUS)
            operands.append(s.label("PR", operand_expected))
            if s.peek(_EVAL):
                raise MixedOperators("'+' and '∧' mixed in one expression", line, s.pos, ())

    target = None
    if s.take(_IMP):
        target = s.label("PRC", {"P-label", "R-label", "C-label"})
        if kind is RelationKind.COMBINE and len(operands) == 1:
            kind = RelationKind.IMPLY

    gloss = None
    if s.take(_GLOSS) is not None:
        gloss = line[s.pos:].strip() or None
        s.pos = len(line)
    elif not s.at_end():
        expected = {"'+'", "'∧'", "'=>'", "gloss separator", "end of line"}
        if target is not None:
            expected = {"gloss separator", "end of line"}
        raise ParseError("unexpected input", line, s.pos, expected)

    return Relationship(rid, kind, tuple(operands), target, gloss)


def serialize_relation(rel: Relationship) -> str:
    """Canonical ASCII form, e.g. ``R1: P1 + P2 => P32 -> gloss``."""
    text = f"{rel.id}: {rel.expr}"
    if rel.gloss:
        text += f" -> {rel.gloss}"
    return text
