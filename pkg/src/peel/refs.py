"""Reference labels such as ``P3``, ``R12`` and ``C1``."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import total_ordering

_LABEL_RE = re.compile(r"^\s*([PRC])(\d+)\s*$")


class RefKind(str, Enum):
    PREMISE = "P"
    RELATIONSHIP = "R"
    CONCLUSION = "C"

    @property
    def rank(self) -> int:
        return _KIND_RANK[self]


_KIND_RANK = {RefKind.PREMISE: 0, RefKind.RELATIONSHIP: 1, RefKind.CONCLUSION: 2}


@total_ordering
@dataclass(frozen=True)
class RefLabel:
    kind: RefKind
    index: int

    def __post_init__(self):
        if not isinstance(self.kind, RefKind):
            object.__setattr__(self, "kind", RefKind(self.kind))
        if self.index < 1:
            raise ValueError(f"label index must be >= 1, got {self.index}")

    @classmethod
    def parse(cls, text: str) -> "RefLabel":
        m = _LABEL_RE.match(text)
        if not m:
            raise ValueError(f"not a reference label: {text!r}")
        return cls(RefKind(m.group(1)), int(m.group(2)))

    @property
    def sort_key(self) -> tuple[int, int]:
        return (self.kind.rank, self.index)

    def __lt__(self, other):
        if not isinstance(other, RefLabel):
            return NotImplemented
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        return f"{self.kind.value}{self.index}"

    def __repr__(self) -> str:
        return f"RefLabel({self})"


def P(i: int) -> RefLabel:
    return RefLabel(RefKind.PREMISE, i)


def R(i: int) -> RefLabel:
    return RefLabel(RefKind.RELATIONSHIP, i)


def C(i: int) -> RefLabel:
    return RefLabel(RefKind.CONCLUSION, i)
