"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PeelError(Exception):
    """Base class for all package errors."""


class UnknownPremiseType(PeelError, ValueError):
    def __init__(self, raw: str):
        super().__init__(f"unknown premise type: {raw!r}")
        self.raw = raw


class ChainFormatError(PeelError, ValueError):
    """A chain document does not follow the canonical JSON schema."""


class CycleDetected(PeelError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("reference cycle: " + " -> ".join(str(n) for n in self.cycle))


class UnknownNode(PeelError, KeyError):
    def __init__(self, node):
        super().__init__(f"node not in graph: {node}")
        self.node = node


class EmptyInput(PeelError, ValueError):
    pass


class ZeroTotal(PeelError, ValueError):
    pass


class DimensionMismatch(PeelError, ValueError):
    pass


class ZeroExpected(PeelError, ValueError):
    pass


class DegeneratePool(PeelError, ValueError):
    pass


class BackendError(PeelError):
    """A backend call failed after exhausting retries."""


class MalformedOutput(PeelError):
    """Model output could not be parsed or repaired into the expected payload."""


class EmptyTranscript(PeelError, ValueError):
    pass


class FormatError(PeelError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class CorruptArtifact(PeelError):
    pass


class ArtifactExists(PeelError):
    """Attempt to overwrite a write-once artifact with different content."""


class MissingStage(PeelError):
    """A command ran before the stage it depends on completed."""


class NotCausal(PeelError, ValueError):
    pass


class UnmappedQuestion(PeelError, ValueError):
    def __init__(self, question_ids):
        self.question_ids = sorted(question_ids)
        super().__init__("questions without a theme: " + ", ".join(self.question_ids))
