"""Two workers plus an integrator, with agreement accounting and caching.

A task runs worker A and worker B on the same input (optionally in
parallel), hands both outputs to the integrator, and records whether the
integrated result matches both workers (R3), exactly one (R2) or neither
(R1).  Records are cached by a digest of the task kind, the prompt version
and the canonicalized input, so a repeated task never reaches a backend.
"""

from __future__ import annotations

import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Optional

from ..canon import digest
from ..errors import MalformedOutput
from .backends import CallContext, GenerationParams, LlmBackend
from .cache import TaskCache
from .prompts import PromptSet

log = logging.getLogger(__name__)

TASK_KINDS = ("segment", "summarize", "extract", "classify_topic_attitude", "disagree", "aggregate_classify")


class AgreementOutcome(str, Enum):
    R1 = "R1"
    R2_MATCHES_A = "R2_matches_a"
    R2_MATCHES_B = "R2_matches_b"
    R3 = "R3"


def _present(x) -> bool:
    return x is not None and x != "" and x != [] and x != {}


def classify_agreement(a, b, final, equiv: Callable[[Any, Any], bool] = lambda x, y: x == y) -> AgreementOutcome:
    """Compare the integrated payload with each worker's.

    An absent or empty payload is unequal to everything, including
    another absent payload.
    """
    same_a = _present(final) and _present(a) and bool(equiv(final, a))
    same_b = _present(final) and _present(b) and bool(equiv(final, b))
    if same_a and same_b:
        return AgreementOutcome.R3
    if same_a:
        return AgreementOutcome.R2_MATCHES_A
    if same_b:
        return AgreementOutcome.R2_MATCHES_B
    return AgreementOutcome.R1


DEFAULT_RELIABILITY_WEIGHTS = {"R3": 1.0, "R2": 0.5, "R1": 0.0}


def agreement_summary(outcomes, weights: Optional[dict[str, float]] = None) -> dict:
    """Counts and shares of R1/R2/R3 plus a weighted composite score.

    R2 pools both single-worker matches.  Tasks without an outcome (a stage
    that ran only the integrator) are ignored.  The composite is the
    weight-averaged share and is 0.0 when there are no outcomes.
    """
    w = {**DEFAULT_RELIABILITY_WEIGHTS, **(weights or {})}
    if set(w) != {"R1", "R2", "R3"}:
        raise ValueError(f"reliability weights must name exactly R1, R2 and R3, got {sorted(w)}")
    counts = {"R1": 0, "R2": 0, "R3": 0}
    for o in outcomes:
        if o is None:
            continue
        o = AgreementOutcome(o)
        counts["R3" if o is AgreementOutcome.R3 else "R1" if o is AgreementOutcome.R1 else "R2"] += 1
    n = sum(counts.values())
    shares = {k: (v / n if n else 0.0) for k, v in counts.items()}
    return {
        "n": n,
        "counts": counts,
        "shares": shares,
        "weights": w,
        "composite": sum(w[k] * shares[k] for k in counts),
    }


def fixed_clock() -> str:
    """Timestamp for reproducible runs: SOURCE_DATE_EPOCH, else the Unix epoch."""
    epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    return datetime.fromtimestamp(epoch, timezone.utc).isoformat()


def wall_clock() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class EnsembleConfig:
    worker_a: LlmBackend
    worker_b: LlmBackend
    integrator: LlmBackend
    prompts: PromptSet = field(default_factory=PromptSet)
    retry_limit: int = 3
    json_repair_limit: int = 2
    structure_reask_limit: int = 1
    parallelism: int = 4
    concurrent_workers: bool = True
    cache_dir: Optional[os.PathLike] = None
    params: GenerationParams = field(default_factory=GenerationParams)
    clock: Callable[[], str] = wall_clock

    def __post_init__(self):
        if self.worker_a.identity == self.worker_b.identity:
            raise ValueError(f"workers must be distinct models, both are {self.worker_a.identity!r}")
        self._cache = TaskCache(self.cache_dir) if self.cache_dir is not None else None

    @property
    def cache(self) -> Optional[TaskCache]:
        return self._cache

    @property
    def prompt_version(self) -> str:
        return self.prompts.set_version

    def backends(self) -> dict[str, str]:
        return {
            "worker_a": self.worker_a.identity,
            "worker_b": self.worker_b.identity,
            "integrator": self.integrator.identity,
        }


def task_input_hash(task_kind: str, prompt_version: str, payload: Any) -> str:
    return digest({"task_kind": task_kind, "prompt_version": prompt_version, "input": payload})


@dataclass
class EnsembleTaskRecord:
    task_kind: str
    input_hash: str
    prompt_version: str
    worker_a_out: Any
    worker_b_out: Any
    integrated_out: Any
    agreement: Optional[AgreementOutcome]
    started_at: str
    finished_at: str
    backends: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    cached: bool = False

    def to_dict(self) -> dict:
        return {
            "task_kind": self.task_kind,
            "input_hash": self.input_hash,
            "prompt_version": self.prompt_version,
            "worker_a_out": self.worker_a_out,
            "worker_b_out": self.worker_b_out,
            "integrated_out": self.integrated_out,
            "agreement": self.agreement.value if self.agreement else None,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "backends": self.backends,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: dict, cached: bool = False) -> "EnsembleTaskRecord":
        return cls(
            task_kind=d["task_kind"],
            input_hash=d["input_hash"],
            prompt_version=d["prompt_version"],
            worker_a_out=d.get("worker_a_out"),
            worker_b_out=d.get("worker_b_out"),
            integrated_out=d.get("integrated_out"),
            agreement=AgreementOutcome(d["agreement"]) if d.get("agreement") else None,
            started_at=d.get("started_at", ""),
            finished_at=d.get("finished_at", ""),
            backends=d.get("backends", {}),
            notes=d.get("notes", {}),
            cached=cached,
        )


# --- JSON handling ---------------------------------------------------------------


class PayloadError(ValueError):
    """A reply that cannot be used as is.

    ``structural`` marks replies that parsed but describe an invalid
    structure (for example a chain with a dangling reference); these get a
    separate, smaller re-ask budget than plain schema problems.
    """

    def __init__(self, message: str, structural: bool = False):
        super().__init__(message)
        self.structural = structural


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.S)


def extract_json(text: str) -> Any:
    """Parse a JSON value from a reply, tolerating code fences and chatter."""
    text = text.strip()
    if not text:
        raise PayloadError("empty reply, expected JSON")
    candidates = [text] + _FENCE.findall(text)
    for c in candidates:
        try:
            return json.loads(c)
        except json.JSONDecodeError:
            pass
    # fall back to the outermost bracketed span
    for open_, close in (("{", "}"), ("[", "]")):
        i, j = text.find(open_), text.rfind(close)
        if 0 <= i < j:
            try:
                return json.loads(text[i : j + 1])
            except json.JSONDecodeError:
                pass
    raise PayloadError("reply is not valid JSON")


class Caller:
    """Issues the calls of one role within one task."""

    def __init__(self, config: EnsembleConfig, backend: LlmBackend, task_kind: str, input_hash: str, role: str):
        self.config = config
        self.backend = backend
        self.task_kind = task_kind
        self.input_hash = input_hash
        self.role = role

    @property
    def identity(self) -> str:
        return self.backend.identity

    def text(self, stage: str, system: str, prompt: str, attempt: int = 0) -> str:
        ctx = CallContext(self.task_kind, self.input_hash, self.role, stage, attempt)
        return self.backend.complete(prompt, system, self.config.params, ctx)

    def json(self, stage: str, system: str, prompt: str, parse: Callable[[Any], Any], schema_hint: str = "") -> Any:
        """Ask for JSON and re-ask with the specific problem until ``parse`` accepts it.

        ``parse`` raises :class:`PayloadError`; schema problems get
        ``json_repair_limit`` re-asks and structural ones
        ``structure_reask_limit``.
        """
        attempt = schema_fails = struct_fails = 0
        current = prompt
        while True:
            reply = self.text(stage, system, current, attempt)
            try:
                return parse(extract_json(reply))
            except PayloadError as exc:
                if exc.structural:
                    struct_fails += 1
                    over = struct_fails > self.config.structure_reask_limit
                else:
                    schema_fails += 1
                    over = schema_fails > self.config.json_repair_limit
                if over:
                    raise MalformedOutput(
                        f"{self.task_kind}/{stage} from {self.role} ({self.identity}) after {attempt + 1} attempts: {exc}"
                    ) from None
                log.info("%s/%s %s re-ask %d: %s", self.task_kind, stage, self.role, attempt + 1, exc)
                attempt += 1
                current = _repair_prompt(prompt, str(exc), schema_hint)


def _repair_prompt(prompt: str, problem: str, schema_hint: str) -> str:
    parts = [prompt, "", "Your previous reply could not be used.", f"Problem: {problem}"]
    if schema_hint:
        parts.append(f"Required format: {schema_hint}")
    parts.append("Reply again with corrected JSON only.")
    return "\n".join(parts)


# --- task runners ------------------------------------------------------------------

WorkerFn = Callable[[Caller], Any]
IntegratorFn = Callable[[Caller, Any, Any], Any]


def _lookup(config: EnsembleConfig, kind: str, h: str) -> Optional[EnsembleTaskRecord]:
    if config.cache is None:
        return None
    hit = config.cache.get(kind, h)
    return EnsembleTaskRecord.from_dict(hit, cached=True) if hit is not None else None


def _store(config: EnsembleConfig, record: EnsembleTaskRecord) -> None:
    if config.cache is not None:
        config.cache.put(record.task_kind, record.input_hash, record.to_dict())


def run_ensemble_task(
    kind: str,
    payload: Any,
    config: EnsembleConfig,
    *,
    worker: WorkerFn,
    integrator: IntegratorFn,
    equiv: Callable[[Any, Any], bool] = lambda x, y: x == y,
    notes: Optional[Callable[[Any], dict]] = None,
) -> EnsembleTaskRecord:
    """Run ``worker`` for both workers, then ``integrator`` on their outputs.

    ``worker`` may return ``None`` for "no usable output"; the integrator
    is still invoked.  ``integrator`` returns the final payload.
    """
    if kind not in TASK_KINDS:
        raise ValueError(f"unknown task kind {kind!r}")
    version = config.prompts.version(kind)
    h = task_input_hash(kind, version, payload)
    cached = _lookup(config, kind, h)
    if cached is not None:
        return cached

    started = config.clock()
    failures: dict[str, str] = {}

    def guarded(c: Caller):
        # one worker failing to produce usable output leaves its slot empty
        try:
            return worker(c)
        except MalformedOutput as exc:
            failures[c.role] = str(exc)
            return None

    ca = Caller(config, config.worker_a, kind, h, "worker_a")
    cb = Caller(config, config.worker_b, kind, h, "worker_b")
    if config.concurrent_workers:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fa, fb = pool.submit(guarded, ca), pool.submit(guarded, cb)
            out_a, out_b = fa.result(), fb.result()
    else:
        out_a, out_b = guarded(ca), guarded(cb)
    if len(failures) == 2:
        raise MalformedOutput(f"{kind}: both workers failed; " + " | ".join(failures[r] for r in sorted(failures)))
    final = integrator(Caller(config, config.integrator, kind, h, "integrator"), out_a, out_b)
    extra = notes(final) if notes else {}
    if failures:
        extra = {**extra, "worker_failures": dict(sorted(failures.items()))}
    record = EnsembleTaskRecord(
        task_kind=kind,
        input_hash=h,
        prompt_version=version,
        worker_a_out=out_a,
        worker_b_out=out_b,
        integrated_out=final,
        agreement=classify_agreement(out_a, out_b, final, equiv),
        started_at=started,
        finished_at=config.clock(),
        backends=config.backends(),
        notes=extra,
    )
    _store(config, record)
    return record


def run_single_task(
    kind: str,
    payload: Any,
    config: EnsembleConfig,
    *,
    call: WorkerFn,
) -> EnsembleTaskRecord:
    """Integrator-only task, used for long-context stages such as segmentation."""
    version = config.prompts.version(kind)
    h = task_input_hash(kind, version, payload)
    cached = _lookup(config, kind, h)
    if cached is not None:
        return cached
    started = config.clock()
    out = call(Caller(config, config.integrator, kind, h, "integrator"))
    record = EnsembleTaskRecord(
        task_kind=kind,
        input_hash=h,
        prompt_version=version,
        worker_a_out=None,
        worker_b_out=None,
        integrated_out=out,
        agreement=None,
        started_at=started,
        finished_at=config.clock(),
        backends={"integrator": config.integrator.identity},
    )
    _store(config, record)
    return record


def run_many(fn: Callable[[Any], Any], items, parallelism: int) -> list:
    """Map ``fn`` over independent items with at most ``parallelism`` threads, keeping order."""
    items = list(items)
    if parallelism <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


def pretty_payload(x: Any) -> str:
    """How structured payloads are shown to a model."""
    return x if isinstance(x, str) else json.dumps(x, ensure_ascii=False, indent=1, sort_keys=True)


__all__ = [
    "AgreementOutcome",
    "Caller",
    "EnsembleConfig",
    "EnsembleTaskRecord",
    "PayloadError",
    "DEFAULT_RELIABILITY_WEIGHTS",
    "TASK_KINDS",
    "agreement_summary",
    "classify_agreement",
    "extract_json",
    "fixed_clock",
    "pretty_payload",
    "run_ensemble_task",
    "run_many",
    "run_single_task",
    "task_input_hash",
    "wall_clock",
]
