"""End-to-end run orchestration over a write-once run directory."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
import uuid
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Optional

from .aggregation import ConflictMap, classify_divergence, consistency_rate, load_theme_file, theme_report
from .canon import digest
from .chain_model import (
    PremiseType,
    ReasoningChain,
    SpeakerMeta,
    chain_from_dict,
    chain_to_dict,
)
from .disagreement import (
    ChainPair,
    DisagreementReport,
    analyze_pair,
    consistency_table,
    disagreeing_chain_pairs,
    enumerate_pairs,
)
from .errors import DegeneratePool, EmptyInput, MissingStage, PeelError, ZeroExpected
from .llm.backends import GenerationParams, MockBackend, MockScript, OpenAICompatBackend
from .llm.cache import atomic_write_text
from .llm.ensemble import EnsembleConfig, agreement_summary, fixed_clock, run_many, wall_clock
from .llm.prompts import PromptSet
from .llm.stages import Segment, SpeakerSummary, extract_reasoning, segment_transcript, summarize_speaker
from .refs import RefLabel
from .relation_parser import serialize_relation
from .stats import (
    DivergencePairStats,
    composition_summary,
    export_regression_csv,
    implicitness_z_test,
    root_vs_base,
)
from .store import (
    STAGES,
    ArtifactStore,
    RunManifest,
    StageRecord,
    Transcript,
    ingest_transcript,
    manifest_json,
    resume_run,
    stage_input_digest,
)
from .topics import ClassifiedConclusion, TopicList, agreement_table, assign_topic_attitude, attitude_by_topic

log = logging.getLogger(__name__)

STAGE_TASK = {
    "segment": "segment",
    "summarize": "summarize",
    "extract": "extract",
    "classify": "classify_topic_attitude",
    "disagree": "disagree",
    "aggregate": "aggregate_classify",
}

TRANSCRIPT_SUFFIXES = (".jsonl", ".txt")


class UsageError(PeelError):
    """Invalid configuration or command sequence."""


class StaleRun(UsageError):
    """A completed stage's inputs changed; artifacts cannot be rewritten in place."""


def bundled_corpus() -> Path:
    return Path(str(resources.files("peel") / "data" / "minicorpus"))


@dataclass(frozen=True)
class BackendSpec:
    model: str
    env_prefix: str

    @classmethod
    def from_dict(cls, d: dict) -> "BackendSpec":
        return cls(d["model"], d["env_prefix"])


_PATH_FIELDS = {"script", "cache_dir", "out", "speakers", "themes", "prompts_dir"}


@dataclass
class PipelineConfig:
    worker_a: Optional[BackendSpec] = None
    worker_b: Optional[BackendSpec] = None
    integrator: Optional[BackendSpec] = None
    mock: bool = False
    script: Optional[Path] = None
    seed: int = 0
    parallel: int = 4
    cache_dir: Optional[Path] = None
    out: Path = Path("out")
    speakers: Optional[Path] = None
    themes: Optional[Path] = None
    prompts_dir: Optional[Path] = None
    hosts: tuple[str, ...] = ("Host",)
    topics: tuple[str, ...] = ()
    temperature: float = 0.0
    max_tokens: int = 4096
    retry_limit: int = 3
    reliability_weights: Optional[dict] = None

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        """Read a JSON config file; relative paths resolve against its directory."""
        path = Path(path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        if "api_key" in json.dumps(raw).lower():
            raise UsageError("API keys belong in environment variables, not the config file")
        return cls.from_dict(raw, base=path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base: Path = Path(".")) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kw: dict[str, Any] = {}
        for k, v in raw.items():
            if k in ("worker_a", "worker_b", "integrator") and v is not None:
                v = BackendSpec.from_dict(v)
            elif k in _PATH_FIELDS and v is not None:
                v = base / v
            elif k in ("hosts", "topics"):
                v = tuple(v)
            kw[k] = v
        return cls(**kw)

    def validate(self) -> None:
        if self.mock:
            if self.script is None:
                raise UsageError("mock mode needs --script")
        elif not (self.worker_a and self.worker_b and self.integrator):
            raise UsageError("live mode needs worker_a, worker_b and integrator backends in the config file")
        if self.parallel < 1:
            raise UsageError("--parallel must be at least 1")
        if self.reliability_weights is not None:
            try:
                agreement_summary([], self.reliability_weights)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"reliability_weights: {exc}") from None

    def digest(self) -> str:
        """Digest of everything that can change outputs; file locations are left out."""
        d = {}
        for f in fields(self):
            if f.name in _PATH_FIELDS or f.name == "parallel":
                continue
            v = getattr(self, f.name)
            d[f.name] = v.__dict__ if isinstance(v, BackendSpec) else v
        if self.mock and self.script is not None:
            d["script"] = MockScript.load(self.script).digest
        return digest(d)


def build_ensemble(config: PipelineConfig, clock: Callable[[], str]) -> EnsembleConfig:
    prompts = PromptSet(config.prompts_dir) if config.prompts_dir else PromptSet()
    params = GenerationParams(config.temperature, config.max_tokens, config.seed if config.mock else None)
    if config.mock:
        script = MockScript.load(config.script)
        a = MockBackend("mock-worker-a", script, config.seed)
        b = MockBackend("mock-worker-b", script, config.seed)
        i = MockBackend("mock-integrator", script, config.seed)
    else:
        mk = lambda s: OpenAICompatBackend.from_env(s.model, s.env_prefix, retry_limit=config.retry_limit)  # noqa: E731
        a, b, i = mk(config.worker_a), mk(config.worker_b), mk(config.integrator)
    return EnsembleConfig(
        worker_a=a,
        worker_b=b,
        integrator=i,
        prompts=prompts,
        retry_limit=config.retry_limit,
        parallelism=config.parallel,
        cache_dir=config.cache_dir or (config.out / "cache"),
        params=params,
        clock=clock,
    )


def new_run_id() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ") + "-" + uuid.uuid4().hex[:6]


def slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "-", text).strip("-").lower() or "x"


def load_speakers(path) -> dict[tuple[str, str], SpeakerMeta]:
    """``episode,name,profession,gender`` CSV keyed by ``(name, episode)``."""
    out = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            meta = SpeakerMeta(
                name=row["name"].strip(),
                episode=row["episode"].strip(),
                profession=(row.get("profession") or "").strip() or None,
                gender=(row.get("gender") or "unspecified").strip().lower() or "unspecified",
            )
            out[(meta.name, meta.episode)] = meta
    return out


def corpus_files(corpus: Path) -> list[Path]:
    tdir = corpus / "transcripts" if (corpus / "transcripts").is_dir() else corpus
    return sorted(p for p in tdir.iterdir() if p.suffix in TRANSCRIPT_SUFFIXES)


class Pipeline:
    """One run directory under ``<out>/runs/<run_id>`` and the stages that fill it."""

    def __init__(self, config: PipelineConfig, run_id: str, ensemble: Optional[EnsembleConfig] = None):
        config.validate()
        self.config = config
        self.run_id = run_id
        self.run_dir = Path(config.out) / "runs" / run_id
        self.store = ArtifactStore(self.run_dir)
        self.clock = fixed_clock if config.mock else wall_clock
        self._ensemble = ensemble
        self.prompts = ensemble.prompts if ensemble else (PromptSet(config.prompts_dir) if config.prompts_dir else PromptSet())
        self.config_digest = config.digest()
        mpath = self.run_dir / "manifest.json"
        if mpath.exists():
            self.manifest = RunManifest.from_dict(json.loads(mpath.read_text(encoding="utf-8")))
            if self.manifest.config_digest != self.config_digest:
                raise StaleRun(f"run {run_id} was created with a different configuration; use a new --run-id")
        else:
            now = self.clock()
            self.manifest = RunManifest(run_id, self.config_digest, self.prompts.versions(), created_at=now, updated_at=now)

    @property
    def ensemble(self) -> EnsembleConfig:
        if self._ensemble is None:
            self._ensemble = build_ensemble(self.config, self.clock)
        return self._ensemble

    # --- manifest bookkeeping ------------------------------------------------------

    def _save_manifest(self) -> None:
        self.manifest.updated_at = self.clock()
        atomic_write_text(self.run_dir / "manifest.json", manifest_json(self.manifest))

    def expected_inputs(self) -> dict[str, str]:
        """Input digest each completed stage would have under the current prompts and config."""
        out = {}
        for name in STAGES:
            try:
                out[name] = self._input_digest(name)
            except MissingStage:
                break
        return out

    def _input_digest(self, stage: str) -> str:
        task = STAGE_TASK.get(stage)
        version = self.prompts.version(task) if task else ""
        extra = None
        if stage == "aggregate" and self.config.themes is not None:
            # the theme sidecar only shapes the aggregate outputs
            extra = {"themes": load_theme_file(self.config.themes)}
        return stage_input_digest(self.manifest, stage, version, extra)

    def next_stage(self) -> str:
        if not self.manifest.inputs:
            return "ingest"
        return resume_run(self.manifest, self.store, self.expected_inputs())

    def _require(self, stage: str) -> None:
        if not self.manifest.inputs:
            raise MissingStage(f"{stage!r} needs 'ingest' to run first")
        for prev in STAGES[: STAGES.index(stage)]:
            if not self.manifest.is_complete(prev):
                raise MissingStage(f"{stage!r} needs {prev!r} to complete first")

    def _begin(self, stage: str) -> Optional[str]:
        """Input digest for a stage that must run, or None if it is already done."""
        self._require(stage)
        want = self._input_digest(stage)
        rec = self.manifest.stages.get(stage)
        if rec is not None and rec.complete:
            if rec.input_digest != want:
                raise StaleRun(f"inputs of {stage!r} changed since run {self.run_id} recorded it; start a new --run-id")
            return None
        self.manifest.stages[stage] = StageRecord(want)
        return want

    def _finish(self, stage: str, artifacts: dict[str, str]) -> None:
        rec = self.manifest.stages[stage]
        rec.artifacts = dict(sorted(artifacts.items()))
        rec.complete = True
        self._save_manifest()

    # --- stages ----------------------------------------------------------------------

    def ingest(self, paths: list[Path], speakers: Optional[Path] = None) -> dict[str, str]:
        if self.manifest.inputs:
            return self.manifest.inputs
        if not paths:
            raise UsageError("ingest needs at least one transcript file")
        written = {}
        seen = set()
        for p in sorted(paths, key=lambda x: x.name):
            t = ingest_transcript(p)
            if t.episode in seen:
                raise UsageError(f"episode {t.episode!r} given twice")
            seen.add(t.episode)
            rel = f"transcripts/{slug(t.episode)}.json"
            written[rel] = self.store.write_json(rel, t.to_dict())
        speakers = speakers or self.config.speakers
        if speakers is not None:
            metas = load_speakers(speakers)
            rows = [
                {"name": m.name, "episode": m.episode, "profession": m.profession, "gender": m.gender.value}
                for m in sorted(metas.values(), key=lambda m: (m.episode, m.name))
            ]
            written["transcripts/speakers.json"] = self.store.write_json("transcripts/speakers.json", rows)
        self.manifest.inputs = dict(sorted(written.items()))
        self._save_manifest()
        return self.manifest.inputs

    def transcripts(self) -> list[Transcript]:
        rels = [r for r in self.manifest.inputs if r != "transcripts/speakers.json"]
        return sorted((Transcript.from_dict(self.store.read_json(r)) for r in rels), key=lambda t: t.episode)

    def speakers(self) -> dict[tuple[str, str], SpeakerMeta]:
        if "transcripts/speakers.json" not in self.manifest.inputs:
            return {}
        rows = self.store.read_json("transcripts/speakers.json")
        return {(r["name"], r["episode"]): SpeakerMeta(r["name"], r["episode"], r["profession"], r["gender"]) for r in rows}

    def _guests(self, t: Transcript) -> list[str]:
        meta = self.speakers()
        if meta:
            return [s for s in t.speakers if (s, t.episode) in meta]
        return [s for s in t.speakers if s not in self.config.hosts]

    def segment(self) -> None:
        if self._begin("segment") is None:
            return
        ts = self.transcripts()
        results = run_many(lambda t: segment_transcript(t, self.ensemble)[0], ts, self.config.parallel)
        arts = {}
        for t, segs in zip(ts, results):
            rel = f"segments/{slug(t.episode)}.json"
            arts[rel] = self.store.write_json(rel, {"episode": t.episode, "segments": [s.to_dict() for s in segs]})
        self._finish("segment", arts)

    def _segments(self, t: Transcript) -> list[Segment]:
        doc = self.store.read_json(f"segments/{slug(t.episode)}.json")
        return [Segment.from_dict(s) for s in doc["segments"]]

    def summarize(self) -> None:
        if self._begin("summarize") is None:
            return
        jobs = [(t, s) for t in self.transcripts() for s in self._guests(t)]

        def one(job):
            t, speaker = job
            summary, record = summarize_speaker(t, self._segments(t), speaker, self.ensemble)
            return summary, record.agreement

        arts, review = {}, []
        for (t, speaker), (summary, agreement) in zip(jobs, run_many(one, jobs, self.config.parallel)):
            rel = f"summaries/{slug(t.episode)}__{slug(speaker)}.json"
            arts[rel] = self.store.write_json(rel, {**summary.to_dict(), "agreement": agreement.value if agreement else None})
            if summary.needs_review:
                review.append({"episode": t.episode, "speaker": speaker})
        arts["summaries/review_queue.json"] = self.store.write_json("summaries/review_queue.json", review)
        self._finish("summarize", arts)

    def _summary_docs(self) -> list[dict]:
        rec = self.manifest.stages["summarize"]
        return [self.store.read_json(rel) for rel in sorted(rec.artifacts) if not rel.endswith("review_queue.json")]

    def _summaries(self) -> list[SpeakerSummary]:
        return [SpeakerSummary(d["speaker"], d["episode"], d["text"], d["needs_review"]) for d in self._summary_docs()]

    def extract(self) -> None:
        if self._begin("extract") is None:
            return
        todo = [s for s in self._summaries() if s.text.strip()]

        def one(s):
            ext, record = extract_reasoning(s, self.ensemble)
            return ext, record.agreement

        arts, agreement = {}, []
        for s, (ext, ag) in zip(todo, run_many(one, todo, self.config.parallel)):
            rel = f"chains/{slug(s.episode)}__{slug(s.speaker)}.json"
            arts[rel] = self.store.write_json(rel, {"chains": [chain_to_dict(c) for c in ext.chains]})
            agreement.append({"episode": s.episode, "speaker": s.speaker, "agreement": ag.value if ag else None})
        arts["chains/meta/agreement.json"] = self.store.write_json("chains/meta/agreement.json", agreement)
        self._finish("extract", arts)

    def chains(self) -> dict[str, ReasoningChain]:
        rec = self.manifest.stages["extract"]
        out: dict[str, ReasoningChain] = {}
        for rel in sorted(rec.artifacts):
            if "/meta/" in rel:
                continue
            for d in self.store.read_json(rel)["chains"]:
                c = chain_from_dict(d)
                out[c.key] = c
        return out

    def classify(self) -> None:
        if self._begin("classify") is None:
            return
        chains = self.chains()
        topics = TopicList.seed()
        # corpus order: episode, then chain, then conclusion index
        order = sorted(chains.values(), key=lambda c: (c.episode, c.speaker, c.conclusions[0].id.sort_key))
        classified: list[ClassifiedConclusion] = []
        for chain in order:
            for concl in sorted(chain.conclusions, key=lambda c: c.id.sort_key):
                classified.append(assign_topic_attitude(chain, concl.id, topics, self.ensemble))
        self.manifest.orders["classification"] = [f"{c.chain_key}/{c.conclusion_id}" for c in classified]
        arts = {
            "classified/conclusions.json": self.store.write_json("classified/conclusions.json", [c.to_dict() for c in classified]),
            "classified/topics.json": self.store.write_json("classified/topics.json", topics.to_dict()),
        }
        self._finish("classify", arts)

    def classified(self) -> list[ClassifiedConclusion]:
        return [ClassifiedConclusion.from_dict(d) for d in self.store.read_json("classified/conclusions.json")]

    def topic_list(self) -> TopicList:
        return TopicList.from_dict(self.store.read_json("classified/topics.json"))

    def _selected_topics(self, classified: list[ClassifiedConclusion], topics: TopicList) -> list[str]:
        if self.config.topics:
            ids = []
            for want in self.config.topics:
                entry = topics.find(want)
                ids.append(entry.topic_id if entry else want)
            return sorted(set(ids))
        return sorted({c.topic_id for c in classified if c.is_ai_risk})

    def pairs(self) -> None:
        if self._begin("pairs") is None:
            return
        classified, topics = self.classified(), self.topic_list()
        out = {}
        for tid in self._selected_topics(classified, topics):
            pairs = enumerate_pairs(tid, classified)
            if pairs:
                out[tid] = [p.to_dict() for p in pairs]
        self._finish("pairs", {"pairs/pairs.json": self.store.write_json("pairs/pairs.json", out)})

    def _pairs(self) -> list[ChainPair]:
        doc = self.store.read_json("pairs/pairs.json")
        return [ChainPair.from_dict(p) for tid in sorted(doc) for p in doc[tid]]

    def disagree(self) -> None:
        if self._begin("disagree") is None:
            return
        chains, topics = self.chains(), self.topic_list()
        pairs = self._pairs()

        def one(pair: ChainPair) -> DisagreementReport:
            return analyze_pair(pair, chains[pair.boomer_key], chains[pair.doomer_key], self.ensemble, topics.get(pair.topic_id).label)

        arts = {}
        for report in run_many(one, pairs, self.config.parallel):
            arts[report.path] = self.store.write_json(report.path, report.to_dict())
        self._finish("disagree", arts)

    def reports(self) -> list[DisagreementReport]:
        rec = self.manifest.stages["disagree"]
        return [DisagreementReport.from_dict(self.store.read_json(rel)) for rel in sorted(rec.artifacts)]

    def aggregate(self) -> None:
        if self._begin("aggregate") is None:
            return
        chains = self.chains()
        by_topic: dict[str, list[DisagreementReport]] = {}
        for r in self.reports():
            by_topic.setdefault(r.pair.topic_id, []).append(r)
        arts, order = {}, []
        theme_map = None
        if self.config.themes is not None:
            theme_map = load_theme_file(self.config.themes)
        for tid in sorted(by_topic):
            cmap = ConflictMap(id_prefix=f"{tid}-")
            for r in by_topic[tid]:
                root = r.root_divergence
                if root is None or root.dtype is not PremiseType.CAUSAL:
                    continue
                b = chains[r.pair.boomer_key]
                d = chains[r.pair.doomer_key]
                key = f"{r.pair.pair_key}/{root.id}"
                classify_divergence(root, cmap, self.ensemble, key, _ref_text(b, root.boomer_ref), _ref_text(d, root.doomer_ref))
                order.append(key)
            if not cmap.assignments:
                continue
            doc = {**cmap.to_dict(), "consistency_rate": consistency_rate(cmap)}
            rel = f"aggregation/{tid}/conflict_map.json"
            arts[rel] = self.store.write_json(rel, doc)
            if theme_map is not None:
                rel = f"aggregation/{tid}/themes.json"
                arts[rel] = self.store.write_json(rel, theme_report(cmap, theme_map))
        self.manifest.orders["assignment"] = order
        arts["aggregation/index.json"] = self.store.write_json("aggregation/index.json", sorted({k.split("/")[1] for k in arts}))
        self._finish("aggregate", arts)

    def stats(self) -> None:
        if self._begin("stats") is None:
            return
        chains, classified = self.chains(), self.classified()
        ai = [c for c in classified if c.is_ai_risk]
        per_conclusion = [chains[c.chain_key].restrict_to(c.conclusion_id) for c in ai]
        arts = {}
        if per_conclusion:
            comp = composition_summary(per_conclusion)
            arts["stats/composition.json"] = self.store.write_json("stats/composition.json", comp.to_dict())
        z = {}
        for other in (PremiseType.CAUSAL, PremiseType.DEFINITIONAL):
            name = f"moral_vs_{other.value}"
            try:
                r = implicitness_z_test(per_conclusion, PremiseType.MORAL, other)
                z[name] = {"z": r.z, "p_value": r.p_value}
            except (DegeneratePool, ValueError) as exc:
                z[name] = {"error": str(exc)}
        arts["stats/implicitness_z.json"] = self.store.write_json("stats/implicitness_z.json", z)
        reports = self.reports()
        for tid in sorted({r.pair.topic_id for r in reports}):
            mine = [r for r in reports if r.pair.topic_id == tid and r.is_disagreement]
            doc: dict[str, Any] = {"topic_id": tid, "n_disagreeing_pairs": len(mine)}
            if mine:
                pair_stats = DivergencePairStats.from_chains(disagreeing_chain_pairs(mine, chains))
                try:
                    actual, base, test = root_vs_base([r.root_type for r in mine], pair_stats)
                    doc["actual"] = {t.value: actual[t] for t in PremiseType}
                    doc["base"] = {t.value: base[t] for t in PremiseType}
                    doc["chi_square"] = test.to_dict()
                except (ZeroExpected, EmptyInput) as exc:
                    doc["error"] = str(exc)
            rel = f"stats/root_types/{tid}.json"
            arts[rel] = self.store.write_json(rel, doc)
        csv_text = export_regression_csv(ai, chains, self.speakers())
        arts["stats/regression.csv"] = self.store.write_text("stats/regression.csv", csv_text)
        self._finish("stats", arts)

    def report(self) -> None:
        if self._begin("report") is None:
            return
        arts = {}

        def emit(name: str, rows: list[dict], extra: Optional[dict] = None):
            arts[f"report/{name}.json"] = self.store.write_json(f"report/{name}.json", extra if extra is not None else rows)
            arts[f"report/{name}.csv"] = self.store.write_text(f"report/{name}.csv", _csv(rows))

        if self.store.path("stats/composition.json").exists():
            comp = self.store.read_json("stats/composition.json")
            rows = [
                {
                    "type": t.value,
                    "mean_proportion": comp["mean_proportions"][t.value],
                    "mean_explicit": comp["mean_explicit"][t.value],
                    "mean_implicit": comp["mean_implicit"][t.value],
                }
                for t in PremiseType
            ]
            emit("premise_composition", rows, {"rows": rows, "mean_implicit_share": comp["mean_implicit_share"], "histogram": comp["histogram"]})
        classified = self.classified()
        emit("attitude_by_topic", attitude_by_topic(classified))
        table = agreement_table(classified)
        emit(
            "agreement_topic_attitude",
            [{"block": b, **row} for b, rows in table["blocks"].items() for row in rows],
            table,
        )
        reports = self.reports()
        outcomes = {
            "summarize": [s.get("agreement") for s in self._summary_docs()],
            "extract": [x["agreement"] for x in self.store.read_json("chains/meta/agreement.json")],
            "topic": [c.topic_agreement for c in classified],
            "attitude": [c.attitude_agreement for c in classified],
            "disagree": [r.agreement for r in reports],
        }
        outcomes["all"] = [o for v in outcomes.values() for o in v]
        overall = {k: agreement_summary(v, self.config.reliability_weights) for k, v in outcomes.items()}
        emit(
            "agreement_overall",
            [
                {"task": k, "n": d["n"], **{f"share_{r}": d["shares"][r] for r in ("R1", "R2", "R3")}, "composite": d["composite"]}
                for k, d in overall.items()
            ],
            overall,
        )
        for tid in sorted({r.pair.topic_id for r in reports}):
            mine = [r for r in reports if r.pair.topic_id == tid]
            ct = consistency_table(mine)
            emit(
                f"agreement_disagreement_{tid}",
                [{"block": "verdicts", **x} for x in ct["verdicts"]] + [{"block": "roots", **x} for x in ct["roots"]],
                ct,
            )
            pair_rows = []
            for r in sorted(mine, key=lambda r: r.pair.pair_key):
                root = r.root_divergence
                pair_rows.append(
                    {
                        "boomer": f"{r.pair.boomer_key}/{r.pair.boomer_conclusion}",
                        "doomer": f"{r.pair.doomer_key}/{r.pair.doomer_conclusion}",
                        "is_disagreement": r.is_disagreement,
                        "root": r.root or "",
                        "boomer_ref": str(root.boomer_ref) if root else "",
                        "doomer_ref": str(root.doomer_ref) if root else "",
                        "root_type": r.root_type.value if r.root_type else "",
                        "agreement": r.agreement.value if r.agreement else "",
                    }
                )
            emit(f"roots_{tid}", pair_rows)
            rt = self.store.read_json(f"stats/root_types/{tid}.json")
            if "actual" in rt:
                rows = [{"type": t.value, "actual": rt["actual"][t.value], "base": rt["base"][t.value]} for t in PremiseType]
                emit(f"root_divergence_{tid}", rows, {"rows": rows, "chi_square": rt["chi_square"]})
            trel = f"aggregation/{tid}/themes.json"
            if self.store.path(trel).exists():
                emit(f"themes_{tid}", self.store.read_json(trel)["themes"])
        index = sorted(k for k in arts)
        arts["report/index.json"] = self.store.write_json("report/index.json", index)
        self._finish("report", arts)

    STAGE_METHODS = ("segment", "summarize", "extract", "classify", "pairs", "disagree", "aggregate", "stats", "report")

    def run_stage(self, stage: str) -> None:
        getattr(self, stage)()

    def run_all(self, paths: Optional[list[Path]] = None, speakers: Optional[Path] = None) -> None:
        if not self.manifest.inputs:
            self.ingest(paths or [], speakers)
        for stage in STAGES:
            self.run_stage(stage)


def _ref_text(chain: ReasoningChain, ref: RefLabel) -> str:
    p = chain.premise(ref)
    if p is not None:
        return p.text
    rel = next((r for r in chain.relationships if r.id == ref), None)
    if rel is None:
        return ""
    return serialize_relation(rel)


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\r\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


__all__ = [
    "BackendSpec",
    "Pipeline",
    "PipelineConfig",
    "StaleRun",
    "UsageError",
    "build_ensemble",
    "bundled_corpus",
    "corpus_files",
    "load_speakers",
    "new_run_id",
]
