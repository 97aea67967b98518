"""Statistics over chains and root divergences.

Base-probability baseline for root-divergence types, chi-square
goodness-of-fit, one-sided two-proportion z-tests, premise composition
summaries, and the CSV export consumed by external regression tooling.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .chain_model import PremiseType, ReasoningChain, SpeakerMeta, enthymeme_stats
from .errors import DegeneratePool, DimensionMismatch, EmptyInput, ZeroExpected, ZeroTotal
from .special import chi2_log_sf, norm_sf

P_FLOOR = 1e-300


@dataclass(frozen=True)
class PairTypeCounts:
    boomer: Mapping[PremiseType, int]
    doomer: Mapping[PremiseType, int]

    @property
    def boomer_total(self) -> int:
        return sum(self.boomer.values())

    @property
    def doomer_total(self) -> int:
        return sum(self.doomer.values())


@dataclass(frozen=True)
class DivergencePairStats:
    """Premise-type counts for each disagreeing pair."""

    pairs: tuple[PairTypeCounts, ...]

    @property
    def n(self) -> int:
        return len(self.pairs)

    @classmethod
    def from_chains(cls, pairs: Iterable[tuple[ReasoningChain, ReasoningChain]]) -> "DivergencePairStats":
        out = []
        for boomer, doomer in pairs:
            out.append(PairTypeCounts(_type_counts(boomer), _type_counts(doomer)))
        return cls(tuple(out))


def _type_counts(chain: ReasoningChain) -> dict[PremiseType, int]:
    c = Counter(p.ptype for p in chain.premises if p.ptype is not None)
    return {t: c[t] for t in PremiseType}


def base_probability(stats: DivergencePairStats, t: PremiseType) -> float:
    """Mean over pairs of the pooled share of premise type ``t``."""
    if stats.n == 0:
        raise EmptyInput("no disagreeing pairs")
    acc = math.fsum(_pair_share(i, pair, t) for i, pair in enumerate(stats.pairs))
    return acc / stats.n


def _pair_share(i: int, pair: PairTypeCounts, t: PremiseType) -> float:
    total = pair.boomer_total + pair.doomer_total
    if total == 0:
        raise ZeroTotal(f"pair {i} has no typed premises")
    return (pair.boomer.get(t, 0) + pair.doomer.get(t, 0)) / total


def base_probabilities(stats: DivergencePairStats) -> dict[PremiseType, float]:
    return {t: base_probability(stats, t) for t in PremiseType}


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    df: int
    p_value: float
    observed: tuple[float, ...]
    expected: tuple[float, ...]
    categories: tuple[str, ...] = ()
    p_clamped: bool = False
    log10_p: float = 0.0

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "p_clamped": self.p_clamped,
            "log10_p": self.log10_p,
            "cells": [
                {"category": cat, "observed": o, "expected": e}
                for cat, o, e in zip(self.categories or [str(i) for i in range(len(self.observed))], self.observed, self.expected)
            ],
        }


def chi_square_gof(
    observed: Sequence[float],
    expected: Sequence[float],
    categories: Sequence[str] = (),
) -> ChiSquareResult:
    """Goodness-of-fit of observed counts against expected probabilities.

    Expected counts are ``expected[k] * sum(observed)``.  Tail probabilities
    below ``P_FLOOR`` are reported as ``P_FLOOR`` with ``p_clamped`` set.
    """
    k = len(observed)
    if k != len(expected) or k < 2:
        raise DimensionMismatch(f"need matching lengths >= 2, got {k} and {len(expected)}")
    n = math.fsum(observed)
    if n < 1:
        raise EmptyInput("observed total must be at least 1")
    if abs(math.fsum(expected) - 1.0) > 1e-9:
        raise ValueError(f"expected probabilities sum to {math.fsum(expected)}, not 1")
    exp_counts = [e * n for e in expected]
    for i, e in enumerate(exp_counts):
        if e <= 0:
            name = categories[i] if categories else str(i)
            raise ZeroExpected(f"expected count for {name} is zero")
    stat = math.fsum((o - e) ** 2 / e for o, e in zip(observed, exp_counts))
    df = k - 1
    log_p = chi2_log_sf(stat, df)
    p = math.exp(log_p) if log_p > -745 else 0.0
    clamped = p < P_FLOOR
    return ChiSquareResult(
        statistic=stat,
        df=df,
        p_value=P_FLOOR if clamped else min(1.0, p),
        observed=tuple(float(o) for o in observed),
        expected=tuple(exp_counts),
        categories=tuple(categories),
        p_clamped=clamped,
        log10_p=log_p / math.log(10),
    )


@dataclass(frozen=True)
class ZTestResult:
    z: float
    p_value: float


def two_prop_z(x1: int, n1: int, x2: int, n2: int) -> ZTestResult:
    """One-sided pooled two-proportion z-test of ``x1/n1 > x2/n2``.

    No continuity correction.
    """
    if n1 < 1 or n2 < 1 or not (0 <= x1 <= n1) or not (0 <= x2 <= n2):
        raise ValueError("need 0 <= x <= n and n >= 1")
    pooled = (x1 + x2) / (n1 + n2)
    if pooled in (0.0, 1.0):
        raise DegeneratePool(f"pooled proportion is {pooled}")
    if x1 * n2 == x2 * n1:
        return ZTestResult(0.0, 0.5)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    z = (x1 / n1 - x2 / n2) / se
    return ZTestResult(z, norm_sf(z))


def implicitness_z_test(chains: Iterable[ReasoningChain], more: PremiseType, less: PremiseType) -> ZTestResult:
    """Is type ``more`` implicit at a higher rate than type ``less``?"""
    implicit = Counter()
    total = Counter()
    for ch in chains:
        for p in ch.premises:
            if p.ptype is None:
                continue
            total[p.ptype] += 1
            implicit[p.ptype] += p.is_implicit
    return two_prop_z(implicit[more], total[more], implicit[less], total[less])


def root_type_distribution(root_types: Iterable[PremiseType]) -> tuple[dict[PremiseType, float], dict[PremiseType, int]]:
    """Share of each premise type among root divergences."""
    counts = Counter(root_types)
    n = sum(counts.values())
    if n == 0:
        raise EmptyInput("no disagreement reports")
    return {t: counts[t] / n for t in PremiseType}, {t: counts[t] for t in PremiseType}


def root_vs_base(
    root_types: Sequence[PremiseType],
    stats: DivergencePairStats,
) -> tuple[dict[PremiseType, float], dict[PremiseType, float], ChiSquareResult]:
    """Actual root-type shares, base shares, and the goodness-of-fit test."""
    actual, counts = root_type_distribution(root_types)
    base = base_probabilities(stats)
    test = chi_square_gof(
        [counts[t] for t in PremiseType],
        [base[t] for t in PremiseType],
        [t.value for t in PremiseType],
    )
    return actual, base, test


# --- composition -------------------------------------------------------------


@dataclass(frozen=True)
class ChainComposition:
    key: str
    total: int
    proportions: dict[PremiseType, float]
    explicit: dict[PremiseType, float]
    implicit: dict[PremiseType, float]
    implicit_share: float


@dataclass(frozen=True)
class CompositionSummary:
    per_chain: tuple[ChainComposition, ...]
    mean_proportions: dict[PremiseType, float]
    mean_explicit: dict[PremiseType, float]
    mean_implicit: dict[PremiseType, float]
    mean_implicit_share: float
    enthymeme_share: float
    histogram: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        tv = lambda d: {t.value: d[t] for t in PremiseType}  # noqa: E731
        return {
            "per_chain": [
                {
                    "key": c.key,
                    "total": c.total,
                    "proportions": tv(c.proportions),
                    "explicit": tv(c.explicit),
                    "implicit": tv(c.implicit),
                    "implicit_share": c.implicit_share,
                }
                for c in self.per_chain
            ],
            "mean_proportions": tv(self.mean_proportions),
            "mean_explicit": tv(self.mean_explicit),
            "mean_implicit": tv(self.mean_implicit),
            "mean_implicit_share": self.mean_implicit_share,
            "enthymeme_share": self.enthymeme_share,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }


def chain_composition(chain: ReasoningChain) -> ChainComposition:
    s = enthymeme_stats(chain)
    n = s.total
    div = (lambda x: x / n) if n else (lambda x: 0.0)
    return ChainComposition(
        key=chain.key,
        total=n,
        proportions={t: div(s.type_count(t)) for t in PremiseType},
        explicit={t: div(s.explicit[t]) for t in PremiseType},
        implicit={t: div(s.implicit[t]) for t in PremiseType},
        implicit_share=s.implicit_share,
    )


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)


def composition_summary(chains: Iterable[ReasoningChain]) -> CompositionSummary:
    """Per-chain and unweighted corpus-mean premise-type proportions."""
    per = [chain_composition(c) for c in chains]
    if not per:
        raise EmptyInput("no chains")
    nonempty = [c for c in per if c.total] or per
    mean = lambda attr: {t: _mean([getattr(c, attr)[t] for c in nonempty]) for t in PremiseType}  # noqa: E731
    return CompositionSummary(
        per_chain=tuple(per),
        mean_proportions=mean("proportions"),
        mean_explicit=mean("explicit"),
        mean_implicit=mean("implicit"),
        mean_implicit_share=_mean([c.implicit_share for c in nonempty]),
        enthymeme_share=sum(1 for c in per if c.implicit_share > 0) / len(per),
        histogram=dict(Counter(c.total for c in per)),
    )


# --- regression export ---------------------------------------------------------

REGRESSION_HEADER = (
    "episode",
    "speaker",
    "conclusion_id",
    "attitude",
    "topic",
    "profession",
    "gender",
    "total_premises",
    "explicit_premises",
    *(f"prop_{t.value}" for t in PremiseType),
    *(f"prop_explicit_{t.value}" for t in PremiseType),
    "implicit_share",
)


def export_regression_csv(
    classified: Iterable,
    chains: Mapping[str, ReasoningChain],
    speakers: Mapping[tuple[str, str], SpeakerMeta] | None = None,
) -> str:
    """One CSV row per AI-risk conclusion.

    ``classified`` items need ``chain_key``, ``conclusion_id``, ``attitude``,
    ``topic_label`` and ``is_ai_risk``; ``chains`` maps chain keys to chains;
    ``speakers`` is keyed by ``(name, episode)``.
    """
    speakers = speakers or {}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(REGRESSION_HEADER)
    for cc in classified:
        if not cc.is_ai_risk:
            continue
        chain = chains[cc.chain_key].restrict_to(cc.conclusion_id)
        s = enthymeme_stats(chain)
        n = s.total
        meta: Optional[SpeakerMeta] = speakers.get((chain.speaker, chain.episode))
        explicit_n = n - s.implicit_count
        row = [
            chain.episode,
            chain.speaker,
            str(cc.conclusion_id),
            _value(cc.attitude),
            cc.topic_label,
            meta.profession if meta and meta.profession else "",
            meta.gender.value if meta else "",
            n,
            explicit_n,
            *(_fmt(s.type_count(t) / n) if n else "" for t in PremiseType),
            *(_fmt(s.explicit[t] / explicit_n) if explicit_n else "" for t in PremiseType),
            _fmt(s.implicit_share) if n else "",
        ]
        writer.writerow(row)
    return buf.getvalue()


def _value(x) -> str:
    return getattr(x, "value", x) or ""


def _fmt(x: float) -> str:
    return f"{x:.6f}"
