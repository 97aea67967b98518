from __future__ import annotations

import csv
import io
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import chi2_sf_quadrature, normal_sf, pooled_z
from peel.chain_model import PremiseType
from peel.errors import DegeneratePool, DimensionMismatch, EmptyInput, ZeroExpected, ZeroTotal
from peel.special import chi2_sf, gammainc, gammaincc, norm_sf
from peel.stats import (
    DivergencePairStats,
    PairTypeCounts,
    base_probabilities,
    base_probability,
    chi_square_gof,
    composition_summary,
    export_regression_csv,
    implicitness_z_test,
    root_type_distribution,
    root_vs_base,
    two_prop_z,
)

T = list(PremiseType)


def _counts(**kw) -> dict:
    return {t: kw.get(t.value, 0) for t in PremiseType}


def _oracle_base(pairs: list[tuple[dict, dict]]) -> dict:
    """Exact rational evaluation of the per-pair pooled share, averaged."""
    out = {}
    for t in PremiseType:
        acc = Fraction(0)
        for b, d in pairs:
            acc += Fraction(b[t] + d[t], sum(b.values()) + sum(d.values()))
        out[t] = acc / len(pairs)
    return out


def test_base_probability_hand_example():
    pair = PairTypeCounts(_counts(causal=4, factual=8), _counts(causal=8, factual=23))
    stats = DivergencePairStats((pair,))
    assert abs(base_probability(stats, PremiseType.CAUSAL) - 12 / 43) <= 1e-12


def test_base_probability_from_published_chains(boomer, doomer):
    stats = DivergencePairStats.from_chains([(boomer, doomer)])
    want = _oracle_base([(stats.pairs[0].boomer, stats.pairs[0].doomer)])
    got = base_probabilities(stats)
    for t in PremiseType:
        assert abs(got[t] - float(want[t])) <= 1e-12


def _random_pairs(rng: random.Random) -> list[tuple[dict, dict]]:
    pairs = []
    for _ in range(rng.randint(1, 30)):
        while True:
            b = {t: rng.randint(0, 20) for t in PremiseType}
            d = {t: rng.randint(0, 40) for t in PremiseType}
            if sum(b.values()) + sum(d.values()):
                break
        pairs.append((b, d))
    return pairs


def test_base_probability_sums_to_one_on_1000_inputs():
    rng = random.Random(2024)
    for _ in range(1000):
        pairs = _random_pairs(rng)
        stats = DivergencePairStats(tuple(PairTypeCounts(b, d) for b, d in pairs))
        got = base_probabilities(stats)
        assert abs(math.fsum(got.values()) - 1.0) <= 1e-12
        want = _oracle_base(pairs)
        assert all(abs(got[t] - float(want[t])) <= 1e-12 for t in PremiseType)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_base_probability_bounds(seed):
    pairs = _random_pairs(random.Random(seed))
    stats = DivergencePairStats(tuple(PairTypeCounts(b, d) for b, d in pairs))
    for t in PremiseType:
        assert 0.0 <= base_probability(stats, t) <= 1.0


def test_base_probability_errors():
    with pytest.raises(EmptyInput):
        base_probability(DivergencePairStats(()), PremiseType.MORAL)
    empty = PairTypeCounts(_counts(), _counts())
    with pytest.raises(ZeroTotal):
        base_probability(DivergencePairStats((empty,)), PremiseType.MORAL)


def test_chi_square_uniform_example():
    res = chi_square_gof([30, 10], [0.5, 0.5])
    assert res.statistic == 10.0
    assert res.df == 1
    assert res.expected == (20.0, 20.0)
    assert abs(res.p_value - chi2_sf_quadrature(10.0, 1)) <= 1e-8


@pytest.mark.parametrize("df", range(1, 11))
@pytest.mark.parametrize("x", [0.1, 1.0, 5.0, 10.0, 50.0])
def test_chi2_sf_against_quadrature(df, x):
    assert abs(chi2_sf(x, df) - chi2_sf_quadrature(x, df)) <= 1e-8


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 60.0), st.integers(1, 30))
def test_gamma_halves_are_complementary(x, df):
    a = df / 2
    assert abs(gammainc(a, x / 2) + gammaincc(a, x / 2) - 1.0) <= 1e-12


def test_chi_square_tiny_p_is_clamped_with_log():
    res = chi_square_gof([2000, 0, 0, 0, 0], [0.2] * 5)
    assert res.p_clamped
    assert res.p_value == 1e-300
    assert res.log10_p < -300


def test_chi_square_errors():
    with pytest.raises(DimensionMismatch):
        chi_square_gof([1, 2], [1.0])
    with pytest.raises(ZeroExpected):
        chi_square_gof([1, 2], [1.0, 0.0])
    with pytest.raises(EmptyInput):
        chi_square_gof([0, 0], [0.5, 0.5])
    with pytest.raises(ValueError):
        chi_square_gof([1, 2], [0.5, 0.6])


def test_two_prop_z_pooled_example():
    res = two_prop_z(90, 100, 50, 100)
    assert abs(res.z - pooled_z(90, 100, 50, 100)) <= 1e-12
    assert abs(res.z - 6.172133998483676) <= 1e-9
    assert abs(res.p_value - normal_sf(res.z)) <= 1e-15


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 500), st.data())
def test_two_prop_z_identical_is_zero(n, data):
    x = data.draw(st.integers(1, n - 1)) if n > 1 else None
    if x is None:
        return
    assert two_prop_z(x, n, x, n).z == 0.0


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 300), st.integers(2, 300), st.data())
def test_two_prop_z_matches_oracle(n1, n2, data):
    x1 = data.draw(st.integers(0, n1))
    x2 = data.draw(st.integers(0, n2))
    if x1 + x2 in (0, n1 + n2):
        with pytest.raises(DegeneratePool):
            two_prop_z(x1, n1, x2, n2)
        return
    res = two_prop_z(x1, n1, x2, n2)
    assert abs(res.z - pooled_z(x1, n1, x2, n2)) <= 1e-9 * max(1.0, abs(res.z))
    assert two_prop_z(x2, n2, x1, n1).z == pytest.approx(-res.z, abs=1e-12)


def test_norm_sf_matches_oracle():
    for z in (-3.0, -0.5, 0.0, 1.0, 2.5, 6.17, 10.0):
        assert abs(norm_sf(z) - normal_sf(z)) <= 1e-15 + 1e-12 * normal_sf(z)


def test_root_type_distribution_and_test(boomer, doomer):
    roots = [PremiseType.CAUSAL] * 3 + [PremiseType.FACTUAL]
    shares, counts = root_type_distribution(roots)
    assert shares[PremiseType.CAUSAL] == 0.75 and counts[PremiseType.MORAL] == 0
    stats = DivergencePairStats.from_chains([(boomer, doomer)])
    actual, base, test = root_vs_base(roots, stats)
    assert actual == shares
    assert test.df == 4
    with pytest.raises(EmptyInput):
        root_type_distribution([])


def test_implicitness_z_on_doomer(doomer):
    res = implicitness_z_test([doomer], PremiseType.MORAL, PremiseType.FACTUAL)
    moral = [p for p in doomer.premises if p.ptype is PremiseType.MORAL]
    factual = [p for p in doomer.premises if p.ptype is PremiseType.FACTUAL]
    want = pooled_z(
        sum(p.is_implicit for p in moral), len(moral), sum(p.is_implicit for p in factual), len(factual)
    )
    assert res.z == pytest.approx(want, abs=1e-12)
    assert res.z > 0


def test_composition_summary(boomer, doomer):
    summary = composition_summary([boomer, doomer])
    totals = [c.total for c in summary.per_chain]
    assert totals == [12, 31]
    for c in summary.per_chain:
        assert math.fsum(c.proportions.values()) == pytest.approx(1.0, abs=1e-12)
        assert math.fsum(c.explicit.values()) + math.fsum(c.implicit.values()) == pytest.approx(1.0, abs=1e-12)
    assert summary.mean_implicit_share == pytest.approx((4 / 12 + 7 / 31) / 2, abs=1e-12)
    assert summary.enthymeme_share == 1.0
    assert summary.histogram == {12: 1, 31: 1}
    with pytest.raises(EmptyInput):
        composition_summary([])


class _Row:
    def __init__(self, chain, conclusion_id, topic, ai=True):
        self.chain_key = chain.key
        self.conclusion_id = conclusion_id
        self.attitude = "pessimistic"
        self.topic_label = topic
        self.is_ai_risk = ai


def test_regression_csv_quotes_and_filters(doomer, boomer):
    cid = doomer.conclusions[0].id
    rows = [
        _Row(doomer, cid, 'X-risk, "loss of control"'),
        _Row(boomer, boomer.conclusions[0].id, "Non-AI topic", ai=False),
    ]
    text = export_regression_csv(rows, {doomer.key: doomer, boomer.key: boomer})
    assert text.endswith("\r\n")
    parsed = list(csv.reader(io.StringIO(text, newline="")))
    header, body = parsed[0], parsed[1:]
    assert len(body) == 1
    row = dict(zip(header, body[0]))
    assert row["topic"] == 'X-risk, "loss of control"'
    assert row["total_premises"] == "31"
    assert row["explicit_premises"] == "24"
    assert float(row["prop_moral"]) == pytest.approx(5 / 31, abs=1e-6)
    assert row["gender"] == ""
