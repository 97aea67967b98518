from __future__ import annotations

import copy
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import DEFECTS, mutate, mutation_suite, random_chain
from peel.chain_model import chain_from_dict
from peel.refs import RefLabel
from peel.validator import Severity, ViolationCode, coherence_gap_report, validate_chain

V = ViolationCode


def _codes(d: dict) -> set[str]:
    return {v.code.value for v in validate_chain(chain_from_dict(d)).errors}


def test_published_chains_are_valid(boomer, doomer):
    for chain in (boomer, doomer):
        report = validate_chain(chain)
        assert report.is_valid, report.to_dict()
        assert report.violations == ()


def test_deleting_judged_premise_is_unresolved(doomer_dict):
    d = copy.deepcopy(doomer_dict)
    d["premises"] = [p for p in d["premises"] if p["id"] != "P27"]
    report = validate_chain(chain_from_dict(d))
    assert [(v.code, str(v.subject)) for v in report.errors] == [(V.V2_UnresolvedRef, "R4")]


def test_evaluation_with_non_moral_premise(doomer_dict):
    d = copy.deepcopy(doomer_dict)
    d["relationships"] = [
        "R4: P32 ^ P18" if r.startswith("R4:") else r for r in d["relationships"]
    ]
    report = validate_chain(chain_from_dict(d))
    codes = [(v.code, str(v.subject)) for v in report.errors]
    assert (V.V6_EvalNotMoral, "R4") in codes
    assert {c for c, _ in codes} == {V.V6_EvalNotMoral}


def test_confidence_out_of_range(doomer_dict):
    d = copy.deepcopy(doomer_dict)
    d["premises"][0]["confidence"] = 120
    report = validate_chain(chain_from_dict(d))
    assert [(v.code, str(v.subject)) for v in report.errors] == [(V.V7_ConfidenceRange, "P1")]


def test_orphan_premise_is_only_a_warning(boomer_dict):
    d = copy.deepcopy(boomer_dict)
    d["premises"].append({"id": "P99", "text": "unused aside", "type": "factual", "explicitness": "explicit", "confidence": 50})
    report = validate_chain(chain_from_dict(d))
    assert report.is_valid
    assert report.codes(Severity.WARNING) == {V.V5_OrphanPremise}


def test_unsupported_conclusion():
    d = {
        "conclusions": [{"id": "C1", "text": "c"}, {"id": "C2", "text": "d"}],
        "premises": [{"id": "P1", "text": "a", "type": "factual"}],
        "relationships": ["R1: P1 => C1"],
    }
    report = validate_chain(chain_from_dict(d))
    assert [(v.code, str(v.subject)) for v in report.errors] == [(V.V4_UnsupportedConclusion, "C2")]


def test_violations_are_sorted(doomer_dict):
    d = copy.deepcopy(doomer_dict)
    d["premises"][3]["confidence"] = -1
    d["premises"] = [p for p in d["premises"] if p["id"] != "P27"]
    report = validate_chain(chain_from_dict(d))
    keys = [(v.code.value, v.subject.sort_key) for v in report.violations]
    assert keys == sorted(keys)


def test_coherence_gap_flags_descriptive_only_support():
    d = {
        "conclusions": [{"id": "C1", "text": "we should pause"}],
        "premises": [
            {"id": "P1", "text": "models grow fast", "type": "factual"},
            {"id": "P2", "text": "they will grow faster", "type": "forecast"},
        ],
        "relationships": ["R1: P1 + P2", "R2: R1 => C1"],
    }
    assert coherence_gap_report(chain_from_dict(d)) == [RefLabel.parse("C1")]
    d["premises"][1]["explicitness"] = "implicit"
    assert coherence_gap_report(chain_from_dict(d)) == []


def test_coherence_gap_quiet_when_evaluated(boomer, doomer):
    assert coherence_gap_report(boomer) == []
    assert coherence_gap_report(doomer) == []


def test_mutation_suite(boomer_dict, doomer_dict):
    seen = set()
    n = 0
    for defect, code, mutant in mutation_suite([boomer_dict, doomer_dict], 500, seed=7):
        got = _codes(mutant)
        assert got == {code}, (defect, got)
        seen.add(defect)
        n += 1
    assert n == 500
    assert seen == {d for d, _ in DEFECTS}


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generated_chains_are_valid(seed):
    report = validate_chain(chain_from_dict(random_chain(random.Random(seed))))
    assert report.is_valid, report.to_dict()


@pytest.mark.parametrize("defect, code", [d for d in DEFECTS if d[0] != "retype_moral"])
def test_each_defect_on_synthetic_chains(defect, code):
    rng = random.Random(defect)
    checked = 0
    for i in range(80):
        chain = random_chain(random.Random(i), max_premises=8)
        try:
            mutant = mutate(rng, chain, defect)
        except IndexError:
            continue  # no site for this defect in this chain
        assert _codes(mutant) == {code}, (i, mutant)
        checked += 1
    assert checked >= 20
