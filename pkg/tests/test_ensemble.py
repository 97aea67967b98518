from __future__ import annotations

import itertools
from fractions import Fraction
import shutil
from importlib import resources
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import mock_config
from peel.errors import MalformedOutput
from peel.llm.backends import MockBackend, MockScript, MockScriptMiss
from peel.llm.ensemble import (
    AgreementOutcome,
    EnsembleConfig,
    PayloadError,
    agreement_summary,
    classify_agreement,
    extract_json,
    fixed_clock,
    run_ensemble_task,
    run_many,
    run_single_task,
)
from peel.llm.prompts import PromptSet

A = AgreementOutcome


def _expected(a, b, final):
    """Outcome definitions written out case by case.

    R3: the integrated result equals both worker outputs.
    R2: it equals exactly one of them.
    R1: it equals neither.
    A missing output never counts as a match.
    """
    match_a = final is not None and a is not None and final == a
    match_b = final is not None and b is not None and final == b
    return {
        (True, True): A.R3,
        (True, False): A.R2_MATCHES_A,
        (False, True): A.R2_MATCHES_B,
        (False, False): A.R1,
    }[(match_a, match_b)]


def agreement_truth_table():
    """Every combination of worker relation, integrator choice and absence."""
    rows = []
    for relation in ("a=b", "a!=b"):
        for absent in (None, "a", "b", "both"):
            a = None if absent in ("a", "both") else "x"
            b = None if absent in ("b", "both") else ("x" if relation == "a=b" else "y")
            for pick in ("a", "b", "neither", "none"):
                final = {"a": a, "b": b, "neither": "z", "none": None}[pick]
                rows.append((relation, absent, pick, a, b, final))
    return rows


TRUTH = agreement_truth_table()


@pytest.mark.parametrize("relation, absent, pick, a, b, final", TRUTH)
def test_agreement_truth_table(relation, absent, pick, a, b, final):
    assert classify_agreement(a, b, final) is _expected(a, b, final)


def test_truth_table_named_cases():
    assert classify_agreement("x", "x", "x") is A.R3
    assert classify_agreement("x", "y", "x") is A.R2_MATCHES_A
    assert classify_agreement("x", "y", "y") is A.R2_MATCHES_B
    assert classify_agreement("x", "y", "z") is A.R1
    assert classify_agreement("x", "x", "z") is A.R1
    assert classify_agreement(None, None, None) is A.R1
    assert classify_agreement(None, "x", "x") is A.R2_MATCHES_B
    assert classify_agreement([], [], []) is A.R1


def test_agreement_uses_equivalence():
    same_len = lambda x, y: len(x) == len(y)  # noqa: E731
    assert classify_agreement("ab", "cd", "ef", same_len) is A.R3


def _echo_task(config, payload, equiv=None):
    def worker(c):
        return c.json("main", "sys", f"input {payload}", lambda o: o["answer"])

    def integrator(c, a, b):
        return c.json("final", "sys", f"pick {a} {b}", lambda o: o["answer"])

    kw = {"equiv": equiv} if equiv else {}
    return run_ensemble_task("disagree", payload, config, worker=worker, integrator=integrator, **kw)


SCRIPT = [
    {"role": "worker_a", "response": {"answer": "left"}},
    {"role": "worker_b", "response": {"answer": "right"}},
    {"role": "integrator", "response": {"answer": "left"}},
]


def test_run_records_outcome_and_backends():
    rec = _echo_task(mock_config(SCRIPT), {"k": 1})
    assert (rec.worker_a_out, rec.worker_b_out, rec.integrated_out) == ("left", "right", "left")
    assert rec.agreement is A.R2_MATCHES_A
    assert rec.backends == {"worker_a": "mock-worker-a", "worker_b": "mock-worker-b", "integrator": "mock-integrator"}
    assert rec.started_at == rec.finished_at == fixed_clock()


def test_cache_hit_makes_no_calls(tmp_path):
    cfg = mock_config(SCRIPT, cache_dir=tmp_path)
    first = _echo_task(cfg, {"k": 1})
    cfg2 = mock_config([], cache_dir=tmp_path)  # an empty script would miss on any call
    second = _echo_task(cfg2, {"k": 1})
    assert second.cached
    assert second.to_dict() == first.to_dict()
    for backend in (cfg2.worker_a, cfg2.worker_b, cfg2.integrator):
        assert backend.calls == []
    with pytest.raises(MockScriptMiss):
        _echo_task(cfg2, {"k": 2})


def test_concurrent_equals_serial():
    a = _echo_task(mock_config(SCRIPT, concurrent_workers=True), [1, 2])
    b = _echo_task(mock_config(SCRIPT, concurrent_workers=False), [1, 2])
    assert a.to_dict() == b.to_dict()


def test_run_many_keeps_order():
    assert run_many(lambda x: x * x, range(20), 4) == [x * x for x in range(20)]
    assert run_many(lambda x: x, [], 4) == []


def test_workers_must_differ():
    script = MockScript([])
    with pytest.raises(ValueError):
        EnsembleConfig(MockBackend("m", script), MockBackend("m", script), MockBackend("i", script))


def test_repair_loop_reasks_then_succeeds():
    script = [
        {"role": "worker_a", "attempt": 0, "response": "sorry, no json here"},
        {"role": "worker_a", "attempt": 1, "response": '```json\n{"wrong": 1}\n```'},
        {"role": "worker_a", "attempt": 2, "response": {"answer": "left"}},
        *SCRIPT[1:],
    ]
    cfg = mock_config(script)

    def strict(o):
        if not isinstance(o, dict) or "answer" not in o:
            raise PayloadError("missing 'answer'")
        return o["answer"]

    def worker(c):
        return c.json("main", "sys", "go", strict, schema_hint='{"answer": str}')

    rec = run_ensemble_task("disagree", 1, cfg, worker=worker, integrator=lambda c, a, b: a)
    assert rec.worker_a_out == "left"
    assert [c.attempt for c in cfg.worker_a.calls] == [0, 1, 2]


def test_repair_budget_exhausted_leaves_slot_empty():
    script = [{"role": "worker_a", "response": "not json"}, *SCRIPT[1:]]
    cfg = mock_config(script)
    rec = _echo_task(cfg, 1)
    assert rec.worker_a_out is None
    assert len(cfg.worker_a.calls) == 1 + cfg.json_repair_limit
    assert "worker_a" in rec.notes["worker_failures"]
    assert rec.agreement is A.R1  # integrator answered "left", worker_b said "right"


def test_structural_budget_is_separate():
    cfg = mock_config([{"response": {"answer": "x"}}])
    calls = []

    def parse(o):
        calls.append(1)
        raise PayloadError("dangling P99", structural=True)

    with pytest.raises(MalformedOutput, match="dangling P99"):
        run_single_task("segment", 1, cfg, call=lambda c: c.json("s", "sys", "p", parse))
    assert len(calls) == 1 + cfg.structure_reask_limit


def test_both_workers_failing_raises():
    cfg = mock_config([{"role": "integrator", "response": {"answer": "x"}}, {"response": "nope"}])
    with pytest.raises(MalformedOutput, match="both workers"):
        _echo_task(cfg, 1)


def test_extract_json_variants():
    assert extract_json('{"a": 1}') == {"a": 1}
    assert extract_json('Here:\n```json\n[1, 2]\n```') == [1, 2]
    assert extract_json('prefix {"a": [1]} suffix') == {"a": [1]}
    with pytest.raises(PayloadError):
        extract_json("   ")
    with pytest.raises(PayloadError):
        extract_json("{broken")


def test_prompt_edit_changes_only_that_kind(tmp_path):
    src = Path(str(resources.files("peel.llm") / "prompts"))
    dst = tmp_path / "prompts"
    shutil.copytree(src, dst)
    before = PromptSet(dst).versions()
    (dst / "disagree.user.txt").write_text((dst / "disagree.user.txt").read_text() + "\nBe brief.\n")
    after = PromptSet(dst).versions()
    changed = {k for k in before if before[k] != after[k]}
    assert changed == {"disagree"}


def test_prompt_edit_invalidates_cache(tmp_path):
    src = Path(str(resources.files("peel.llm") / "prompts"))
    dst = tmp_path / "prompts"
    shutil.copytree(src, dst)
    cache = tmp_path / "cache"
    first = _echo_task(mock_config(SCRIPT, cache_dir=cache, prompts=PromptSet(dst)), 1)
    (dst / "disagree.system.txt").write_text("changed\n")
    cfg = mock_config(SCRIPT, cache_dir=cache, prompts=PromptSet(dst))
    second = _echo_task(cfg, 1)
    assert not second.cached
    assert second.input_hash != first.input_hash
    assert len(cfg.integrator.calls) == 1


def test_truth_table_is_exhaustive():
    combos = {(r, ab, p) for r, ab, p, *_ in TRUTH}
    assert combos == set(itertools.product(("a=b", "a!=b"), (None, "a", "b", "both"), ("a", "b", "neither", "none")))


def test_agreement_summary_counts_and_composite():
    outcomes = [A.R3, A.R3, A.R2_MATCHES_A, A.R2_MATCHES_B, A.R1, None, "R3"]
    got = agreement_summary(outcomes)
    assert got["n"] == 6
    assert got["counts"] == {"R1": 1, "R2": 2, "R3": 3}
    # 3 * 1 + 2 * 1/2 + 1 * 0 over 6
    assert got["composite"] == pytest.approx(float(Fraction(4, 6)), abs=1e-15)
    custom = agreement_summary(outcomes, {"R2": 0.0, "R1": -1.0})
    assert custom["composite"] == pytest.approx(float(Fraction(3 - 1, 6)), abs=1e-15)


def test_agreement_summary_empty_and_bad_weights():
    assert agreement_summary([None])["composite"] == 0.0
    with pytest.raises(ValueError, match="R1, R2 and R3"):
        agreement_summary([], {"R4": 1.0})


@given(st.lists(st.sampled_from(list(A) + [None]), max_size=60))
def test_agreement_summary_shares_are_a_distribution(outcomes):
    got = agreement_summary(outcomes)
    assert got["n"] == sum(o is not None for o in outcomes)
    if got["n"]:
        assert sum(got["shares"].values()) == pytest.approx(1.0, abs=1e-12)
        assert 0.0 <= got["composite"] <= 1.0
