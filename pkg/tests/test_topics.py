from __future__ import annotations

import pytest

from conftest import mock_config
from peel.chain_model import Attitude
from peel.llm.ensemble import AgreementOutcome, PayloadError
from peel.refs import RefLabel
from peel.topics import (
    NON_AI_LABEL,
    TopicList,
    agreement_table,
    assign_topic_attitude,
    attitude_by_topic,
    normalize_label,
    parse_vote,
)

O = AgreementOutcome
XRISK = "AI as Existential/Extinction Risk"


def test_seed_list():
    topics = TopicList.seed()
    assert len(topics) == 29
    assert topics.revision == 0
    assert topics.non_ai.label == NON_AI_LABEL
    assert topics.find("  ai as existential/EXTINCTION risk ").label == XRISK
    assert len({e.topic_id for e in topics}) == 29


def test_add_is_idempotent_and_bumps_revision():
    topics = TopicList.seed()
    e = topics.add("Quantum  Sabotage", "Security and Geopolitics", source="x")
    assert (e.topic_id, e.revision, topics.revision) == ("T030", 1, 1)
    assert topics.add("quantum sabotage") is e
    assert topics.revision == 1
    again = TopicList.from_dict(topics.to_dict())
    assert again.to_dict() == topics.to_dict()
    with pytest.raises(ValueError):
        TopicList(list(topics) + [e])


def test_normalize_label():
    assert normalize_label("  A\tB  c ") == "a b c"


def test_parse_vote_maps_existing_and_flags_new():
    topics = TopicList.seed()
    v = parse_vote({"topic": XRISK.upper(), "attitude": "Pessimistic"}, topics)
    assert v.topic == XRISK and not v.new_topic and v.attitude is Attitude.PESSIMISTIC
    w = parse_vote({"topic": "Robot chefs", "attitude": "neutral", "new_topic": True, "theme": "Other topics"}, topics)
    assert w.new_topic and w.theme == "Other topics"
    for bad in ({"attitude": "neutral"}, {"topic": "x", "attitude": "angry"}, ["x"]):
        with pytest.raises(PayloadError):
            parse_vote(bad, topics)


def _votes(a, b, final):
    out = []
    for role, v in (("worker_a", a), ("worker_b", b), ("integrator", final)):
        if v is not None:
            out.append({"task_kind": "classify_topic_attitude", "role": role, "response": v})
    return out


def _vote(topic, attitude="pessimistic", **kw):
    return {"topic": topic, "attitude": attitude, **kw}


def test_assign_all_agree(doomer):
    topics = TopicList.seed()
    v = _vote(XRISK)
    cc = assign_topic_attitude(doomer, RefLabel.parse("C1"), topics, mock_config(_votes(v, v, v)))
    assert cc.topic_label == XRISK and cc.is_ai_risk
    assert (cc.topic_agreement, cc.attitude_agreement, cc.ai_agreement) == (O.R3, O.R3, O.R3)
    assert cc.list_revision == 0


def test_assign_new_topic_extends_list(boomer):
    topics = TopicList.seed()
    cfg = mock_config(
        _votes(_vote(XRISK, "optimistic"), _vote("AI Safety Engineering Maturity", "optimistic"),
               _vote("Incremental safety engineering", "optimistic", new_topic=True, theme="AI Safety, Alignment, and Technical Control"))
    )
    cc = assign_topic_attitude(boomer, RefLabel.parse("C3"), topics, cfg)
    assert cc.topic_id == "T030"
    assert topics.revision == 1
    assert topics.history[0]["source"] == f"{boomer.key}/C3"
    assert cc.topic_agreement is O.R1
    assert cc.attitude_agreement is O.R3


def test_assign_non_ai(boomer):
    topics = TopicList.seed()
    cfg = mock_config(_votes(_vote(NON_AI_LABEL, "neutral"), _vote(XRISK, "neutral"), _vote(NON_AI_LABEL, "neutral")))
    cc = assign_topic_attitude(boomer, RefLabel.parse("C3"), topics, cfg)
    assert not cc.is_ai_risk
    assert cc.ai_agreement is O.R2_MATCHES_A


def test_assign_unknown_conclusion(boomer):
    with pytest.raises(KeyError):
        assign_topic_attitude(boomer, RefLabel.parse("C9"), TopicList.seed(), mock_config([]))


def test_agreement_table_and_attitudes(boomer, doomer):
    topics = TopicList.seed()
    runaway = "AI Capability Runaway & Deployment Pace"
    cases = [
        (doomer, "C1", _vote(XRISK), _vote(XRISK), _vote(XRISK)),
        (doomer, "C1", _vote(XRISK), _vote(runaway), _vote(XRISK, equivalent_votes=True)),
        (doomer, "C1", _vote(XRISK), _vote(runaway, "neutral"), _vote(runaway)),
        (boomer, "C3", _vote(NON_AI_LABEL, "neutral"), _vote(NON_AI_LABEL, "neutral"), _vote(NON_AI_LABEL, "neutral")),
    ]
    items = []
    for i, (chain, cid, a, b, f) in enumerate(cases):
        # distinct conclusion text per case so each is its own task
        cfg = mock_config(_votes(a, b, f))
        c = chain.with_conclusion(chain.conclusion(RefLabel.parse(cid)).__class__(RefLabel.parse(cid), f"claim {i}", None, None))
        items.append(assign_topic_attitude(c, RefLabel.parse(cid), topics, cfg))
    table = agreement_table(items)
    assert (table["n_conclusions"], table["n_ai_conclusions"]) == (4, 3)
    rows = {r["label"]: r["count"] for r in table["blocks"]["topic"]}
    assert rows["- Same topic as both workers"] == 1
    assert rows["- Selects topic from one worker"] == 1
    assert rows["Integrator agrees with worker B only"] == 1
    assert rows["Integrator agrees with both workers"] == 2
    att = {r["label"]: r["count"] for r in table["blocks"]["attitude"]}
    assert att == {"All 3 models agree": 2, "Integrator agrees with one worker": 1, "Integrator disagrees with both workers": 0}
    ai = {r["label"]: r["count"] for r in table["blocks"]["ai_vs_non_ai"]}
    assert ai == {"All 3 models agree": 4, "2 models agree": 0}
    by_topic = attitude_by_topic(items)
    assert [r["topic"] for r in by_topic] == [XRISK, runaway]
    assert by_topic[0]["pessimistic"] == 2
