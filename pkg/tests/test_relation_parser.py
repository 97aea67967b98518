from __future__ import annotations

import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from peel.refs import RefKind, RefLabel
from peel.relation_parser import (
    MixedOperators,
    ParseError,
    RelationKind,
    Relationship,
    parse_relation,
    serialize_relation,
)


def L(s):
    return RefLabel.parse(s)


def table2_lines(table2_dir):
    text = (table2_dir / "relationships.txt").read_text(encoding="utf-8")
    return [x for x in text.splitlines() if x.strip() and not x.startswith("#")]


def test_combine_with_target_and_gloss():
    r = parse_relation("R1: P1 + P2 => P32 → The existence of X-risk and its definition implies extinction.")
    assert r.kind is RelationKind.COMBINE
    assert r.operands == (L("P1"), L("P2"))
    assert r.target == L("P32")
    assert r.gloss.startswith("The existence of X-risk")


def test_evaluate():
    r = parse_relation("R4: P32 ∧ P27 → The potential for human extinction is evaluated as bad.")
    assert r.kind is RelationKind.EVALUATE
    assert r.operands == (L("P32"), L("P27"))
    assert r.target is None


def test_imply_to_conclusion():
    r = parse_relation("R20: R19 ⇒ C1 → The moral evaluation supports the conclusion.")
    assert r.kind is RelationKind.IMPLY
    assert r.operands == (L("R19"),)
    assert r.target == L("C1")


def test_four_operand_combine_without_target():
    r = parse_relation("R9: P6 + P7 + P8 + P9")
    assert r.kind is RelationKind.COMBINE
    assert [str(o) for o in r.operands] == ["P6", "P7", "P8", "P9"]
    assert r.target is None and r.gloss is None


def test_mixed_operators_rejected():
    with pytest.raises(MixedOperators):
        parse_relation("R5: P1 ∧ P2 + P3")
    with pytest.raises(MixedOperators):
        parse_relation("R5: P1 + P2 ^ P3")


def test_comma_gloss_separator():
    r = parse_relation("R24: R23 => C3, Since the scenarios rely on false assumptions, they are implausible.")
    assert r.target == L("C3")
    assert r.gloss.startswith("Since")


def test_arrow_is_not_implication():
    r = parse_relation("R15: P15 + P16 → AGI development will be gradual.")
    assert r.target is None
    assert r.kind is RelationKind.COMBINE


@pytest.mark.parametrize(
    "line",
    ["", "R1", "R1 P1 + P2", "P1: P2 + P3", "R1: + P2", "R1: P1 +", "R1: P1 => ", "R1: P1 ^ P2 ^ P3", "R1: P1 + C2", "R0: P1 + P2"],
)
def test_parse_errors_have_offsets_inside_input(line):
    with pytest.raises(ParseError) as info:
        parse_relation(line)
    err = info.value
    assert 0 <= err.offset < max(1, len(line.encode("utf-8")))
    assert err.expected


def test_offset_counts_utf8_bytes():
    with pytest.raises(ParseError) as info:
        parse_relation("R1: P1 ∧ X2")
    assert info.value.offset == len("R1: P1 ∧ ".encode("utf-8"))


def test_parse_error_offset_points_at_problem():
    with pytest.raises(ParseError) as info:
        parse_relation("R1: P1 + X2")
    assert info.value.offset == 9
    assert "P-label" in info.value.expected


def test_serialize_canonical_forms():
    assert serialize_relation(parse_relation("R4: P32 ∧ P27")) == "R4: P32 ^ P27"
    assert serialize_relation(parse_relation("R1: P1 + P2 ⇒ P32")) == "R1: P1 + P2 => P32"
    assert serialize_relation(parse_relation("R1:P1+P2=>P32->  gloss  ")) == "R1: P1 + P2 => P32 -> gloss"


def test_unicode_and_ascii_aliases_agree():
    assert parse_relation("R4: P32 ∧ P27") == parse_relation("R4: P32 ^ P27")
    assert parse_relation("R16: R15 ⇒ P23") == parse_relation("R16: R15 => P23")
    assert parse_relation("R1: P1 -> x") == parse_relation("R1: P1 → x")


def test_every_table2_line_parses_and_round_trips(table2_dir):
    lines = table2_lines(table2_dir)
    assert len(lines) == 30
    start = time.perf_counter()
    for line in lines:
        rel = parse_relation(line)
        text = serialize_relation(rel)
        assert text.isascii() or rel.gloss and not rel.gloss.isascii()
        again = parse_relation(text)
        assert again == rel
        assert serialize_relation(again) == text
    assert time.perf_counter() - start < 1.0


def test_canonical_form_is_ascii_apart_from_gloss():
    rel = parse_relation("R4: P32 ∧ P27 → évalué")
    head = serialize_relation(rel).split(" -> ")[0]
    assert head.isascii()


labels_pr = st.builds(
    lambda k, i: RefLabel(RefKind(k), i), st.sampled_from(["P", "R"]), st.integers(1, 500)
)
targets = st.builds(lambda k, i: RefLabel(RefKind(k), i), st.sampled_from(["P", "R", "C"]), st.integers(1, 500))
glosses = st.one_of(
    st.none(),
    st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc", "Zl", "Zp")), min_size=1, max_size=40).map(str.strip).filter(bool),
)


@st.composite
def relationships(draw):
    rid = RefLabel(RefKind.RELATIONSHIP, draw(st.integers(1, 500)))
    kind = draw(st.sampled_from(list(RelationKind)))
    if kind is RelationKind.COMBINE:
        ops = draw(st.lists(labels_pr, min_size=2, max_size=6))
        target = draw(st.one_of(st.none(), st.builds(lambda i: RefLabel(RefKind.PREMISE, i), st.integers(1, 500))))
    elif kind is RelationKind.IMPLY:
        ops = [draw(labels_pr)]
        target = draw(targets)
    else:
        ops = draw(st.lists(labels_pr, min_size=2, max_size=2))
        target = None
    return Relationship(rid, kind, tuple(ops), target, draw(glosses))


@given(relationships())
def test_round_trip_property(rel):
    again = parse_relation(serialize_relation(rel))
    assert again == rel
    assert again.structure() == rel.structure()


@given(st.text(max_size=30))
def test_parser_only_raises_parse_errors(line):
    try:
        parse_relation(line)
    except ParseError as exc:
        assert 0 <= exc.offset < max(1, len(line.encode("utf-8")))
