from __future__ import annotations

import json
import random

import pytest

from cdfs.disjunct import ControlLink
from cdfs.engine import PropagationFailure, init
from cdfs.fscore import ANON, FS, Atom, DisjRef, TagDef, TagUse
from cdfs.textio import (ParseError, fixture_path, load, parse, parse_entry, serialize,
                         serialize_file, state_to_dict, to_json)
from cdfs.unifier import Constraint, constrain
from randgen import random_entry

FIXTURES = ("mobile.cdl", "den.cdl", "suffix.cdl", "suffix_ctrl.cdl", "taxonomy.cdl")


def diag(text, **kw):
    with pytest.raises(ParseError) as info:
        parse(text, **kw)
    return info.value.diagnostics


def test_parse_mobile_structure(mobile):
    assert mobile.entry_name == "mobile"
    head = mobile.formula("d1.1")
    assert head.disjuncts == (Atom("noun"), Atom("adj"))
    assert head.controls == ((("d2", 1),), ())
    gen = mobile.formula("d2.1")
    assert gen.controls == ((), (("d1", 2),))
    assert mobile.formula("d1.2").disjuncts == (FS.of(det=Atom("plus")), FS(()))
    assert mobile.skeleton.get("index") == FS.of(gen=DisjRef("d2", "d2.1"))
    assert set(mobile.links) == {ControlLink("d1", 1, "d2", 1), ControlLink("d2", 2, "d1", 2)}


def test_parse_anon():
    e = parse_entry("(entry t (fs (a _)))")
    assert e.skeleton == FS.of(a=ANON)


def test_arity_one_diagnostic():
    (d,) = diag("(entry t (fs (a (disj d1 x))))")
    assert "arity < 2" in d.message
    assert (d.line, d.col) == (1, 18)


def test_diagnostics_carry_line_and_column():
    text = "(entry t\n  (fs (a x)\n      (a y)))"
    (d,) = diag(text)
    assert (d.line, d.col) == (3, 8)
    assert "duplicate feature" in d.message
    assert str(ParseError([d])).startswith("<input>:3:8:")


def test_syntax_errors():
    assert "expected" in diag("(entry t (fs (a x))")[0].message
    assert "unknown form" in diag("(entry t (bogus))")[0].message
    assert "ctrl" in diag("(entry t (fs (a (ctrl x (-> d 1)))))")[0].message
    assert diag("(entry t (fs (a $)))")


def test_duplicate_entry_name():
    ds = diag("(entry t (fs)) (entry t (fs))")
    assert "duplicate entry" in ds[0].message


def test_unknown_link_name_and_rank():
    assert "unknown disjunction" in diag("(entry t (fs (a (disj d (ctrl x (-> q 1)) y))))")[0].message
    msg = diag("(entry t (fs (a (disj d (ctrl x (-> d 5)) y))))")[0].message
    assert "out of range" in msg
    # deferred to the checker when not strict
    parse("(entry t (fs (a (disj d (ctrl x (-> q 1)) y))))", strict=False)


def test_tags_inside_disjuncts_rejected():
    assert "not allowed" in diag("(entry t (fs (a (disj d (tag X x) y))))")[0].message
    assert "not allowed" in diag("(entry t (fs (a (tag X x)) (b (disj d #X y))))")[0].message
    assert "undefined tag" in diag("(entry t (fs (a #X)))")[0].message
    assert "defined twice" in diag("(entry t (fs (a (tag X x)) (b (tag X y))))")[0].message


def test_comments_and_whitespace():
    e = parse_entry("; leading\n(entry t ; name\n (fs (a x)))  ; trailing")
    assert e.skeleton == FS.of(a=Atom("x"))


def test_positions_recorded():
    lex = load(fixture_path("mobile.cdl"))
    assert lex.positions[("mobile", "d2.1")] == (6, 24)


@pytest.mark.parametrize("file", FIXTURES)
def test_round_trip_fixtures(file):
    lex = load(fixture_path(file))
    again = parse(serialize_file(lex.entries))
    assert again.entries == lex.entries
    for e in lex.entries:
        assert parse_entry(serialize(e, pretty=False)) == e


def test_round_trip_tags():
    e = parse_entry("(entry t (fs (a (tag X (fs (f x)))) (b #X)))")
    again = parse_entry(serialize(e))
    assert again == e
    assert again.skeleton.get("a") == TagDef("X", FS.of(f=Atom("x")))
    assert again.skeleton.get("b") == TagUse("X")


def test_round_trip_random_entries():
    rng = random.Random(7)
    for _ in range(150):
        e = random_entry(rng)
        assert parse_entry(serialize(e)) == e


def test_serialize_is_deterministic(suffix):
    assert serialize(suffix) == serialize(suffix)
    assert all(len(line) <= 80 for line in serialize(suffix).splitlines())


def test_to_json_schema(mobile):
    s = constrain(init(mobile), Constraint.parse("index.gen=fem"))
    data = json.loads(to_json(s))
    assert data["cdfs_version"] == "1.0"
    assert data["status"] == "resolved"
    assert data["domains"]["d1"] == {"arity": 2, "possible": [2], "status": "active"}
    assert [ev["name"] for ev in data["trace"]] == ["d2", "d1"]
    assert data["realized"].startswith("(fs (cat")
    assert data["constraints"] == ["index.gen=fem"]


def test_to_json_failed_state(mobile):
    with pytest.raises(PropagationFailure) as info:
        constrain(init(mobile), Constraint.parse("index.gen=neut"))
    data = state_to_dict(info.value.state)
    assert data["status"] == "failed"
    assert data["failure"]["reason"] == "empty-domain"
    assert data["trace"]
    assert '"status": "failed"' in to_json(info.value.state)
