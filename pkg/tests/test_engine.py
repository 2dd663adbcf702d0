from __future__ import annotations

import pytest

from cdfs.disjunct import ControlLink
from cdfs.engine import (ACTIVE, FAILED, INACTIVE, Contrapositive, PropagationFailure,
                         fire_covariance, fire_selection, fixpoint, init, narrow, realize)
from cdfs.fscore import ANON, FS, Atom, Disj, Path, get_path
from cdfs.oracle import expand_dnf, project
from cdfs.textio import parse_entry
from cdfs.unifier import Constraint, constrain


def doms(s):
    return {n: set(d.possible) for n, d in s.domains.items() if d.status == ACTIVE}


def c(text):
    return Constraint.parse(text)


# -- init -------------------------------------------------------------------------

def test_init_mobile(mobile):
    s = init(mobile)
    assert doms(s) == {"d1": {1, 2}, "d2": {1, 2}}
    assert len(s.trace) == 0 and not s.agenda


def test_init_den(den):
    assert doms(init(den)) == {"d1": {1, 2}}


def test_init_suffix_rank_spaces(suffix):
    # independent check: every rank of every name occurs in some reading
    assert project(expand_dnf(suffix)) == {"d1": {1, 2, 3, 4}, "d2": {1, 2}, "d3": {1, 2}}
    assert doms(init(suffix)) == {"d1": {1, 2, 3, 4}, "d2": {1, 2}, "d3": {1, 2}}


# -- narrow / selection -----------------------------------------------------------

def test_narrow_fem_selects_adjective(mobile):
    s = fixpoint(narrow(init(mobile), "d2", {2}))
    assert doms(s) == {"d1": {2}, "d2": {2}}
    assert not s.agenda


def test_narrow_masc_deduces_nothing(mobile):
    s = fixpoint(narrow(init(mobile), "d2", {1}))
    assert doms(s) == {"d1": {1, 2}, "d2": {1}}


def test_narrow_to_empty_fails(den):
    with pytest.raises(PropagationFailure) as info:
        narrow(init(den), "d1", set())
    assert info.value.reason == "empty-domain"
    assert info.value.name == "d1"
    failed = info.value.state
    assert failed.status == FAILED
    assert failed.domains["d1"].status == FAILED
    assert failed.trace.events[-1].after == frozenset()


def test_narrow_does_not_mutate_input(mobile):
    s = init(mobile)
    narrow(s, "d2", {2})
    assert doms(s) == {"d1": {1, 2}, "d2": {1, 2}}


def test_fire_selection_examples(mobile):
    noun = ControlLink("d1", 1, "d2", 1)
    fem = ControlLink("d2", 2, "d1", 2)
    s = narrow(init(mobile), "d1", {1})
    assert doms(fire_selection(s, noun))["d2"] == {1}
    s = narrow(init(mobile), "d2", {2})
    assert doms(fire_selection(s, fem))["d1"] == {2}
    # unresolved source: suspended
    assert doms(fire_selection(init(mobile), fem)) == {"d1": {1, 2}, "d2": {1, 2}}
    # source resolved to another rank: no-op
    s = narrow(init(mobile), "d2", {1})
    assert doms(fire_selection(s, fem))["d1"] == {1, 2}


def test_fire_selection_conflict_fails(mobile):
    s = narrow(init(mobile), "d2", {2})
    s = narrow(s, "d1", {1})
    with pytest.raises(PropagationFailure) as info:
        fire_selection(s, ControlLink("d1", 1, "d2", 1))
    assert info.value.reason == "empty-domain"


def test_selection_is_forward_only():
    e = parse_entry("(entry t (fs (a (disj s (ctrl x (-> t 1)) y)) (b (disj t u v))))")
    s = fixpoint(narrow(init(e), "t", {2}))
    assert doms(s) == {"s": {1, 2}, "t": {2}}


def test_logical_closure_adds_contrapositive():
    e = parse_entry("(entry t (fs (a (disj s (ctrl x (-> t 1)) y)) (b (disj t u v))))")
    s = init(e, logical_closure=True)
    assert any(isinstance(p, Contrapositive) for p in s.propagators)
    s = fixpoint(narrow(s, "t", {2}))
    assert doms(s) == {"s": {2}, "t": {2}}
    assert s.trace.events[-1].cause == "closure[s=1->t=1]"


# -- covariance ---------------------------------------------------------------------

def test_covariance_den_sing(den):
    s = constrain(init(den), c("spec.index.num=sing"))
    assert doms(s) == {"d1": {1}}
    out = realize(s)
    assert get_path(out, Path.parse("spec.case")) == Atom("acc")
    assert get_path(out, Path.parse("spec.index.gen")) == Atom("masc")


def test_covariance_den_dat(den):
    s = constrain(init(den), c("spec.case=dat"))
    out = realize(s)
    assert get_path(out, Path.parse("spec.index.num")) == Atom("plu")
    assert get_path(out, Path.parse("spec.index.gen")) == ANON


def test_fire_covariance_without_constraints_is_vacuous(den, mobile):
    for e, name in ((den, "d1"), (mobile, "d1")):
        s = init(e)
        t = fire_covariance(s, name)
        assert doms(t) == doms(s) and len(t.trace) == 0


def test_fire_covariance_rechecks_recorded_watches(den):
    s = constrain(init(den), c("spec.index.num=sing"))
    t = fire_covariance(s, "d1")
    assert doms(t) == {"d1": {1}} and len(t.trace) == len(s.trace)


def test_covariant_formulae_share_one_domain(mobile):
    # an empty specifier unifies with anything, so only a clash tells ranks apart
    assert doms(constrain(init(mobile), c("cat.valence.spr.det=plus")))["d1"] == {1, 2}
    s = constrain(init(mobile), c("cat.valence.spr.det=minus"))
    assert doms(s) == {"d1": {2}, "d2": {1, 2}}
    assert get_path(realize(s), Path.parse("cat.head")) == Atom("adj")


# -- fixpoint ---------------------------------------------------------------------

def test_fixpoint_idempotent_on_empty_agenda(mobile):
    s = init(mobile)
    t = fixpoint(s)
    assert doms(t) == doms(s) and len(t.trace) == 0


def test_fixpoint_suffix_ending_t(suffix):
    s = constrain(init(suffix), c("morph.ending=t"))
    assert doms(s) == {"d1": {3}, "d2": {1, 2}}
    assert s.domains["d3"].status == INACTIVE
    out = realize(s)
    # frozen from an enumeration of the suffix readings with ending t
    assert get_path(out, Path.parse("synsem.index.per")) == \
        Disj("d2", ((1, Atom("third")), (2, Atom("second"))))
    assert get_path(out, Path.parse("synsem.index.num")) == \
        Disj("d2", ((1, Atom("sing")), (2, Atom("plu"))))


def test_inactive_name_never_fails(suffix):
    s = constrain(init(suffix), c("morph.ending=t"))
    # d3 is orphaned; narrowing it further is a no-op
    t = fixpoint(narrow(s, "d3", set()))
    assert t.domains["d3"].status == INACTIVE
    assert t.status != FAILED


def test_nested_name_exhausted_rules_out_its_branch(suffix):
    s = constrain(init(suffix), c("synsem.index.per=second"))
    # rank 3 needs d2=2, rank 4 has no 'second' at all
    assert doms(s) == {"d1": {2, 3}, "d2": {2}}
    assert s.domains["d3"].status == INACTIVE


def test_trace_events_strictly_shrink(suffix_ctrl):
    s = init(suffix_ctrl)
    for text in ("morph.ending=t", "synsem.index.per=second"):
        s = constrain(s, c(text))
    assert [ev.step for ev in s.trace] == list(range(1, len(s.trace) + 1))
    assert all(ev.after < ev.before for ev in s.trace)
    assert len(s.trace.narrowings()) <= sum(d.arity - 1 for d in s.domains.values())


def test_embedded_control_fixture(suffix_ctrl):
    s = constrain(init(suffix_ctrl), c("morph.ending=t"))
    assert doms(s) == {"n1": {3}, "n2": {4}, "n3": {1, 2}, "n5": {3}}
    s = constrain(s, c("synsem.index.per=second"))
    assert doms(s) == {"n1": {3}, "n2": {4}, "n3": {2}, "n5": {3}}
    assert get_path(realize(s), Path.parse("synsem.index.num")) == Atom("plu")


# -- realize ------------------------------------------------------------------------

def test_realize_untouched_den_round_trips(den):
    assert realize(init(den)) == den.inline()


def test_realize_fem_mobile(mobile):
    s = constrain(init(mobile), c("index.gen=fem"))
    assert realize(s) == FS.of(
        cat=FS.of(head=Atom("adj"), valence=FS.of(spr=FS(()))),
        index=FS.of(gen=Atom("fem")))


def test_realize_keeps_residual(mobile):
    s = fixpoint(narrow(init(mobile), "d2", {1}))
    head = get_path(realize(s), Path.parse("cat.head"))
    assert head == Disj("d1", ((1, Atom("noun")), (2, Atom("adj"))))


def test_realize_omits_inactive(suffix):
    e = parse_entry("(entry t (fs (a (disj p x (fs (g (disj q u v)))))))")
    s = fixpoint(narrow(init(e), "p", {1}))
    assert s.domains["q"].status == INACTIVE
    assert realize(s) == FS.of(a=Atom("x"))


def test_state_status(mobile):
    assert init(mobile).status == "partial"
    assert constrain(init(mobile), c("index.gen=fem")).status == "resolved"
