"""Unification that narrows rank domains instead of expanding disjunctions.

A constraint meeting a disjunctive position is unified with a copy of every
live disjunct under an undo checkpoint.  Ranks that fail are dropped; the
merges of ranks that succeed stay in the graph, so later reads show the
enriched disjuncts.  Disjunctions met by further disjunctions (entry-entry
unification) get a compatibility table over the ranks of both sides.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional

from .engine import (ACTIVE, Compat, CompatTable, Contrapositive, Covariance,
                     EngineState, Nogood, Propagator, PropagationTrace, RankDomain,
                     Selection, TraceEvent, ValueWatch, _Fail, _guard, _run, install)
from .disjunct import ControlLink, NameIndex
from .fscore import (ANON, DISJ, FEAT, JOIN, Atom, DisjRef, Path, PathError, Value,
                     contains, is_identifier)

SPECIAL = (DISJ, JOIN)


@dataclass(frozen=True)
class Constraint:
    path: Path
    value: Value

    def __post_init__(self) -> None:
        if contains(self.value, (DisjRef,)):
            raise ValueError("constraint values may not contain disjunctions")

    @classmethod
    def parse(cls, text: str) -> "Constraint":
        """``PATH=ATOM`` with ``_`` for the wildcard."""
        path, sep, atom = text.partition("=")
        atom = atom.strip()
        if not sep or not atom:
            raise ValueError(f"constraint {text!r} is not of the form PATH=ATOM")
        if atom == "_":
            value: Value = ANON
        elif is_identifier(atom):
            value = Atom(atom)
        else:
            raise ValueError(f"constraint value {atom!r} is not an atom")
        return cls(Path.parse(path.strip()), value)

    def __str__(self) -> str:
        from .textio import format_value
        return f"{self.path}={format_value(self.value, pretty=False)}"


class _Meet:
    """Special-node handler passed to :meth:`FSGraph.unify`."""

    def __init__(self, s: EngineState, label: str):
        self.s = s
        self.g = s.graph
        self.label = label
        self.frames: list[list[Propagator]] = [[]]

    @property
    def effects(self) -> list[Propagator]:
        return self.frames[0]

    def __call__(self, a: int, b: int) -> bool:
        g = self.g
        d, o = (a, b) if g.nodes[a].kind in SPECIAL else (b, a)
        if g.nodes[d].kind == JOIN:
            for part in list(g.nodes[d].parts):
                if not g.unify(part, g.copy_subgraph(o), self):
                    return False
            g.forward(o, d)
            return True
        if g.nodes[o].kind in SPECIAL or g.contains_special(o):
            return self.compat(d, o)
        return self.select(d, o)

    def _vacuous(self, node) -> bool:
        return self.s.domains[node.name].status != ACTIVE or self.s.dead(node.fid)

    def select(self, d: int, o: int) -> bool:
        g, node = self.g, self.g.nodes[d]
        if self._vacuous(node):
            g.forward(o, d)
            return True
        keep: list[int] = []
        nested: list[Propagator] = []
        for rank in sorted(self.s.domains[node.name].possible):
            cp = g.checkpoint()
            self.frames.append([])
            ok = g.unify(node.children[rank], g.copy_subgraph(o), self)
            effects = self.frames.pop()
            if ok:
                keep.append(rank)
                nested.extend(effects)
            else:
                g.rollback(cp)
        if not keep and len(self.frames) > 1:
            return False
        self.frames[-1].append(ValueWatch(node.name, frozenset(keep), node.fid, self.label))
        self.frames[-1].extend(nested)
        g.forward(o, d)
        return True

    def compat(self, d: int, o: int) -> bool:
        g, s = self.g, self.s
        node = g.nodes[d]
        if g.nodes[o].kind in SPECIAL:
            frontier = [o]
        else:
            frontier = [n for n in g.reachable(o) if g.nodes[n].kind == DISJ]
        positions = [d] + [n for n in frontier if n != d]
        nodes = [g.nodes[n] for n in positions]
        if any(self._vacuous(n) for n in nodes):
            g.forward(o, d)
            return True
        names = tuple(n.name for n in nodes)
        ranges = [sorted(s.domains[n.name].possible) for n in nodes]
        rows = set()
        for row in itertools.product(*ranges):
            chosen: dict[str, int] = {}
            if any(chosen.setdefault(name, r) != r for name, r in zip(names, row)):
                continue
            cp = g.checkpoint()
            subst = {p: n.children[r] for p, n, r in zip(positions[1:], nodes[1:], row[1:])}
            other = g.copy_subgraph(o, subst)
            if g.unify(node.children[row[0]], other, _optimistic):
                rows.add(row)
            g.rollback(cp)
        if not rows and len(self.frames) > 1:
            return False
        table = CompatTable(names, tuple(n.fid for n in nodes), frozenset(rows))
        self.frames[-1].append(Compat(table))
        self._join(d, o)
        return True

    def _join(self, d: int, o: int) -> None:
        g, s = self.g, self.s
        parts = []
        for n in (d, o):
            clone = g.nodes[n].clone()
            clone.fwd = None
            clone.label = None
            nid = g.add(clone)
            if clone.kind == DISJ:
                s.disj_nodes[clone.fid] = nid
            parts.append(nid)
        g.become_join(d, parts)
        g.forward(o, d)


def _optimistic(a: int, b: int) -> bool:
    return True


def path_exists(s: EngineState, path: Path) -> Optional[int]:
    """None when some reading has ``path``; otherwise the failing segment index."""
    g = s.graph
    frontier = {g.find(s.root)}
    for i, seg in enumerate(path.segments):
        nxt = set()
        stack, seen = list(frontier), set()
        while stack:
            n = g.find(stack.pop())
            if n in seen:
                continue
            seen.add(n)
            node = g.nodes[n]
            if node.kind == DISJ:
                stack.extend(node.children.values())
            elif node.kind == JOIN:
                stack.extend(node.parts)
            elif node.kind == FEAT and seg in node.feats:
                nxt.add(g.find(node.feats[seg]))
        if not nxt:
            return i
        frontier = nxt
    return None


def constrain(s: EngineState, c: Constraint) -> EngineState:
    """Unify ``c.value`` at ``c.path`` and propagate to a fixpoint."""
    missing = path_exists(s, c.path)
    if missing is not None:
        raise PathError("no-such-path", c.path, missing)
    t = s.copy()
    label = str(c)

    def act():
        meet = _Meet(t, label)
        cnode = t.graph.build(c.path.wrap(c.value), native=False)
        ok = t.graph.unify(t.root, cnode, meet)
        t.graph.forget()
        if not ok:
            raise _Fail("clash", None, f"{label} clashes with the entry")
        t.constraints.append(label)
        for p in meet.effects:
            install(t, p)
        _run(t)

    return _guard(t, act)


def constrain_all(s: EngineState, cs) -> EngineState:
    for c in cs:
        s = constrain(s, c)
    return s


# -- entry-entry unification -------------------------------------------------------


def _rename_map(taken: set[str], names, prefix: str) -> dict[str, str]:
    mapping: dict[str, str] = {}
    used = set(taken) | set(names)
    for name in names:
        if name not in taken:
            continue
        new, k = f"{prefix}-{name}", 1
        while new in used:
            k += 1
            new = f"{prefix}-{name}{k}"
        used.add(new)
        mapping[name] = new
    return mapping


def _rename_link(link: ControlLink, m: dict[str, str]) -> ControlLink:
    return ControlLink(m.get(link.source_name, link.source_name), link.source_rank,
                       m.get(link.target_name, link.target_name), link.target_rank)


def _rename_prop(p: Propagator, m: dict[str, str], f: dict[str, str]) -> Propagator:
    if isinstance(p, Covariance):
        return Covariance(m.get(p.name, p.name))
    if isinstance(p, (Selection, Contrapositive)):
        return type(p)(_rename_link(p.link, m))
    if isinstance(p, ValueWatch):
        return ValueWatch(m.get(p.name, p.name), p.keep, f.get(p.formula_id, p.formula_id), p.label)
    if isinstance(p, Nogood):
        return Nogood(tuple((m.get(n, n), r) for n, r in p.conditions), p.label)
    if isinstance(p, Compat):
        t = p.table
        return Compat(CompatTable(tuple(m.get(n, n) for n in t.names),
                                  tuple(f.get(x, x) for x in t.formula_ids), t.rows))
    raise TypeError(p)


def unify_entries(a: EngineState, b: EngineState) -> EngineState:
    """Merge ``b`` into ``a``; clashing disjunction names of ``b`` are renamed.

    Control links stay attached to the entry that declared them.
    """
    for x in (a, b):
        if x.failure is not None:
            raise ValueError("cannot unify a failed state")
    prefix = b.entry.entry_name
    mapping = _rename_map(set(a.domains), list(b.domains), prefix)
    renamed, fid_map = [], {}
    for e in b.entries:
        r, fm = e.renamed(mapping)
        renamed.append(r)
        fid_map.update(fm)

    t = a.copy()
    t.entries = a.entries + tuple(renamed)
    t.index = NameIndex(t.entries)
    t.logical_closure = a.logical_closure or b.logical_closure

    offset = len(t.graph.nodes)
    for node in b.graph.nodes:
        c = node.clone()
        if c.fwd is not None:
            c.fwd += offset
        c.feats = {k: v + offset for k, v in c.feats.items()}
        c.children = {k: v + offset for k, v in c.children.items()}
        c.parts = [p + offset for p in c.parts]
        if c.name is not None:
            c.name = mapping.get(c.name, c.name)
            c.fid = fid_map.get(c.fid, c.fid)
        t.graph.add(c)
    for fid, nid in b.disj_nodes.items():
        t.disj_nodes[fid_map.get(fid, fid)] = nid + offset
    for name, d in b.domains.items():
        new = mapping.get(name, name)
        t.domains[new] = RankDomain(new, d.arity, d.possible, d.status)
    for p in b.propagators:
        install(t, _rename_prop(p, mapping, fid_map), wake=False)
    if t.logical_closure and not b.logical_closure:
        for link in b.index.links:
            install(t, Contrapositive(_rename_link(link, mapping)), wake=False)
    for ev in b.trace.events:
        t.trace.events.append(TraceEvent(len(t.trace.events) + 1, ev.cause,
                                         mapping.get(ev.name, ev.name),
                                         ev.before, ev.after, ev.kind))
    t.constraints.extend(f"{prefix}:{c}" for c in b.constraints)
    label = f"unify {prefix}"

    def act():
        meet = _Meet(t, label)
        ok = t.graph.unify(t.root, b.root + offset, meet)
        t.graph.forget()
        if not ok:
            raise _Fail("clash", None, f"{label}: structural clash outside disjunctions")
        t.constraints.append(label)
        for p in meet.effects:
            install(t, p)
        _run(t)

    return _guard(t, act)
