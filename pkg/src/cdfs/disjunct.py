"""Static model of named and controlled disjunctions.

An :class:`Entry` is a skeleton value whose disjunctive positions hold
``DisjRef`` placeholders, plus the table of :class:`Formula` objects those
placeholders point to.  Formulae sharing a name are covariant: they have the
same arity and one shared rank.  Control annotations sit on individual
disjuncts and are collected into directed :class:`ControlLink` rules.

A formula may be nested inside a disjunct of another formula.  Its *chain*
is the list of ``(name, rank)`` choices that must all hold for the formula to
be realized; a name is active when at least one of its formulae is.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterator, Optional

from .fscore import FS, DisjRef, Path, TagDef, Value, iter_values

Chain = tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class ControlLink:
    """If ``source_name`` resolves to ``source_rank``, ``target_name`` must take ``target_rank``."""

    source_name: str
    source_rank: int
    target_name: str
    target_rank: int

    def __str__(self) -> str:
        return (f"{self.source_name}={self.source_rank}"
                f"->{self.target_name}={self.target_rank}")


@dataclass(frozen=True)
class Formula:
    id: str
    name: str
    position: Path
    disjuncts: tuple[Value, ...]
    # per disjunct: the (target name, target rank) pairs it controls
    controls: tuple[tuple[tuple[str, int], ...], ...] = ()

    def __post_init__(self) -> None:
        if not self.controls:
            object.__setattr__(self, "controls", tuple(() for _ in self.disjuncts))
        if len(self.controls) != len(self.disjuncts):
            raise ValueError(f"formula {self.id}: one control list per disjunct")

    @property
    def arity(self) -> int:
        return len(self.disjuncts)

    def disjunct(self, rank: int) -> Value:
        return self.disjuncts[rank - 1]

    def links(self) -> Iterator[ControlLink]:
        for rank, ctrl in enumerate(self.controls, 1):
            for target, target_rank in ctrl:
                yield ControlLink(self.name, rank, target, target_rank)


class ArityMismatch(ValueError):
    def __init__(self, name: str, arities: list[int]):
        self.name = name
        self.arities = arities
        super().__init__(f"arity-mismatch({name}): formulae have arities "
                         + ", ".join(map(str, arities)))


def refs_in(value: Value) -> Iterator[DisjRef]:
    for v in iter_values(value):
        if isinstance(v, DisjRef):
            yield v


@dataclass(frozen=True)
class Entry:
    entry_name: str
    skeleton: Value
    formulae: tuple[Formula, ...] = ()
    links: tuple[ControlLink, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.links is None:
            seen: dict[ControlLink, None] = {}
            for f in self.formulae:
                for link in f.links():
                    seen.setdefault(link)
            object.__setattr__(self, "links", tuple(seen))

    @cached_property
    def formula_by_id(self) -> dict[str, Formula]:
        return {f.id: f for f in self.formulae}

    def formula(self, fid: str) -> Formula:
        return self.formula_by_id[fid]

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(f.name for f in self.formulae))

    def formulae_of(self, name: str) -> list[Formula]:
        return [f for f in self.formulae if f.name == name]

    def arity(self, name: str) -> int:
        return self.formulae_of(name)[0].arity

    @cached_property
    def covariance_groups(self) -> dict[str, list[str]]:
        groups = collect_formulae(self)
        return {name: fids for name, (_, fids) in groups.items() if len(fids) > 1}

    @cached_property
    def contexts(self) -> dict[str, Optional[tuple[str, int]]]:
        """formula id -> (enclosing formula id, rank), None at top level."""
        ctx: dict[str, Optional[tuple[str, int]]] = {}
        for ref in refs_in(self.skeleton):
            ctx.setdefault(ref.formula_id, None)
        for f in self.formulae:
            for rank, d in enumerate(f.disjuncts, 1):
                for ref in refs_in(d):
                    ctx.setdefault(ref.formula_id, (f.id, rank))
        return ctx

    def chain(self, fid: str) -> Chain:
        out: list[tuple[str, int]] = []
        seen = set()
        cur = self.contexts.get(fid)
        while cur is not None:
            parent, rank = cur
            if parent in seen:
                raise ValueError(f"formula {fid} is nested inside itself")
            seen.add(parent)
            out.append((self.formula(parent).name, rank))
            cur = self.contexts.get(parent)
        return tuple(reversed(out))

    def inline(self) -> Value:
        """The skeleton with every formula written out as a full residual."""
        from .fscore import Disj

        def sub(v: Value) -> Value:
            if isinstance(v, DisjRef):
                f = self.formula(v.formula_id)
                return Disj(f.name, tuple((r, sub(d)) for r, d in enumerate(f.disjuncts, 1)))
            if isinstance(v, FS):
                return FS(tuple((k, sub(c)) for k, c in v.features))
            if isinstance(v, TagDef):
                return TagDef(v.tag, sub(v.value))
            return v

        return sub(self.skeleton)

    def renamed(self, mapping: dict[str, str]) -> tuple["Entry", dict[str, str]]:
        """Copy with disjunction names replaced; also returns the formula-id map."""
        fid_map: dict[str, str] = {}
        for f in self.formulae:
            new = mapping.get(f.name, f.name)
            stem, dot, suffix = f.id.rpartition(".")
            fid_map[f.id] = f"{new}.{suffix}" if dot and stem == f.name else (
                f.id if new == f.name else f"{new}.{f.id}")
        if len(set(fid_map.values())) != len(fid_map):
            raise ValueError("renaming would merge formula ids")

        def sub(v: Value) -> Value:
            if isinstance(v, DisjRef):
                return DisjRef(mapping.get(v.name, v.name), fid_map[v.formula_id])
            if isinstance(v, FS):
                return FS(tuple((k, sub(c)) for k, c in v.features))
            if isinstance(v, TagDef):
                return TagDef(v.tag, sub(v.value))
            return v

        formulae = tuple(
            replace(f, id=fid_map[f.id], name=mapping.get(f.name, f.name),
                    disjuncts=tuple(sub(d) for d in f.disjuncts),
                    controls=tuple(tuple((mapping.get(t, t), r) for t, r in c)
                                   for c in f.controls))
            for f in self.formulae)
        links = tuple(ControlLink(mapping.get(l.source_name, l.source_name), l.source_rank,
                                  mapping.get(l.target_name, l.target_name), l.target_rank)
                      for l in self.links)
        return Entry(self.entry_name, sub(self.skeleton), formulae, links), fid_map


def collect_formulae(e: Entry) -> dict[str, tuple[int, list[str]]]:
    """Group formulae by name: name -> (arity, formula ids)."""
    groups: dict[str, list[Formula]] = {}
    for f in e.formulae:
        groups.setdefault(f.name, []).append(f)
    out = {}
    for name, fs in groups.items():
        arities = [f.arity for f in fs]
        if len(set(arities)) > 1:
            raise ArityMismatch(name, arities)
        out[name] = (arities[0], [f.id for f in fs])
    return out


def link_graph(e: Entry) -> dict[str, tuple[str, ...]]:
    """Adjacency of the control-link graph; parallel links collapse to one edge."""
    adj: dict[str, dict[str, None]] = {name: {} for name in e.names}
    for link in e.links:
        adj.setdefault(link.source_name, {})[link.target_name] = None
        adj.setdefault(link.target_name, {})
    return {name: tuple(targets) for name, targets in adj.items()}


class NameIndex:
    """Lookup tables over the formulae of one or more entries.

    Used by the engine; everything is precomputed because propagators ask
    the same structural questions on every wake-up.
    """

    def __init__(self, entries: tuple[Entry, ...]):
        self.formulae: dict[str, Formula] = {}
        self.chains: dict[str, Chain] = {}
        self.by_name: dict[str, list[str]] = {}
        for e in entries:
            for f in e.formulae:
                if f.id in self.formulae:
                    raise ValueError(f"duplicate formula id {f.id}")
                self.formulae[f.id] = f
                self.chains[f.id] = e.chain(f.id)
                self.by_name.setdefault(f.name, []).append(f.id)
        self.arity = {name: self.formulae[fids[0]].arity
                      for name, fids in self.by_name.items()}
        self.links = tuple(link for e in entries for link in e.links)
        # names whose activation depends on a given name
        self.dependents: dict[str, set[str]] = {name: set() for name in self.by_name}
        for fid, chain in self.chains.items():
            owner = self.formulae[fid].name
            for name, _ in chain:
                self.dependents[name].add(owner)

    def names(self) -> list[str]:
        return list(self.by_name)

    def is_top(self, name: str) -> bool:
        return any(not self.chains[fid] for fid in self.by_name[name])

    def chain_names(self, name: str) -> set[str]:
        return {n for fid in self.by_name[name] for n, _ in self.chains[fid]}
