"""Rank domains, propagators and the agenda-driven fixpoint.

Each disjunction name owns one :class:`RankDomain`.  Its reading is
conditional: *if* the name is active in a reading, its rank lies in
``possible``.  Top-level names are always active; a nested name is active
when one of its formulae sits in a selected branch.  When a nested name runs
out of ranks it is switched to ``inactive`` and the branches that would have
activated it are ruled out instead of failing.

Propagators are small frozen records woken by changes to the names they
watch.  The agenda is FIFO and deduplicated, so traces are deterministic for
a given input order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .disjunct import Chain, ControlLink, Entry, NameIndex
from .fscore import (ANON, DISJ, FS, JOIN, OMIT, Anon, Atom, Disj, FSGraph,
                     Node, TagDef, TagUse, Value, canonical)

ACTIVE, INACTIVE, FAILED = "active", "inactive", "failed"


@dataclass
class RankDomain:
    name: str
    arity: int
    possible: frozenset[int]
    status: str = ACTIVE

    @property
    def resolved(self) -> Optional[int]:
        if self.status == ACTIVE and len(self.possible) == 1:
            return next(iter(self.possible))
        return None

    def __str__(self) -> str:
        if self.status != ACTIVE:
            return f"{self.name}: {self.status}"
        return f"{self.name}: {format_ranks(self.possible)}"


def format_ranks(ranks: Iterable[int]) -> str:
    return "{" + ",".join(map(str, sorted(ranks))) + "}"


@dataclass(frozen=True)
class TraceEvent:
    step: int
    cause: str
    name: str
    before: frozenset[int]
    after: frozenset[int]
    kind: str = "narrow"  # or "deactivate"

    def __str__(self) -> str:
        after = "inactive" if self.kind == "deactivate" else format_ranks(self.after)
        return f"{self.step} {self.cause} {self.name} {format_ranks(self.before)} -> {after}"


@dataclass
class PropagationTrace:
    events: list[TraceEvent] = field(default_factory=list)

    def record(self, cause: str, name: str, before, after, kind: str = "narrow") -> TraceEvent:
        ev = TraceEvent(len(self.events) + 1, cause, name,
                        frozenset(before), frozenset(after), kind)
        self.events.append(ev)
        return ev

    def narrowings(self) -> list[TraceEvent]:
        return [e for e in self.events if e.kind == "narrow"]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)


@dataclass(frozen=True)
class Failure:
    reason: str
    name: Optional[str]
    detail: str = ""


class PropagationFailure(Exception):
    """Raised by operations that drive a state into inconsistency.

    ``state`` is the failed state, trace included.
    """

    def __init__(self, reason: str, name: Optional[str], state: "EngineState", detail: str = ""):
        self.reason = reason
        self.name = name
        self.state = state
        msg = f"{reason} {name}" if name else reason
        super().__init__(f"{msg}: {detail}" if detail else msg)


class _Fail(Exception):
    def __init__(self, reason: str, name: Optional[str], detail: str = ""):
        self.failure = Failure(reason, name, detail)


# -- propagators ---------------------------------------------------------------


@dataclass(frozen=True)
class Covariance:
    """Deactivates a name once every one of its formulae is ruled out."""
    name: str


@dataclass(frozen=True)
class Selection:
    link: ControlLink


@dataclass(frozen=True)
class Contrapositive:
    link: ControlLink


@dataclass(frozen=True)
class ValueWatch:
    """A constraint met formula ``formula_id`` only at the ranks in ``keep``."""
    name: str
    keep: frozenset[int]
    formula_id: str
    label: str


@dataclass(frozen=True)
class Nogood:
    """Not every (name, rank) condition may hold at once."""
    conditions: tuple[tuple[str, int], ...]
    label: str


@dataclass(frozen=True)
class CompatTable:
    """Rank tuples of co-located formulae whose disjuncts unify."""
    names: tuple[str, ...]
    formula_ids: tuple[str, ...]
    rows: frozenset[tuple[int, ...]]

    def supported(self, domains: list[frozenset[int]]) -> list[set[int]]:
        out: list[set[int]] = [set() for _ in self.names]
        for row in self.rows:
            if all(r in d for r, d in zip(row, domains)):
                for i, r in enumerate(row):
                    out[i].add(r)
        return out


@dataclass(frozen=True)
class Compat:
    table: CompatTable


Propagator = Union[Covariance, Selection, Contrapositive, ValueWatch, Nogood, Compat]


def describe(p: Propagator) -> str:
    if isinstance(p, Covariance):
        return f"covariance[{p.name}]"
    if isinstance(p, Selection):
        return f"select[{p.link}]"
    if isinstance(p, Contrapositive):
        return f"closure[{p.link}]"
    if isinstance(p, ValueWatch):
        return f"watch[{p.label}]"
    if isinstance(p, Nogood):
        return f"nogood[{p.label}]"
    if isinstance(p, Compat):
        return "compat[" + ",".join(p.table.names) + "]"
    raise TypeError(p)


# -- state ---------------------------------------------------------------------


class EngineState:
    def __init__(self) -> None:
        self.entries: tuple[Entry, ...] = ()
        self.index: NameIndex
        self.graph = FSGraph()
        self.root = -1
        self.disj_nodes: dict[str, int] = {}
        self.domains: dict[str, RankDomain] = {}
        self.propagators: list[Propagator] = []
        self.installed: dict[Propagator, int] = {}
        self.watchers: dict[str, list[int]] = {}
        self.agenda: deque[int] = deque()
        self.queued: set[int] = set()
        self.trace = PropagationTrace()
        self.failure: Optional[Failure] = None
        self.constraints: list[str] = []
        self.logical_closure = False

    def copy(self) -> "EngineState":
        s = EngineState()
        s.entries = self.entries
        s.index = self.index
        s.graph = self.graph.copy()
        s.root = self.root
        s.disj_nodes = dict(self.disj_nodes)
        s.domains = {n: RankDomain(d.name, d.arity, d.possible, d.status)
                     for n, d in self.domains.items()}
        s.propagators = list(self.propagators)
        s.installed = dict(self.installed)
        s.watchers = {n: list(w) for n, w in self.watchers.items()}
        s.agenda = deque(self.agenda)
        s.queued = set(self.queued)
        s.trace = PropagationTrace(list(self.trace.events))
        s.failure = self.failure
        s.constraints = list(self.constraints)
        s.logical_closure = self.logical_closure
        return s

    @property
    def entry(self) -> Entry:
        return self.entries[0]

    @property
    def status(self) -> str:
        if self.failure is not None:
            return FAILED
        if all(d.resolved is not None for d in self.domains.values() if d.status == ACTIVE):
            return "resolved"
        return "partial"

    def possible(self, name: str) -> frozenset[int]:
        return self.domains[name].possible

    def snapshot(self) -> dict[str, tuple[str, frozenset[int]]]:
        """Comparable view: inactive names compare by status only."""
        return {n: (d.status, d.possible if d.status == ACTIVE else frozenset())
                for n, d in self.domains.items()}

    # structural queries

    def cond_false(self, name: str, rank: int) -> bool:
        d = self.domains[name]
        return d.status == INACTIVE or rank not in d.possible

    def cond_true(self, name: str, rank: int) -> bool:
        d = self.domains[name]
        return d.status == ACTIVE and d.possible == {rank} and self.certainly_active(name)

    def dead(self, fid: str) -> bool:
        return any(self.cond_false(n, r) for n, r in self.index.chains[fid])

    def certainly_live(self, fid: str) -> bool:
        for n, r in self.index.chains[fid]:
            d = self.domains[n]
            if d.status != ACTIVE or d.possible != {r}:
                return False
        return True

    def certainly_active(self, name: str) -> bool:
        return any(self.certainly_live(fid) for fid in self.index.by_name[name])

    def caches(self) -> dict[str, dict[int, Value]]:
        """Per formula, the live disjuncts that constraints have enriched."""
        out: dict[str, dict[int, Value]] = {}
        for fid, nid in self.disj_nodes.items():
            f = self.index.formulae[fid]
            if self.dead(fid) or self.domains[f.name].status != ACTIVE:
                continue
            node = self.graph.nodes[self.graph.find(nid)]
            if node.kind != DISJ:
                node = self.graph.nodes[nid]
            for rank in sorted(self.domains[f.name].possible):
                child = node.children.get(rank)
                if child is None:
                    continue
                v = self.graph.to_value(child, special=_renderer(self), native_first=True)
                if _differs(v, f.disjunct(rank), self):
                    out.setdefault(fid, {})[rank] = v
        return out


def _differs(realized: Value, original: Value, s: EngineState) -> bool:
    from .fscore import contains
    from .fscore import DisjRef

    if contains(original, (DisjRef,)):
        # nested residuals are reported through their own formula
        return False
    return canonical(realized) != canonical(original)


def _watched(index: NameIndex, p: Propagator) -> set[str]:
    def with_context(name: str) -> set[str]:
        return {name} | index.chain_names(name)

    if isinstance(p, Covariance):
        return index.chain_names(p.name)
    if isinstance(p, Selection):
        return with_context(p.link.source_name) | {p.link.target_name}
    if isinstance(p, Contrapositive):
        return with_context(p.link.target_name) | {p.link.source_name}
    if isinstance(p, ValueWatch):
        return with_context(p.name)
    if isinstance(p, Nogood):
        out: set[str] = set()
        for n, _ in p.conditions:
            out |= with_context(n)
        return out
    if isinstance(p, Compat):
        out = set()
        for n in p.table.names:
            out |= with_context(n)
        return out
    raise TypeError(p)


def install(s: EngineState, p: Propagator, *, wake: bool = True) -> None:
    idx = s.installed.get(p)
    if idx is None:
        idx = len(s.propagators)
        s.propagators.append(p)
        s.installed[p] = idx
        for name in _watched(s.index, p):
            s.watchers.setdefault(name, []).append(idx)
    if wake:
        _enqueue(s, idx)


def _enqueue(s: EngineState, idx: int) -> None:
    if idx not in s.queued:
        s.queued.add(idx)
        s.agenda.append(idx)


def _wake(s: EngineState, name: str) -> None:
    for idx in s.watchers.get(name, ()):
        _enqueue(s, idx)


# -- construction --------------------------------------------------------------


def build_graph(s: EngineState, entry: Entry) -> int:
    g = s.graph

    def on_ref(ref) -> int:
        f = entry.formula(ref.formula_id)
        node = Node(DISJ)
        node.name, node.fid = f.name, f.id
        nid = g.add(node)
        for rank, d in enumerate(f.disjuncts, 1):
            node.children[rank] = g.build(d, on_ref=on_ref)
        s.disj_nodes[f.id] = nid
        return nid

    return g.build(entry.skeleton, on_ref=on_ref)


def init(e: Entry, *, logical_closure: bool = False) -> EngineState:
    """Fresh state: full domains, every name active, empty trace."""
    s = EngineState()
    s.entries = (e,)
    s.index = NameIndex(s.entries)
    s.logical_closure = logical_closure
    for name, arity in s.index.arity.items():
        s.domains[name] = RankDomain(name, arity, frozenset(range(1, arity + 1)))
    s.root = build_graph(s, e)
    s.graph.forget()
    install_static(s)
    return s


def install_static(s: EngineState) -> None:
    for name in s.index.names():
        if not s.index.is_top(name):
            install(s, Covariance(name), wake=False)
    for link in s.index.links:
        install(s, Selection(link), wake=False)
        if s.logical_closure:
            install(s, Contrapositive(link), wake=False)


# -- domain updates ------------------------------------------------------------


def _restrict(s: EngineState, name: str, keep: Iterable[int], cause: str) -> None:
    d = s.domains[name]
    if d.status != ACTIVE:
        return
    new = d.possible & frozenset(keep)
    if new == d.possible:
        return
    if not new:
        _empty(s, name, cause)
        return
    s.trace.record(cause, name, d.possible, new)
    d.possible = new
    _wake(s, name)


def _empty(s: EngineState, name: str, cause: str) -> None:
    """``name`` has no rank left: it must be inactive in every reading."""
    d = s.domains[name]
    fids = s.index.by_name[name]
    if any(s.certainly_live(fid) for fid in fids):
        s.trace.record(cause, name, d.possible, frozenset())
        raise _Fail("empty-domain", name, f"no rank of {name} survives {cause}")
    s.trace.record(cause, name, d.possible, frozenset(), kind="deactivate")
    d.possible, d.status = frozenset(), INACTIVE
    _wake(s, name)
    for fid in fids:
        if not s.dead(fid):
            install(s, Nogood(s.index.chains[fid], f"{fid} needs {name}"))


def _deactivate(s: EngineState, name: str, cause: str) -> None:
    d = s.domains[name]
    if d.status != ACTIVE:
        return
    s.trace.record(cause, name, d.possible, frozenset(), kind="deactivate")
    d.possible, d.status = frozenset(), INACTIVE
    _wake(s, name)


def _fire(s: EngineState, p: Propagator) -> None:
    cause = describe(p)
    if isinstance(p, Covariance):
        d = s.domains[p.name]
        if d.status == ACTIVE and all(s.dead(fid) for fid in s.index.by_name[p.name]):
            _deactivate(s, p.name, cause)
    elif isinstance(p, Selection):
        link = p.link
        src = s.domains[link.source_name]
        if src.status != ACTIVE or src.possible != {link.source_rank}:
            return
        if not s.certainly_active(link.source_name):
            return
        _restrict(s, link.target_name, {link.target_rank}, cause)
    elif isinstance(p, Contrapositive):
        link = p.link
        tgt = s.domains[link.target_name]
        if tgt.status != ACTIVE or link.target_rank in tgt.possible:
            return
        if not s.certainly_active(link.target_name):
            return
        src = s.domains[link.source_name]
        _restrict(s, link.source_name, src.possible - {link.source_rank}, cause)
    elif isinstance(p, ValueWatch):
        _fire_watch(s, p, cause)
    elif isinstance(p, Nogood):
        _fire_nogood(s, p.conditions, cause)
    elif isinstance(p, Compat):
        _fire_compat(s, p.table, cause)
    else:
        raise TypeError(p)


def _covers(chain: Chain, sub: Chain) -> bool:
    return set(sub) <= set(chain)


def _fire_watch(s: EngineState, p: ValueWatch, cause: str) -> None:
    if s.domains[p.name].status != ACTIVE or s.dead(p.formula_id):
        return
    chain = s.index.chains[p.formula_id]
    others = [fid for fid in s.index.by_name[p.name]
              if not _covers(s.index.chains[fid], chain)]
    if s.certainly_live(p.formula_id) or all(s.dead(fid) for fid in others):
        # whenever the name is active, this formula is live
        _restrict(s, p.name, p.keep, cause)
    elif not (s.domains[p.name].possible & p.keep):
        install(s, Nogood(chain, f"{p.formula_id} excluded"))


def _fire_nogood(s: EngineState, conditions: Chain, cause: str) -> None:
    open_conds = []
    for name, rank in conditions:
        if s.cond_false(name, rank):
            return
        if not s.cond_true(name, rank):
            open_conds.append((name, rank))
    if not open_conds:
        name = conditions[-1][0] if conditions else None
        raise _Fail("empty-domain" if not conditions else "nogood", name,
                    f"{cause} violated")
    if len(open_conds) == 1:
        name, rank = open_conds[0]
        _restrict(s, name, s.domains[name].possible - {rank}, cause)


def _fire_compat(s: EngineState, t: CompatTable, cause: str) -> None:
    if any(s.dead(fid) or s.domains[n].status != ACTIVE
           for n, fid in zip(t.names, t.formula_ids)):
        return
    doms = [s.domains[n].possible for n in t.names]
    support = t.supported(doms)
    union_chain: dict[tuple[str, int], None] = {}
    for fid in t.formula_ids:
        union_chain.update(dict.fromkeys(s.index.chains[fid]))
    if not any(support):
        install(s, Nogood(tuple(union_chain), cause))
        return
    for i, (name, fid) in enumerate(zip(t.names, t.formula_ids)):
        if support[i] == doms[i]:
            continue
        partners_live = all(s.certainly_live(g) for j, g in enumerate(t.formula_ids) if j != i)
        chain = s.index.chains[fid]
        others = [g for g in s.index.by_name[name]
                  if g != fid and not _covers(s.index.chains[g], chain)]
        if partners_live and (s.certainly_live(fid) or all(s.dead(g) for g in others)):
            _restrict(s, name, support[i], cause)


# -- public operations ---------------------------------------------------------


def _run(s: EngineState) -> None:
    while s.agenda:
        idx = s.agenda.popleft()
        s.queued.discard(idx)
        _fire(s, s.propagators[idx])


def _guard(s: EngineState, action) -> EngineState:
    if s.failure is not None:
        raise PropagationFailure(s.failure.reason, s.failure.name, s, s.failure.detail)
    try:
        action()
    except _Fail as exc:
        s.failure = exc.failure
        for d in s.domains.values():
            if d.possible == frozenset() and d.status == ACTIVE:
                d.status = FAILED
        if exc.failure.name in s.domains:
            s.domains[exc.failure.name].status = FAILED
        s.agenda.clear()
        s.queued.clear()
        raise PropagationFailure(exc.failure.reason, exc.failure.name, s,
                                 exc.failure.detail) from None
    return s


def narrow(s: EngineState, name: str, keep: Iterable[int], *, cause: str = "external") -> EngineState:
    """Intersect ``name``'s domain with ``keep`` and wake its watchers.

    Does not run the agenda; call :func:`fixpoint` afterwards.
    """
    if name not in s.domains:
        raise KeyError(name)
    t = s.copy()
    return _guard(t, lambda: _restrict(t, name, keep, cause))


def fire_covariance(s: EngineState, name: str) -> EngineState:
    """Re-run every constraint watch recorded on ``name``, then settle."""
    t = s.copy()

    def act():
        _fire(t, Covariance(name))
        for p in t.propagators:
            if isinstance(p, ValueWatch) and p.name == name:
                _fire(t, p)
        _run(t)

    return _guard(t, act)


def fire_selection(s: EngineState, link: ControlLink) -> EngineState:
    t = s.copy()
    return _guard(t, lambda: _fire(t, Selection(link)))


def fixpoint(s: EngineState) -> EngineState:
    t = s.copy()
    return _guard(t, lambda: _run(t))


def apply_effects(s: EngineState, effects: list[tuple[str, frozenset[int], str]],
                  label: str) -> None:
    """Install one watch per recorded (name, keep, formula) and settle.

    Mutates ``s``; callers wrap this in :func:`_guard`.
    """
    for name, keep, fid in effects:
        install(s, ValueWatch(name, frozenset(keep), fid, label))
    _run(s)


# -- read-back -----------------------------------------------------------------


def _renderer(s: EngineState):
    g = s.graph

    def render(n: int, emit):
        # during to_value's counting pass the return value is ignored
        node = g.nodes[n]
        if node.kind == JOIN:
            values = [g.to_value(p, special=render, native_first=True) for p in node.parts]
            out: Optional[Value] = values[0]
            for v in values[1:]:
                out = join_values(out, v) if out is not None else None
            return OMIT if out is None else out
        d = s.domains[node.name]
        if d.status != ACTIVE:
            return OMIT
        ranks = sorted(d.possible)
        if len(ranks) == 1:
            return emit(node.children[ranks[0]])
        options = [(r, emit(node.children[r])) for r in ranks]
        return Disj(node.name, tuple((r, ANON if v is OMIT else v) for r, v in options))

    return render


def realize(s: EngineState) -> Value:
    """Substitute the current domains into the skeleton.

    Resolved names contribute their disjunct, open names a residual
    :class:`Disj`, inactive names nothing.
    """
    return s.graph.to_value(s.root, special=_renderer(s), native_first=True)


def join_values(a: Value, b: Value) -> Optional[Value]:
    """Unification over values that may hold residual disjunctions."""
    if isinstance(a, TagDef):
        return join_values(a.value, b)
    if isinstance(b, TagDef):
        return join_values(a, b.value)
    if isinstance(a, TagUse) or isinstance(b, TagUse):
        return a if isinstance(b, TagUse) else b
    if isinstance(a, Disj):
        return _join_disj(a, lambda v: join_values(v, b))
    if isinstance(b, Disj):
        return _join_disj(b, lambda v: join_values(a, v))
    if isinstance(a, Anon):
        return b
    if isinstance(b, Anon):
        return a
    if isinstance(a, Atom) and isinstance(b, Atom):
        return a if a == b else None
    if isinstance(a, FS) and isinstance(b, FS):
        feats = dict(a.features)
        for k, v in b.features:
            if k in feats:
                m = join_values(feats[k], v)
                if m is None:
                    return None
                feats[k] = m
            else:
                feats[k] = v
        return FS(tuple(feats.items()))
    return None


def _join_disj(d: Disj, f) -> Optional[Value]:
    options = [(r, v) for r, v in ((r, f(x)) for r, x in d.options) if v is not None]
    if not options:
        return None
    if len(options) == 1:
        return options[0][1]
    return Disj(d.name, tuple(options))
