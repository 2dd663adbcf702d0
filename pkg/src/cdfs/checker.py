"""Static consistency checks on parsed entries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from .disjunct import Entry, link_graph, refs_in
from .fscore import FS, DisjRef, TagDef, TagUse, Value, iter_values, unifiable

ERROR, WARNING = "error", "warning"

CYCLE_RATIONALE = ("propagation still terminates because rank domains only "
                   "shrink; mutual control is legitimate")


@dataclass(frozen=True)
class Issue:
    severity: str
    code: str
    message: str
    names: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.severity}: {self.code}: {self.message}"


@dataclass
class Report:
    entry: str
    errors: list[Issue] = field(default_factory=list)
    warnings: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> list[str]:
        return [i.code for i in self.errors + self.warnings]

    def escalate(self) -> "Report":
        promoted = [Issue(ERROR, i.code, i.message, i.names) for i in self.warnings]
        return Report(self.entry, self.errors + promoted, [])

    def lines(self) -> list[str]:
        return [f"{self.entry}: {i}" for i in self.errors + self.warnings]


def find_cycles(graph: dict[str, tuple[str, ...]]) -> list[list[str]]:
    """One representative cycle per non-trivial strongly connected component.

    Self-loops count as cycles.  Iterative Tarjan, so deep graphs are fine.
    """
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    sccs: list[list[str]] = []
    counter = 0
    for start in graph:
        if start in index:
            continue
        work = [(start, iter(graph.get(start, ())))]
        index[start] = low[start] = counter
        counter += 1
        stack.append(start)
        on_stack.add(start)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(graph.get(nxt, ()))))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                if len(comp) > 1 or node in graph.get(node, ()):
                    sccs.append(comp)
    cycles = []
    for comp in sccs:
        members = set(comp)
        first = min(comp, key=list(graph).index)
        cycles.append(_cycle_through(graph, first, members))
    return cycles


def _cycle_through(graph, start: str, members: set[str]) -> list[str]:
    # BFS back to start inside the component gives a shortest cycle
    prev = {start: None}
    queue = [start]
    while queue:
        node = queue.pop(0)
        for nxt in graph.get(node, ()):
            if nxt == start:
                path = [node]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return list(reversed(path)) + [start]
            if nxt in members and nxt not in prev:
                prev[nxt] = node
                queue.append(nxt)
    return [start, start]


def _expand(e: Entry, v: Value) -> Iterator[Value]:
    """Every disjunction-free reading of a disjunct."""
    if isinstance(v, DisjRef):
        f = e.formula_by_id.get(v.formula_id)
        if f is None:
            return
        for d in f.disjuncts:
            yield from _expand(e, d)
    elif isinstance(v, FS):
        partial: list[list[tuple[str, Value]]] = [[]]
        for k, c in v.features:
            options = list(_expand(e, c))
            partial = [p + [(k, o)] for p in partial for o in options]
        for p in partial:
            yield FS(tuple(p))
    elif isinstance(v, TagDef):
        for inner in _expand(e, v.value):
            yield TagDef(v.tag, inner)
    else:
        yield v


def _overlap(e: Entry, a: Value, b: Value) -> bool:
    try:
        return any(unifiable(x, y) for x in _expand(e, a) for y in _expand(e, b))
    except ValueError:
        return False


def overlapping_ranks(e: Entry, name: str) -> list[tuple[int, int]]:
    """Rank pairs no formula of ``name`` tells apart."""
    fs = e.formulae_of(name)
    arity = fs[0].arity
    pairs = []
    for r in range(1, arity + 1):
        for q in range(r + 1, arity + 1):
            if all(f.arity == arity and _overlap(e, f.disjunct(r), f.disjunct(q)) for f in fs):
                pairs.append((r, q))
    return pairs


def _tag_issues(e: Entry) -> list[Issue]:
    issues = []
    defined: dict[str, int] = {}
    used: set[str] = set()

    def visit(v: Value, in_disjunct: bool) -> None:
        for x in iter_values(v):
            if isinstance(x, TagDef):
                defined[x.tag] = defined.get(x.tag, 0) + 1
            if isinstance(x, TagUse):
                used.add(x.tag)
            if in_disjunct and isinstance(x, (TagDef, TagUse)):
                issues.append(Issue(ERROR, "tag-in-disjunct",
                                    f"tag #{x.tag} appears inside a disjunct"))

    visit(e.skeleton, False)
    for f in e.formulae:
        for d in f.disjuncts:
            visit(d, True)
    for tag, n in defined.items():
        if n > 1:
            issues.append(Issue(ERROR, "duplicate-tag", f"tag #{tag} is defined {n} times"))
    for tag in sorted(used - set(defined)):
        issues.append(Issue(ERROR, "undefined-tag", f"tag #{tag} is never defined"))
    return issues


def check(e: Entry) -> Report:
    report = Report(e.entry_name)
    err, warn = report.errors.append, report.warnings.append

    groups: dict[str, list] = {}
    for f in e.formulae:
        groups.setdefault(f.name, []).append(f)
    arities = {}
    for name, fs in groups.items():
        distinct = sorted({f.arity for f in fs})
        if len(distinct) > 1:
            err(Issue(ERROR, "arity-mismatch",
                      f"{name} has formulae of arity " + ", ".join(map(str, distinct)), (name,)))
        for f in fs:
            if f.arity < 2:
                err(Issue(ERROR, "arity-too-small", f"formula {f.id} has arity {f.arity}", (name,)))
        arities[name] = max(distinct)

    # every reference resolves to one formula, used once
    ref_count: dict[str, int] = {}
    all_refs = list(refs_in(e.skeleton))
    for f in e.formulae:
        for d in f.disjuncts:
            all_refs.extend(refs_in(d))
    for ref in all_refs:
        f = e.formula_by_id.get(ref.formula_id)
        if f is None or f.name != ref.name:
            err(Issue(ERROR, "dangling-ref",
                      f"reference {ref.name}/{ref.formula_id} has no formula", (ref.name,)))
        ref_count[ref.formula_id] = ref_count.get(ref.formula_id, 0) + 1
    for fid, n in ref_count.items():
        if n > 1:
            err(Issue(ERROR, "duplicate-ref", f"formula {fid} is referenced {n} times"))
    for f in e.formulae:
        if f.id not in ref_count:
            warn(Issue(WARNING, "unreachable-formula",
                       f"formula {f.id} is never referenced", (f.name,)))

    # nesting must be well-founded
    nesting_ok = True
    for f in e.formulae:
        try:
            e.chain(f.id)
        except ValueError:
            nesting_ok = False
            err(Issue(ERROR, "nesting-cycle", f"formula {f.id} is nested inside itself", (f.name,)))

    seen_links = set()
    for link in e.links:
        if link in seen_links:
            err(Issue(ERROR, "duplicate-link", f"link {link} is declared twice"))
        seen_links.add(link)
        names_ok = True
        for name in (link.source_name, link.target_name):
            if name not in arities:
                names_ok = False
                err(Issue(ERROR, "dangling-link-name",
                          f"link {link} names unknown disjunction {name}", (name,)))
        if link.source_name == link.target_name:
            err(Issue(ERROR, "self-link", f"link {link} controls its own name",
                      (link.source_name,)))
        if not names_ok:
            continue
        for name, rank in ((link.source_name, link.source_rank),
                           (link.target_name, link.target_rank)):
            if not 1 <= rank <= arities[name]:
                err(Issue(ERROR, "rank-out-of-range",
                          f"link {link}: rank {rank} outside 1..{arities[name]} of {name}",
                          (name,)))

    report.errors.extend(_tag_issues(e))

    if nesting_ok:
        for name, fs in groups.items():
            if len({f.arity for f in fs}) > 1:
                continue
            for r, q in overlapping_ranks(e, name):
                warn(Issue(WARNING, "non-exclusive",
                           f"{name}: ranks {r} and {q} unify in every formula", (name,)))

    graph = link_graph(e)
    for cycle in find_cycles(graph):
        warn(Issue(WARNING, "cycle", " -> ".join(cycle) + f" ({CYCLE_RATIONALE})",
                   tuple(dict.fromkeys(cycle))))
    return report
