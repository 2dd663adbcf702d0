"""Brute-force semantics by full expansion, used as ground truth in tests.

Every rank assignment over the names a reading actually reaches is
enumerated, control links are read as implications, and each surviving
assignment is substituted into the skeleton.  Nothing here shares code with
the propagation engine beyond plain unification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

from .disjunct import Entry
from .fscore import FS, DisjRef, TagDef, Value, unify_plain

MAX_ASSIGNMENTS = 100_000


class OracleLimit(RuntimeError):
    pass


@dataclass(frozen=True)
class Model:
    assignment: dict[str, int] = field(hash=False)
    avm: Value = field(hash=False)

    def key(self) -> tuple[tuple[str, int], ...]:
        return tuple(sorted(self.assignment.items()))


class _Need(Exception):
    def __init__(self, name: str):
        self.name = name


def _substitute(e: Entry, v: Value, asg: dict[str, int]) -> Value:
    if isinstance(v, DisjRef):
        if v.name not in asg:
            raise _Need(v.name)
        f = e.formula(v.formula_id)
        return _substitute(e, f.disjunct(asg[v.name]), asg)
    if isinstance(v, FS):
        return FS(tuple((k, _substitute(e, c, asg)) for k, c in v.features))
    if isinstance(v, TagDef):
        return TagDef(v.tag, _substitute(e, v.value, asg))
    return v


def _links_hold(e: Entry, asg: dict[str, int]) -> bool:
    for link in e.links:
        if (asg.get(link.source_name) == link.source_rank
                and link.target_name in asg
                and asg[link.target_name] != link.target_rank):
            return False
    return True


def readings(e: Entry) -> Iterable[tuple[dict[str, int], Value]]:
    """Every assignment over reached names with its substituted value."""
    stack: list[dict[str, int]] = [{}]
    visited = 0
    while stack:
        asg = stack.pop()
        visited += 1
        if visited > MAX_ASSIGNMENTS:
            raise OracleLimit(f"more than {MAX_ASSIGNMENTS} partial assignments")
        try:
            avm = _substitute(e, e.skeleton, asg)
        except _Need as need:
            arity = e.arity(need.name)
            for rank in range(arity, 0, -1):
                stack.append({**asg, need.name: rank})
            continue
        yield asg, avm


def expand_dnf(e: Entry) -> list[Model]:
    return [Model(asg, avm) for asg, avm in readings(e) if _links_hold(e, asg)]


def assignment_space(e: Entry) -> int:
    """Size of the unrestricted rank space: the product of all arities."""
    return math.prod(e.arity(n) for n in e.names)


def filter_models(models: Iterable[Model], constraints) -> list[Model]:
    """Models whose value accepts every constraint, applied cumulatively."""
    out = []
    for m in models:
        acc = m.avm
        for c in constraints:
            acc = unify_plain(acc, c.path.wrap(c.value))
            if acc is None:
                break
        if acc is not None:
            out.append(m)
    return out


def project(models: Iterable[Model]) -> dict[str, set[int]]:
    out: dict[str, set[int]] = {}
    for m in models:
        for name, rank in m.assignment.items():
            out.setdefault(name, set()).add(rank)
    return out


def pair_models(a: Entry, b: Entry) -> list[tuple[Model, Model]]:
    """Model pairs of two entries whose values unify."""
    mb = expand_dnf(b)
    return [(x, y) for x in expand_dnf(a) for y in mb if unify_plain(x.avm, y.avm) is not None]
