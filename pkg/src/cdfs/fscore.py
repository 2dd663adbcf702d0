"""Feature-structure values, paths and plain unification.

Values are immutable trees.  Reentrancy is written as a ``TagDef`` at one
position and ``TagUse`` at the others; tags are scoped to a single value
(in practice, one lexical entry).  Unification does not work on the trees
directly: both operands are loaded into an :class:`FSGraph`, a small
union-find graph, unified there, and read back.  That keeps structure
sharing intact through unification and makes cyclic results representable.

The graph also carries two node kinds that plain unification refuses to
touch (``disj`` and ``join``); the engine uses them for disjunction
positions and hands the graph a callback to deal with them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Union

IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_-]*\Z")


def is_identifier(text: str) -> bool:
    return bool(IDENT_RE.match(text))


# -- values -----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Atom:
    symbol: str

    def __repr__(self) -> str:
        return f"Atom({self.symbol})"


@dataclass(frozen=True, slots=True)
class Anon:
    """The anonymous wildcard ``_``."""

    def __repr__(self) -> str:
        return "Anon"


ANON = Anon()


@dataclass(frozen=True, slots=True)
class FS:
    """Feature structure with insertion-ordered, unique feature names."""

    features: tuple[tuple[str, "Value"], ...] = ()

    def __post_init__(self) -> None:
        seen = set()
        for name, _ in self.features:
            if name in seen:
                raise ValueError(f"duplicate feature {name!r}")
            seen.add(name)

    @classmethod
    def of(cls, *pairs: tuple[str, "Value"], **kwargs: "Value") -> "FS":
        return cls(tuple(pairs) + tuple(kwargs.items()))

    def get(self, name: str, default=None):
        for feat, value in self.features:
            if feat == name:
                return value
        return default

    def keys(self) -> list[str]:
        return [name for name, _ in self.features]

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}: {v!r}" for k, v in self.features)
        return f"FS{{{inner}}}"


@dataclass(frozen=True, slots=True)
class DisjRef:
    """Placeholder for a disjunctive formula, resolved in the entry's table."""

    name: str
    formula_id: str


@dataclass(frozen=True, slots=True)
class TagDef:
    tag: str
    value: "Value"


@dataclass(frozen=True, slots=True)
class TagUse:
    tag: str


@dataclass(frozen=True, slots=True)
class Disj:
    """A residual disjunction in realized output: still-possible ranks only."""

    name: str
    options: tuple[tuple[int, "Value"], ...]

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(r for r, _ in self.options)


Value = Union[Atom, Anon, FS, DisjRef, TagDef, TagUse, Disj]


# -- paths ------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Path:
    segments: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for seg in self.segments:
            if not is_identifier(seg):
                raise ValueError(f"invalid feature name {seg!r} in path")

    @classmethod
    def parse(cls, text: str) -> "Path":
        if not text:
            raise ValueError("empty path")
        return cls(tuple(text.split(".")))

    def __str__(self) -> str:
        return ".".join(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __truediv__(self, feat: str) -> "Path":
        return Path(self.segments + (feat,))

    def wrap(self, value: Value) -> Value:
        """The feature structure holding ``value`` at this path."""
        for feat in reversed(self.segments):
            value = FS(((feat, value),))
        return value


class PathError(ValueError):
    def __init__(self, kind: str, path: Path, index: int):
        self.kind = kind
        self.path = path
        self.index = index
        super().__init__(f"{kind}: {path} at segment {index + 1}")


def iter_values(value: Value) -> Iterator[Value]:
    """Pre-order walk over a value tree (does not enter DisjRef)."""
    stack = [value]
    while stack:
        v = stack.pop()
        yield v
        if isinstance(v, FS):
            stack.extend(child for _, child in reversed(v.features))
        elif isinstance(v, TagDef):
            stack.append(v.value)
        elif isinstance(v, Disj):
            stack.extend(child for _, child in reversed(v.options))


def tag_definitions(value: Value) -> dict[str, Value]:
    defs: dict[str, Value] = {}
    for v in iter_values(value):
        if isinstance(v, TagDef):
            if v.tag in defs:
                raise ValueError(f"tag {v.tag!r} defined twice")
            defs[v.tag] = v.value
    return defs


def _deref(value: Value, defs: dict[str, Value]) -> Value:
    seen = set()
    while isinstance(value, (TagDef, TagUse)):
        if isinstance(value, TagDef):
            value = value.value
            continue
        if value.tag in seen or value.tag not in defs:
            raise ValueError(f"unresolvable tag #{value.tag}")
        seen.add(value.tag)
        value = defs[value.tag]
    return value


def get_path(value: Value, path: Path) -> Optional[Value]:
    """Sub-value at ``path`` following tags, or None when a feature is missing."""
    defs = tag_definitions(value)
    cur = _deref(value, defs)
    for i, feat in enumerate(path.segments):
        if isinstance(cur, FS):
            nxt = cur.get(feat)
            if nxt is None:
                return None
            cur = _deref(nxt, defs)
        elif isinstance(cur, (Atom, Anon)):
            raise PathError("path-through-leaf", path, i)
        else:
            raise PathError("path-through-disjunction", path, i)
    return cur


# -- graph ------------------------------------------------------------------

ATOM, ANY, FEAT, DISJ, JOIN = "atom", "anon", "fs", "disj", "join"
OMIT = object()


class Node:
    __slots__ = ("kind", "atom", "feats", "native", "fwd", "label",
                 "name", "fid", "children", "parts")

    def __init__(self, kind: str):
        self.kind = kind
        self.atom: Optional[str] = None
        self.feats: dict[str, int] = {}
        self.native: set[str] = set()
        self.fwd: Optional[int] = None
        self.label: Optional[str] = None
        self.name: Optional[str] = None
        self.fid: Optional[str] = None
        self.children: dict[int, int] = {}
        self.parts: list[int] = []

    def clone(self) -> "Node":
        n = Node(self.kind)
        n.atom = self.atom
        n.feats = dict(self.feats)
        n.native = set(self.native)
        n.fwd = self.fwd
        n.label = self.label
        n.name = self.name
        n.fid = self.fid
        n.children = dict(self.children)
        n.parts = list(self.parts)
        return n


Special = Callable[[int, int], bool]


class FSGraph:
    """Union-find store of feature-structure nodes with an undo trail."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.trail: list[tuple] = []

    def copy(self) -> "FSGraph":
        g = FSGraph()
        g.nodes = [n.clone() for n in self.nodes]
        return g

    # construction

    def add(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def atom(self, symbol: str) -> int:
        n = Node(ATOM)
        n.atom = symbol
        return self.add(n)

    def anon(self) -> int:
        return self.add(Node(ANY))

    def build(self, value: Value, *, native: bool = True,
              on_ref: Optional[Callable[[DisjRef], int]] = None) -> int:
        """Load a value tree; tags are scoped to this call."""
        defs = tag_definitions(value)
        built: dict[str, int] = {}

        def define(tag: str, inner: Value) -> int:
            if tag in built:
                return built[tag]
            if isinstance(inner, FS):
                nid = self.add(Node(FEAT))
                built[tag] = nid
                fill(nid, inner)
            else:
                if isinstance(inner, TagUse) and inner.tag == tag:
                    raise ValueError(f"tag #{tag} is defined as itself")
                nid = go(inner)
                built.setdefault(tag, nid)
            node = self.nodes[self.find(nid)]
            if node.label is None:
                node.label = tag
            return built[tag]

        def fill(nid: int, fs: FS) -> None:
            node = self.nodes[nid]
            for feat, child in fs.features:
                node.feats[feat] = go(child)
                if native:
                    node.native.add(feat)

        def go(v: Value) -> int:
            if isinstance(v, Atom):
                return self.atom(v.symbol)
            if isinstance(v, Anon):
                return self.anon()
            if isinstance(v, FS):
                nid = self.add(Node(FEAT))
                fill(nid, v)
                return nid
            if isinstance(v, TagDef):
                return define(v.tag, v.value)
            if isinstance(v, TagUse):
                if v.tag not in defs:
                    raise ValueError(f"undefined tag #{v.tag}")
                return define(v.tag, defs[v.tag])
            if isinstance(v, DisjRef):
                if on_ref is None:
                    raise ValueError("plain unification reached a disjunction "
                                     f"({v.name})")
                return on_ref(v)
            raise ValueError(f"cannot load {type(v).__name__} into a graph")

        return go(value)

    # union-find with trail

    def find(self, n: int) -> int:
        nodes = self.nodes
        while nodes[n].fwd is not None:
            n = nodes[n].fwd
        return n

    def checkpoint(self) -> tuple[int, int]:
        return len(self.trail), len(self.nodes)

    def rollback(self, cp: tuple[int, int]) -> None:
        trail_len, nodes_len = cp
        while len(self.trail) > trail_len:
            entry = self.trail.pop()
            node, what = entry[0], entry[1]
            if what == "fwd":
                node.fwd = entry[2]
            elif what == "label":
                node.label = entry[2]
            elif what == "feat":
                del node.feats[entry[2]]
                node.native.discard(entry[2])
            elif what == "become":
                kind, parts = entry[2]
                node.kind, node.parts = kind, parts
        del self.nodes[nodes_len:]

    def forget(self) -> None:
        self.trail.clear()

    def forward(self, src: int, dst: int) -> None:
        s, d = self.nodes[src], self.nodes[dst]
        self.trail.append((s, "fwd", s.fwd))
        s.fwd = dst
        if d.label is None and s.label is not None:
            self.trail.append((d, "label", d.label))
            d.label = s.label

    def add_feature(self, nid: int, feat: str, child: int, native: bool) -> None:
        node = self.nodes[nid]
        self.trail.append((node, "feat", feat))
        node.feats[feat] = child
        if native:
            node.native.add(feat)

    def become_join(self, nid: int, parts: list[int]) -> None:
        node = self.nodes[nid]
        self.trail.append((node, "become", (node.kind, node.parts)))
        node.kind, node.parts = JOIN, parts

    # unification

    def unify(self, a: int, b: int, special: Optional[Special] = None) -> bool:
        a, b = self.find(a), self.find(b)
        if a == b:
            return True
        na, nb = self.nodes[a], self.nodes[b]
        if na.kind == ANY:
            self.forward(a, b)
            return True
        if nb.kind == ANY:
            self.forward(b, a)
            return True
        if na.kind in (DISJ, JOIN) or nb.kind in (DISJ, JOIN):
            if special is None:
                raise ValueError("plain unification reached a disjunction")
            return special(a, b)
        if na.kind == ATOM and nb.kind == ATOM:
            if na.atom != nb.atom:
                return False
            self.forward(b, a)
            return True
        if na.kind == FEAT and nb.kind == FEAT:
            self.forward(b, a)
            for feat, child in list(nb.feats.items()):
                if feat in na.feats:
                    if not self.unify(na.feats[feat], child, special):
                        return False
                else:
                    self.add_feature(a, feat, child, feat in nb.native)
            return True
        return False

    # traversal helpers

    def reachable(self, root: int, *, into_special: bool = False) -> list[int]:
        seen: list[int] = []
        mark = set()
        stack = [self.find(root)]
        while stack:
            n = stack.pop()
            if n in mark:
                continue
            mark.add(n)
            seen.append(n)
            node = self.nodes[n]
            if node.kind == FEAT:
                stack.extend(self.find(c) for c in node.feats.values())
            elif into_special and node.kind == DISJ:
                stack.extend(self.find(c) for c in node.children.values())
            elif into_special and node.kind == JOIN:
                stack.extend(node.parts)
        return seen

    def contains_special(self, root: int) -> bool:
        return any(self.nodes[n].kind in (DISJ, JOIN) for n in self.reachable(root))

    def copy_subgraph(self, root: int, subst: Optional[dict[int, int]] = None) -> int:
        """Fresh copy of everything reachable from ``root`` (sharing kept).

        ``subst`` maps node ids to replacement roots that are copied in
        their place; special nodes are cloned shallowly.
        """
        subst = subst or {}
        copies: dict[int, int] = {}

        def go(n: int) -> int:
            n = self.find(n)
            if n in subst:
                return go(subst[n]) if subst[n] != n else self._shallow(n, copies)
            if n in copies:
                return copies[n]
            node = self.nodes[n]
            if node.kind != FEAT:
                return self._shallow(n, copies)
            fresh = Node(FEAT)
            fresh.native = set(node.native)
            fresh.label = node.label
            nid = self.add(fresh)
            copies[n] = nid
            for feat, child in node.feats.items():
                fresh.feats[feat] = go(child)
            return nid

        return go(root)

    def _shallow(self, n: int, copies: dict[int, int]) -> int:
        if n in copies:
            return copies[n]
        fresh = self.nodes[n].clone()
        fresh.fwd = None
        fresh.feats = {}
        nid = self.add(fresh)
        copies[n] = nid
        return nid

    # read-back

    def to_value(self, root: int, *,
                 special: Optional[Callable[[int, Callable[[int], object]], object]] = None,
                 native_first: bool = False) -> Value:
        """Read a node back into a value tree.

        Nodes reached more than once (or carrying a label) become a TagDef at
        the first visit in depth-first feature order and TagUse afterwards.
        ``special(node_id, emit)`` renders disj/join nodes and may return
        OMIT to drop the enclosing feature.  With ``native_first`` features
        present in the loaded entry keep their order and features added by
        unification follow in sorted order.
        """
        counts: dict[int, int] = {}

        def count(n: int) -> object:
            n = self.find(n)
            counts[n] = counts.get(n, 0) + 1
            if counts[n] > 1:
                return None
            node = self.nodes[n]
            if node.kind == FEAT:
                for child in node.feats.values():
                    count(child)
            elif node.kind in (DISJ, JOIN):
                if special is None:
                    raise ValueError("graph contains a disjunction")
                special(n, count)
            return None

        count(root)

        labels: dict[int, str] = {}
        taken: set[str] = set()
        wanted = {self.nodes[m].label for m in counts} - {None}
        fresh = 0

        def label_for(n: int) -> str:
            nonlocal fresh
            if n in labels:
                return labels[n]
            want = self.nodes[n].label
            if want is None or want in taken:
                while True:
                    fresh += 1
                    want = f"t{fresh}"
                    if want not in taken and want not in wanted:
                        break
            taken.add(want)
            labels[n] = want
            return want

        emitted: set[int] = set()

        def emit(n: int) -> object:
            n = self.find(n)
            node = self.nodes[n]
            tagged = counts.get(n, 0) > 1 or node.label is not None
            if n in emitted:
                return TagUse(label_for(n))
            emitted.add(n)
            if tagged:
                tag = label_for(n)
            if node.kind == ATOM:
                out: object = Atom(node.atom)
            elif node.kind == ANY:
                out = ANON
            elif node.kind == FEAT:
                feats = list(node.feats.items())
                if native_first:
                    native = [(f, c) for f, c in feats if f in node.native]
                    added = sorted((f, c) for f, c in feats if f not in node.native)
                    feats = native + added
                pairs = []
                for feat, child in feats:
                    v = emit(child)
                    if v is not OMIT:
                        pairs.append((feat, v))
                out = FS(tuple(pairs))
            else:
                out = special(n, emit)
                if out is OMIT:
                    return OMIT
            if tagged:
                return TagDef(tag, out)
            return out

        value = emit(root)
        return ANON if value is OMIT else value


# -- plain operations ---------------------------------------------------------


def unify_plain(a: Value, b: Value) -> Optional[Value]:
    """Unify two disjunction-free values; None on clash.

    Output keeps a's features first, then b's new ones.  Tags of the two
    operands live in separate scopes.
    """
    g = FSGraph()
    ra = g.build(a)
    rb = g.build(b)
    if not g.unify(ra, rb):
        return None
    return g.to_value(ra)


def unifiable(a: Value, b: Value) -> bool:
    g = FSGraph()
    return g.unify(g.build(a), g.build(b))


def canonical(value: Value, *, sort_features: bool = False) -> Value:
    """Normal form used for comparisons "up to structural equality".

    Tags are re-placed at first depth-first visit and renamed t1, t2, ...;
    optionally features are sorted.
    """
    g = FSGraph()
    root = g.build(value)
    for node in g.nodes:
        node.label = None
        if sort_features and node.kind == FEAT:
            node.feats = dict(sorted(node.feats.items()))
    return g.to_value(root)


def sort_features(value: Value) -> Value:
    """Recursively sort features; tags and residual disjunctions are kept."""
    if isinstance(value, FS):
        return FS(tuple(sorted((k, sort_features(v)) for k, v in value.features)))
    if isinstance(value, TagDef):
        return TagDef(value.tag, sort_features(value.value))
    if isinstance(value, Disj):
        return Disj(value.name, tuple((r, sort_features(v)) for r, v in value.options))
    return value


def contains(value: Value, kinds: tuple[type, ...]) -> bool:
    return any(isinstance(v, kinds) for v in iter_values(value))


def leaf_paths(value: Value) -> Iterable[Path]:
    """Paths to every non-FS position of a tag-free tree."""
    def go(v: Value, prefix: tuple[str, ...]):
        if isinstance(v, TagDef):
            v = v.value
        if isinstance(v, FS) and v.features:
            for feat, child in v.features:
                yield from go(child, prefix + (feat,))
        elif prefix:
            yield Path(prefix)
    return go(value, ())
