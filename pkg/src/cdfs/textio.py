"""The ``.cdl`` lexicon format.

::

    entry := (entry NAME value)
    value := ATOM | _ | (fs (FEAT value)*) | (disj DNAME value value+)
           | (tag TAG value) | #TAG | (ctrl value (-> DNAME RANK)+)

``ctrl`` may only wrap a direct disjunct of ``disj``.  Ranks are positional
and 1-based.  Repeating a DNAME across several ``disj`` forms of one entry
makes those formulae covariant.  ``;`` starts a comment.
"""

from __future__ import annotations

import importlib.resources
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .disjunct import ControlLink, Entry, Formula
from .fscore import (ANON, FS, Anon, Atom, Disj, DisjRef, Path, TagDef, TagUse,
                     Value)

CDFS_VERSION = "1.0"
WIDTH = 78

_TOKEN = re.compile(r"""
    (?P<nl>\n)
  | (?P<ws>[ \t\r\f]+)
  | (?P<comment>;[^\n]*)
  | (?P<lp>\()
  | (?P<rp>\))
  | (?P<arrow>->)
  | (?P<tag>\#[A-Za-z][A-Za-z0-9_-]*)
  | (?P<int>[0-9]+)
  | (?P<ident>[A-Za-z][A-Za-z0-9_-]*)
  | (?P<anon>_(?![A-Za-z0-9_-]))
  | (?P<bad>.)
""", re.VERBOSE)


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def format(self, source: str = "<input>") -> str:
        return f"{source}:{self.line}:{self.col}: {self.message}"


class ParseError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic], source: str = "<input>"):
        self.diagnostics = diagnostics
        self.source = source
        super().__init__("\n".join(d.format(source) for d in diagnostics))


@dataclass
class LexiconFile:
    entries: list[Entry]
    # (entry name, formula id or "") -> (line, col)
    positions: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)

    def entry(self, name: str) -> Entry:
        for e in self.entries:
            if e.entry_name == name:
                return e
        raise KeyError(name)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


class _Syntax(Exception):
    pass


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, line_start = 1, 0
    for m in _TOKEN.finditer(text):
        kind = m.lastgroup
        col = m.start() - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
            continue
        if kind in ("ws", "comment"):
            continue
        toks.append(_Tok(kind, m.group(), line, col))
    toks.append(_Tok("eof", "", line, len(text) - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, strict: bool):
        self.toks = _tokenize(text)
        self.i = 0
        self.strict = strict
        self.diags: list[Diagnostic] = []
        self.positions: dict[tuple[str, str], tuple[int, int]] = {}

    # token helpers

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def fail(self, tok: _Tok, message: str):
        self.diags.append(Diagnostic(tok.line, tok.col, message))
        raise _Syntax

    def expect(self, kind: str, what: str) -> _Tok:
        tok = self.next()
        if tok.kind != kind:
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            self.fail(tok, f"expected {what}, found {found}")
        return tok

    def note(self, tok: _Tok, message: str) -> None:
        self.diags.append(Diagnostic(tok.line, tok.col, message))

    # grammar

    def file(self) -> list[Entry]:
        entries = []
        seen: dict[str, _Tok] = {}
        try:
            while self.peek().kind != "eof":
                start = self.peek()
                entry = self.entry()
                if entry.entry_name in seen:
                    self.note(start, f"duplicate entry name {entry.entry_name!r}")
                seen[entry.entry_name] = start
                entries.append(entry)
        except _Syntax:
            pass
        return entries

    def entry(self) -> Entry:
        start = self.expect("lp", "'('")
        head = self.expect("ident", "'entry'")
        if head.text != "entry":
            self.fail(head, f"expected 'entry', found {head.text!r}")
        name = self.expect("ident", "entry name").text
        self.positions[(name, "")] = (start.line, start.col)
        self.formulae: list[Optional[Formula]] = []
        self.counters: dict[str, int] = {}
        self.tag_defs: dict[str, _Tok] = {}
        self.tag_uses: list[_Tok] = []
        self.arrows: list[tuple[_Tok, str, int]] = []
        self.entry_name = name
        skeleton = self.value((), in_disjunct=False)
        self.expect("rp", "')' closing entry")
        formulae = tuple(f for f in self.formulae if f is not None)
        entry = Entry(name, skeleton, formulae)
        if self.strict:
            self.referential_checks(entry)
        return entry

    def referential_checks(self, entry: Entry) -> None:
        arities: dict[str, int] = {}
        for f in entry.formulae:
            arities.setdefault(f.name, f.arity)
        for tok, target, rank in self.arrows:
            if target not in arities:
                self.note(tok, f"unknown disjunction name {target!r}")
            elif not 1 <= rank <= arities[target]:
                self.note(tok, f"rank {rank} out of range for {target} "
                               f"(arity {arities[target]})")
        for tok in self.tag_uses:
            if tok.text[1:] not in self.tag_defs:
                self.note(tok, f"undefined tag {tok.text}")

    def value(self, path: tuple[str, ...], in_disjunct: bool) -> Value:
        tok = self.next()
        if tok.kind == "ident":
            return Atom(tok.text)
        if tok.kind == "anon":
            return ANON
        if tok.kind == "tag":
            if in_disjunct:
                self.note(tok, "tags are not allowed inside a disjunct")
            self.tag_uses.append(tok)
            return TagUse(tok.text[1:])
        if tok.kind != "lp":
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            self.fail(tok, f"expected a value, found {found}")
        head = self.expect("ident", "form name")
        if head.text == "fs":
            return self.fs(path, in_disjunct)
        if head.text == "disj":
            return self.disj(head, path)
        if head.text == "tag":
            name = self.expect("ident", "tag name")
            if in_disjunct:
                self.note(name, "tags are not allowed inside a disjunct")
            if name.text in self.tag_defs:
                self.note(name, f"tag #{name.text} defined twice")
            self.tag_defs[name.text] = name
            inner = self.value(path, in_disjunct)
            self.expect("rp", "')' closing tag")
            return TagDef(name.text, inner)
        if head.text == "ctrl":
            self.fail(head, "ctrl is only allowed as a disjunct of disj")
        self.fail(head, f"unknown form {head.text!r}")

    def fs(self, path: tuple[str, ...], in_disjunct: bool) -> FS:
        feats: list[tuple[str, Value]] = []
        seen = set()
        while self.peek().kind == "lp":
            self.next()
            feat = self.expect("ident", "feature name")
            if feat.text in seen:
                self.note(feat, f"duplicate feature {feat.text!r}")
            seen.add(feat.text)
            v = self.value(path + (feat.text,), in_disjunct)
            self.expect("rp", "')' closing feature")
            if feat.text not in {k for k, _ in feats}:
                feats.append((feat.text, v))
        self.expect("rp", "')' closing fs")
        return FS(tuple(feats))

    def disj(self, head: _Tok, path: tuple[str, ...]) -> DisjRef:
        name = self.expect("ident", "disjunction name").text
        k = self.counters.get(name, 0) + 1
        self.counters[name] = k
        fid = f"{name}.{k}"
        slot = len(self.formulae)
        self.formulae.append(None)
        self.positions[(self.entry_name, fid)] = (head.line, head.col)
        disjuncts: list[Value] = []
        controls: list[tuple[tuple[str, int], ...]] = []
        while self.peek().kind != "rp":
            if self.peek().kind == "eof":
                self.expect("rp", "')' closing disj")
            d, ctrl = self.disjunct(path)
            disjuncts.append(d)
            controls.append(ctrl)
        self.next()
        if len(disjuncts) < 2:
            self.note(head, f"disjunction {name}: arity < 2")
        self.formulae[slot] = Formula(fid, name, Path(path), tuple(disjuncts),
                                      tuple(controls))
        return DisjRef(name, fid)

    def disjunct(self, path: tuple[str, ...]) -> tuple[Value, tuple[tuple[str, int], ...]]:
        if (self.peek().kind == "lp" and self.toks[self.i + 1].kind == "ident"
                and self.toks[self.i + 1].text == "ctrl"):
            self.next()
            self.next()
            inner = self.value(path, in_disjunct=True)
            ctrl: list[tuple[str, int]] = []
            while self.peek().kind == "lp":
                self.next()
                arrow = self.expect("arrow", "'->'")
                target = self.expect("ident", "disjunction name").text
                rank_tok = self.expect("int", "rank")
                rank = int(rank_tok.text)
                if rank < 1:
                    self.note(rank_tok, "ranks start at 1")
                self.expect("rp", "')' closing control")
                self.arrows.append((arrow, target, rank))
                ctrl.append((target, rank))
            if not ctrl:
                self.fail(self.peek(), "ctrl needs at least one (-> DNAME RANK)")
            self.expect("rp", "')' closing ctrl")
            return inner, tuple(ctrl)
        return self.value(path, in_disjunct=True), ()


def parse(text: str, *, strict: bool = True, source: str = "<input>") -> LexiconFile:
    """Parse lexicon text.

    With ``strict`` (the default) control links naming unknown disjunctions
    or out-of-range ranks and undefined tags are reported as diagnostics;
    without it they are left for the checker.
    """
    p = _Parser(text, strict)
    entries = p.file()
    if p.diags:
        raise ParseError(sorted(p.diags, key=lambda d: (d.line, d.col)), source)
    return LexiconFile(entries, p.positions)


def parse_entry(text: str, *, strict: bool = True) -> Entry:
    lex = parse(text, strict=strict)
    if len(lex.entries) != 1:
        raise ValueError(f"expected one entry, found {len(lex.entries)}")
    return lex.entries[0]


def fixture_path(name: str):
    """Location of a bundled example lexicon."""
    return importlib.resources.files("cdfs") / "fixtures" / name


def load(path, *, strict: bool = True) -> LexiconFile:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), strict=strict, source=str(path))


# -- serialization ------------------------------------------------------------


def _flat(v: Value, table: dict[str, Formula]) -> str:
    if isinstance(v, Atom):
        return v.symbol
    if isinstance(v, Anon):
        return "_"
    if isinstance(v, TagUse):
        return f"#{v.tag}"
    if isinstance(v, TagDef):
        return f"(tag {v.tag} {_flat(v.value, table)})"
    if isinstance(v, FS):
        return "(fs" + "".join(f" ({k} {_flat(c, table)})" for k, c in v.features) + ")"
    if isinstance(v, DisjRef):
        f = table[v.formula_id]
        return "(disj " + f.name + "".join(
            " " + _flat_disjunct(d, c, table) for d, c in zip(f.disjuncts, f.controls)) + ")"
    if isinstance(v, Disj):
        return "(disj " + v.name + "".join(" " + _flat(d, table) for _, d in v.options) + ")"
    raise TypeError(f"cannot serialize {v!r}")


def _flat_disjunct(d: Value, ctrl, table) -> str:
    if not ctrl:
        return _flat(d, table)
    arrows = "".join(f" (-> {t} {r})" for t, r in ctrl)
    return f"(ctrl {_flat(d, table)}{arrows})"


def _render(v: Value, table: dict[str, Formula], indent: int, tail: int = 0) -> str:
    """Pretty form; ``tail`` counts the closing parens that follow on the line."""
    flat = _flat(v, table)
    if indent + len(flat) + tail <= WIDTH:
        return flat
    if isinstance(v, FS) and v.features:
        pad = " " * (indent + 4)
        items = []
        last = len(v.features) - 1
        for i, (k, c) in enumerate(v.features):
            closers = 1 + (tail + 1 if i == last else 0)
            items.append(f"({k} {_render(c, table, indent + 4 + len(k) + 2, closers)})")
        return "(fs " + ("\n" + pad).join(items) + ")"
    if isinstance(v, TagDef):
        return f"(tag {v.tag} {_render(v.value, table, indent + 6 + len(v.tag), tail + 1)})"
    if isinstance(v, (DisjRef, Disj)):
        if isinstance(v, DisjRef):
            f = table[v.formula_id]
            name, opts = f.name, list(zip(f.disjuncts, f.controls))
        else:
            name, opts = v.name, [(d, ()) for _, d in v.options]
        pad = " " * (indent + 2)
        items = []
        last = len(opts) - 1
        for i, (d, ctrl) in enumerate(opts):
            closers = tail + 1 if i == last else 0
            if ctrl:
                arrows = "".join(f" (-> {t} {r})" for t, r in ctrl)
                inner = _render(d, table, indent + 8, len(arrows) + 1 + closers)
                items.append(f"(ctrl {inner}{arrows})")
            else:
                items.append(_render(d, table, indent + 2, closers))
        return f"(disj {name}\n{pad}" + ("\n" + pad).join(items) + ")"
    return flat


def format_value(value: Value, formulae: Iterable[Formula] = (), *, pretty: bool = True) -> str:
    table = {f.id: f for f in formulae}
    return _render(value, table, 0) if pretty else _flat(value, table)


def serialize(entry: Entry, *, pretty: bool = True) -> str:
    table = entry.formula_by_id
    if not pretty:
        return f"(entry {entry.entry_name} {_flat(entry.skeleton, table)})"
    head = f"(entry {entry.entry_name}"
    flat = f"{head} {_flat(entry.skeleton, table)})"
    if len(flat) <= WIDTH:
        return flat
    return f"{head}\n  {_render(entry.skeleton, table, 2, 1)})"


def serialize_file(entries: Iterable[Entry]) -> str:
    return "\n\n".join(serialize(e) for e in entries) + "\n"


# -- JSON -----------------------------------------------------------------------


def _ranks(s) -> list[int]:
    return sorted(s)


def state_to_dict(state) -> dict:
    from .engine import realize

    failed = state.failure is not None
    domains = {
        name: {"arity": d.arity, "possible": _ranks(d.possible), "status": d.status}
        for name, d in state.domains.items()
    }
    formulae = list(state.index.formulae.values())
    return {
        "cdfs_version": CDFS_VERSION,
        "entries": [e.entry_name for e in state.entries],
        "status": state.status,
        "failure": None if not failed else {
            "reason": state.failure.reason,
            "name": state.failure.name,
            "detail": state.failure.detail,
        },
        "skeleton": [serialize(e, pretty=False) for e in state.entries],
        "constraints": list(state.constraints),
        "domains": domains,
        "realized": None if failed else format_value(realize(state), pretty=False),
        "caches": {} if failed else {
            fid: {str(r): format_value(v, pretty=False) for r, v in ranks.items()}
            for fid, ranks in state.caches().items()
        },
        "trace": [
            {"step": ev.step, "cause": ev.cause, "name": ev.name, "kind": ev.kind,
             "before": _ranks(ev.before), "after": _ranks(ev.after)}
            for ev in state.trace.events
        ],
        "formulae": [f.id for f in formulae],
    }


def to_json(state) -> str:
    return json.dumps(state_to_dict(state), indent=2)
