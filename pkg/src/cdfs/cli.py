"""Command-line front end.

Exit codes: 0 success, 1 usage, parse or check errors, 2 propagation failure.
Data goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .checker import check
from .disjunct import Entry
from .engine import (ACTIVE, EngineState, PropagationFailure, format_ranks, init,
                     realize)
from .fscore import PathError
from .oracle import OracleLimit, expand_dnf, filter_models
from .textio import ParseError, format_value, load, state_to_dict
from .unifier import Constraint, constrain_all, unify_entries


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise _Usage(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cdfs", description="Controlled disjunctions over feature structures.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="static consistency checks")
    c.add_argument("file")
    c.add_argument("--strict", action="store_true", help="treat warnings as errors")

    def entry_args(sp, closure: bool = True):
        sp.add_argument("file")
        sp.add_argument("--entry", help="entry name (optional if the file has one entry)")
        sp.add_argument("--constrain", action="append", default=[], metavar="PATH=ATOM")
        if closure:
            sp.add_argument("--logical-closure", action="store_true",
                            help="also propagate control links backwards")

    r = sub.add_parser("resolve", help="apply constraints and show the result")
    entry_args(r)
    r.add_argument("--json", action="store_true")

    u = sub.add_parser("unify", help="unify two entries")
    u.add_argument("file")
    u.add_argument("--entry")
    u.add_argument("--with", dest="with_file", required=True, metavar="FILE2")
    u.add_argument("--entry2")
    u.add_argument("--logical-closure", action="store_true")
    u.add_argument("--json", action="store_true")

    d = sub.add_parser("dnf", help="enumerate all readings")
    entry_args(d, closure=False)
    d.add_argument("--json", action="store_true")

    x = sub.add_parser("explain", help="print the propagation trace")
    entry_args(x)
    return p


def _pick(path: str, name: Optional[str], strict: bool = True) -> Entry:
    lex = load(path, strict=strict)
    if name is None:
        if len(lex.entries) != 1:
            raise _Usage(f"{path} has {len(lex.entries)} entries; pass --entry")
        return lex.entries[0]
    try:
        return lex.entry(name)
    except KeyError:
        raise _Usage(f"{path}: no entry named {name!r}") from None


def _checked(path: str, name: Optional[str]) -> Entry:
    e = _pick(path, name)
    report = check(e)
    if not report.ok:
        raise _CheckFailed(report.lines())
    return e


class _CheckFailed(Exception):
    def __init__(self, lines: list[str]):
        self.lines = lines


def _constraints(texts: list[str]) -> list[Constraint]:
    out = []
    for t in texts:
        try:
            out.append(Constraint.parse(t))
        except ValueError as exc:
            raise _Usage(str(exc)) from None
    return out


def _print_state(s: EngineState, out) -> None:
    print(f"status: {s.status}", file=out)
    print("domains:", file=out)
    for name, d in s.domains.items():
        shown = format_ranks(d.possible) if d.status == ACTIVE else d.status
        print(f"  {name} {shown}", file=out)
    print("realized:", file=out)
    print(format_value(realize(s)), file=out)


def _report_failure(exc: PropagationFailure, err) -> int:
    where = f"{exc.reason} {exc.name}" if exc.name else exc.reason
    print(f"propagation failure: {where}", file=err)
    if exc.state.failure and exc.state.failure.detail:
        print(f"  {exc.state.failure.detail}", file=err)
    for ev in exc.state.trace:
        print(f"  {ev}", file=err)
    return 2


def _resolve_state(args) -> EngineState:
    e = _checked(args.file, args.entry)
    s = init(e, logical_closure=getattr(args, "logical_closure", False))
    return constrain_all(s, _constraints(args.constrain))


def cmd_check(args, out, err) -> int:
    lex = load(args.file, strict=False)
    failed = False
    for e in lex.entries:
        report = check(e)
        if args.strict:
            report = report.escalate()
        lines = report.lines()
        for line in lines:
            print(line, file=out)
        if not lines:
            print(f"{e.entry_name}: ok", file=out)
        failed = failed or not report.ok
    return 1 if failed else 0


def cmd_resolve(args, out, err) -> int:
    s = _resolve_state(args)
    if args.json:
        print(json.dumps(state_to_dict(s), indent=2), file=out)
    else:
        _print_state(s, out)
    return 0


def cmd_unify(args, out, err) -> int:
    a = _checked(args.file, args.entry)
    b = _checked(args.with_file, args.entry2)
    closure = args.logical_closure
    s = unify_entries(init(a, logical_closure=closure), init(b, logical_closure=closure))
    if args.json:
        print(json.dumps(state_to_dict(s), indent=2), file=out)
    else:
        _print_state(s, out)
    return 0


def cmd_dnf(args, out, err) -> int:
    e = _checked(args.file, args.entry)
    models = filter_models(expand_dnf(e), _constraints(args.constrain))
    if args.json:
        payload = [{"assignment": m.assignment,
                    "avm": format_value(m.avm, pretty=False)} for m in models]
        print(json.dumps({"models": payload, "count": len(models)}, indent=2), file=out)
        return 0
    print(f"{len(models)} model" + ("" if len(models) == 1 else "s"), file=out)
    for i, m in enumerate(models, 1):
        ranks = " ".join(f"{n}={r}" for n, r in m.assignment.items())
        print(f"[{i}] {ranks}", file=out)
        print("    " + format_value(m.avm, pretty=False), file=out)
    return 0


def cmd_explain(args, out, err) -> int:
    s = _resolve_state(args)
    for ev in s.trace:
        print(ev, file=out)
    return 0


COMMANDS = {"check": cmd_check, "resolve": cmd_resolve, "unify": cmd_unify,
            "dnf": cmd_dnf, "explain": cmd_explain}


def main(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.verb](args, out, err)
    except _Usage as exc:
        print(f"cdfs: {exc}", file=err)
        return 1
    except ParseError as exc:
        print(str(exc), file=err)
        return 1
    except _CheckFailed as exc:
        for line in exc.lines:
            print(line, file=err)
        return 1
    except (OSError, PathError, OracleLimit) as exc:
        print(f"cdfs: {exc}", file=err)
        return 1
    except PropagationFailure as exc:
        if getattr(args, "verb", None) == "explain":
            for ev in exc.state.trace:
                print(ev, file=out)
        return _report_failure(exc, err)


if __name__ == "__main__":
    sys.exit(main())
