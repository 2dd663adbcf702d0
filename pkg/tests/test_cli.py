from __future__ import annotations

import io
import json
import os
from pathlib import Path

import pytest

from cdfs.cli import main
from cdfs.engine import ACTIVE
from cdfs.oracle import expand_dnf, filter_models, project
from cdfs.textio import fixture_path, load
from cdfs.unifier import Constraint

GOLDEN = Path(__file__).parent / "golden"
DATA = Path(__file__).parent / "data"
REGEN = os.environ.get("CDFS_REGEN_GOLDEN") == "1"


def fx(name: str) -> str:
    return str(fixture_path(name))


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


CASES = {
    "resolve_mobile_fem": ("resolve", "mobile.cdl", "--entry", "mobile",
                           "--constrain", "index.gen=fem"),
    "resolve_mobile_masc": ("resolve", "mobile.cdl", "--entry", "mobile",
                            "--constrain", "index.gen=masc"),
    "resolve_den_dat": ("resolve", "den.cdl", "--constrain", "spec.case=dat"),
    "resolve_mobile_fem_json": ("resolve", "mobile.cdl", "--constrain", "index.gen=fem",
                                "--json"),
    "dnf_den": ("dnf", "den.cdl", "--entry", "den"),
    "dnf_mobile": ("dnf", "mobile.cdl"),
    "dnf_suffix_t": ("dnf", "suffix.cdl", "--constrain", "morph.ending=t"),
    "explain_suffix": ("explain", "suffix.cdl", "--constrain", "morph.ending=t",
                       "--constrain", "synsem.index.per=second"),
    "explain_suffix_ctrl": ("explain", "suffix_ctrl.cdl", "--constrain", "morph.ending=t"),
    "check_mobile": ("check", "mobile.cdl"),
    "check_taxonomy": ("check", "taxonomy.cdl"),
}


def expand(argv):
    return [fx(a) if a.endswith(".cdl") else a for a in argv]


@pytest.mark.parametrize("case", sorted(CASES))
def test_golden(case):
    code, out, err = run(*expand(CASES[case]))
    assert code == 0, err
    path = GOLDEN / f"{case}.txt"
    if REGEN:
        path.write_text(out)
    assert out == path.read_text()


def test_golden_unify():
    code, out, err = run("unify", fx("den.cdl"), "--entry", "den",
                         "--with", str(DATA / "plural.cdl"), "--entry2", "plural")
    assert code == 0, err
    path = GOLDEN / "unify_den_plural.txt"
    if REGEN:
        path.write_text(out)
    assert out == path.read_text()


def test_resolve_failure_exit_code():
    code, out, err = run("resolve", fx("mobile.cdl"), "--entry", "mobile",
                         "--constrain", "index.gen=neut")
    assert code == 2
    assert out == ""
    assert "empty-domain d2" in err


def test_explain_failure_prints_trace():
    code, out, err = run("explain", fx("mobile.cdl"), "--constrain", "index.gen=neut")
    assert code == 2
    assert out.startswith("1 watch[index.gen=neut] d2 {1,2} -> {}")


def test_check_errors_exit_one():
    code, out, err = run("check", str(DATA / "broken.cdl"))
    assert code == 1
    assert "mixed: error: arity-mismatch" in out
    assert "dangling: error: dangling-link-name" in out
    assert "ranks: error: rank-out-of-range" in out


def test_check_strict_escalates_warnings():
    assert run("check", fx("mobile.cdl"))[0] == 0
    code, out, _ = run("check", fx("mobile.cdl"), "--strict")
    assert code == 1 and "error: cycle" in out


def test_resolve_refuses_entries_with_errors():
    code, _, err = run("resolve", str(DATA / "broken.cdl"), "--entry", "mixed")
    assert code == 1


@pytest.mark.parametrize("argv", [
    ("resolve",),
    ("resolve", "taxonomy.cdl"),
    ("resolve", "mobile.cdl", "--entry", "nope"),
    ("resolve", "mobile.cdl", "--constrain", "index.gen"),
    ("resolve", "mobile.cdl", "--constrain", "index.nope=x"),
    ("dnf", "missing-file.cdl"),
    ("frobnicate",),
])
def test_usage_errors_exit_one(argv):
    code, out, err = run(*expand(argv))
    assert code == 1
    assert err


def test_parse_error_reports_position(tmp_path):
    bad = tmp_path / "bad.cdl"
    bad.write_text("(entry t\n  (fs (a (disj d1 x))))\n")
    code, _, err = run("check", str(bad))
    assert code == 1
    assert f"{bad}:2:11: disjunction d1: arity < 2" in err


def test_dnf_json():
    code, out, _ = run("dnf", fx("mobile.cdl"), "--json")
    data = json.loads(out)
    assert data["count"] == 3
    assert data["models"][2]["assignment"] == {"d1": 2, "d2": 2}


def test_logical_closure_flag(tmp_path):
    f = tmp_path / "link.cdl"
    f.write_text("(entry t (fs (a (disj s (ctrl x (-> t 1)) y)) (b (disj t u v))))")
    _, plain, _ = run("resolve", str(f), "--constrain", "b=v")
    _, closed, _ = run("resolve", str(f), "--constrain", "b=v", "--logical-closure")
    assert "  s {1,2}" in plain
    assert "  s {2}" in closed


def fixture_paths(e):
    from randgen import paths_of
    return sorted(paths_of(e.inline()))


def test_resolve_domains_cover_dnf_projection():
    """Every fixture entry, every single-atom constraint on every leaf path."""
    for file in ("mobile.cdl", "den.cdl", "suffix.cdl", "suffix_ctrl.cdl", "taxonomy.cdl"):
        for e in load(fixture_path(file)).entries:
            atoms = sorted({str(a) for a in _atoms(e)})
            for path in fixture_paths(e):
                for atom in atoms[:6]:
                    text = ".".join(path) + "=" + atom
                    rc, out, _ = run("resolve", fx(file), "--entry", e.entry_name,
                                     "--constrain", text, "--json")
                    models = filter_models(expand_dnf(e), [Constraint.parse(text)])
                    if rc == 2:
                        assert models == [], (e.entry_name, text)
                        continue
                    assert rc == 0
                    domains = json.loads(out)["domains"]
                    for name, ranks in project(models).items():
                        d = domains[name]
                        assert d["status"] == ACTIVE and ranks <= set(d["possible"]), \
                            (e.entry_name, text, name)


def _atoms(e):
    from cdfs.fscore import Atom, iter_values
    out = set()
    for v in [e.skeleton] + [d for f in e.formulae for d in f.disjuncts]:
        out |= {x.symbol for x in iter_values(v) if isinstance(x, Atom)}
    return out
