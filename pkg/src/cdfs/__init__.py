"""Controlled disjunctions over attribute-value feature structures."""

from __future__ import annotations

from .checker import Issue, Report, check
from .disjunct import ControlLink, Entry, Formula, collect_formulae, link_graph
from .engine import (EngineState, PropagationFailure, PropagationTrace, RankDomain,
                     fire_covariance, fire_selection, fixpoint, init, narrow, realize)
from .fscore import (ANON, FS, Anon, Atom, Disj, DisjRef, Path, TagDef, TagUse, Value,
                     get_path, unify_plain)
from .oracle import Model, assignment_space, expand_dnf, filter_models, project
from .textio import LexiconFile, ParseError, load, parse, serialize, to_json
from .unifier import Constraint, constrain, unify_entries

__version__ = "0.1.0"

__all__ = [
    "ANON", "Anon", "Atom", "FS", "Disj", "DisjRef", "TagDef", "TagUse", "Value", "Path",
    "get_path", "unify_plain",
    "ControlLink", "Entry", "Formula", "collect_formulae", "link_graph",
    "EngineState", "PropagationFailure", "PropagationTrace", "RankDomain",
    "init", "narrow", "fire_covariance", "fire_selection", "fixpoint", "realize",
    "Constraint", "constrain", "unify_entries",
    "Model", "expand_dnf", "filter_models", "project", "assignment_space",
    "Issue", "Report", "check",
    "LexiconFile", "ParseError", "load", "parse", "serialize", "to_json",
]
