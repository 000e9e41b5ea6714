"""Conjunctive pattern queries over the fact store.

The query language is a small SELECT-only subset:
``SELECT ?u WHERE { HasCapability(?u, "visual") ^ Authenticated(?u, yes) }``
with an optional ``LIMIT n``.  Evaluation joins the where-atoms left to
right; results are a set of rows projected to the selected variables, sorted
lexicographically so LIMIT is deterministic.

The two composite query kinds, authentication and authorization, delegate to
the decision point so one wire message maps to one operation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

from . import pdp
from .facts import Constant, FactStore, Variable
from .rules import (
    CARET, EOF, IDENT, LBRACE, NUM, RBRACE, VAR,
    Atom, RuleSyntaxError, _Parser, tokenize,
)


class QueryError(ValueError):
    pass


@dataclass
class ConjunctiveQuery:
    select: List[str]
    where: List[Atom]
    limit: Optional[int] = None

    def where_variables(self) -> set:
        out = set()
        for atom in self.where:
            out |= atom.variables()
        return out


def parse_query(text: str) -> ConjunctiveQuery:
    """Parse ``SELECT ?v... WHERE { atom ^ atom ... } [LIMIT n]``."""
    parser = _Parser(tokenize(text))
    _expect_keyword(parser, "select")
    select = []
    while parser.peek().kind == VAR:
        select.append(parser.advance().value)
    if not select:
        raise parser.error("SELECT needs at least one variable",
                           expected=(VAR,))
    _expect_keyword(parser, "where")
    parser.expect(LBRACE)
    where = [parser.parse_atom()]
    while parser.peek().kind == CARET:
        parser.advance()
        where.append(parser.parse_atom())
    parser.expect(RBRACE)
    limit = None
    if parser.peek().kind == IDENT and parser.peek().value.lower() == "limit":
        parser.advance()
        token = parser.expect(NUM)
        limit = int(float(token.value))
        if limit <= 0:
            raise RuleSyntaxError("LIMIT must be positive", token.offset)
    parser.expect(EOF)
    return ConjunctiveQuery(select=select, where=where, limit=limit)


def _expect_keyword(parser: _Parser, keyword: str) -> None:
    token = parser.peek()
    if token.kind != IDENT or token.value.lower() != keyword:
        raise parser.error(f"expected {keyword.upper()}",
                           expected=(keyword.upper(),))
    parser.advance()


def format_query(q: ConjunctiveQuery) -> str:
    head = " ".join(f"?{name}" for name in q.select)
    body = " ^ ".join(atom.render() for atom in q.where)
    text = f"SELECT {head} WHERE {{ {body} }}"
    if q.limit is not None:
        text += f" LIMIT {q.limit}"
    return text


def _substitute(atom: Atom, binding: Dict[str, Constant]) -> Atom:
    terms = []
    for term in atom.terms:
        if isinstance(term, Variable) and term.name in binding:
            terms.append(binding[term.name])
        else:
            terms.append(term)
    return Atom(atom.predicate, tuple(terms))


def eval_query(store: FactStore, q: ConjunctiveQuery) -> List[Dict[str, Constant]]:
    """Rows satisfying every where-atom, projected to the select variables.

    Duplicates collapse; rows come back sorted by their rendered constants,
    and LIMIT truncates after the sort.
    """
    if not q.where:
        raise QueryError("query has an empty WHERE clause")
    missing = [v for v in q.select if v not in q.where_variables()]
    if missing:
        raise QueryError(
            f"select variable(s) not in WHERE: {', '.join('?' + v for v in missing)}")

    bindings: List[Dict[str, Constant]] = [{}]
    for atom in q.where:
        extended: List[Dict[str, Constant]] = []
        for binding in bindings:
            for match in store.match(_substitute(atom, binding)):
                merged = dict(binding)
                merged.update(match)
                extended.append(merged)
        bindings = extended
        if not bindings:
            break

    rows: Dict[tuple, Dict[str, Constant]] = {}
    for binding in bindings:
        row = {name: binding[name] for name in q.select}
        rows.setdefault(tuple(row[name].key() for name in q.select), row)
    ordered = sorted(rows.values(),
                     key=lambda r: tuple(r[name].render() for name in q.select))
    if q.limit is not None:
        ordered = ordered[:q.limit]
    return ordered


# ---------------------------------------------------------------------------
# Composite queries: one wire message, one decision-point operation.
# ---------------------------------------------------------------------------

def authn_query(store, user, features, *, rules, model, credentials,
                password: Optional[str] = None, tag: Optional[str] = None,
                trust_threshold: float = pdp.DEFAULT_TRUST_THRESHOLD,
                default_mean: str = pdp.DEFAULT_AUTH_MEAN,
                audit_log=None) -> pdp.AuthnResult:
    credential = None
    if password is not None:
        credential = pdp.Credential("password", password)
    elif tag is not None:
        credential = pdp.Credential("tag", tag)
    request = pdp.AuthnRequest(user=user, credential=credential,
                               features=features)
    return pdp.authenticate(request, store, rules, model, credentials,
                            trust_threshold=trust_threshold,
                            default_mean=default_mean, audit_log=audit_log)


def authz_query(store, user, service, device=None, context=None, *,
                rules, priority_table=None, audit_log=None) -> pdp.Decision:
    request = pdp.AuthzRequest(user=user, service=service, device=device,
                               context=dict(context or {}))
    return pdp.authorize(request, store, rules,
                         priority_table=priority_table, audit_log=audit_log)
