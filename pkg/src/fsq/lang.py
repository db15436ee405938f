"""Tokenizer and recursive-descent parser for fiber queries.

Grammar::

    query   := [IDENT '='] clause ('then' clause)*
    clause  := or_expr
    or_expr := and_expr ('or' and_expr)*
    and_expr:= unary ('and' unary)*
    unary   := 'not' unary | '(' clause ')' | atom
    atom    := IDENT '(' IDENT (',' IDENT)* (',' IDENT '=' NUMBER)* ')'

Keywords are case-insensitive, ``#`` starts a comment.  A query file may open
with ``@directive value`` lines (threshold, aggregation, combiner,
per_clause_threshold).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Union

from .relations import RELATION_ARITY

KEYWORDS = {"then": "THEN", "and": "AND", "or": "OR", "not": "NOT"}
PUNCT = {"(": "LPAREN", ")": "RPAREN", ",": "COMMA", "=": "EQUALS"}

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")

# name -> (lower bound, upper bound, required?)
ATOM_PARAMS = {
    "aperture": (0.0, 180.0),
    "margin": (0.0, math.inf),
    "radius": (0.0, math.inf),
    "d_in": (0.0, math.inf),
    "d_out": (0.0, math.inf),
    "n": (0.0, math.inf),
    "w": (0.0, math.inf),
}
_DIRECTIONAL_PARAMS = {"aperture", "margin"}
ALLOWED_PARAMS = {
    "anterior_of": _DIRECTIONAL_PARAMS,
    "posterior_of": _DIRECTIONAL_PARAMS,
    "inferior_of": _DIRECTIONAL_PARAMS,
    "superior_of": _DIRECTIONAL_PARAMS,
    "lateral_of": _DIRECTIONAL_PARAMS,
    "medial_of": _DIRECTIONAL_PARAMS,
    "crossing": {"radius"},
    "near": {"d_in", "d_out"},
    "between": {"aperture"},
    "connected_about": {"n", "w"},
}
REQUIRED_PARAMS = {"connected_about": {"n", "w"}}

DIRECTIVES = ("threshold", "aggregation", "combiner", "per_clause_threshold")


class QueryError(ValueError):
    """Lexing or parsing failure, located by line and column."""

    def __init__(self, message, line=None, column=None, source=None):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        super().__init__(str(self))

    def __str__(self):
        where = ":".join(str(x) for x in (self.source, self.line, self.column) if x is not None)
        return f"{where}: {self.message}" if where else self.message


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int

    @property
    def value(self):
        return float(self.text) if self.kind == "NUMBER" else self.text


def tokenize(text: str) -> list:
    """Split query text into tokens, ending with an EOF token."""
    tokens = []
    line, col, i = 1, 1, 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col, i = line + 1, 1, i + 1
            continue
        if ch.isspace():
            i, col = i + 1, col + 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in PUNCT:
            tokens.append(Token(PUNCT[ch], ch, line, col))
            i, col = i + 1, col + 1
            continue
        m = _IDENT.match(text, i)
        if m:
            word = m.group()
            kind = KEYWORDS.get(word.lower(), "IDENT")
            tokens.append(Token(kind, word, line, col))
        else:
            m = _NUMBER.match(text, i)
            if not m:
                raise QueryError(f"illegal character {ch!r}", line, col)
            tokens.append(Token("NUMBER", m.group(), line, col))
        i, col = m.end(), col + len(m.group())
    tokens.append(Token("EOF", "", line, col))
    return tokens


# -- AST ------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    relation: str
    args: tuple
    params: tuple = ()  # sorted (name, value) pairs

    def param(self, name, default=None):
        return dict(self.params).get(name, default)


@dataclass(frozen=True)
class Not:
    child: "Clause"


@dataclass(frozen=True)
class And:
    left: "Clause"
    right: "Clause"


@dataclass(frozen=True)
class Or:
    left: "Clause"
    right: "Clause"


Clause = Union[Atom, Not, And, Or]


@dataclass(frozen=True)
class Query:
    clauses: tuple
    name: str | None = None
    directives: dict = field(default_factory=dict, compare=False, hash=False)

    def atoms(self) -> list:
        """Distinct atoms in first-occurrence order."""
        seen = {}
        for c in self.clauses:
            for a in iter_atoms(c):
                seen.setdefault(a, None)
        return list(seen)


def iter_atoms(node):
    if isinstance(node, Atom):
        yield node
    elif isinstance(node, Not):
        yield from iter_atoms(node.child)
    else:
        yield from iter_atoms(node.left)
        yield from iter_atoms(node.right)


# -- parser -----------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k=1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return QueryError(msg, tok.line, tok.column)

    def expect(self, kind, what=None):
        tok = self.tok
        if tok.kind != kind:
            found = repr(tok.text) if tok.kind != "EOF" else "end of input"
            raise self.error(f"expected {what or kind}, found {found}")
        self.pos += 1
        return tok

    def query(self) -> Query:
        name = None
        if self.tok.kind == "IDENT" and self.peek().kind == "EQUALS":
            name = self.tok.text
            self.pos += 2
        clauses = [self.clause()]
        while self.tok.kind == "THEN":
            self.pos += 1
            clauses.append(self.clause())
        if self.tok.kind != "EOF":
            raise self.error(f"unexpected {self.tok.text!r} after clause")
        return Query(tuple(clauses), name)

    def clause(self):
        node = self.and_expr()
        while self.tok.kind == "OR":
            self.pos += 1
            node = Or(node, self.and_expr())
        return node

    def and_expr(self):
        node = self.unary()
        while self.tok.kind == "AND":
            self.pos += 1
            node = And(node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "NOT":
            self.pos += 1
            return Not(self.unary())
        if self.tok.kind == "LPAREN":
            self.pos += 1
            node = self.clause()
            self.expect("RPAREN", "')'")
            return node
        return self.atom()

    def atom(self) -> Atom:
        head = self.expect("IDENT", "relation name")
        rel = head.text
        if rel not in RELATION_ARITY:
            raise self.error(
                f"unknown relation {rel!r}; known: {', '.join(sorted(RELATION_ARITY))}", head)
        self.expect("LPAREN", "'('")
        args, params = [], {}
        while True:
            tok = self.expect("IDENT", "structure or parameter name")
            if self.tok.kind == "EQUALS":
                self.pos += 1
                num = self.expect("NUMBER", "number")
                self._add_param(rel, tok, float(num.text), params)
            elif params:
                raise self.error("structure names must precede parameters", tok)
            else:
                args.append(tok.text)
            if self.tok.kind == "COMMA":
                self.pos += 1
                continue
            self.expect("RPAREN", "',' or ')'")
            break
        arity = RELATION_ARITY[rel]
        if len(args) != arity:
            raise self.error(
                f"{rel} takes {arity} structure(s), got {len(args)}", head)
        missing = REQUIRED_PARAMS.get(rel, set()) - set(params)
        if missing:
            raise self.error(f"{rel} requires parameter(s) {', '.join(sorted(missing))}", head)
        if rel == "near" and "d_in" in params and "d_out" in params and params["d_in"] >= params["d_out"]:
            raise self.error("near needs d_in < d_out", head)
        return Atom(rel, tuple(args), tuple(sorted(params.items())))

    def _add_param(self, rel, tok, value, params):
        name = tok.text
        if name not in ALLOWED_PARAMS[rel]:
            allowed = ", ".join(sorted(ALLOWED_PARAMS[rel])) or "none"
            raise self.error(f"{rel} does not take parameter {name!r} (allowed: {allowed})", tok)
        if name in params:
            raise self.error(f"duplicate parameter {name!r}", tok)
        lo, hi = ATOM_PARAMS[name]
        if not (lo <= value <= hi) or (name in ("aperture", "radius", "w") and value == 0):
            raise self.error(f"parameter {name}={value:g} out of range", tok)
        params[name] = value


def parse(tokens) -> Query:
    """Parse a token list (or raw text) into a Query."""
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    return _Parser(list(tokens)).query()


def _parse_directive(name, arg, line):
    if name not in DIRECTIVES:
        raise QueryError(f"unknown directive @{name}", line, 1)
    if name in ("threshold", "per_clause_threshold"):
        try:
            value = float(arg)
        except ValueError:
            raise QueryError(f"@{name} needs a number, got {arg!r}", line, 1) from None
        if not 0.0 <= value <= 1.0:
            raise QueryError(f"@{name} must lie in [0, 1]", line, 1)
        return value
    choices = ("sup", "mean") if name == "aggregation" else ("min", "tnorm")
    if arg not in choices:
        raise QueryError(f"@{name} must be one of {', '.join(choices)}", line, 1)
    return arg


def parse_query_text(text: str, source: str | None = None) -> Query:
    """Parse a whole query file: header directives, then the clause chain."""
    lines = text.split("\n")
    directives = {}
    for no, raw in enumerate(lines, start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if not stripped.startswith("@"):
            break
        parts = stripped[1:].split()
        if len(parts) != 2:
            raise QueryError("directive needs exactly one value", no, 1, source)
        directives[parts[0]] = _parse_directive(parts[0], parts[1], no)
        lines[no - 1] = ""
    try:
        q = parse(tokenize("\n".join(lines)))
    except QueryError as exc:
        exc.source = source
        raise QueryError(exc.message, exc.line, exc.column, source) from None
    return Query(q.clauses, q.name, directives)


def load_query(path) -> Query:
    with open(path, encoding="utf-8") as fh:
        return parse_query_text(fh.read(), source=str(path))


# -- rendering ----------------------------------------------------------------------

def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def format_atom(a: Atom) -> str:
    parts = list(a.args) + [f"{k}={_num(v)}" for k, v in a.params]
    return f"{a.relation}({', '.join(parts)})"


_PREC = {Or: 1, And: 2, Not: 3, Atom: 4}


def format_clause(node, parent_prec: int = 0) -> str:
    """Render with the fewest parentheses that re-parse to the same tree."""
    if isinstance(node, Atom):
        return format_atom(node)
    if isinstance(node, Not):
        return "not " + format_clause(node.child, _PREC[Not])
    op = "or" if isinstance(node, Or) else "and"
    prec = _PREC[type(node)]
    text = f"{format_clause(node.left, prec)} {op} {format_clause(node.right, prec + 1)}"
    return f"({text})" if prec < parent_prec else text


def format_query(q: Query, directives: bool = True) -> str:
    out = []
    if directives:
        out += [f"@{k} {_num(v) if isinstance(v, float) else v}" for k, v in sorted(q.directives.items())]
    body = "\nthen ".join(format_clause(c) for c in q.clauses)
    out.append(f"{q.name} = {body}" if q.name else body)
    return "\n".join(out) + "\n"


def dump_ast(q: Query) -> str:
    """Indented tree rendering, stable across parse/format round trips."""
    out = [f"Query {q.name or '<anonymous>'} ({len(q.clauses)} clauses)"]
    for k, v in sorted(q.directives.items()):
        out.append(f"  @{k} {v}")

    def walk(node, depth):
        pad = "  " * depth
        if isinstance(node, Atom):
            out.append(f"{pad}Atom {format_atom(node)}")
        elif isinstance(node, Not):
            out.append(f"{pad}Not")
            walk(node.child, depth + 1)
        else:
            out.append(f"{pad}{type(node).__name__}")
            walk(node.left, depth + 1)
            walk(node.right, depth + 1)

    for i, c in enumerate(q.clauses, start=1):
        out.append(f"  Clause {i}")
        walk(c, 2)
    return "\n".join(out) + "\n"
