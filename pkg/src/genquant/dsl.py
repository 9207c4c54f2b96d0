"""Parser for coordinate-system documents (``.gq`` files).

A document is a sequence of statements separated by newlines or ``;``:

    coordsys spherical
    coords: r, theta, phi
    range r (0, inf)
    range theta (0, pi)
    range phi (0, 2*pi) periodic
    map: r*sin(theta)*cos(phi), r*sin(theta)*sin(phi), r*cos(theta)
    potential: V(r)

``factors: h1, h2, h3`` supplies scale factors directly instead of a map
(exactly one of the two blocks must be present).  Assignment sugar is
accepted for single components: ``h2 = r`` adds a factors entry, ``x =
r*cos(theta)`` a map entry.  Comments run from ``#`` to end of line.

Expressions are infix arithmetic with ``^`` for powers (exponents must be
rational constants), calls of sin/cos/tan/cot/exp/log/sqrt, the constant
``pi``, and exact rational numbers (decimals are exact: 0.5 is 1/2).  In
potential expressions a call of an unknown name, like ``V(r)``, denotes an
unspecified function of the listed coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .coords import (
    Coordinate,
    CoordinateSystem,
    RESERVED_NAMES,
    RESERVED_PREFIXES,
    system_from_factors,
    system_from_map,
)
from .expr import (
    Expr,
    FUNC_KINDS,
    Rat,
    add,
    evaluate,
    field,
    free_symbols,
    func,
    mul,
    pow_,
    rat,
    sym,
)

KEYWORDS = {"coordsys", "coords", "map", "factors", "range", "potential", "periodic"}
FACTOR_TARGETS = ("h1", "h2", "h3")
MAP_TARGETS = {"x": 0, "y": 1, "z": 2, "x1": 0, "x2": 1, "x3": 2}


class ParseError(Exception):
    def __init__(self, message, line, col, expected=None):
        self.message = message
        self.line = line
        self.col = col
        self.expected = expected or []
        exp = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at line {line}, column {col}{exp}")


class SemanticError(ParseError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # name | number | op | newline | end
    text: str
    line: int
    col: int


def tokenize(source: str):
    tokens = []
    line, col = 1, 1
    i = 0
    n = len(source)
    while i < n:
        c = source[i]
        if c == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        if c == "\n":
            tokens.append(Token("newline", "\n", line, col))
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (source[j].isdigit() or (source[j] == "." and not seen_dot)):
                if source[j] == ".":
                    seen_dot = True
                j += 1
            tokens.append(Token("number", source[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(Token("name", source[i:j], line, col))
            col += j - i
            i = j
            continue
        if c in "+-*/^(),:;=":
            tokens.append(Token("op", c, line, col))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    tokens.append(Token("end", "", line, col))
    return tokens


@dataclass(frozen=True)
class CoordDecl:
    name: str
    lo: Expr | None = None  # None = -infinity
    hi: Expr | None = None  # None = +infinity
    periodic: bool = False

    def bounds(self):
        lo = -math.inf if self.lo is None else float(evaluate(self.lo, {}).real)
        hi = math.inf if self.hi is None else float(evaluate(self.hi, {}).real)
        return lo, hi


@dataclass(frozen=True)
class CoordSysDocument:
    name: str
    coords: tuple
    map_exprs: tuple | None
    factor_exprs: tuple | None
    potential: Expr | None

    @property
    def names(self):
        return tuple(c.name for c in self.coords)


class _Parser:
    def __init__(self, tokens, coord_names=None, allow_fields=False):
        self.tokens = tokens
        self.pos = 0
        self.coord_names = coord_names
        self.allow_fields = allow_fields

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "end":
            self.pos += 1
        return t

    def expect_op(self, text) -> Token:
        t = self.peek()
        if t.kind != "op" or t.text != text:
            raise ParseError(
                f"unexpected {describe(t)}", t.line, t.col, expected=[repr(text)]
            )
        return self.advance()

    def at_op(self, text) -> bool:
        t = self.peek()
        return t.kind == "op" and t.text == text

    def skip_newlines(self):
        while self.peek().kind == "newline":
            self.advance()

    # --- expressions -------------------------------------------------

    def parse_expr(self) -> Expr:
        return self._additive()

    def _additive(self) -> Expr:
        out = self._multiplicative()
        while self.at_op("+") or self.at_op("-"):
            op = self.advance().text
            rhs = self._multiplicative()
            out = add(out, rhs if op == "+" else mul(-1, rhs))
        return out

    def _multiplicative(self) -> Expr:
        out = self._unary()
        while self.at_op("*") or self.at_op("/"):
            op = self.advance().text
            rhs = self._unary()
            out = mul(out, rhs if op == "*" else pow_(rhs, -1))
        return out

    def _unary(self) -> Expr:
        if self.at_op("-"):
            self.advance()
            return mul(-1, self._unary())
        if self.at_op("+"):
            self.advance()
            return self._unary()
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        if self.at_op("^"):
            caret = self.advance()
            exponent = self._unary() if self.at_op("-") else self._power()
            if not isinstance(exponent, Rat):
                raise SemanticError(
                    "exponent must be a rational constant", caret.line, caret.col
                )
            return pow_(base, exponent)
        return base

    def _atom(self) -> Expr:
        t = self.peek()
        if t.kind == "number":
            self.advance()
            return rat(Fraction(t.text))
        if t.kind == "op" and t.text == "(":
            self.advance()
            inner = self.parse_expr()
            self.expect_op(")")
            return inner
        if t.kind == "name":
            self.advance()
            if self.at_op("("):
                return self._call(t)
            return self._name_atom(t)
        raise ParseError(
            f"unexpected {describe(t)}", t.line, t.col,
            expected=["a number", "a name", "'('"],
        )

    def _call(self, name_tok: Token) -> Expr:
        self.expect_op("(")
        args = [self.parse_expr()]
        while self.at_op(","):
            self.advance()
            args.append(self.parse_expr())
        self.expect_op(")")
        if name_tok.text in FUNC_KINDS:
            if len(args) != 1:
                raise SemanticError(
                    f"{name_tok.text} takes one argument", name_tok.line, name_tok.col
                )
            return func(name_tok.text, args[0])
        if not self.allow_fields:
            raise SemanticError(
                f"unknown function {name_tok.text!r}", name_tok.line, name_tok.col
            )
        deps = []
        for a in args:
            names = sorted(free_symbols(a))
            if len(names) != 1 or sym(names[0]) != a:
                raise SemanticError(
                    f"arguments of {name_tok.text!r} must be coordinate names",
                    name_tok.line,
                    name_tok.col,
                )
            deps.append(names[0])
        if self.coord_names is not None:
            for d in deps:
                if d not in self.coord_names:
                    raise SemanticError(
                        f"unknown coordinate {d!r}", name_tok.line, name_tok.col
                    )
        return field(name_tok.text, None, deps=tuple(deps))

    def _name_atom(self, t: Token) -> Expr:
        if t.text == "pi":
            return sym("pi")
        if t.text in KEYWORDS:
            raise ParseError(
                f"keyword {t.text!r} cannot appear in an expression", t.line, t.col
            )
        if self.coord_names is not None and t.text not in self.coord_names:
            raise SemanticError(f"unknown symbol {t.text!r}", t.line, t.col)
        return sym(t.text)


def describe(t: Token) -> str:
    if t.kind == "end":
        return "end of input"
    if t.kind == "newline":
        return "end of line"
    return f"{t.kind} {t.text!r}"


def parse_expression(source: str, coord_names=None, allow_fields=False) -> Expr:
    """Parse a standalone expression (used for --potential and tests)."""
    tokens = [t for t in tokenize(source) if t.kind != "newline"]
    p = _Parser(tokens, coord_names=coord_names, allow_fields=allow_fields)
    out = p.parse_expr()
    t = p.peek()
    if t.kind != "end":
        raise ParseError(f"unexpected {describe(t)}", t.line, t.col)
    return out


def parse_document(source: str) -> CoordSysDocument:
    """Parse a coordinate-system document; raises ParseError with
    line/column on malformed input."""
    tokens = tokenize(source)
    p = _Parser(tokens)
    name = None
    coord_order: list = []
    ranges: dict = {}
    map_exprs = None
    factor_exprs = None
    map_assign: dict = {}
    factor_assign: dict = {}
    potential_src = None

    def end_statement():
        t = p.peek()
        if t.kind in ("newline",) or (t.kind == "op" and t.text == ";"):
            p.advance()
            return
        if t.kind == "end":
            return
        raise ParseError(
            f"unexpected {describe(t)}", t.line, t.col, expected=["';'", "end of line"]
        )

    while True:
        p.skip_newlines()
        t = p.peek()
        if t.kind == "end":
            break
        if t.kind != "name":
            raise ParseError(
                f"unexpected {describe(t)}", t.line, t.col, expected=["a statement"]
            )
        word = t.text
        if word == "coordsys":
            p.advance()
            nt = p.advance()
            if nt.kind != "name":
                raise ParseError(
                    f"unexpected {describe(nt)}", nt.line, nt.col, expected=["a name"]
                )
            name = nt.text
            end_statement()
        elif word == "coords":
            p.advance()
            p.expect_op(":")
            while True:
                nt = p.advance()
                if nt.kind != "name":
                    raise ParseError(
                        f"unexpected {describe(nt)}",
                        nt.line,
                        nt.col,
                        expected=["a coordinate name"],
                    )
                if nt.text in (c[0] for c in coord_order):
                    raise SemanticError(
                        f"duplicate coordinate {nt.text!r}", nt.line, nt.col
                    )
                if nt.text in RESERVED_NAMES or nt.text.startswith(RESERVED_PREFIXES):
                    raise SemanticError(
                        f"coordinate name {nt.text!r} is reserved", nt.line, nt.col
                    )
                coord_order.append((nt.text, nt))
                if p.at_op(","):
                    p.advance()
                    continue
                break
            end_statement()
        elif word == "range":
            p.advance()
            nt = p.advance()
            if nt.kind != "name":
                raise ParseError(
                    f"unexpected {describe(nt)}", nt.line, nt.col, expected=["a name"]
                )
            p.expect_op("(")
            lo = _range_bound(p)
            p.expect_op(",")
            hi = _range_bound(p)
            p.expect_op(")")
            periodic = False
            if p.peek().kind == "name" and p.peek().text == "periodic":
                p.advance()
                periodic = True
            ranges[nt.text] = (lo, hi, periodic, nt)
            end_statement()
        elif word == "map":
            p.advance()
            p.expect_op(":")
            map_exprs = _expr_list(p)
            end_statement()
        elif word == "factors":
            p.advance()
            p.expect_op(":")
            factor_exprs = _expr_list(p)
            end_statement()
        elif word == "potential":
            p.advance()
            p.expect_op(":")
            p.allow_fields = True
            potential_src = p.parse_expr()
            p.allow_fields = False
            end_statement()
        elif word in FACTOR_TARGETS or word in MAP_TARGETS:
            p.advance()
            p.expect_op("=")
            e = p.parse_expr()
            if word in FACTOR_TARGETS:
                factor_assign[FACTOR_TARGETS.index(word)] = e
            else:
                map_assign[MAP_TARGETS[word]] = e
            end_statement()
        else:
            raise ParseError(
                f"unknown statement {word!r}",
                t.line,
                t.col,
                expected=sorted(KEYWORDS),
            )

    if factor_assign:
        if factor_exprs is not None:
            raise SemanticError("factors given both as a block and assignments", 1, 1)
        factor_exprs = [factor_assign[k] for k in sorted(factor_assign)]
    if map_assign:
        if map_exprs is not None:
            raise SemanticError("map given both as a block and assignments", 1, 1)
        map_exprs = [map_assign[k] for k in sorted(map_assign)]

    if not coord_order:
        raise SemanticError("no coordinates declared", 1, 1)
    if (map_exprs is None) == (factor_exprs is None):
        raise SemanticError(
            "exactly one of a map block or a factors block is required", 1, 1
        )
    coord_names = [c[0] for c in coord_order]
    if len(coord_names) not in (2, 3):
        tok = coord_order[0][1]
        raise SemanticError("declare 2 or 3 coordinates", tok.line, tok.col)
    for rname, (_, _, _, tok) in ranges.items():
        if rname not in coord_names:
            raise SemanticError(
                f"range given for undeclared coordinate {rname!r}", tok.line, tok.col
            )
    exprs = map_exprs if map_exprs is not None else factor_exprs
    if factor_exprs is not None and len(factor_exprs) != len(coord_names):
        raise SemanticError("one scale factor per coordinate is required", 1, 1)
    if map_exprs is not None and len(map_exprs) != len(coord_names):
        raise SemanticError("one map component per coordinate is required", 1, 1)
    allowed = set(coord_names) | {"pi"}
    for e in list(exprs) + ([potential_src] if potential_src is not None else []):
        unknown = free_symbols(e) - allowed
        if unknown:
            raise SemanticError(f"unknown symbol {sorted(unknown)[0]!r}", 1, 1)

    decls = []
    for cname, _tok in coord_order:
        lo, hi, periodic, _ = ranges.get(cname, (None, None, False, None))
        decls.append(CoordDecl(cname, lo, hi, periodic))
    return CoordSysDocument(
        name=name or "unnamed",
        coords=tuple(decls),
        map_exprs=tuple(map_exprs) if map_exprs is not None else None,
        factor_exprs=tuple(factor_exprs) if factor_exprs is not None else None,
        potential=potential_src,
    )


def _range_bound(p: _Parser) -> Expr | None:
    t = p.peek()
    if t.kind == "name" and t.text == "inf":
        p.advance()
        return None
    if t.kind == "op" and t.text == "-":
        nxt = p.tokens[p.pos + 1]
        if nxt.kind == "name" and nxt.text == "inf":
            p.advance()
            p.advance()
            return None
    return p.parse_expr()


def _expr_list(p: _Parser):
    out = [p.parse_expr()]
    while p.at_op(","):
        p.advance()
        out.append(p.parse_expr())
    return out


def build_system(doc: CoordSysDocument, seed: int | None = None) -> CoordinateSystem:
    """Construct the coordinate system a document describes."""
    coords = []
    for d in doc.coords:
        lo, hi = d.bounds()
        coords.append(Coordinate(d.name, lo, hi, d.periodic))
    if doc.map_exprs is not None:
        return system_from_map(doc.name, coords, doc.map_exprs, seed=seed)
    return system_from_factors(doc.name, coords, doc.factor_exprs, seed=seed)


def render_document(doc: CoordSysDocument) -> str:
    """Canonical source text; parsing it again yields an equal document."""
    from .render import expr_text

    lines = [f"coordsys {doc.name}"]
    lines.append("coords: " + ", ".join(doc.names))
    for c in doc.coords:
        if c.lo is None and c.hi is None and not c.periodic:
            continue
        lo = "-inf" if c.lo is None else expr_text(c.lo)
        hi = "inf" if c.hi is None else expr_text(c.hi)
        suffix = " periodic" if c.periodic else ""
        lines.append(f"range {c.name} ({lo}, {hi}){suffix}")
    if doc.map_exprs is not None:
        lines.append("map: " + ", ".join(expr_text(e) for e in doc.map_exprs))
    if doc.factor_exprs is not None:
        lines.append("factors: " + ", ".join(expr_text(e) for e in doc.factor_exprs))
    if doc.potential is not None:
        lines.append("potential: " + expr_text(doc.potential))
    return "\n".join(lines) + "\n"
