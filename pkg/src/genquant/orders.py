"""Derivative terms and bookkeeping of polynomial orders in displacements.

A :class:`DerivTerm` is one summand of a field equation: a coefficient
expression times a mixed partial derivative of an opaque field.  A
:class:`DeltaPoly` is a truncated polynomial in the infinitesimal
displacement symbols whose coefficients are expressions; it is the little
machine behind :func:`collect_orders`.
"""

from __future__ import annotations

from dataclasses import dataclass

from .expr import (
    Expr,
    Prod,
    Sym,
    ZERO,
    add,
    differentiate,
    mul,
    poly_decompose,
)


@dataclass(frozen=True)
class DerivTerm:
    """coefficient * (mixed partial of ``fieldname`` per ``derivs``).

    ``derivs`` is a sorted tuple of (variable, order) pairs with orders
    >= 1; an empty tuple means plain multiplication of the field.
    """

    coefficient: Expr
    fieldname: str
    derivs: tuple

    def __post_init__(self):
        for v, n in self.derivs:
            if n < 1:
                raise ValueError(f"derivative order for {v} must be >= 1")
        if self.coefficient == ZERO:
            raise ValueError("zero coefficient term")

    @property
    def total_order(self) -> int:
        return sum(n for _, n in self.derivs)

    def sort_key(self):
        return (self.fieldname, self.derivs, self.coefficient.key)


def make_term(coefficient: Expr, fieldname: str, derivs: dict) -> DerivTerm:
    items = tuple(sorted((v, n) for v, n in derivs.items() if n))
    return DerivTerm(coefficient, fieldname, items)


def _normalize_monomial(mono, names) -> tuple:
    """Monomial as an exponent tuple aligned with ``names``.

    Accepts an exponent tuple, an iterable of symbol names (with
    repetition), or an Expr that is a product of displacement symbols.
    """
    if isinstance(mono, tuple) and mono and all(isinstance(x, int) for x in mono):
        if len(mono) != len(names):
            raise ValueError("exponent tuple length mismatch")
        return mono
    if isinstance(mono, tuple) and not mono:
        return (0,) * len(names)
    index = {n: k for k, n in enumerate(names)}
    counts = [0] * len(names)
    if isinstance(mono, Expr):
        factors = mono.ops if isinstance(mono, Prod) else (mono,)
        for f in factors:
            from .expr import Pow, Rat

            if isinstance(f, Rat) and f.value == 1:
                continue
            if isinstance(f, Pow) and isinstance(f.base, Sym):
                counts[index[f.base.name]] += int(f.exp.value)
            elif isinstance(f, Sym):
                counts[index[f.name]] += 1
            else:
                raise ValueError(f"not a displacement monomial: {mono!r}")
        return tuple(counts)
    for name in mono:
        if isinstance(name, Sym):
            name = name.name
        counts[index[name]] += 1
    return tuple(counts)


class DeltaPoly:
    """Polynomial in displacement symbols with Expr coefficients."""

    __slots__ = ("names", "terms")

    def __init__(self, names, terms=None):
        self.names = tuple(names)
        self.terms = dict(terms or {})

    @classmethod
    def from_expr(cls, e: Expr, names) -> "DeltaPoly":
        return cls(names, poly_decompose(e, names))

    @classmethod
    def constant(cls, e: Expr, names) -> "DeltaPoly":
        return cls(names, {(0,) * len(names): e})

    def copy(self) -> "DeltaPoly":
        return DeltaPoly(self.names, self.terms)

    def __add__(self, other: "DeltaPoly") -> "DeltaPoly":
        out = dict(self.terms)
        for mono, c in other.terms.items():
            out[mono] = add(out.get(mono, ZERO), c)
        return DeltaPoly(self.names, out).prune()

    def scale(self, e: Expr) -> "DeltaPoly":
        return DeltaPoly(
            self.names, {m: mul(e, c) for m, c in self.terms.items()}
        ).prune()

    def mul_poly(self, other: "DeltaPoly", trunc: int | None = None) -> "DeltaPoly":
        out: dict = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                mono = tuple(a + b for a, b in zip(m1, m2))
                if trunc is not None and sum(mono) > trunc:
                    continue
                out[mono] = add(out.get(mono, ZERO), mul(c1, c2))
        return DeltaPoly(self.names, out).prune()

    def diff_delta(self, name: str) -> "DeltaPoly":
        """Derivative with respect to one displacement symbol."""
        k = self.names.index(name)
        out: dict = {}
        for mono, c in self.terms.items():
            if mono[k] == 0:
                continue
            lowered = tuple(n - 1 if j == k else n for j, n in enumerate(mono))
            out[lowered] = add(out.get(lowered, ZERO), mul(mono[k], c))
        return DeltaPoly(self.names, out).prune()

    def diff_coeff(self, var: str) -> "DeltaPoly":
        """Coefficient-wise derivative with respect to a non-displacement var."""
        return DeltaPoly(
            self.names, {m: differentiate(c, var) for m, c in self.terms.items()}
        ).prune()

    def truncate(self, maxdeg: int) -> "DeltaPoly":
        return DeltaPoly(
            self.names, {m: c for m, c in self.terms.items() if sum(m) <= maxdeg}
        )

    def prune(self) -> "DeltaPoly":
        self.terms = {m: c for m, c in self.terms.items() if c != ZERO}
        return self

    def coefficient(self, mono) -> Expr:
        return self.terms.get(_normalize_monomial(mono, self.names), ZERO)

    def entries(self):
        """Sorted (exponent tuple, coefficient) pairs."""
        return sorted(self.terms.items())


@dataclass
class OrderCollection:
    """Terms grouped by total displacement degree, plus the discard pile."""

    orders: dict
    discarded: list

    def coefficients(self, degree: int):
        return self.orders.get(degree, [])


def collect_orders(entries, max_order: int, names) -> OrderCollection:
    """Group (monomial, coefficient) pairs by total degree.

    ``entries`` is an iterable of (monomial, Expr) pairs; monomials may be
    exponent tuples, name sequences, or products of displacement symbols.
    Degrees above ``max_order`` are discarded and reported.
    """
    grouped: dict = {}
    for mono, coeff in entries:
        norm = _normalize_monomial(mono, names)
        grouped[norm] = add(grouped.get(norm, ZERO), coeff)
    orders: dict = {}
    discarded = []
    for mono in sorted(grouped):
        coeff = grouped[mono]
        if coeff == ZERO:
            continue
        degree = sum(mono)
        if degree > max_order:
            discarded.append((mono, coeff))
        else:
            orders.setdefault(degree, []).append((mono, coeff))
    return OrderCollection(orders, discarded)
