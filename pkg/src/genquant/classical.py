"""Classical layer: conjugate momenta, Hamiltonian, Poisson bracket,
and the phase-space continuity (Liouville) equation.

The phase-space density F is opaque: its derivatives are carried as
:class:`~genquant.orders.DerivTerm` multi-indices, never expanded, because
the quantization step consumes the equation structurally.
"""

from __future__ import annotations

from dataclasses import dataclass

from .coords import CoordinateSystem
from .expr import (
    Expr,
    HALF,
    ONE,
    ZERO,
    add,
    differentiate,
    free_symbols,
    mul,
    pow_,
    sym,
)
from .orders import DerivTerm, make_term

MASS = sym("m")
HBAR = sym("hbar")
TIME = "t"


class InvalidPotentialError(Exception):
    """The potential referenced a momentum symbol."""


@dataclass(frozen=True)
class ClassicalHamiltonian:
    cs: CoordinateSystem
    kinetic: Expr
    potential: Expr

    @property
    def total(self) -> Expr:
        return add(self.kinetic, self.potential)

    def pairs(self):
        return tuple(zip(self.cs.u_syms(), self.cs.p_syms()))


@dataclass(frozen=True)
class LiouvilleEquation:
    """Sum of terms on the opaque density F equals zero."""

    cs: CoordinateSystem
    terms: tuple
    potential: Expr

    def time_term(self):
        for t in self.terms:
            if t.derivs == ((TIME, 1),):
                return t
        return None


def classical_hamiltonian(cs: CoordinateSystem, V: Expr) -> ClassicalHamiltonian:
    """H = (1/2m) sum_i p_i**2 / h_i**2 + V(u)."""
    p_names = {p.name for p in cs.p_syms()}
    if free_symbols(V) & p_names:
        raise InvalidPotentialError(
            f"potential depends on momentum symbols: {sorted(free_symbols(V) & p_names)}"
        )
    kinetic = add(
        *[
            mul(HALF, pow_(MASS, -1), pow_(p, 2), pow_(h, -2))
            for p, h in zip(cs.p_syms(), cs.h)
        ]
    )
    return ClassicalHamiltonian(cs, kinetic, V)


def poisson_bracket(f: Expr, g: Expr, pairs) -> Expr:
    """{f, g} = sum_i (df/du_i dg/dp_i - df/dp_i dg/du_i)."""
    terms = []
    for u, p in pairs:
        terms.append(mul(differentiate(f, u), differentiate(g, p)))
        terms.append(mul(-1, differentiate(f, p), differentiate(g, u)))
    return add(*terms)


def liouville_equation(H: ClassicalHamiltonian) -> LiouvilleEquation:
    """dF/dt + {H, F} = 0 with F opaque.

    {H, F} expands to sum_i (dH/dp_i) dF/du_i - (dH/du_i) dF/dp_i, so each
    term is one coefficient times one first derivative of F.
    """
    terms = [make_term(ONE, "F", {TIME: 1})]
    Ht = H.total
    for u, p in H.pairs():
        cu = differentiate(Ht, p)
        if cu != ZERO:
            terms.append(make_term(cu, "F", {u.name: 1}))
        cp = mul(-1, differentiate(Ht, u))
        if cp != ZERO:
            terms.append(make_term(cp, "F", {p.name: 1}))
    terms.sort(key=lambda t: t.sort_key())
    return LiouvilleEquation(H.cs, tuple(terms), H.potential)
