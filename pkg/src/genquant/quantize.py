"""Quantization pipeline in orthogonal curvilinear coordinates.

The chain is: phase-space continuity equation -> infinitesimal transform
of the momentum dependence into displacement derivatives of the two-point
density rho(u, delta u; t) -> second-order amplitude expansion of
rho = psi* psi with psi = R exp(iS/hbar) -> collection of displacement
orders into the continuity / quantum Hamilton-Jacobi pair -> divergence
form Hamiltonian operator, with an independent cross-check that both
routes describe the same dynamics.

Transform rules (boundary terms at momentum infinity dropped; the measure
carries 1/(h1 h2 h3)):

* multiplication by p_i maps to -i hbar d/d(delta u_i);
* a momentum derivative dF/dp_j maps to -(i/hbar) delta u_j * (density);
* a coordinate derivative dF/du_i maps to (1/J) d(J rho)/du_i, which is
  where the measure-correction terms come from.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .classical import HBAR, MASS, ClassicalHamiltonian, LiouvilleEquation
from .coords import CoordinateSystem
from .equivalence import max_relative_deviation
from .expr import (
    Expr,
    FieldDeriv,
    HALF,
    I,
    ImaginaryUnit,
    ONE,
    Prod,
    Sum,
    ZERO,
    add,
    differentiate,
    expand,
    field,
    func,
    mul,
    poly_decompose,
    pow_,
    sym,
)
from .orders import DeltaPoly, DerivTerm, collect_orders, make_term

TIME = "t"

# displacement-degree cap used while applying derivatives; two delta
# derivatives can lower the degree by two, and final collection keeps
# degree <= 1, so 4 gives slack
_TRUNC = 4


class UnsupportedHamiltonianError(Exception):
    """A term is more than quadratic in the momenta (or malformed)."""


class SplitFailureError(Exception):
    """The first-order terms do not factor as a common gradient."""

    def __init__(self, residues):
        self.residues = residues
        super().__init__(
            "first-order terms are not the gradient of a common bracket; "
            f"residues: {[(k, v.key) for k, v in residues.items()]}"
        )


def amplitude_atom(cs: CoordinateSystem, name: str, orders=None) -> FieldDeriv:
    """Derivative atom of an amplitude field over (u, t)."""
    return field(name, orders, deps=cs.names + (TIME,))


def potential_atom(cs: CoordinateSystem, depends=None) -> FieldDeriv:
    """Opaque potential V over a subset of the coordinates."""
    deps = tuple(depends) if depends is not None else cs.names
    return field("V", None, deps=deps)


@dataclass(frozen=True)
class DensityEquation:
    """Sum of ``terms`` equals i hbar d(rho)/dt."""

    cs: CoordinateSystem
    terms: tuple
    potential: Expr

    @property
    def time_coefficient(self) -> Expr:
        return mul(I, HBAR)


@dataclass(frozen=True)
class AmplitudeExpansion:
    """Displacement polynomial of the two-point density, to second order.

    ``table`` maps displacement-exponent tuples to coefficients in R's
    derivatives (with connection corrections); the full density is the
    table times exp((i/hbar) sum_k delta u_k dS/du_k).
    """

    cs: CoordinateSystem
    table: dict
    phase_gradients: tuple

    def poly(self) -> DeltaPoly:
        return DeltaPoly(self.cs.delta_names(), self.table)


@dataclass(frozen=True)
class MadelungSplit:
    """Zeroth/first displacement orders of the density equation.

    The zeroth order is the continuity equation.  The first order factors
    as delta u_i * prefactor * d(bracket)/du_i = 0: ``hj_bracket`` is that
    verified common bracket (the quantum Hamilton-Jacobi expression).
    """

    continuity: Expr
    hj_bracket: Expr
    gradient_prefactor: Expr
    degree1: dict
    discarded: tuple


@dataclass(frozen=True)
class FluxTerm:
    axis: str
    outer: Expr  # 1/(h1 h2 h3)
    flux: Expr  # (h1 h2 h3) / h_i**2


@dataclass(frozen=True)
class HamiltonOperator:
    """-(hbar**2/2m) (1/J) sum_i d/du_i (J/h_i**2 d/du_i .) + V."""

    cs: CoordinateSystem
    terms: tuple
    potential: Expr

    @property
    def kinetic_prefactor(self) -> Expr:
        return mul(Fraction(-1, 2), pow_(MASS, -1), pow_(HBAR, 2))

    def apply(self, psi: Expr) -> Expr:
        parts = [mul(self.potential, psi)]
        for t in self.terms:
            inner = mul(t.flux, differentiate(psi, t.axis))
            parts.append(
                mul(self.kinetic_prefactor, t.outer, differentiate(inner, t.axis))
            )
        return add(*parts)


@dataclass(frozen=True)
class ConsistencyCheck:
    name: str
    passed: bool
    deviation: float


@dataclass(frozen=True)
class ConsistencyReport:
    system: str
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def wigner_transform(L: LiouvilleEquation, cs: CoordinateSystem) -> DensityEquation:
    """Transform the phase-space equation into the density equation.

    Every momentum monomial (degree <= 2) is converted with the rules in
    the module docstring; the result is normalized so that the remaining
    terms sum to i hbar d(rho)/dt.
    """
    names = cs.names
    p_names = ["p_" + n for n in names]
    delta_names = cs.delta_names()
    J, _ = cs.jacobians()
    neg_ih = mul(-1, I, HBAR)

    acc: dict = {}

    def accumulate(coeff: Expr, derivs: dict):
        key = tuple(sorted((v, n) for v, n in derivs.items() if n))
        acc[key] = add(acc.get(key, ZERO), coeff)

    time_seen = False
    for term in L.terms:
        if term.fieldname != "F":
            raise UnsupportedHamiltonianError(f"unexpected field {term.fieldname!r}")
        if len(term.derivs) != 1 or term.derivs[0][1] != 1:
            raise UnsupportedHamiltonianError(
                f"expected a single first derivative of F, got {term.derivs}"
            )
        var = term.derivs[0][0]
        poly = poly_decompose(term.coefficient, p_names)
        for mono, cu in poly.items():
            degree = sum(mono)
            if degree > 2:
                raise UnsupportedHamiltonianError(
                    f"momentum degree {degree} > 2 in {term.coefficient.key}"
                )
            if var == TIME:
                if degree != 0 or cu != ONE:
                    raise UnsupportedHamiltonianError("time term must have coefficient 1")
                time_seen = True
                continue  # becomes the right-hand side i hbar d(rho)/dt
            if var in names:
                base = [(ONE, {var: 1})]
                meas = mul(differentiate(J, var), pow_(J, -1))
                if meas != ZERO:
                    base.append((meas, {}))
            elif var in p_names:
                j = p_names.index(var)
                base = [(mul(-1, I, pow_(HBAR, -1), sym(delta_names[j])), {})]
            else:
                raise UnsupportedHamiltonianError(f"unknown derivative variable {var!r}")
            for i, count in enumerate(mono):
                for _ in range(count):
                    applied = []
                    for c, D in base:
                        dc = differentiate(c, delta_names[i])
                        if dc != ZERO:
                            applied.append((mul(neg_ih, dc), D))
                        bumped = dict(D)
                        bumped[delta_names[i]] = bumped.get(delta_names[i], 0) + 1
                        applied.append((mul(neg_ih, c), bumped))
                    base = applied
            for c, D in base:
                total = mul(neg_ih, cu, c)
                if total != ZERO:
                    accumulate(total, D)
    if not time_seen:
        raise UnsupportedHamiltonianError("no time-derivative term to normalize against")
    terms = [
        DerivTerm(coeff, "rho", key) for key, coeff in acc.items() if coeff != ZERO
    ]
    terms.sort(key=lambda t: t.sort_key())
    return DensityEquation(cs, tuple(terms), L.potential)


def amplitude_expansion(cs: CoordinateSystem) -> AmplitudeExpansion:
    """Second-order displacement table of the two-point density.

    Zeroth order is R**2; the quadratic coefficients pair the Hessian of R
    corrected by the connection against the product of first derivatives:
    for i == j the diagonal entry, for i < j twice the symmetric entry.
    """
    names = cs.names
    gamma = cs.christoffel()
    R0 = amplitude_atom(cs, "R")
    dR = [amplitude_atom(cs, "R", {n: 1}) for n in names]
    quarter = Fraction(1, 4)
    table = {(0,) * cs.dim: pow_(R0, 2)}
    for i in range(cs.dim):
        for j in range(i, cs.dim):
            orders = {names[i]: 1}
            orders[names[j]] = orders.get(names[j], 0) + 1
            hess = amplitude_atom(cs, "R", orders)
            correction = add(
                *[mul(-1, gamma(k, i, j), dR[k]) for k in range(cs.dim)]
            )
            coeff = add(
                mul(quarter, R0, add(hess, correction)),
                mul(-1, quarter, dR[i], dR[j]),
            )
            if i != j:
                coeff = mul(2, coeff)
            mono = tuple(
                (1 if k == i else 0) + (1 if k == j else 0) for k in range(cs.dim)
            )
            if coeff != ZERO:
                table[mono] = coeff
    phase = tuple(amplitude_atom(cs, "S", {n: 1}) for n in names)
    return AmplitudeExpansion(cs, table, phase)


def laplace_beltrami(cs: CoordinateSystem, f: Expr) -> Expr:
    """(1/J) sum_i d/du_i (J/h_i**2 df/du_i) with J = h1 h2 h3."""
    J, Jinv = cs.jacobians()
    parts = []
    for name, h in zip(cs.names, cs.h):
        inner = mul(J, pow_(h, -2), differentiate(f, name))
        parts.append(mul(Jinv, differentiate(inner, name)))
    return add(*parts)


def hamilton_quantum_bracket(cs: CoordinateSystem, V: Expr) -> Expr:
    """dS/dt + (grad S)**2/2m + V - (hbar**2/2m) (Laplacian R)/R."""
    R0 = amplitude_atom(cs, "R")
    S_t = amplitude_atom(cs, "S", {TIME: 1})
    grad_sq = add(
        *[
            mul(pow_(amplitude_atom(cs, "S", {n: 1}), 2), pow_(h, -2))
            for n, h in zip(cs.names, cs.h)
        ]
    )
    quantum = mul(
        Fraction(-1, 2),
        pow_(MASS, -1),
        pow_(HBAR, 2),
        pow_(R0, -1),
        laplace_beltrami(cs, R0),
    )
    return add(S_t, mul(HALF, pow_(MASS, -1), grad_sq), V, quantum)


def madelung_collect(
    D: DensityEquation,
    A: AmplitudeExpansion,
    tol: float = 1e-9,
    seed: int | None = None,
) -> MadelungSplit:
    """Insert the amplitude expansion and collect displacement orders.

    All displacement and coordinate derivatives are applied exactly on the
    (polynomial) x (phase exponential) product; the common exponential is
    divided out, so the identity is a displacement polynomial.  Degree 0
    yields the continuity equation; degree 1 must factor as delta u_i
    times R**2 times the gradient of a common bracket, which is verified
    by the equivalence sampler against the closed-form bracket.  Degree 2
    is the discarded truncation remainder.
    """
    cs = D.cs
    if A.cs.names != cs.names:
        raise ValueError("density equation and amplitude expansion disagree on coordinates")
    dnames = cs.delta_names()
    names = cs.names
    i_over_h = mul(I, pow_(HBAR, -1))
    S1 = {n: amplitude_atom(cs, "S", {n: 1}) for n in names}

    def phase_shift_poly(var: str) -> DeltaPoly:
        """(i/hbar) sum_k delta u_k d/dvar(dS/du_k), the chain-rule tail."""
        terms = {}
        for k, n in enumerate(names):
            coeff = mul(i_over_h, differentiate(S1[n], var))
            if coeff != ZERO:
                mono = tuple(1 if j == k else 0 for j in range(len(names)))
                terms[mono] = coeff
        return DeltaPoly(dnames, terms)

    def apply_term(coefficient: Expr, derivs) -> DeltaPoly:
        P = DeltaPoly(dnames, A.table)
        for var, order in derivs:
            for _ in range(order):
                if var in dnames:
                    n = names[dnames.index(var)]
                    P = P.diff_delta(var) + P.scale(mul(i_over_h, S1[n]))
                else:  # a coordinate or time derivative
                    P = P.diff_coeff(var) + P.mul_poly(phase_shift_poly(var), _TRUNC)
                P = P.truncate(_TRUNC)
        return P.mul_poly(DeltaPoly.from_expr(coefficient, dnames), _TRUNC)

    lhs = DeltaPoly(dnames)
    for term in D.terms:
        lhs = lhs + apply_term(term.coefficient, term.derivs)
    rhs = apply_term(D.time_coefficient, ((TIME, 1),))
    identity = lhs + rhs.scale(mul(-1, ONE))

    collection = collect_orders(identity.truncate(2).entries(), 1, dnames)
    deg0 = ZERO
    for mono, coeff in collection.coefficients(0):
        deg0 = add(deg0, coeff)
    # expanding lets the i*i and hbar/hbar factors cancel term by term,
    # leaving the real, hbar-free continuity equation
    continuity = expand(mul(I, pow_(HBAR, -1), deg0))

    degree1 = {}
    for mono, coeff in collection.coefficients(1):
        axis = names[mono.index(1)]
        degree1[axis] = coeff

    bracket = hamilton_quantum_bracket(cs, D.potential)
    prefactor = pow_(amplitude_atom(cs, "R"), 2)
    domains = cs.domains()
    residues = {}
    for n in names:
        want = mul(prefactor, differentiate(bracket, n))
        got = degree1.get(n, ZERO)
        dev, _ = max_relative_deviation(got, want, domains=domains, seed=seed)
        if dev >= tol:
            residues[n] = add(got, mul(-1, want))
    if residues:
        raise SplitFailureError(residues)
    return MadelungSplit(
        continuity=continuity,
        hj_bracket=bracket,
        gradient_prefactor=prefactor,
        degree1=degree1,
        discarded=tuple(collection.discarded),
    )


def hamilton_operator(cs: CoordinateSystem, V: Expr) -> HamiltonOperator:
    """Divergence-form kinetic operator plus the potential."""
    J, Jinv = cs.jacobians()
    terms = tuple(
        FluxTerm(axis=n, outer=Jinv, flux=mul(J, pow_(h, -2)))
        for n, h in zip(cs.names, cs.h)
    )
    return HamiltonOperator(cs, terms, V)


def split_re_im(e: Expr):
    """Split an expanded expression into (real, imaginary) parts.

    Assumes every non-imaginary atom is real, which holds for the
    derivation pipeline: after expansion each term carries at most one
    imaginary-unit factor.
    """
    terms = e.ops if isinstance(e, Sum) else (e,)
    re_parts, im_parts = [], []
    for t in terms:
        factors = t.ops if isinstance(t, Prod) else (t,)
        imaginary = [f for f in factors if isinstance(f, ImaginaryUnit)]
        if imaginary:
            rest = [f for f in factors if not isinstance(f, ImaginaryUnit)]
            im_parts.append(mul(*rest) if rest else ONE)
        else:
            re_parts.append(t)
    return add(*re_parts) if re_parts else ZERO, (
        add(*im_parts) if im_parts else ZERO
    )


def verify_consistency(
    cs: CoordinateSystem,
    V: Expr,
    tol: float = 1e-9,
    seed: int | None = None,
) -> ConsistencyReport:
    """Check the operator route against the collected equations.

    Substitutes psi = R exp(iS/hbar) into (H psi - i hbar dpsi/dt)/psi;
    the real part must match the quantum Hamilton-Jacobi bracket and the
    imaginary part must be -hbar/(2 R**2) times the continuity equation.
    """
    R0 = amplitude_atom(cs, "R")
    S0 = amplitude_atom(cs, "S")
    psi = mul(R0, func("exp", mul(I, pow_(HBAR, -1), S0)))
    op = hamilton_operator(cs, V)
    lhs = add(op.apply(psi), mul(-1, I, HBAR, differentiate(psi, TIME)))
    ratio = expand(mul(lhs, pow_(psi, -1)))
    re, im = split_re_im(ratio)

    H = ClassicalHamiltonian(
        cs,
        kinetic=add(
            *[
                mul(HALF, pow_(MASS, -1), pow_(p, 2), pow_(h, -2))
                for p, h in zip(cs.p_syms(), cs.h)
            ]
        ),
        potential=V,
    )
    from .classical import liouville_equation

    ms = madelung_collect(
        wigner_transform(liouville_equation(H), cs),
        amplitude_expansion(cs),
        tol=tol,
        seed=seed,
    )
    domains = cs.domains()
    dev_re, _ = max_relative_deviation(re, ms.hj_bracket, domains=domains, seed=seed)
    im_expected = mul(
        Fraction(-1, 2), HBAR, pow_(R0, -2), ms.continuity
    )
    dev_im, _ = max_relative_deviation(im, im_expected, domains=domains, seed=seed)
    checks = (
        ConsistencyCheck("real-part-matches-hamilton-jacobi", dev_re < tol, dev_re),
        ConsistencyCheck("imag-part-matches-continuity", dev_im < tol, dev_im),
    )
    return ConsistencyReport(cs.name, checks)
