"""Hamiltonians, Poisson brackets, and the phase-space equation."""

import random

import pytest

from genquant.classical import (
    InvalidPotentialError,
    classical_hamiltonian,
    liouville_equation,
    poisson_bracket,
)
from genquant.equivalence import equivalent
from genquant.expr import (
    HALF,
    ZERO,
    add,
    cos,
    differentiate,
    field,
    mul,
    pow_,
    rat,
    sin,
    sym,
)
from genquant import reference

from conftest import random_expression

R, TH, PH = sym("r"), sym("theta"), sym("phi")
PR, PTH, PPH = sym("p_r"), sym("p_theta"), sym("p_phi")
M = sym("m")


def spherical_pairs():
    return ((R, PR), (TH, PTH), (PH, PPH))


class TestHamiltonian:
    def test_spherical_form(self, systems):
        V = field("V", None, ("r",))
        H = classical_hamiltonian(systems["spherical"], V)
        want = add(
            mul(HALF, pow_(M, -1), pow_(PR, 2)),
            mul(HALF, pow_(M, -1), pow_(PTH, 2), pow_(R, -2)),
            mul(HALF, pow_(M, -1), pow_(PPH, 2), pow_(R, -2), pow_(sin(TH), -2)),
            V,
        )
        assert H.total.key == want.key

    def test_cartesian_form(self, systems):
        V = field("V", None, ("x", "y", "z"))
        H = classical_hamiltonian(systems["cartesian"], V)
        want = add(
            *[mul(HALF, pow_(M, -1), pow_(sym(f"p_{n}"), 2)) for n in ("x", "y", "z")],
            V,
        )
        assert H.total.key == want.key

    def test_cylindrical_form(self, systems):
        # h = (1, rho, 1) in the generic kinetic sum
        V = field("V", None, ("rho", "z"))
        H = classical_hamiltonian(systems["cylindrical"], V)
        want = add(
            mul(HALF, pow_(M, -1), pow_(sym("p_rho"), 2)),
            mul(HALF, pow_(M, -1), pow_(sym("p_phi"), 2), pow_(sym("rho"), -2)),
            mul(HALF, pow_(M, -1), pow_(sym("p_z"), 2)),
            V,
        )
        assert H.total.key == want.key

    def test_potential_with_momentum_rejected(self, systems):
        with pytest.raises(InvalidPotentialError):
            classical_hamiltonian(systems["spherical"], mul(PR, R))


class TestPoissonBracket:
    def test_canonical_pair(self):
        assert poisson_bracket(R, PR, spherical_pairs()) == rat(1)

    def test_azimuthal_momentum_conserved(self, systems):
        V = field("V", None, ("r",))
        H = classical_hamiltonian(systems["spherical"], V)
        assert poisson_bracket(H.total, PPH, spherical_pairs()) == ZERO

    def test_polar_momentum_bracket(self, systems):
        # {p_theta, H} = -dH/dtheta = p_phi^2 cot(theta) / (m r^2 sin^2)
        V = field("V", None, ("r",))
        H = classical_hamiltonian(systems["spherical"], V)
        got = poisson_bracket(PTH, H.total, spherical_pairs())
        want = mul(
            pow_(PPH, 2),
            cos(TH),
            pow_(sin(TH), -3),
            pow_(M, -1),
            pow_(R, -2),
        )
        assert equivalent(got, want, domains=systems["spherical"].domains())

    def test_antisymmetry_on_corpus(self, expression_corpus):
        pairs = ((sym("x"), sym("p_x")), (sym("y"), sym("p_y")))
        rng = random.Random(3)
        for a, b in zip(expression_corpus[:10], expression_corpus[10:20]):
            s = add(poisson_bracket(a, b, pairs), poisson_bracket(b, a, pairs))
            assert s == ZERO

    def test_leibniz_rule_on_corpus(self, expression_corpus):
        pairs = ((sym("x"), sym("p_x")), (sym("y"), sym("p_y")))
        for f, g, h in zip(
            expression_corpus[:6], expression_corpus[6:12], expression_corpus[12:18]
        ):
            lhs = poisson_bracket(f, mul(g, h), pairs)
            rhs = add(
                mul(g, poisson_bracket(f, h, pairs)),
                mul(poisson_bracket(f, g, pairs), h),
            )
            assert add(lhs, mul(-1, rhs)) == ZERO

    def test_energy_conservation_exact(self, systems):
        V = field("V", None, ("r",))
        H = classical_hamiltonian(systems["spherical"], V).total
        assert poisson_bracket(H, H, spherical_pairs()) == ZERO


class TestLiouville:
    def test_spherical_matches_reference(self, systems):
        cs = systems["spherical"]
        V = field("V", None, ("r",))
        L = liouville_equation(classical_hamiltonian(cs, V))
        got = {t.derivs: t.coefficient for t in L.terms}
        want = {t.derivs: t.coefficient for t in reference.liouville_terms()}
        assert set(got) == set(want)
        for k in want:
            assert equivalent(got[k], want[k], domains=cs.domains())

    def test_cartesian_form(self, systems):
        cs = systems["cartesian"]
        V = field("V", None, ("x", "y", "z"))
        L = liouville_equation(classical_hamiltonian(cs, V))
        got = {t.derivs: t.coefficient for t in L.terms}
        assert got[(("t", 1),)] == rat(1)
        for n in ("x", "y", "z"):
            assert got[((n, 1),)].key == mul(sym(f"p_{n}"), pow_(M, -1)).key
            assert got[((f"p_{n}", 1),)].key == mul(
                rat(-1), field("V", {n: 1}, ("x", "y", "z"))
            ).key

    def test_general_momentum_coefficient_structure(self):
        # with symbolic scale factors depending on both coordinates, the
        # coefficient of dF/dp_j is sum_i p_i^2/(m h_i^3) dh_i/du_j - dV/du_j
        from genquant.coords import Coordinate, system_from_factors

        u1, u2 = sym("u1"), sym("u2")
        h1 = add(rat(1), pow_(u2, 2))
        h2 = add(rat(2), pow_(u1, 2))
        cs = system_from_factors(
            "warped",
            (Coordinate("u1", 0, 3), Coordinate("u2", 0, 3)),
            (h1, h2),
        )
        V = field("V", None, ("u1", "u2"))
        L = liouville_equation(classical_hamiltonian(cs, V))
        got = {t.derivs: t.coefficient for t in L.terms}
        for j, uj in enumerate(("u1", "u2")):
            want = add(
                *[
                    mul(
                        pow_(sym(f"p_u{i+1}"), 2),
                        pow_(M, -1),
                        pow_(h, -3),
                        differentiate(h, uj),
                    )
                    for i, h in enumerate((h1, h2))
                ],
                mul(rat(-1), field("V", {uj: 1}, ("u1", "u2"))),
            )
            assert equivalent(got[((f"p_{uj}", 1),)], want, domains=cs.domains())

    def test_single_unit_time_term(self, systems):
        for cs in systems.values():
            V = field("V", None, cs.names)
            L = liouville_equation(classical_hamiltonian(cs, V))
            tt = L.time_term()
            assert tt is not None and tt.coefficient == rat(1)
