"""The quantization chain: transform, expansion, collection, operator."""

from fractions import Fraction

import pytest

from genquant.classical import classical_hamiltonian, liouville_equation
from genquant.equivalence import equivalent, max_relative_deviation
from genquant.expr import (
    HALF,
    I,
    ZERO,
    add,
    atoms,
    bind_fields,
    cos,
    differentiate,
    exp,
    field,
    mul,
    pow_,
    rat,
    sin,
    sym,
)
from genquant.orders import DerivTerm, make_term
from genquant.quantize import (
    SplitFailureError,
    UnsupportedHamiltonianError,
    amplitude_expansion,
    hamilton_operator,
    laplace_beltrami,
    madelung_collect,
    split_re_im,
    verify_consistency,
    wigner_transform,
)
from genquant import reference

R, TH, PH = sym("r"), sym("theta"), sym("phi")
M, HB = sym("m"), sym("hbar")


def chain(cs, V):
    L = liouville_equation(classical_hamiltonian(cs, V))
    return wigner_transform(L, cs)


class TestWignerTransform:
    def test_spherical_matches_reference(self, systems):
        cs = systems["spherical"]
        D = chain(cs, field("V", None, ("r",)))
        got = {t.derivs: t.coefficient for t in D.terms}
        want = {t.derivs: t.coefficient for t in reference.density_terms()}
        assert set(got) == set(want)
        for key in want:
            assert equivalent(got[key], want[key], domains=cs.domains()), key

    def test_cartesian_by_hand(self, systems):
        # applying the transform rules with a flat volume factor leaves
        # -(hbar^2/m) d2/dx d(dx) per axis plus the potential tilt terms
        cs = systems["cartesian"]
        V = field("V", None, ("x", "y", "z"))
        D = chain(cs, V)
        got = {t.derivs: t.coefficient for t in D.terms}
        want_mixed = mul(rat(-1), pow_(HB, 2), pow_(M, -1))
        for n in ("x", "y", "z"):
            assert got[((f"delta_{n}", 1), (n, 1))].key == want_mixed.key
        tilt = got[()]
        want_tilt = add(
            *[
                mul(sym(f"delta_{n}"), field("V", {n: 1}, ("x", "y", "z")))
                for n in ("x", "y", "z")
            ]
        )
        assert tilt.key == want_tilt.key
        assert len(got) == 4

    def test_general_symbolic_factors_second_derivative_index(self):
        # the correction term couples displacement delta_u_i to the
        # *second* displacement derivative along u_j (the axis whose
        # scale factor varies), as the spherical reduction requires
        from genquant.coords import Coordinate, system_from_factors

        u1, u2 = sym("u1"), sym("u2")
        cs = system_from_factors(
            "warp",
            (Coordinate("u1", 0, 3), Coordinate("u2", 0, 3)),
            (rat(1), add(rat(1), pow_(u1, 2))),  # h2 depends on u1
        )
        D = chain(cs, ZERO)
        got = {t.derivs: t.coefficient for t in D.terms}
        # h2 varies along u1 => a delta_u1 coefficient on d2/d(delta_u2)^2
        key = (("delta_u2", 2),)
        assert key in got
        h2 = add(rat(1), pow_(u1, 2))
        want = mul(
            pow_(HB, 2),
            pow_(M, -1),
            sym("delta_u1"),
            pow_(h2, -3),
            differentiate(h2, "u1"),
        )
        assert equivalent(got[key], want, domains=cs.domains())
        # and no term couples delta_u1 to its own second displacement
        # derivative (h1 is constant)
        assert (("delta_u1", 2),) not in got

    def test_cubic_momentum_rejected(self, systems):
        cs = systems["cartesian"]
        L = liouville_equation(classical_hamiltonian(cs, ZERO))
        bad = L.terms + (make_term(pow_(sym("p_x"), 3), "F", {"x": 1}),)
        import dataclasses

        L3 = dataclasses.replace(L, terms=bad)
        with pytest.raises(UnsupportedHamiltonianError):
            wigner_transform(L3, cs)


class TestAmplitudeExpansion:
    def test_degree_zero_is_squared_amplitude(self, systems):
        for cs in systems.values():
            A = amplitude_expansion(cs)
            R0 = field("R", None, cs.names + ("t",))
            assert A.poly().coefficient(()).key == pow_(R0, 2).key

    def test_spherical_dtheta2_coefficient(self, systems):
        cs = systems["spherical"]
        A = amplitude_expansion(cs)
        got = A.poly().coefficient((0, 2, 0))
        assert equivalent(
            got, reference.amplitude_dtheta2_coefficient(), domains=cs.domains()
        )

    def test_cartesian_pure_hessian(self, systems):
        cs = systems["cartesian"]
        A = amplitude_expansion(cs)
        deps = ("x", "y", "z", "t")
        R0 = field("R", None, deps)
        got = A.poly().coefficient((2, 0, 0))
        want = add(
            mul(rat(Fraction(1, 4)), R0, field("R", {"x": 2}, deps)),
            mul(rat(Fraction(-1, 4)), pow_(field("R", {"x": 1}, deps), 2)),
        )
        assert got.key == want.key

    def test_cylindrical_dphi2_has_radial_correction(self, systems):
        cs = systems["cylindrical"]
        A = amplitude_expansion(cs)
        got = A.poly().coefficient((0, 2, 0))
        deps = ("rho", "phi", "z", "t")
        # -Gamma^rho_{phi phi} = rho multiplies dR/drho inside the bracket
        want = add(
            mul(
                rat(Fraction(1, 4)),
                field("R", None, deps),
                add(
                    field("R", {"phi": 2}, deps),
                    mul(sym("rho"), field("R", {"rho": 1}, deps)),
                ),
            ),
            mul(rat(Fraction(-1, 4)), pow_(field("R", {"phi": 1}, deps), 2)),
        )
        assert equivalent(got, want, domains=cs.domains())

    def test_phase_gradients(self, systems):
        cs = systems["spherical"]
        A = amplitude_expansion(cs)
        assert [g.key for g in A.phase_gradients] == [
            field("S", {n: 1}, cs.names + ("t",)).key for n in cs.names
        ]


class TestMadelungCollect:
    def test_spherical_continuity_matches_closed_form(self, systems):
        cs = systems["spherical"]
        ms = madelung_collect(chain(cs, field("V", None, ("r",))), amplitude_expansion(cs))
        assert equivalent(
            ms.continuity, reference.continuity_equation(), domains=cs.domains()
        )

    def test_spherical_bracket_matches_closed_form(self, systems):
        cs = systems["spherical"]
        ms = madelung_collect(chain(cs, field("V", None, ("r",))), amplitude_expansion(cs))
        assert equivalent(
            ms.hj_bracket, reference.hamilton_jacobi_bracket(), domains=cs.domains()
        )

    def test_continuity_is_real_and_hbar_free(self, systems):
        for cs in systems.values():
            V = field("V", None, cs.names)
            ms = madelung_collect(chain(cs, V), amplitude_expansion(cs))
            present = atoms(ms.continuity)
            assert "i" not in present
            assert "hbar" not in present

    def test_plane_wave_reduction(self, systems):
        # constant amplitude, S = k.x - E t: the bracket collapses to
        # -E + k^2/2m and the continuity equation to zero
        cs = systems["cartesian"]
        ms = madelung_collect(chain(cs, ZERO), amplitude_expansion(cs))
        kx, ky, kz, E = sym("k_x"), sym("k_y"), sym("k_z"), sym("E")
        S = add(
            mul(kx, sym("x")),
            mul(ky, sym("y")),
            mul(kz, sym("z")),
            mul(rat(-1), E, sym("t")),
        )
        concrete = {"R": sym("c0"), "S": S}
        bracket = bind_fields(ms.hj_bracket, concrete)
        want = add(
            mul(rat(-1), E),
            mul(HALF, pow_(M, -1), add(pow_(kx, 2), pow_(ky, 2), pow_(kz, 2))),
        )
        assert bracket.key == want.key
        assert bind_fields(ms.continuity, concrete) == ZERO

    def test_gradient_prefactor_is_squared_amplitude(self, systems):
        cs = systems["polar2d"]
        ms = madelung_collect(chain(cs, ZERO), amplitude_expansion(cs))
        R0 = field("R", None, cs.names + ("t",))
        assert ms.gradient_prefactor.key == pow_(R0, 2).key

    def test_degree_two_remainder_is_discarded_not_lost(self, systems):
        cs = systems["cartesian"]
        ms = madelung_collect(chain(cs, ZERO), amplitude_expansion(cs))
        assert len(ms.discarded) > 0
        for mono, _ in ms.discarded:
            assert sum(mono) == 2

    def test_split_failure_on_tampered_equation(self, systems):
        import dataclasses

        cs = systems["cartesian"]
        D = chain(cs, ZERO)
        # corrupt one mixed-derivative coefficient: the first-order terms
        # can no longer factor through a common bracket
        terms = list(D.terms)
        for k, t in enumerate(terms):
            if t.derivs == (("delta_x", 1), ("x", 1)):
                terms[k] = DerivTerm(mul(rat(2), t.coefficient), t.fieldname, t.derivs)
        D2 = dataclasses.replace(D, terms=tuple(terms))
        with pytest.raises(SplitFailureError) as err:
            madelung_collect(D2, amplitude_expansion(cs))
        assert err.value.residues

    def test_mismatched_systems_rejected(self, systems):
        with pytest.raises(ValueError):
            madelung_collect(
                chain(systems["cartesian"], ZERO),
                amplitude_expansion(systems["spherical"]),
            )


class TestHamiltonOperator:
    def test_spherical_reduced_form(self, systems):
        from genquant.render import op_reduced

        cs = systems["spherical"]
        op = hamilton_operator(cs, field("V", None, ("r",)))
        got = {axis: (outer, flux) for axis, outer, flux in op_reduced(op)}
        for axis, outer, flux in reference.operator_reduced_terms():
            assert equivalent(got[axis][0], outer, domains=cs.domains())
            assert equivalent(got[axis][1], flux, domains=cs.domains())

    def test_cartesian_flat_laplacian(self, systems):
        cs = systems["cartesian"]
        op = hamilton_operator(cs, ZERO)
        f = field("f", None, cs.names)
        got = op.apply(f)
        from genquant.expr import expand

        want = expand(
            mul(
                rat(Fraction(-1, 2)),
                pow_(M, -1),
                pow_(HB, 2),
                add(*[field("f", {n: 2}, cs.names) for n in cs.names]),
            )
        )
        assert got.key == want.key

    def test_cylindrical_operator(self, systems):
        cs = systems["cylindrical"]
        op = hamilton_operator(cs, ZERO)
        f = field("f", None, cs.names)
        rho = sym("rho")
        deps = cs.names
        want = mul(
            rat(Fraction(-1, 2)),
            pow_(M, -1),
            pow_(HB, 2),
            add(
                field("f", {"rho": 2}, deps),
                mul(pow_(rho, -1), field("f", {"rho": 1}, deps)),
                mul(pow_(rho, -2), field("f", {"phi": 2}, deps)),
                field("f", {"z": 2}, deps),
            ),
        )
        assert equivalent(op.apply(f), want, domains=cs.domains())

    def test_flux_times_h_squared_is_volume_jacobian(self, systems):
        for cs in systems.values():
            op = hamilton_operator(cs, ZERO)
            ju, _ = cs.jacobians()
            for t, h in zip(op.terms, cs.h):
                assert mul(t.flux, pow_(h, 2)).key == ju.key

    def test_laplace_beltrami_of_harmonic_function(self, systems):
        # z = r cos(theta) is harmonic: the kinetic term kills it exactly
        cs = systems["spherical"]
        assert laplace_beltrami(cs, mul(R, cos(TH))) == ZERO


class TestVerifyConsistency:
    @pytest.mark.parametrize("name", ["cartesian", "spherical", "cylindrical", "polar2d"])
    def test_operator_and_collection_agree(self, systems, name):
        cs = systems[name]
        V = field("V", None, cs.names)
        rep = verify_consistency(cs, V)
        assert rep.passed
        for c in rep.checks:
            assert c.deviation < 1e-9

    def test_split_re_im(self):
        e = add(mul(rat(2), R), mul(rat(3), I, TH))
        re, im = split_re_im(e)
        assert re.key == mul(rat(2), R).key
        assert im.key == mul(rat(3), TH).key
