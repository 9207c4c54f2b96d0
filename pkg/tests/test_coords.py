"""Frames, scale factors, Jacobians, and connection coefficients."""

import math

import pytest

from genquant.coords import (
    BUILTIN_CHARTS,
    Coordinate,
    CoordinateError,
    OrthogonalityError,
    positive_sqrt,
    frame_and_scale_factors,
    system_from_factors,
    system_from_map,
)
from genquant.equivalence import equivalent
from genquant.expr import ONE, add, cos, mul, pow_, rat, sin, sym

R, TH, PH = sym("r"), sym("theta"), sym("phi")


class TestFrames:
    def test_spherical_scale_factors(self, systems):
        cs = systems["spherical"]
        assert [h.key for h in cs.h] == ["1", "r", mul(R, sin(TH)).key]

    def test_identity_map_is_flat(self, systems):
        cs = systems["cartesian"]
        assert all(h == ONE for h in cs.h)
        # frame vectors are the coordinate axes
        for i, e_i in enumerate(cs.frame):
            assert [c.key for c in e_i] == [
                "1" if j == i else "0" for j in range(3)
            ]

    def test_cylindrical_scale_factors(self, systems):
        # differentiate the map columns and take norms by hand:
        # |(cos, sin, 0)| = 1, |(-rho sin, rho cos, 0)| = rho, |(0,0,1)| = 1
        cs = systems["cylindrical"]
        assert [h.key for h in cs.h] == ["1", "rho", "1"]

    def test_orthogonality_violation_names_the_pair(self):
        u, v = sym("u"), sym("v")
        with pytest.raises(OrthogonalityError) as err:
            frame_and_scale_factors((add(u, v), v), ("u", "v"))
        assert err.value.pair == ("u", "v")

    def test_positive_sqrt_extracts_even_powers(self):
        e = mul(pow_(R, 2), pow_(sin(TH), 2))
        assert positive_sqrt(e).key == mul(R, sin(TH)).key
        assert positive_sqrt(pow_(R, 4)).key == pow_(R, 2).key

    def test_dimension_guard(self):
        with pytest.raises(CoordinateError):
            system_from_factors("line", (Coordinate("x"),), (ONE,))


class TestJacobians:
    def test_spherical_momentum_jacobian(self, systems):
        ju, jp = systems["spherical"].jacobians()
        assert jp.key == mul(pow_(R, -2), pow_(sin(TH), -1)).key

    def test_cartesian_trivial(self, systems):
        ju, jp = systems["cartesian"].jacobians()
        assert ju == ONE and jp == ONE

    def test_cylindrical_volume_jacobian(self, systems):
        ju, _ = systems["cylindrical"].jacobians()
        assert ju.key == "rho"

    def test_reciprocity_for_all_systems(self, systems):
        for cs in systems.values():
            ju, jp = cs.jacobians()
            assert mul(ju, jp) == ONE


class TestChristoffel:
    def test_cartesian_connection_vanishes(self, systems):
        gamma = systems["cartesian"].christoffel()
        assert gamma.nonzero() == []

    def test_spherical_table(self, systems):
        gamma = systems["spherical"].christoffel()
        # standard values from the diagonal-metric formula
        assert gamma(0, 1, 1).key == mul(rat(-1), R).key
        assert gamma(1, 0, 1).key == pow_(R, -1).key
        assert gamma(2, 1, 2).key == mul(cos(TH), pow_(sin(TH), -1)).key
        assert gamma(0, 2, 2).key == mul(rat(-1), R, pow_(sin(TH), 2)).key
        assert gamma(1, 2, 2).key == mul(rat(-1), sin(TH), cos(TH)).key
        assert gamma(2, 0, 2).key == pow_(R, -1).key

    def test_polar_table(self, systems):
        gamma = systems["polar2d"].christoffel()
        assert gamma(0, 1, 1).key == mul(rat(-1), R).key
        assert gamma(1, 0, 1).key == pow_(R, -1).key

    def test_symmetry_in_lower_indices(self, systems):
        for cs in systems.values():
            gamma = cs.christoffel()
            for k in range(cs.dim):
                for i in range(cs.dim):
                    for j in range(cs.dim):
                        assert gamma(k, i, j) == gamma(k, j, i)

    def test_metric_compatibility(self, systems):
        from genquant.expr import ZERO, differentiate

        for cs in systems.values():
            g = cs.metric()
            gamma = cs.christoffel()
            for k in range(cs.dim):
                for i in range(cs.dim):
                    for j in range(cs.dim):
                        gij = g[i] if i == j else ZERO
                        nabla = add(
                            differentiate(gij, cs.names[k]),
                            mul(-1, gamma(j, k, i), g[j]),
                            mul(-1, gamma(i, k, j), g[i]),
                        )
                        assert nabla == ZERO


class TestMomentumDecomposition:
    def test_spherical_physical_components(self, systems):
        # physical momentum components p_i / h_i reproduce
        # (p_r, p_theta/r, p_phi/(r sin))
        cs = systems["spherical"]
        comps = [mul(p, pow_(h, -1)) for p, h in zip(cs.p_syms(), cs.h)]
        expected = [
            sym("p_r"),
            mul(sym("p_theta"), pow_(R, -1)),
            mul(sym("p_phi"), pow_(R, -1), pow_(sin(TH), -1)),
        ]
        for got, want in zip(comps, expected):
            assert equivalent(got, want, domains=cs.domains())


class TestFactorsOnly:
    def test_supplied_factors_flagged_assumed(self):
        cs = system_from_factors(
            "flat2",
            (Coordinate("u", 0, 5), Coordinate("v", 0, 5)),
            (ONE, ONE),
        )
        assert cs.orthogonality_assumed

    def test_nonpositive_factor_rejected(self):
        from genquant.coords import ScaleFactorError

        with pytest.raises(ScaleFactorError):
            system_from_factors(
                "bad",
                (Coordinate("u", 0, 5), Coordinate("v", 0, 5)),
                (mul(rat(-1), ONE), ONE),
            )


class TestCharts:
    def test_roundtrip_spherical_numeric(self):
        chart = BUILTIN_CHARTS["spherical"]
        r, th, ph = chart.from_cartesian_numeric(0.3, -0.4, 1.2)
        x = r * math.sin(th) * math.cos(ph)
        y = r * math.sin(th) * math.sin(ph)
        z = r * math.cos(th)
        assert abs(x - 0.3) < 1e-12 and abs(y + 0.4) < 1e-12 and abs(z - 1.2) < 1e-12

    def test_axis_points_rejected(self):
        assert BUILTIN_CHARTS["spherical"].from_cartesian_numeric(0, 0, 1.0) is None
        assert BUILTIN_CHARTS["polar2d"].from_cartesian_numeric(0, 0) is None
