"""Derivative terms and displacement-order bookkeeping."""

import pytest

from genquant.expr import ZERO, add, mul, pow_, rat, sym
from genquant.orders import DeltaPoly, DerivTerm, collect_orders, make_term

DELTAS = ("delta_r", "delta_theta")
A, B, C = sym("a"), sym("b"), sym("c")


class TestDerivTerm:
    def test_orders_must_be_positive(self):
        with pytest.raises(ValueError):
            DerivTerm(rat(1), "F", (("r", 0),))

    def test_zero_coefficient_rejected(self):
        with pytest.raises(ValueError):
            make_term(ZERO, "F", {"r": 1})

    def test_multiplicative_term_has_empty_index(self):
        t = make_term(A, "rho", {})
        assert t.derivs == ()
        assert t.total_order == 0


class TestCollectOrders:
    def test_degree_bookkeeping_with_discard(self):
        entries = [
            ((), A),
            (("delta_r",), B),
            (("delta_r", "delta_theta"), C),
        ]
        coll = collect_orders(entries, 1, DELTAS)
        assert [c.key for _, c in coll.orders[0]] == [A.key]
        assert [c.key for _, c in coll.orders[1]] == [B.key]
        assert len(coll.discarded) == 1
        assert coll.discarded[0][0] == (1, 1)

    def test_expression_monomials_accepted(self):
        dr = sym("delta_r")
        coll = collect_orders([(dr, A), (mul(dr, dr), B)], 2, DELTAS)
        assert coll.orders[1][0][0] == (1, 0)
        assert coll.orders[2][0][0] == (2, 0)

    def test_all_zero_input_collapses_to_empty(self):
        coll = collect_orders([((), ZERO), (("delta_r",), add(A, mul(-1, A)))], 1, DELTAS)
        assert coll.orders == {}
        assert coll.discarded == []

    def test_like_monomials_merge(self):
        coll = collect_orders([(("delta_r",), A), (("delta_r",), B)], 1, DELTAS)
        assert coll.orders[1][0][1].key == add(A, B).key


class TestDeltaPoly:
    def test_from_expr_and_coefficient(self):
        dr, dth = sym("delta_r"), sym("delta_theta")
        e = add(A, mul(B, dr), mul(C, dr, dth))
        p = DeltaPoly.from_expr(e, DELTAS)
        assert p.coefficient(()).key == A.key
        assert p.coefficient((dr,)).key == B.key
        assert p.coefficient(mul(dr, dth)).key == C.key

    def test_delta_derivative(self):
        dr = sym("delta_r")
        p = DeltaPoly.from_expr(mul(A, dr, dr), DELTAS)
        d = p.diff_delta("delta_r")
        assert d.coefficient((dr,)).key == mul(rat(2), A).key

    def test_coefficient_derivative(self):
        p = DeltaPoly.from_expr(mul(pow_(sym("r"), 2), sym("delta_r")), DELTAS)
        d = p.diff_coeff("r")
        assert d.coefficient((sym("delta_r"),)).key == mul(rat(2), sym("r")).key

    def test_product_truncation(self):
        dr = sym("delta_r")
        p = DeltaPoly.from_expr(add(rat(1), dr), DELTAS)
        q = p.mul_poly(p, trunc=1)
        assert q.coefficient(mul(dr, dr)) == ZERO
        assert q.coefficient((dr,)).key == rat(2).key
