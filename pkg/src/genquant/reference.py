"""Hand-transcribed closed forms for the spherical system.

These are independent transcriptions of the spherical phase-space
equation, momentum-volume Jacobian, density equation, quadratic
amplitude coefficient, and Hamiltonian operator, written out term by
term.  The derivation pipeline must reproduce each of them through the
equivalence checker; they are fixtures, not derived objects, so keep
them dumb and literal.
"""

from __future__ import annotations

from fractions import Fraction

from .expr import add, field, func, mul, pow_, rat, sym
from .orders import make_term

R = sym("r")
TH = sym("theta")
M = sym("m")
HBAR = sym("hbar")
SIN = func("sin", TH)
COT = func("cot", TH)  # canonicalizes to cos/sin


def radial_potential_slope():
    return field("V", {"r": 1}, deps=("r",))


def momentum_jacobian():
    """1 / (r**2 sin(theta))."""
    return mul(pow_(R, -2), pow_(SIN, -1))


def liouville_terms():
    """The six-term spherical phase-space equation (sum = 0)."""
    inv_m = pow_(M, -1)
    p_r, p_th, p_ph = sym("p_r"), sym("p_theta"), sym("p_phi")
    return (
        make_term(rat(1), "F", {"t": 1}),
        make_term(mul(p_r, inv_m), "F", {"r": 1}),
        make_term(mul(p_th, inv_m, pow_(R, -2)), "F", {"theta": 1}),
        make_term(mul(p_ph, inv_m, pow_(R, -2), pow_(SIN, -2)), "F", {"phi": 1}),
        make_term(
            mul(
                rat(-1),
                add(
                    radial_potential_slope(),
                    mul(rat(-1), pow_(p_th, 2), inv_m, pow_(R, -3)),
                    mul(rat(-1), pow_(p_ph, 2), inv_m, pow_(R, -3), pow_(SIN, -2)),
                ),
            ),
            "F",
            {"p_r": 1},
        ),
        make_term(
            mul(pow_(p_ph, 2), inv_m, pow_(R, -2), pow_(SIN, -2), COT),
            "F",
            {"p_theta": 1},
        ),
    )


def density_terms():
    """Left-hand terms of the spherical density equation.

    Convention: the sum of these equals i hbar d(rho)/dt.  The flux
    groups are written out by the product rule, e.g. the radial one is
    (1/r**2) d/dr (r**2 d/d(delta r)) = d**2/dr d(delta r) + (2/r)
    d/d(delta r), all scaled by -hbar**2/m.
    """
    k = mul(rat(-1), pow_(HBAR, 2), pow_(M, -1))  # -hbar^2/m
    kp = mul(pow_(HBAR, 2), pow_(M, -1))  # +hbar^2/m
    d_r, d_th = sym("delta_r"), sym("delta_theta")
    return (
        make_term(k, "rho", {"r": 1, "delta_r": 1}),
        make_term(mul(k, rat(2), pow_(R, -1)), "rho", {"delta_r": 1}),
        make_term(mul(k, pow_(R, -2)), "rho", {"theta": 1, "delta_theta": 1}),
        make_term(mul(k, pow_(R, -2), COT), "rho", {"delta_theta": 1}),
        make_term(
            mul(k, pow_(R, -2), pow_(SIN, -2)), "rho", {"phi": 1, "delta_phi": 1}
        ),
        make_term(mul(kp, d_r, pow_(R, -3)), "rho", {"delta_theta": 2}),
        make_term(
            add(
                mul(kp, d_r, pow_(R, -3), pow_(SIN, -2)),
                mul(kp, d_th, COT, pow_(R, -2), pow_(SIN, -2)),
            ),
            "rho",
            {"delta_phi": 2},
        ),
        make_term(mul(d_r, radial_potential_slope()), "rho", {}),
    )


def amplitude_dtheta2_coefficient():
    """(R/4)(d2R/dtheta2 + r dR/dr) - (1/4)(dR/dtheta)**2."""
    deps = ("r", "theta", "phi", "t")
    R0 = field("R", None, deps)
    return add(
        mul(
            rat(Fraction(1, 4)),
            R0,
            add(field("R", {"theta": 2}, deps), mul(R, field("R", {"r": 1}, deps))),
        ),
        mul(rat(Fraction(-1, 4)), pow_(field("R", {"theta": 1}, deps), 2)),
    )


def operator_reduced_terms():
    """(axis, outer, flux) of the spherical kinetic operator:
    (1/r**2) d/dr (r**2 d/dr .) + (1/(r**2 sin)) d/dth (sin d/dth .)
    + (1/(r**2 sin**2)) d2/dphi2."""
    return (
        ("r", pow_(R, -2), pow_(R, 2)),
        ("theta", mul(pow_(R, -2), pow_(SIN, -1)), SIN),
        ("phi", mul(pow_(R, -2), pow_(SIN, -2)), rat(1)),
    )


def hamilton_jacobi_bracket():
    """dS/dt + (grad S)**2 / 2m + V(r) - (hbar**2/2m) (Laplacian R)/R."""
    deps = ("r", "theta", "phi", "t")
    R0 = field("R", None, deps)
    S = lambda o: field("S", o, deps)
    Rd = lambda o: field("R", o, deps)
    grad_sq = add(
        pow_(S({"r": 1}), 2),
        mul(pow_(R, -2), pow_(S({"theta": 1}), 2)),
        mul(pow_(R, -2), pow_(SIN, -2), pow_(S({"phi": 1}), 2)),
    )
    lap_R = add(
        Rd({"r": 2}),
        mul(rat(2), pow_(R, -1), Rd({"r": 1})),
        mul(pow_(R, -2), Rd({"theta": 2})),
        mul(pow_(R, -2), COT, Rd({"theta": 1})),
        mul(pow_(R, -2), pow_(SIN, -2), Rd({"phi": 2})),
    )
    return add(
        S({"t": 1}),
        mul(rat(Fraction(1, 2)), pow_(M, -1), grad_sq),
        field("V", None, ("r",)),
        mul(rat(Fraction(-1, 2)), pow_(M, -1), pow_(HBAR, 2), pow_(R0, -1), lap_R),
    )


def continuity_equation():
    """d(R**2)/dt + div(R**2 grad S / m) in spherical form."""
    deps = ("r", "theta", "phi", "t")
    R0 = field("R", None, deps)
    S = lambda o: field("S", o, deps)
    Rd = lambda o: field("R", o, deps)
    flux_r = mul(pow_(R0, 2), S({"r": 1}))
    flux_th = mul(pow_(R0, 2), S({"theta": 1}), pow_(R, -2))
    flux_ph = mul(pow_(R0, 2), S({"phi": 1}), pow_(R, -2), pow_(SIN, -2))
    div = add(
        # (1/r^2) d/dr (r^2 flux_r)
        mul(rat(2), pow_(R, -1), flux_r),
        mul(rat(2), R0, Rd({"r": 1}), S({"r": 1})),
        mul(pow_(R0, 2), S({"r": 2})),
        # (1/(r^2 sin)) d/dth (sin * r^2 flux_th)
        mul(COT, flux_th),
        mul(rat(2), R0, Rd({"theta": 1}), S({"theta": 1}), pow_(R, -2)),
        mul(pow_(R0, 2), S({"theta": 2}), pow_(R, -2)),
        # d/dphi flux_ph
        mul(rat(2), R0, Rd({"phi": 1}), S({"phi": 1}), pow_(R, -2), pow_(SIN, -2)),
        mul(pow_(R0, 2), S({"phi": 2}), pow_(R, -2), pow_(SIN, -2)),
    )
    return add(mul(rat(2), R0, Rd({"t": 1})), mul(pow_(M, -1), div))
