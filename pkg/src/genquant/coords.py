"""Differential geometry of orthogonal curvilinear coordinate systems.

A coordinate system is two or three named coordinates with open ranges,
plus either an embedding map (from which scale factors and frame vectors
are derived) or directly supplied scale factors (orthogonality is then
assumed and flagged).  The metric is diagonal, g_ii = h_i**2.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .equivalence import DEFAULT_SEED, equivalent, interior_interval
from .expr import (
    Expr,
    HALF,
    ONE,
    Pow,
    Prod,
    Rat,
    ZERO,
    add,
    differentiate,
    evaluate,
    mul,
    pow_,
    sym,
)


class CoordinateError(Exception):
    pass


class OrthogonalityError(CoordinateError):
    """The embedding map's tangent frame is not orthogonal."""

    def __init__(self, pair, residual):
        self.pair = pair
        self.residual = residual
        super().__init__(
            f"tangent vectors for coordinates {pair[0]!r} and {pair[1]!r} "
            f"are not orthogonal (residual {residual})"
        )


class ScaleFactorError(CoordinateError):
    pass


# names that cannot be coordinates: they label time, constants, fields,
# or generated momentum / displacement symbols
RESERVED_NAMES = {"t", "m", "hbar", "pi", "i", "inf", "R", "S", "V", "F"}
RESERVED_PREFIXES = ("p_", "delta_")


@dataclass(frozen=True)
class Coordinate:
    name: str
    lo: float = -math.inf
    hi: float = math.inf
    periodic: bool = False

    def __post_init__(self):
        if self.name in RESERVED_NAMES or self.name.startswith(RESERVED_PREFIXES):
            raise CoordinateError(f"coordinate name {self.name!r} is reserved")
        if not self.lo < self.hi:
            raise CoordinateError(f"empty range for {self.name!r}")


def momentum_symbol(coord_name: str):
    return sym("p_" + coord_name)


def displacement_symbol(coord_name: str):
    return sym("delta_" + coord_name)


def positive_sqrt(e: Expr) -> Expr:
    """Square root of an expression positive on the chart interior.

    Extracts even powers factor by factor (valid because coordinates stay
    inside their open ranges, where the scale factors are positive); any
    remainder keeps an explicit 1/2 power.
    """
    factors = e.ops if isinstance(e, Prod) else (e,)
    outside = []
    remainder = []
    for f in factors:
        if isinstance(f, Rat):
            root = pow_(f, HALF)
            if isinstance(root, Rat):
                outside.append(root)
            else:
                remainder.append(f)
            continue
        if isinstance(f, Pow) and f.exp.value.denominator == 1:
            n = int(f.exp.value)
            if n % 2 == 0:
                outside.append(pow_(f.base, n // 2))
            else:
                half = (n - 1) // 2 if n > 0 else (n + 1) // 2
                if half:
                    outside.append(pow_(f.base, half))
                remainder.append(pow_(f.base, n - 2 * half))
            continue
        remainder.append(f)
    if remainder:
        outside.append(pow_(mul(*remainder), HALF))
    return mul(*outside) if outside else ONE


@dataclass(frozen=True)
class ChristoffelTable:
    """Connection coefficients of the diagonal metric, keyed by (k, i, j)."""

    dim: int
    entries: dict

    def __call__(self, k: int, i: int, j: int) -> Expr:
        return self.entries.get((k, i, j), ZERO)

    def nonzero(self):
        return sorted(
            (idx, e) for idx, e in self.entries.items() if e != ZERO
        )


@dataclass(frozen=True)
class CoordinateSystem:
    name: str
    coords: tuple
    h: tuple
    map_exprs: tuple | None = None
    frame: tuple | None = None
    orthogonality_assumed: bool = False

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def names(self):
        return tuple(c.name for c in self.coords)

    def u_syms(self):
        return tuple(sym(c.name) for c in self.coords)

    def p_syms(self):
        return tuple(momentum_symbol(c.name) for c in self.coords)

    def delta_syms(self):
        return tuple(displacement_symbol(c.name) for c in self.coords)

    def delta_names(self):
        return tuple("delta_" + c.name for c in self.coords)

    def domains(self) -> dict:
        """Interior sampling intervals for the coordinates."""
        return {c.name: interior_interval(c.lo, c.hi) for c in self.coords}

    def metric(self):
        return tuple(pow_(hi, 2) for hi in self.h)

    def jacobians(self):
        """(volume Jacobian h1*h2*h3, momentum Jacobian 1/(h1*h2*h3))."""
        j_u = mul(*self.h)
        return j_u, pow_(j_u, -1)

    def christoffel(self) -> ChristoffelTable:
        g = self.metric()
        ginv = tuple(pow_(hi, -2) for hi in self.h)
        names = self.names

        def gm(a, b):
            return g[a] if a == b else ZERO

        entries = {}
        n = self.dim
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    val = mul(
                        HALF,
                        ginv[k],
                        add(
                            differentiate(gm(k, i), names[j]),
                            differentiate(gm(k, j), names[i]),
                            mul(-1, differentiate(gm(i, j), names[k])),
                        ),
                    )
                    if val != ZERO:
                        entries[(k, i, j)] = val
        return ChristoffelTable(n, entries)


def frame_and_scale_factors(map_exprs, coord_names, domains=None, seed=None, tol=1e-9):
    """Scale factors and unit frame vectors of an embedding map.

    Returns (h, e) where h[i] = |dr/du_i| and e[i] is the unit tangent.
    Raises :class:`OrthogonalityError` naming the first offending pair.
    """
    tangents = []
    for name in coord_names:
        tangents.append(tuple(differentiate(x, name) for x in map_exprs))
    n = len(coord_names)
    for i in range(n):
        for j in range(i + 1, n):
            dot = add(*[mul(a, b) for a, b in zip(tangents[i], tangents[j])])
            if not equivalent(dot, ZERO, tol=tol, domains=domains, seed=seed):
                raise OrthogonalityError((coord_names[i], coord_names[j]), dot.key)
    h = []
    frame = []
    for i in range(n):
        g_ii = add(*[mul(a, a) for a in tangents[i]])
        hi = positive_sqrt(g_ii)
        h.append(hi)
        frame.append(tuple(mul(a, pow_(hi, -1)) for a in tangents[i]))
    return tuple(h), tuple(frame)


def _check_positive(h, coords, seed=None, samples=24):
    rng = random.Random(DEFAULT_SEED if seed is None else seed)
    domains = {c.name: interior_interval(c.lo, c.hi) for c in coords}
    for hi in h:
        for _ in range(samples):
            env = {name: rng.uniform(*iv) for name, iv in domains.items()}
            try:
                val = evaluate(hi, env)
            except Exception as exc:
                raise ScaleFactorError(
                    f"scale factor {hi.key} not evaluable at {env}: {exc}"
                ) from exc
            if not (abs(val.imag) < 1e-12 and val.real > 0):
                raise ScaleFactorError(
                    f"scale factor {hi.key} is not positive at {env} (value {val})"
                )


def system_from_map(name, coords, map_exprs, seed=None) -> CoordinateSystem:
    coords = tuple(coords)
    if len(coords) not in (2, 3):
        raise CoordinateError("only 2- or 3-dimensional systems are supported")
    domains = {c.name: interior_interval(c.lo, c.hi) for c in coords}
    h, frame = frame_and_scale_factors(
        tuple(map_exprs), [c.name for c in coords], domains=domains, seed=seed
    )
    _check_positive(h, coords, seed=seed)
    return CoordinateSystem(
        name=name,
        coords=coords,
        h=h,
        map_exprs=tuple(map_exprs),
        frame=frame,
        orthogonality_assumed=False,
    )


def system_from_factors(name, coords, h, seed=None) -> CoordinateSystem:
    coords = tuple(coords)
    if len(coords) not in (2, 3):
        raise CoordinateError("only 2- or 3-dimensional systems are supported")
    if len(h) != len(coords):
        raise CoordinateError("one scale factor per coordinate is required")
    _check_positive(tuple(h), coords, seed=seed)
    return CoordinateSystem(
        name=name,
        coords=coords,
        h=tuple(h),
        map_exprs=None,
        frame=None,
        orthogonality_assumed=True,
    )


# ---------------------------------------------------------------------------
# chart registry for the built-in systems: numeric point maps from the
# cartesian embedding, plus the symbolic partial inverse (only entries
# expressible with the kernel's function set, which covers the radial
# symbols central potentials need)


@dataclass(frozen=True)
class Chart:
    from_cartesian_numeric: object  # callable (x, y, z?) -> coord tuple, or None outside the chart
    inverse_exprs: dict  # coord name -> Expr over cartesian names


def _sph_from_cart(x, y, z):
    r = math.sqrt(x * x + y * y + z * z)
    if r < 1e-9:
        return None
    st = math.hypot(x, y)
    if st < 1e-9:
        return None
    theta = math.acos(max(-1.0, min(1.0, z / r)))
    phi = math.atan2(y, x) % (2 * math.pi)
    return (r, theta, phi)


def _cyl_from_cart(x, y, z):
    rho = math.hypot(x, y)
    if rho < 1e-9:
        return None
    phi = math.atan2(y, x) % (2 * math.pi)
    return (rho, phi, z)


def _pol_from_cart(x, y):
    r = math.hypot(x, y)
    if r < 1e-9:
        return None
    theta = math.atan2(y, x) % (2 * math.pi)
    return (r, theta)


def _radial3(names=("x", "y", "z")):
    return add(*[pow_(sym(n), 2) for n in names])


BUILTIN_CHARTS = {
    "cartesian": Chart(
        from_cartesian_numeric=lambda x, y, z: (x, y, z),
        inverse_exprs={"x": sym("x"), "y": sym("y"), "z": sym("z")},
    ),
    "spherical": Chart(
        from_cartesian_numeric=_sph_from_cart,
        inverse_exprs={"r": pow_(_radial3(), HALF)},
    ),
    "cylindrical": Chart(
        from_cartesian_numeric=_cyl_from_cart,
        inverse_exprs={"rho": pow_(_radial3(("x", "y")), HALF), "z": sym("z")},
    ),
    "polar2d": Chart(
        from_cartesian_numeric=_pol_from_cart,
        inverse_exprs={"r": pow_(_radial3(("x", "y")), HALF)},
    ),
}
