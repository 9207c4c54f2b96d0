"""Pipeline drivers behind the service endpoints and the CLI.

Each driver takes a parsed document (plus options), runs the relevant
part of the derivation or verification chain, and returns a result object
that can render itself as text, LaTeX, or a schema-versioned JSON report.
"""

from __future__ import annotations

import importlib.resources
import math
import os
from dataclasses import dataclass, field as dc_field

from . import reference
from .classical import classical_hamiltonian, liouville_equation
from .coords import CoordinateSystem
from .dsl import CoordSysDocument, build_system, parse_document, parse_expression
from .equivalence import (
    DEFAULT_SEED,
    InconclusiveEquivalenceError,
    max_relative_deviation,
)
from .expr import (
    Expr,
    ZERO,
    add,
    atoms,
    free_symbols,
    mul,
    pow_,
)
from .numeric import (
    AxisSpec,
    GridPlan,
    build_grid,
    compare_spectra,
    discretize,
    eigen_spectrum,
    hamilton_operator,
    radial_spectrum,
    radial_structure,
)
from .orders import DerivTerm
from .quantize import (
    amplitude_expansion,
    madelung_collect,
    potential_atom,
    verify_consistency,
    wigner_transform,
)
from .render import (
    deriv_term_latex,
    deriv_term_text,
    equation_text,
    expr_latex,
    expr_text,
    json_report,
    op_reduced,
    operator_latex,
    operator_text,
)

SCHEMA_VERSION = 1
BUILTIN_SYSTEMS = ("cartesian", "spherical", "cylindrical", "polar2d")

SEED_ENV_VAR = "GENQUANT_SEED"


def default_seed() -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env:
        try:
            return int(env)
        except ValueError:
            pass
    return DEFAULT_SEED


def builtin_source(name: str) -> str:
    if name not in BUILTIN_SYSTEMS:
        raise FileNotFoundError(f"no built-in system named {name!r}")
    return (
        importlib.resources.files("genquant")
        .joinpath("systems")
        .joinpath(f"{name}.gq")
        .read_text()
    )


def load_source(path_or_name: str) -> str:
    """Read a .gq file; bare built-in names (with or without the
    extension) fall back to the packaged copies."""
    if os.path.exists(path_or_name):
        with open(path_or_name, "r", encoding="utf-8") as fh:
            return fh.read()
    base = os.path.basename(path_or_name)
    if base.endswith(".gq"):
        base = base[:-3]
    if base in BUILTIN_SYSTEMS:
        return builtin_source(base)
    raise FileNotFoundError(f"no such document: {path_or_name}")


def resolve_potential(
    doc: CoordSysDocument, cs: CoordinateSystem, potential_src: str | None
) -> Expr:
    if potential_src is not None:
        return parse_expression(potential_src, coord_names=cs.names, allow_fields=True)
    if doc.potential is not None:
        return doc.potential
    return potential_atom(cs)


@dataclass
class CheckItem:
    name: str
    status: str  # pass | fail | skip
    residual: float | None = None
    detail: str = ""

    def to_json(self):
        return {"name": self.name, "status": self.status, "residual": self.residual}


def _check_equiv(name, got, want, domains, seed, tol=1e-9) -> CheckItem:
    if got.key == want.key:
        return CheckItem(name, "pass", 0.0)
    try:
        dev, _ = max_relative_deviation(got, want, domains=domains, seed=seed)
    except InconclusiveEquivalenceError as exc:
        return CheckItem(name, "fail", None, f"inconclusive: {exc}")
    return CheckItem(name, "pass" if dev < tol else "fail", dev)


# ---------------------------------------------------------------------------
# derive


@dataclass
class DeriveResult:
    system: str
    cs: CoordinateSystem
    potential: Expr
    stages: dict  # name -> (text, latex) or richer payloads

    @property
    def passed(self) -> bool:
        return True

    def to_json(self) -> dict:
        payload = {
            name: {"text": text, "latex": latex}
            for name, (text, latex) in self.stages.items()
        }
        return {
            "schema": SCHEMA_VERSION,
            "command": "derive",
            "system": self.system,
            "stages": payload,
            "checks": [],
            "spectra": [],
            "deltas": [],
        }

    def render_text(self) -> str:
        lines = [f"derivation for coordinate system '{self.system}'", ""]
        for name, (text, _) in self.stages.items():
            lines.append(f"[{name}]")
            lines.append(text)
            lines.append("")
        return "\n".join(lines)

    def render_latex(self) -> str:
        lines = [f"% derivation for coordinate system '{self.system}'"]
        for name, (_, latex) in self.stages.items():
            if not latex:
                continue
            lines.append(f"% {name}")
            lines.append(r"\begin{equation*}" + latex + r"\end{equation*}")
        return "\n".join(lines) + "\n"


def _terms_text(terms) -> str:
    return "\n".join("  " + deriv_term_text(t) for t in terms)


def _terms_latex(terms) -> str:
    return " + ".join(deriv_term_latex(t) for t in terms)


def run_derive(doc: CoordSysDocument, potential_src=None, seed=None) -> DeriveResult:
    seed = default_seed() if seed is None else seed
    cs = build_system(doc, seed=seed)
    V = resolve_potential(doc, cs, potential_src)
    H = classical_hamiltonian(cs, V)
    L = liouville_equation(H)
    D = wigner_transform(L, cs)
    A = amplitude_expansion(cs)
    ms = madelung_collect(D, A, seed=seed)
    op = hamilton_operator(cs, V)
    ju, jp = cs.jacobians()
    gamma = cs.christoffel()

    from .render import _sym_latex

    stages: dict = {}
    stages["scale-factors"] = (
        ", ".join(f"h_{n} = {expr_text(h)}" for n, h in zip(cs.names, cs.h)),
        ", ".join(
            f"h_{{{_sym_latex(n)}}} = {expr_latex(h)}" for n, h in zip(cs.names, cs.h)
        ),
    )
    stages["jacobians"] = (
        f"J_u = {expr_text(ju)}, J_p = {expr_text(jp)}",
        rf"J_u = {expr_latex(ju)},\quad J_p = {expr_latex(jp)}",
    )
    nz = gamma.nonzero()
    stages["christoffel"] = (
        "\n".join(
            f"  Gamma^{cs.names[k]}_{{{cs.names[i]} {cs.names[j]}}} = {expr_text(e)}"
            for (k, i, j), e in nz
        )
        or "  all entries vanish",
        r",\ ".join(
            rf"\Gamma^{{{_sym_latex(cs.names[k])}}}"
            rf"_{{{_sym_latex(cs.names[i])}\,{_sym_latex(cs.names[j])}}}"
            f" = {expr_latex(e)}"
            for (k, i, j), e in nz
        )
        or r"\Gamma = 0",
    )
    stages["hamiltonian"] = (f"H = {expr_text(H.total)}", f"H = {expr_latex(H.total)}")
    stages["liouville"] = (
        _terms_text(L.terms) + "\n  = 0",
        _terms_latex(L.terms) + " = 0",
    )
    stages["density-equation"] = (
        _terms_text(D.terms) + "\n  = i*hbar * drho/dt",
        _terms_latex(D.terms) + r" = i\hbar\,\frac{\partial \rho}{\partial t}",
    )
    amp_lines = []
    for mono, coeff in A.poly().entries():
        if any(mono):
            label = "*".join(
                f"delta_{cs.names[k]}" + (f"^{n}" if n > 1 else "")
                for k, n in enumerate(mono)
                if n
            )
        else:
            label = "1"
        amp_lines.append(f"  {label}: {expr_text(coeff)}")
    stages["amplitude-table"] = ("\n".join(amp_lines), "")
    stages["continuity"] = (
        expr_text(ms.continuity) + " = 0",
        expr_latex(ms.continuity) + " = 0",
    )
    stages["hamilton-jacobi-bracket"] = (
        expr_text(ms.hj_bracket) + " = const",
        expr_latex(ms.hj_bracket) + r" = \text{const}",
    )
    stages["operator"] = (operator_text(op), operator_latex(op))
    stages["schrodinger"] = (
        f"({operator_text(op)}) psi = i*hbar * dpsi/dt",
        rf"\hat{{H}}\psi = i\hbar\,\frac{{\partial \psi}}{{\partial t}},\quad {operator_latex(op)}",
    )
    return DeriveResult(cs.name, cs, V, stages)


# ---------------------------------------------------------------------------
# verify


@dataclass
class VerifyResult:
    system: str
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "command": "verify",
            "system": self.system,
            "checks": [c.to_json() for c in self.checks],
            "spectra": [],
            "deltas": [],
            "passed": self.passed,
        }

    def render_text(self) -> str:
        lines = [f"verification for coordinate system '{self.system}'"]
        for c in self.checks:
            res = "" if c.residual is None else f"  (residual {c.residual:.3e})"
            det = f"  [{c.detail}]" if c.detail else ""
            lines.append(f"  [{c.status.upper():4}] {c.name}{res}{det}")
        lines.append("result: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def run_verify(doc: CoordSysDocument, potential_src=None, seed=None) -> VerifyResult:
    seed = default_seed() if seed is None else seed
    checks: list = []
    cs = build_system(doc, seed=seed)
    domains = cs.domains()
    if cs.orthogonality_assumed:
        checks.append(
            CheckItem(
                "frame-orthogonality", "skip", None, "scale factors supplied directly"
            )
        )
    else:
        checks.append(CheckItem("frame-orthogonality", "pass", 0.0))
    checks.append(CheckItem("scale-positivity", "pass", 0.0))

    ju, jp = cs.jacobians()
    rec = mul(ju, jp)
    checks.append(
        CheckItem(
            "jacobian-reciprocity",
            "pass" if rec.key == "1" else "fail",
            0.0 if rec.key == "1" else None,
            "" if rec.key == "1" else f"J_u * J_p = {rec.key}",
        )
    )

    gamma = cs.christoffel()
    sym_ok = all(
        gamma(k, i, j) == gamma(k, j, i)
        for k in range(cs.dim)
        for i in range(cs.dim)
        for j in range(cs.dim)
    )
    checks.append(CheckItem("christoffel-symmetry", "pass" if sym_ok else "fail"))

    # metric compatibility: the covariant derivative of the (diagonal)
    # metric must vanish identically, term by term in canonical form
    from .expr import differentiate

    g = cs.metric()
    compat_ok = True
    for k in range(cs.dim):
        for i in range(cs.dim):
            for j in range(cs.dim):
                gij = g[i] if i == j else ZERO
                nabla = add(
                    differentiate(gij, cs.names[k]),
                    mul(-1, gamma(j, k, i), g[j]),
                    mul(-1, gamma(i, k, j), g[i]),
                )
                if nabla != ZERO:
                    compat_ok = False
    checks.append(CheckItem("metric-compatibility", "pass" if compat_ok else "fail"))

    V = resolve_potential(doc, cs, potential_src)
    H = classical_hamiltonian(cs, V)
    L = liouville_equation(H)
    tt = L.time_term()
    checks.append(
        CheckItem(
            "liouville-time-term",
            "pass" if tt is not None and tt.coefficient.key == "1" else "fail",
        )
    )
    D = wigner_transform(L, cs)
    op = hamilton_operator(cs, V)
    flux_ok = all(
        mul(t.flux, pow_(h, 2)).key == ju.key
        for t, h in zip(op.terms, cs.h)
    )
    checks.append(CheckItem("operator-flux-selfadjoint", "pass" if flux_ok else "fail"))

    A = amplitude_expansion(cs)
    ms = madelung_collect(D, A, seed=seed)
    cont_atoms = atoms(ms.continuity)
    cont_ok = "i" not in cont_atoms and "hbar" not in cont_atoms
    checks.append(CheckItem("madelung-continuity-real", "pass" if cont_ok else "fail"))

    if cs.name == "spherical" and cs.names == ("r", "theta", "phi"):
        checks.append(
            _check_equiv(
                "momentum-jacobian-reference",
                jp,
                reference.momentum_jacobian(),
                domains,
                seed,
            )
        )
        checks.extend(
            _compare_terms(
                "liouville-reference", L.terms, reference.liouville_terms(), domains, seed
            )
        )
        checks.extend(
            _compare_terms(
                "density-reference", D.terms, reference.density_terms(), domains, seed
            )
        )
        checks.extend(
            _compare_operator(
                op, reference.operator_reduced_terms(), domains, seed
            )
        )
        checks.append(
            _check_equiv(
                "amplitude-dtheta2-reference",
                A.poly().coefficient((0, 2, 0)),
                reference.amplitude_dtheta2_coefficient(),
                domains,
                seed,
            )
        )
        checks.append(
            _check_equiv(
                "bracket-reference",
                ms.hj_bracket,
                reference.hamilton_jacobi_bracket(),
                domains,
                seed,
            )
        )
        checks.append(
            _check_equiv(
                "continuity-reference",
                ms.continuity,
                reference.continuity_equation(),
                domains,
                seed,
            )
        )

    rep = verify_consistency(cs, V, seed=seed)
    for c in rep.checks:
        checks.append(
            CheckItem(
                "consistency-" + c.name,
                "pass" if c.passed else "fail",
                c.deviation,
            )
        )
    return VerifyResult(cs.name, checks)


def _compare_terms(prefix, got_terms, want_terms, domains, seed):
    by_key_got = {t.derivs: t.coefficient for t in got_terms}
    by_key_want = {t.derivs: t.coefficient for t in want_terms}
    out = []
    if set(by_key_got) != set(by_key_want):
        missing = set(by_key_want) ^ set(by_key_got)
        out.append(
            CheckItem(prefix, "fail", None, f"term shape mismatch: {sorted(missing)}")
        )
        return out
    for derivs in sorted(by_key_want):
        label = ",".join(f"{v}^{n}" if n > 1 else v for v, n in derivs) or "multiplicative"
        out.append(
            _check_equiv(
                f"{prefix}[{label}]",
                by_key_got[derivs],
                by_key_want[derivs],
                domains,
                seed,
            )
        )
    return out


def _compare_operator(op, want_reduced, domains, seed):
    got = {axis: (outer, flux) for axis, outer, flux in op_reduced(op)}
    out = []
    for axis, outer, flux in want_reduced:
        go, gf = got[axis]
        out.append(
            _check_equiv(f"operator-reference[{axis}:outer]", go, outer, domains, seed)
        )
        out.append(
            _check_equiv(f"operator-reference[{axis}:flux]", gf, flux, domains, seed)
        )
    return out


# ---------------------------------------------------------------------------
# spectrum / compare


@dataclass
class GridOptions:
    points: int = 40
    box: float = 7.0
    radial_points: int = 400
    lmax: int | None = None
    spacing: str = "uniform"  # uniform | log (radial solves only)
    rmin: float = 1e-3
    mode: str = "auto"  # auto | product | radial


def plan_for_system(
    cs: CoordinateSystem, V: Expr, opts: GridOptions, levels: int
) -> GridPlan:
    radial = radial_structure(cs)
    v_radial = radial is not None and (free_symbols(V) <= {radial[0], "pi"})
    use_radial = opts.mode == "radial" or (
        opts.mode == "auto" and radial is not None and v_radial
    )
    if use_radial:
        if radial is None or not v_radial:
            raise ValueError(
                "the radial reduction needs the spherical structure and a radial potential"
            )
        lo = opts.rmin if opts.spacing == "log" else 0.0
        return GridPlan(
            mode="radial",
            radial=AxisSpec(
                radial[0],
                opts.radial_points,
                lo,
                opts.box,
                spacing=opts.spacing,
                boundary="singular",
            ),
            lmax=opts.lmax if opts.lmax is not None else levels + 1,
        )
    axes = []
    for c in cs.coords:
        if c.periodic:
            axes.append(AxisSpec(c.name, opts.points, c.lo, c.hi, boundary="periodic"))
        elif c.lo == -math.inf or c.hi == math.inf:
            lo = c.lo if c.lo != -math.inf else -opts.box
            hi = c.hi if c.hi != math.inf else opts.box
            kind = "dirichlet" if c.lo == -math.inf else "singular"
            axes.append(AxisSpec(c.name, opts.points, lo, hi, boundary=kind))
        else:
            # finite non-periodic ranges sit between coordinate
            # singularities (like the polar angle): offset nodes
            axes.append(AxisSpec(c.name, opts.points, c.lo, c.hi, boundary="singular"))
    return GridPlan(mode="product", axes=tuple(axes))


@dataclass
class SpectrumResult:
    system: str
    report: object

    @property
    def passed(self) -> bool:
        return True

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "command": "spectrum",
            "system": self.system,
            "grid": self.report.grid_meta,
            "eigenvalues": list(self.report.eigenvalues),
            "spectra": [
                {"value": c.value, "multiplicity": c.multiplicity}
                for c in self.report.clusters
            ],
            "checks": [],
            "deltas": [],
        }

    def render_text(self) -> str:
        lines = [f"spectrum for coordinate system '{self.system}'"]
        for c in self.report.clusters:
            lines.append(f"  E = {c.value:.10g}   multiplicity {c.multiplicity}")
        return "\n".join(lines)


def run_spectrum(
    doc: CoordSysDocument,
    potential_src=None,
    levels: int = 6,
    opts: GridOptions | None = None,
    seed=None,
) -> SpectrumResult:
    seed = default_seed() if seed is None else seed
    opts = opts or GridOptions()
    cs = build_system(doc, seed=seed)
    V = resolve_potential(doc, cs, potential_src)
    _reject_opaque(V, "spectrum")
    plan = plan_for_system(cs, V, opts, levels)
    if plan.mode == "radial":
        report = radial_spectrum(
            cs, V, levels, plan.lmax, plan.radial, per_l=max(levels, 2)
        )
        report = SpectrumReportSlice(report, levels)
    else:
        grid = build_grid(cs, plan.axes)
        disc = discretize(hamilton_operator(cs, V), grid)
        report = eigen_spectrum(disc, min(levels, disc.dim), seed=seed)
    return SpectrumResult(cs.name, report)


def SpectrumReportSlice(report, levels):
    """Radial solves enumerate generous level counts; trim for display."""
    from .numeric import SpectrumReport, cluster_eigenvalues

    vals = report.eigenvalues[: max(levels, 1)]
    return SpectrumReport(vals, cluster_eigenvalues(vals), report.grid_meta)


def _reject_opaque(V: Expr, command: str):
    from .expr import FieldDeriv

    for a in atoms(V).values():
        if isinstance(a, FieldDeriv):
            raise ValueError(
                f"{command} needs a concrete potential, got the unspecified "
                f"function {a.fieldname!r}"
            )


@dataclass
class CompareResult:
    report: object
    analytic: tuple = ()

    @property
    def passed(self) -> bool:
        return self.report.passed

    def to_json(self) -> dict:
        rep = self.report
        deltas = [
            {
                "level": k,
                "a": c.value_a,
                "b": c.value_b,
                "mult_a": c.mult_a,
                "mult_b": c.mult_b,
                "delta": c.delta,
                "passed": c.passed,
            }
            for k, c in enumerate(rep.aligned)
        ]
        return {
            "schema": SCHEMA_VERSION,
            "command": "compare",
            "systems": [rep.system_a, rep.system_b],
            "tol": rep.tol,
            "passed": rep.passed,
            "structural_mismatch": rep.structural_mismatch,
            "spectra": [
                [
                    {"value": c.value, "multiplicity": c.multiplicity}
                    for c in rep.spectrum_a.clusters
                ],
                [
                    {"value": c.value, "multiplicity": c.multiplicity}
                    for c in rep.spectrum_b.clusters
                ],
            ],
            "deltas": deltas,
            "checks": [
                {
                    "name": f"cluster-{k}",
                    "status": "pass" if c.passed else "fail",
                    "residual": c.delta,
                }
                for k, c in enumerate(rep.aligned)
            ],
        }

    def render_text(self) -> str:
        rep = self.report
        lines = [
            f"spectrum comparison: '{rep.system_a}' vs '{rep.system_b}' (tol {rep.tol})"
        ]
        if rep.structural_mismatch:
            lines.append(f"  structural mismatch: {rep.structural_mismatch}")
        for k, c in enumerate(rep.aligned):
            lines.append(
                f"  level {k}: {c.value_a:.8g} (x{c.mult_a})  vs  "
                f"{c.value_b:.8g} (x{c.mult_b})   delta {c.delta:.3e}  "
                + ("ok" if c.passed else "FAIL")
            )
        lines.append("result: " + ("PASS" if rep.passed else "FAIL"))
        return "\n".join(lines)


def run_compare(
    doc_a: CoordSysDocument,
    doc_b: CoordSysDocument,
    potential_src=None,
    levels: int = 4,
    tol: float = 0.02,
    opts_a: GridOptions | None = None,
    opts_b: GridOptions | None = None,
    seed=None,
) -> CompareResult:
    seed = default_seed() if seed is None else seed
    opts_a = opts_a or GridOptions()
    opts_b = opts_b or GridOptions()
    cs_a = build_system(doc_a, seed=seed)
    cs_b = build_system(doc_b, seed=seed)
    V_a, V_b = _potential_both(doc_a, doc_b, cs_a, cs_b, potential_src)
    _reject_opaque(V_a, "compare")
    plans = {
        "a": plan_for_system(cs_a, V_a, opts_a, levels),
        "b": plan_for_system(cs_b, V_b, opts_b, levels),
    }
    rep = compare_spectra(cs_a, cs_b, V_a, V_b, levels, plans, tol, seed=seed)
    return CompareResult(rep)


def _potential_both(doc_a, doc_b, cs_a, cs_b, potential_src):
    """Parse the shared potential against whichever system declares its
    symbols, then re-express it over the other via the registered charts."""
    from .coords import BUILTIN_CHARTS
    from .expr import substitute, sym as sym_

    last_err = None
    for first, cs1, cs2 in ((True, cs_a, cs_b), (False, cs_b, cs_a)):
        try:
            if potential_src is not None:
                V1 = parse_expression(potential_src, coord_names=cs1.names)
            else:
                doc1 = doc_a if first else doc_b
                if doc1.potential is None:
                    raise ValueError("compare needs a potential")
                V1 = doc1.potential
                _reject_opaque(V1, "compare")
        except Exception as exc:
            last_err = exc
            continue
        if cs1.name not in BUILTIN_CHARTS or cs2.name not in BUILTIN_CHARTS:
            raise ValueError(
                "cross-system compare needs registered charts for both systems "
                f"({cs1.name!r}, {cs2.name!r})"
            )
        # coordinate of system 1 -> expression over system 2
        chart1 = BUILTIN_CHARTS[cs1.name]
        maps2 = dict(zip(("x", "y", "z")[: cs2.dim], cs2.map_exprs or ()))
        if cs2.name == "cartesian":
            maps2 = {n: sym_(n) for n in cs2.names}
        subs = {}
        missing = None
        for name in free_symbols(V1) & set(cs1.names):
            inv = chart1.inverse_exprs.get(name)
            if inv is None:
                missing = name
                break
            subs[name] = substitute(inv, maps2)
        if missing is not None:
            raise ValueError(
                f"potential uses coordinate {missing!r} of {cs1.name!r}, which has "
                f"no registered expression over {cs2.name!r}"
            )
        V2 = substitute(V1, subs)
        return (V1, V2) if first else (V2, V1)
    raise last_err if last_err else ValueError("compare needs a potential")


def render_result(result, fmt: str) -> str:
    """Render a pipeline result: text, latex, or the JSON report."""
    if fmt == "json":
        return json_report(result.to_json())
    if fmt == "latex":
        if hasattr(result, "render_latex"):
            return result.render_latex()
        return result.render_text()
    return result.render_text()
