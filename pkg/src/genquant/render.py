"""Rendering: plain-text and LaTeX expression printers, equation and
report formatting, and the stable JSON report dump.

The JSON report schema (version 1) is documented in the README; floats
are rounded to 10 significant digits before serialization so reports are
byte-stable for fixed inputs and seed.
"""

from __future__ import annotations

import json
from fractions import Fraction

from .expr import (
    Expr,
    FieldDeriv,
    Func,
    ImaginaryUnit,
    Pow,
    Prod,
    Rat,
    Sum,
    Sym,
)
from .orders import DerivTerm

_PREC_SUM = 1
_PREC_PROD = 2
_PREC_POW = 3
_PREC_ATOM = 4

GREEK = {
    "theta": r"\theta",
    "phi": r"\phi",
    "rho": r"\rho",
    "psi": r"\psi",
    "pi": r"\pi",
    "hbar": r"\hbar",
}


def _frac_text(v: Fraction) -> str:
    return str(v)


def expr_text(e: Expr, prec: int = 0) -> str:
    """Infix plain-text form."""
    out, myprec = _text(e)
    if myprec < prec:
        return f"({out})"
    return out


def _text(e: Expr):
    if isinstance(e, Rat):
        s = _frac_text(e.value)
        return s, (_PREC_ATOM if e.value >= 0 and e.value.denominator == 1 else _PREC_PROD)
    if isinstance(e, Sym):
        return e.name, _PREC_ATOM
    if isinstance(e, ImaginaryUnit):
        return "i", _PREC_ATOM
    if isinstance(e, FieldDeriv):
        # derivative atoms read like quotients, so powers must wrap them
        return _fieldderiv_text(e), (_PREC_ATOM if not e.orders else _PREC_PROD)
    if isinstance(e, Func):
        return f"{e.kind}({expr_text(e.arg)})", _PREC_ATOM
    if isinstance(e, Pow):
        x = e.exp.value
        if x < 0:
            inner = expr_text(pow_abs(e), _PREC_POW + 1)
            return f"1/{inner}", _PREC_PROD
        base = expr_text(e.base, _PREC_POW + 1)
        return f"{base}^{_exp_text(x)}", _PREC_POW
    if isinstance(e, Prod):
        num, den = [], []
        for f in e.ops:
            if isinstance(f, Rat):
                if f.value.numerator != 1 or f.value == 1:
                    num.append(
                        str(abs(f.value.numerator))
                        if abs(f.value.numerator) != 1 or len(e.ops) == 1
                        else None
                    )
                if f.value.denominator != 1:
                    den.append(str(f.value.denominator))
                if f.value < 0:
                    num.insert(0, "-SIGN-")
                continue
            if isinstance(f, Pow) and f.exp.value < 0:
                den.append(expr_text(pow_abs(f), _PREC_PROD + 1))
            else:
                num.append(expr_text(f, _PREC_PROD + 1))
        num = [x for x in num if x]
        negative = "-SIGN-" in num
        num = [x for x in num if x != "-SIGN-"]
        num_s = "*".join(num) if num else "1"
        out = num_s
        if den:
            den_s = "*".join(den)
            if len(den) > 1:
                den_s = f"({den_s})"
            out = f"{num_s}/{den_s}"
        if negative:
            out = "-" + out
        return out, _PREC_PROD if not negative else _PREC_SUM
    if isinstance(e, Sum):
        parts = []
        for k, t in enumerate(e.ops):
            s = expr_text(t, _PREC_SUM + 1 if k else _PREC_SUM)
            if k and not s.startswith("-"):
                parts.append(f" + {s}")
            elif k:
                parts.append(f" - {s[1:]}")
            else:
                parts.append(s)
        return "".join(parts), _PREC_SUM
    raise TypeError(f"cannot render {e!r}")


def pow_abs(p: Pow) -> Expr:
    from .expr import pow_

    return pow_(p.base, -p.exp.value)


def _exp_text(x: Fraction) -> str:
    if x.denominator == 1:
        return str(x)
    return f"({x})"


def _fieldderiv_text(e: FieldDeriv) -> str:
    if not e.orders:
        # amplitude fields are implicitly functions of every coordinate
        # and time; user-declared fields keep their argument list so
        # documents round-trip
        if e.fieldname in ("R", "S"):
            return e.fieldname
        return f"{e.fieldname}({', '.join(e.deps)})"
    total = sum(n for _, n in e.orders)
    sup = "" if total == 1 else str(total)
    dens = "".join(f"d{v}" + (str(n) if n > 1 else "") for v, n in e.orders)
    return f"d{sup}{e.fieldname}/{dens}"


# --- LaTeX ------------------------------------------------------------


def _sym_latex(name: str) -> str:
    if name in GREEK:
        return GREEK[name]
    if name.startswith("delta_"):
        return r"\delta " + _sym_latex(name[6:])
    if name.startswith("p_"):
        return "p_{" + _sym_latex(name[2:]) + "}"
    return name


def expr_latex(e: Expr, prec: int = 0) -> str:
    out, myprec = _latex(e)
    if myprec < prec:
        return r"\left(" + out + r"\right)"
    return out


def _latex(e: Expr):
    if isinstance(e, Rat):
        v = e.value
        if v.denominator == 1:
            return str(v), (_PREC_ATOM if v >= 0 else _PREC_SUM)
        mag = rf"\frac{{{abs(v.numerator)}}}{{{v.denominator}}}"
        return ("-" + mag if v < 0 else mag), (_PREC_ATOM if v >= 0 else _PREC_SUM)
    if isinstance(e, Sym):
        return _sym_latex(e.name), _PREC_ATOM
    if isinstance(e, ImaginaryUnit):
        return "i", _PREC_ATOM
    if isinstance(e, FieldDeriv):
        return _fieldderiv_latex(e), (_PREC_ATOM if not e.orders else _PREC_PROD)
    if isinstance(e, Func):
        name = {"sin": r"\sin", "cos": r"\cos", "exp": r"\exp", "log": r"\log"}[e.kind]
        return f"{name}({expr_latex(e.arg)})", _PREC_ATOM
    if isinstance(e, Pow):
        x = e.exp.value
        if x < 0:
            return rf"\frac{{1}}{{{expr_latex(pow_abs(e))}}}", _PREC_ATOM
        base = expr_latex(e.base, _PREC_POW + 1)
        return f"{base}^{{{x}}}", _PREC_POW
    if isinstance(e, Prod):
        num, den = [], []
        negative = False
        for f in e.ops:
            if isinstance(f, Rat):
                if f.value < 0:
                    negative = True
                v = abs(f.value)
                if v.numerator != 1:
                    num.append(str(v.numerator))
                if v.denominator != 1:
                    den.append(str(v.denominator))
                continue
            if isinstance(f, Pow) and f.exp.value < 0:
                den.append(expr_latex(pow_abs(f), 0))
            else:
                num.append(expr_latex(f, _PREC_PROD + 1))
        num_s = r"\,".join(num) if num else "1"
        if den:
            den_s = r"\,".join(den)
            out = rf"\frac{{{num_s}}}{{{den_s}}}"
        else:
            out = num_s
        if negative:
            return "-" + out, _PREC_SUM
        return out, _PREC_PROD
    if isinstance(e, Sum):
        parts = []
        for k, t in enumerate(e.ops):
            s = expr_latex(t, _PREC_SUM + 1 if k else _PREC_SUM)
            if k and not s.startswith("-"):
                parts.append(" + " + s)
            elif k:
                parts.append(" - " + s[1:])
            else:
                parts.append(s)
        return "".join(parts), _PREC_SUM
    raise TypeError(f"cannot render {e!r}")


def _fieldderiv_latex(e: FieldDeriv) -> str:
    if not e.orders:
        if e.fieldname in ("R", "S"):
            return e.fieldname
        args = ", ".join(_sym_latex(d) for d in e.deps)
        return f"{e.fieldname}({args})"
    total = sum(n for _, n in e.orders)
    sup = "" if total == 1 else f"^{{{total}}}"
    dens = r"\,".join(
        rf"\partial {_sym_latex(v)}" + (f"^{{{n}}}" if n > 1 else "")
        for v, n in e.orders
    )
    return rf"\frac{{\partial{sup} {e.fieldname}}}{{{dens}}}"


# --- equations --------------------------------------------------------


def deriv_term_text(t: DerivTerm, fieldname: str | None = None) -> str:
    fieldname = fieldname or t.fieldname
    coeff = expr_text(t.coefficient, _PREC_PROD)
    if not t.derivs:
        return f"{coeff} * {fieldname}"
    total = sum(n for _, n in t.derivs)
    sup = "" if total == 1 else str(total)
    dens = " ".join(f"d{v}" + (f"^{n}" if n > 1 else "") for v, n in t.derivs)
    return f"{coeff} * d{sup}{fieldname}/{dens}"


def deriv_term_latex(t: DerivTerm, fieldname: str | None = None) -> str:
    fieldname = _sym_latex(fieldname or t.fieldname)
    coeff = expr_latex(t.coefficient, _PREC_PROD)
    if not t.derivs:
        return rf"{coeff}\,{fieldname}"
    total = sum(n for _, n in t.derivs)
    sup = "" if total == 1 else f"^{{{total}}}"
    dens = r"\,".join(
        rf"\partial {_sym_latex(v)}" + (f"^{{{n}}}" if n > 1 else "")
        for v, n in t.derivs
    )
    return rf"{coeff}\,\frac{{\partial{sup} {fieldname}}}{{{dens}}}"


def equation_text(terms, rhs: str) -> str:
    return " + ".join(deriv_term_text(t) for t in terms) + " = " + rhs


def operator_text(op) -> str:
    pieces = []
    for axis, outer, flux in op_reduced(op):
        o = expr_text(outer, _PREC_PROD)
        f = expr_text(flux, _PREC_PROD)
        if f == "1":
            pieces.append(f"{o} * d^2/d{axis}^2")
        else:
            pieces.append(f"{o} * d/d{axis}( {f} * d/d{axis} )")
    V = expr_text(op.potential)
    return "-hbar^2/(2*m) * [ " + " + ".join(pieces) + " ] + " + V


def operator_latex(op) -> str:
    pieces = []
    for axis, outer, flux in op_reduced(op):
        o = expr_latex(outer, _PREC_PROD)
        a = _sym_latex(axis)
        f = expr_latex(flux, _PREC_PROD)
        if f == "1":
            pieces.append(rf"{o}\,\frac{{\partial^{{2}}}}{{\partial {a}^{{2}}}}")
        else:
            pieces.append(
                rf"{o}\,\frac{{\partial}}{{\partial {a}}}"
                rf"\left({f}\,\frac{{\partial}}{{\partial {a}}}\right)"
            )
    V = expr_latex(op.potential)
    return (
        r"\hat{H} = -\frac{\hbar^{2}}{2m}\left[" + " + ".join(pieces) + r"\right] + " + V
    )


def op_reduced(op):
    """Per-axis (outer, flux) with factors constant along the axis
    cancelled between the two coefficients, for display and goldens."""
    from .expr import ONE, contains_symbol, mul

    out = []
    for t in op.terms:
        factors = t.flux.ops if isinstance(t.flux, Prod) else (t.flux,)
        keep, move = [], []
        for f in factors:
            (keep if contains_symbol(f, t.axis) else move).append(f)
        flux = mul(*keep) if keep else ONE
        outer = mul(t.outer, *move)
        out.append((t.axis, outer, flux))
    return out


# --- stable JSON -------------------------------------------------------


def round_sig(x: float, digits: int = 10) -> float:
    if x == 0 or not (x == x) or x in (float("inf"), float("-inf")):
        return x
    return float(f"{x:.{digits}g}")


def _round_tree(obj):
    if isinstance(obj, float):
        return round_sig(obj)
    if isinstance(obj, dict):
        return {k: _round_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_tree(v) for v in obj]
    return obj


def json_report(obj: dict) -> str:
    """Schema-stable serialization: sorted keys, rounded floats."""
    return json.dumps(_round_tree(obj), sort_keys=True, indent=2) + "\n"
