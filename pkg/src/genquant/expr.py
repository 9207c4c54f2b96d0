"""Minimal symbolic expression kernel.

Expression trees are immutable and always canonical: every node is built
through the constructor functions (``rat``, ``sym``, ``add``, ``mul``,
``pow_``, ``func``, ``field``), which fold constants, flatten nested
sums/products, collect like terms and powers, and sort commutative operand
lists under a total ordering.  Each node carries its canonical prefix
serialization in ``.key``; two expressions are equal iff their keys are
equal, so equality, hashing and ordering are all string operations.

Canonical form summary (documented for the golden-file format):

* rationals are exact (``fractions.Fraction``), printed ``n`` or ``n/d``;
* a Sum is ``(+ const term ...)`` with at most one leading rational
  constant and the remaining terms sorted by key;
* a Product is ``(* coeff factor ...)`` with at most one leading rational
  coefficient and the remaining factors sorted by key; repeated bases are
  collected into powers, ``i**2`` folds to ``-1`` and ``exp(a)*exp(b)``
  merges to ``exp(a+b)``;
* a Power is ``(^ base exponent)`` with a rational exponent; quotients are
  powers with negative exponents, ``sqrt`` is exponent 1/2; integer powers
  distribute over products and fold through nested powers;
* functions are ``(sin x)`` etc.; ``tan`` and ``cot`` are rewritten to
  sine/cosine quotients at construction; ``sin(0)``, ``cos(0)``,
  ``exp(0)``, ``log(1)``, ``exp(log x)`` and ``log(exp x)`` fold, and the
  parity of sin/cos normalizes a negated argument;
* sums apply the Pythagorean merge ``c*sin^2(x)*M + c*cos^2(x)*M -> c*M``
  to a fixed point (the only trig identity the kernel knows);
* an opaque-field derivative is the atom ``(D field ((var order) ...)
  (deps ...))`` where ``deps`` lists the variables the field depends on.

Only exact rationals appear in the tree; floating point exists solely in
:func:`evaluate`.
"""

from __future__ import annotations

import cmath
import math
from fractions import Fraction

FUNC_KINDS = ("sin", "cos", "tan", "cot", "exp", "log", "sqrt")

# symbols the numeric evaluator treats as known constants
KNOWN_CONSTANTS = {"pi": math.pi}


class ExprError(Exception):
    """Base error for the expression kernel."""


class UnsupportedExpressionError(ExprError):
    """Raised for constructs outside the kernel's closed grammar."""


class EvaluationError(ExprError):
    """An expression could not be evaluated at the given point."""


class DomainError(EvaluationError):
    """Evaluation hit a pole or left the real domain (sampler retries)."""


class Expr:
    """Base class of all canonical expression nodes."""

    __slots__ = ("key",)

    def __eq__(self, other):
        return isinstance(other, Expr) and self.key == other.key

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return self.key

    # arithmetic sugar so tests and builders read like formulas
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return add(self, mul(MINUS_ONE, _coerce(other)))

    def __rsub__(self, other):
        return add(_coerce(other), mul(MINUS_ONE, self))

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return mul(self, pow_(_coerce(other), -1))

    def __rtruediv__(self, other):
        return mul(_coerce(other), pow_(self, -1))

    def __pow__(self, other):
        return pow_(self, other)

    def __neg__(self):
        return mul(MINUS_ONE, self)


class Rat(Expr):
    __slots__ = ("value",)

    def __init__(self, value: Fraction):
        self.value = value
        self.key = str(value)


class Sym(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        if not name or not (name[0].isalpha() or name[0] == "_"):
            raise UnsupportedExpressionError(f"invalid symbol name {name!r}")
        if name == "i":
            raise UnsupportedExpressionError("'i' is the imaginary unit, not a symbol")
        self.name = name
        self.key = name


class ImaginaryUnit(Expr):
    __slots__ = ()

    def __init__(self):
        self.key = "i"


class Sum(Expr):
    __slots__ = ("ops",)

    def __init__(self, ops: tuple):
        self.ops = ops
        self.key = "(+ " + " ".join(o.key for o in ops) + ")"


class Prod(Expr):
    __slots__ = ("ops",)

    def __init__(self, ops: tuple):
        self.ops = ops
        self.key = "(* " + " ".join(o.key for o in ops) + ")"


class Pow(Expr):
    __slots__ = ("base", "exp")

    def __init__(self, base: Expr, exp: "Rat"):
        self.base = base
        self.exp = exp
        self.key = f"(^ {base.key} {exp.key})"


class Func(Expr):
    __slots__ = ("kind", "arg")

    def __init__(self, kind: str, arg: Expr):
        self.kind = kind
        self.arg = arg
        self.key = f"({kind} {arg.key})"


class FieldDeriv(Expr):
    """Partial derivative of an opaque field, kept as an atom.

    ``orders`` is a sorted tuple of (variable, order) pairs; an empty tuple
    is the field value itself.  ``deps`` fixes which variables the field
    depends on, so differentiation along other variables yields zero.
    """

    __slots__ = ("fieldname", "orders", "deps")

    def __init__(self, fieldname: str, orders: tuple, deps: tuple):
        self.fieldname = fieldname
        self.orders = orders
        self.deps = deps
        odesc = " ".join(f"({v} {n})" for v, n in orders)
        self.key = f"(D {fieldname} ({odesc}) ({' '.join(deps)}))"


def rat(x) -> Rat:
    """Exact rational constant from int, Fraction, string, or Rat."""
    if isinstance(x, Rat):
        return x
    if isinstance(x, Expr):
        raise UnsupportedExpressionError(f"not a rational: {x.key}")
    return Rat(Fraction(x))


def sym(name: str) -> Sym:
    return Sym(name)


def field(fieldname: str, orders=None, deps=()) -> FieldDeriv:
    """Opaque-field derivative atom; ``orders`` maps variable -> order."""
    items = sorted((orders or {}).items())
    for v, n in items:
        if n < 1:
            raise UnsupportedExpressionError("derivative orders must be >= 1")
        if v not in deps:
            raise UnsupportedExpressionError(f"{fieldname} does not depend on {v}")
    return FieldDeriv(fieldname, tuple(items), tuple(deps))


ZERO = rat(0)
ONE = rat(1)
MINUS_ONE = rat(-1)
HALF = rat(Fraction(1, 2))
I = ImaginaryUnit()


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return rat(x)
    raise UnsupportedExpressionError(f"cannot coerce {x!r} into an expression")


def _split_coeff(e: Expr):
    """Split a canonical term into (rational coefficient, factor tuple)."""
    if isinstance(e, Prod):
        if isinstance(e.ops[0], Rat):
            return e.ops[0].value, e.ops[1:]
        return Fraction(1), e.ops
    return Fraction(1), (e,)


def _factor_exp(f: Expr):
    """View a canonical factor as a (base, exponent) pair."""
    if isinstance(f, Pow):
        return f.base, f.exp.value
    return f, Fraction(1)


def _mono_key(factors) -> str:
    return "\x00".join(f.key for f in factors)


def _rebuild_monomial(powers: dict):
    """powers: base key -> (base, exponent); returns sorted factor tuple."""
    parts = []
    for _, (b, e) in powers.items():
        if e == 0:
            continue
        parts.append(pow_(b, e))
    parts.sort(key=lambda p: p.key)
    return tuple(parts)


def _pythagorean_merge(groups: dict):
    """Fixed-point rewrite c*sin^2(x)*M + c*cos^2(x)*M -> c*M on a term table.

    ``groups`` maps monomial key -> [Fraction coefficient, factor tuple].
    Each merge strictly reduces the number of terms, so this terminates.
    """
    changed = True
    while changed:
        changed = False
        for k in sorted(groups):
            coeff, factors = groups[k]
            if coeff == 0:
                continue
            powers = {}
            for f in factors:
                b, e = _factor_exp(f)
                powers[b.key] = (b, e)
            for f in factors:
                b, e = _factor_exp(f)
                if not (isinstance(b, Func) and b.kind == "sin"):
                    continue
                if e.denominator != 1 or e < 2:
                    continue
                cosb = Func("cos", b.arg)
                partner = dict(powers)
                partner[b.key] = (b, e - 2)
                pb, pe = partner.get(cosb.key, (cosb, Fraction(0)))
                partner[cosb.key] = (cosb, pe + 2)
                pkey = _mono_key(_rebuild_monomial(partner))
                if pkey == k or pkey not in groups:
                    continue
                pcoeff, _ = groups[pkey]
                if pcoeff != coeff or pcoeff == 0:
                    continue
                reduced = dict(powers)
                reduced[b.key] = (b, e - 2)
                rfactors = _rebuild_monomial(reduced)
                rkey = _mono_key(rfactors)
                del groups[k]
                del groups[pkey]
                slot = groups.setdefault(rkey, [Fraction(0), rfactors])
                slot[0] += coeff
                changed = True
                break
            if changed:
                break


def add(*ops) -> Expr:
    """Canonical sum: flattens, collects like terms, merges sin^2+cos^2."""
    const = Fraction(0)
    groups: dict = {}
    pending = [_coerce(o) for o in reversed(ops)]
    while pending:
        t = pending.pop()
        if isinstance(t, Sum):
            pending.extend(reversed(t.ops))
            continue
        if isinstance(t, Rat):
            const += t.value
            continue
        coeff, factors = _split_coeff(t)
        slot = groups.setdefault(_mono_key(factors), [Fraction(0), factors])
        slot[0] += coeff
    _pythagorean_merge(groups)
    terms = []
    for k in sorted(groups):
        coeff, factors = groups[k]
        if coeff == 0:
            continue
        if not factors:
            const += coeff
            continue
        terms.append(mul(rat(coeff), *factors))
    terms.sort(key=lambda t: t.key)
    if const != 0 or not terms:
        terms.insert(0, rat(const))
    if len(terms) == 1:
        return terms[0]
    return Sum(tuple(terms))


_ATOMIC_FACTOR = (Sym, Func, Pow, Sum, FieldDeriv)


def mul(*ops) -> Expr:
    """Canonical product: flattens, folds constants and i, collects powers."""
    coeff = Fraction(1)
    i_count = 0
    powers: dict = {}
    exp_args = []
    pending = [_coerce(o) for o in reversed(ops)]
    while pending:
        f = pending.pop()
        if isinstance(f, Prod):
            pending.extend(reversed(f.ops))
            continue
        if isinstance(f, Rat):
            coeff *= f.value
            continue
        if isinstance(f, ImaginaryUnit):
            i_count += 1
            continue
        if isinstance(f, Func) and f.kind == "exp":
            exp_args.append(f.arg)
            continue
        if isinstance(f, Pow):
            b, e = f.base, f.exp.value
            slot = powers.setdefault(b.key, [b, Fraction(0)])
            slot[1] += e
            continue
        slot = powers.setdefault(f.key, [f, Fraction(0)])
        slot[1] += 1
    if coeff == 0:
        return ZERO
    factors = []
    reprocess = []
    for k in sorted(powers):
        b, e = powers[k]
        if e == 0:
            continue
        p = pow_(b, e)
        if isinstance(p, _ATOMIC_FACTOR) and not (
            isinstance(p, Func) and p.kind == "exp"
        ):
            factors.append(p)
        else:
            reprocess.append(p)
    if exp_args:
        merged = func("exp", add(*exp_args))
        if merged is not ONE and merged != ONE:
            if isinstance(merged, Func) and merged.kind == "exp":
                factors.append(merged)
            else:
                reprocess.append(merged)
    i_count %= 4
    if i_count == 2:
        coeff = -coeff
        i_count = 0
    elif i_count == 3:
        coeff = -coeff
        i_count = 1
    if reprocess:
        rest = [rat(coeff)] + factors + reprocess + ([I] if i_count else [])
        return mul(*rest)
    if i_count:
        factors.append(I)
    factors.sort(key=lambda f: f.key)
    if coeff != 1 or not factors:
        factors.insert(0, rat(coeff))
    if len(factors) == 1:
        return factors[0]
    return Prod(tuple(factors))


def _iroot(n: int, k: int):
    """Exact integer k-th root of n >= 0, or None."""
    if n < 0:
        return None
    r = round(n ** (1.0 / k))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand**k == n:
            return cand
    return None


def pow_(base, exponent) -> Expr:
    """Canonical power with a rational exponent."""
    b = _coerce(base)
    if isinstance(exponent, Expr):
        if not isinstance(exponent, Rat):
            raise UnsupportedExpressionError(
                f"exponent must be rational, got {exponent.key}"
            )
        e = exponent.value
    else:
        e = Fraction(exponent)
    if e == 0:
        return ONE
    if e == 1:
        return b
    if isinstance(b, Rat):
        if b.value == 0:
            if e < 0:
                raise DomainError("division by zero")
            return ZERO
        if e.denominator == 1:
            return rat(b.value**e)
        if b.value > 0:
            rn = _iroot(b.value.numerator, e.denominator)
            rd = _iroot(b.value.denominator, e.denominator)
            if rn is not None and rd is not None:
                return rat(Fraction(rn, rd) ** e.numerator)
        return Pow(b, rat(e))
    if isinstance(b, ImaginaryUnit):
        if e.denominator != 1:
            return Pow(b, rat(e))
        k = e.numerator % 4
        return (ONE, I, MINUS_ONE, mul(MINUS_ONE, I))[k]
    if isinstance(b, Pow) and e.denominator == 1:
        return pow_(b.base, b.exp.value * e)
    if isinstance(b, Prod) and e.denominator == 1:
        return mul(*[pow_(f, e) for f in b.ops])
    if isinstance(b, Func) and b.kind == "exp":
        return func("exp", mul(rat(e), b.arg))
    return Pow(b, rat(e))


def _leading_sign_negative(e: Expr) -> bool:
    if isinstance(e, Rat):
        return e.value < 0
    if isinstance(e, Prod):
        return isinstance(e.ops[0], Rat) and e.ops[0].value < 0
    if isinstance(e, Sum):
        return _leading_sign_negative(e.ops[0])
    return False


def func(kind: str, arg) -> Expr:
    """Canonical function application for the closed kind set."""
    if kind not in FUNC_KINDS:
        raise UnsupportedExpressionError(f"unsupported function kind {kind!r}")
    a = _coerce(arg)
    if kind == "sqrt":
        return pow_(a, Fraction(1, 2))
    if kind == "tan":
        return mul(func("sin", a), pow_(func("cos", a), -1))
    if kind == "cot":
        return mul(func("cos", a), pow_(func("sin", a), -1))
    if kind == "exp":
        if a == ZERO:
            return ONE
        if isinstance(a, Func) and a.kind == "log":
            return a.arg
        return Func("exp", a)
    if kind == "log":
        if a == ONE:
            return ZERO
        if isinstance(a, Func) and a.kind == "exp":
            return a.arg
        return Func("log", a)
    # sin / cos
    if a == ZERO:
        return ZERO if kind == "sin" else ONE
    if _leading_sign_negative(a):
        na = mul(MINUS_ONE, a)
        if kind == "sin":
            return mul(MINUS_ONE, Func("sin", na))
        return Func("cos", na)
    return Func(kind, a)


def sin(a):
    return func("sin", a)


def cos(a):
    return func("cos", a)


def exp(a):
    return func("exp", a)


def log(a):
    return func("log", a)


def sqrt(a):
    return func("sqrt", a)


def simplify(e: Expr) -> Expr:
    """Rebuild an expression bottom-up through the canonical constructors.

    Trees built through the constructors are already canonical, so this is
    the identity on them; it exists as the explicit idempotence hook.
    """
    if isinstance(e, (Rat, Sym, ImaginaryUnit, FieldDeriv)):
        return e
    if isinstance(e, Sum):
        return add(*[simplify(o) for o in e.ops])
    if isinstance(e, Prod):
        return mul(*[simplify(o) for o in e.ops])
    if isinstance(e, Pow):
        return pow_(simplify(e.base), e.exp)
    if isinstance(e, Func):
        return func(e.kind, simplify(e.arg))
    raise UnsupportedExpressionError(f"unknown node {e!r}")


def serialize(e: Expr) -> str:
    """Canonical prefix serialization (the node's identity key)."""
    return e.key


def differentiate(e: Expr, v) -> Expr:
    """Exact partial derivative with respect to a symbol."""
    name = v.name if isinstance(v, Sym) else str(v)

    def d(n: Expr) -> Expr:
        if isinstance(n, (Rat, ImaginaryUnit)):
            return ZERO
        if isinstance(n, Sym):
            return ONE if n.name == name else ZERO
        if isinstance(n, FieldDeriv):
            if name not in n.deps:
                return ZERO
            orders = dict(n.orders)
            orders[name] = orders.get(name, 0) + 1
            return field(n.fieldname, orders, n.deps)
        if isinstance(n, Sum):
            return add(*[d(o) for o in n.ops])
        if isinstance(n, Prod):
            terms = []
            for idx, o in enumerate(n.ops):
                rest = n.ops[:idx] + n.ops[idx + 1 :]
                terms.append(mul(d(o), *rest))
            return add(*terms)
        if isinstance(n, Pow):
            return mul(n.exp, pow_(n.base, n.exp.value - 1), d(n.base))
        if isinstance(n, Func):
            da = d(n.arg)
            if da == ZERO:
                return ZERO
            if n.kind == "sin":
                return mul(func("cos", n.arg), da)
            if n.kind == "cos":
                return mul(MINUS_ONE, func("sin", n.arg), da)
            if n.kind == "exp":
                return mul(n, da)
            if n.kind == "log":
                return mul(pow_(n.arg, -1), da)
            raise UnsupportedExpressionError(
                f"cannot differentiate function kind {n.kind!r}"
            )
        raise UnsupportedExpressionError(f"cannot differentiate {n!r}")

    return d(e)


def substitute(e: Expr, bindings: dict) -> Expr:
    """Simultaneous substitution of atoms (symbols or field derivatives).

    Keys may be Expr atoms or symbol names.  Replacements are not
    re-substituted, so ``{x: y, y: x}`` swaps.
    """
    table = {}
    for k, v in bindings.items():
        key = k.key if isinstance(k, Expr) else str(k)
        table[key] = _coerce(v)
    if not table:
        return e

    def walk(n: Expr) -> Expr:
        hit = table.get(n.key)
        if hit is not None:
            return hit
        if isinstance(n, Sum):
            return add(*[walk(o) for o in n.ops])
        if isinstance(n, Prod):
            return mul(*[walk(o) for o in n.ops])
        if isinstance(n, Pow):
            return pow_(walk(n.base), n.exp)
        if isinstance(n, Func):
            return func(n.kind, walk(n.arg))
        return n

    return walk(e)


def bind_fields(e: Expr, concrete: dict) -> Expr:
    """Replace opaque-field derivative atoms with derivatives of concrete
    expressions: ``concrete`` maps field name -> Expr over the field's
    dependencies."""
    bindings = {}
    for atom in atoms(e).values():
        if isinstance(atom, FieldDeriv) and atom.fieldname in concrete:
            val = concrete[atom.fieldname]
            for v, n in atom.orders:
                for _ in range(n):
                    val = differentiate(val, v)
            bindings[atom] = val
    return substitute(e, bindings)


def free_symbols(e: Expr) -> set:
    """Names of all Sym leaves."""
    out = set()

    def walk(n):
        if isinstance(n, Sym):
            out.add(n.name)
        elif isinstance(n, Sum) or isinstance(n, Prod):
            for o in n.ops:
                walk(o)
        elif isinstance(n, Pow):
            walk(n.base)
        elif isinstance(n, Func):
            walk(n.arg)

    walk(e)
    return out


def atoms(e: Expr) -> dict:
    """All sampling atoms (symbols and field derivatives), keyed by .key."""
    out = {}

    def walk(n):
        if isinstance(n, (Sym, FieldDeriv)):
            out[n.key] = n
        elif isinstance(n, (Sum, Prod)):
            for o in n.ops:
                walk(o)
        elif isinstance(n, Pow):
            walk(n.base)
        elif isinstance(n, Func):
            walk(n.arg)

    walk(e)
    return out


def contains_symbol(e: Expr, name: str) -> bool:
    return name in free_symbols(e)


def evaluate(e: Expr, env: dict) -> complex:
    """Numerically evaluate at a point; env maps atom keys to numbers.

    Raises :class:`DomainError` at poles or outside real function domains
    (the equivalence sampler treats that as "resample").
    """

    def ev(n: Expr) -> complex:
        if isinstance(n, Rat):
            return complex(n.value)
        if isinstance(n, Sym):
            if n.name in env:
                return complex(env[n.name])
            if n.name in KNOWN_CONSTANTS:
                return complex(KNOWN_CONSTANTS[n.name])
            raise EvaluationError(f"unbound symbol {n.name!r}")
        if isinstance(n, ImaginaryUnit):
            return 1j
        if isinstance(n, FieldDeriv):
            if n.key in env:
                return complex(env[n.key])
            raise EvaluationError(f"unbound field atom {n.key}")
        if isinstance(n, Sum):
            return sum(ev(o) for o in n.ops)
        if isinstance(n, Prod):
            out = 1 + 0j
            for o in n.ops:
                out *= ev(o)
            return out
        if isinstance(n, Pow):
            b = ev(n.base)
            x = n.exp.value
            if b == 0:
                if x < 0:
                    raise DomainError("pole: zero base with negative exponent")
                return 0j
            if x.denominator != 1 and b.imag == 0 and b.real < 0:
                raise DomainError("fractional power of a negative value")
            try:
                return b ** float(x) if x.denominator != 1 else b ** int(x)
            except (OverflowError, ValueError) as exc:
                raise DomainError(str(exc)) from exc
        if isinstance(n, Func):
            a = ev(n.arg)
            try:
                if n.kind == "sin":
                    return cmath.sin(a)
                if n.kind == "cos":
                    return cmath.cos(a)
                if n.kind == "exp":
                    return cmath.exp(a)
                if n.kind == "log":
                    if a == 0:
                        raise DomainError("log of zero")
                    if a.imag == 0 and a.real < 0:
                        raise DomainError("log of a negative value")
                    return cmath.log(a)
            except OverflowError as exc:
                raise DomainError(str(exc)) from exc
            raise UnsupportedExpressionError(f"cannot evaluate kind {n.kind!r}")
        raise UnsupportedExpressionError(f"cannot evaluate {n!r}")

    return ev(e)


def expand(e: Expr) -> Expr:
    """Distribute products and positive integer powers over sums."""
    if isinstance(e, (Rat, Sym, ImaginaryUnit, FieldDeriv)):
        return e
    if isinstance(e, Sum):
        return add(*[expand(o) for o in e.ops])
    if isinstance(e, Func):
        return func(e.kind, expand(e.arg))
    if isinstance(e, Pow):
        b = expand(e.base)
        x = e.exp.value
        if isinstance(b, Sum) and x.denominator == 1 and x > 1:
            out = b
            for _ in range(int(x) - 1):
                out = _distribute(out, b)
            return out
        return pow_(b, e.exp)
    if isinstance(e, Prod):
        out = ONE
        for o in e.ops:
            out = _distribute(out, expand(o))
        return out
    raise UnsupportedExpressionError(f"cannot expand {e!r}")


def _distribute(a: Expr, b: Expr) -> Expr:
    aterms = a.ops if isinstance(a, Sum) else (a,)
    bterms = b.ops if isinstance(b, Sum) else (b,)
    return add(*[mul(x, y) for x in aterms for y in bterms])


def poly_decompose(e: Expr, names) -> dict:
    """Write ``e`` as a polynomial in the given symbols.

    Returns {exponent tuple -> coefficient Expr} with exponents aligned to
    ``names``.  Raises if the symbols occur non-polynomially (inside a
    function, a denominator, or a fractional power).
    """
    names = tuple(names)
    index = {n: k for k, n in enumerate(names)}
    zero_mono = (0,) * len(names)

    def check_free(n: Expr):
        if free_symbols(n) & set(names):
            raise UnsupportedExpressionError(
                f"non-polynomial dependence on {names} in {n.key}"
            )

    def merge(into: dict, other: dict, scale=None):
        for mono, c in other.items():
            cc = c if scale is None else mul(scale, c)
            into[mono] = add(into.get(mono, ZERO), cc)

    def convolve(a: dict, b: dict) -> dict:
        out: dict = {}
        for m1, c1 in a.items():
            for m2, c2 in b.items():
                mono = tuple(x + y for x, y in zip(m1, m2))
                out[mono] = add(out.get(mono, ZERO), mul(c1, c2))
        return out

    def walk(n: Expr) -> dict:
        if isinstance(n, Sym) and n.name in index:
            mono = tuple(1 if k == index[n.name] else 0 for k in range(len(names)))
            return {mono: ONE}
        if isinstance(n, (Rat, Sym, ImaginaryUnit, FieldDeriv)):
            return {zero_mono: n}
        if isinstance(n, Func):
            check_free(n.arg)
            return {zero_mono: n}
        if isinstance(n, Sum):
            out: dict = {}
            for o in n.ops:
                merge(out, walk(o))
            return out
        if isinstance(n, Prod):
            out = {zero_mono: ONE}
            for o in n.ops:
                out = convolve(out, walk(o))
            return out
        if isinstance(n, Pow):
            x = n.exp.value
            inner_free = free_symbols(n.base) & set(names)
            if not inner_free:
                return {zero_mono: n}
            if x.denominator != 1 or x < 1:
                raise UnsupportedExpressionError(
                    f"non-polynomial power of {sorted(inner_free)} in {n.key}"
                )
            out = {zero_mono: ONE}
            base = walk(n.base)
            for _ in range(int(x)):
                out = convolve(out, base)
            return out
        raise UnsupportedExpressionError(f"cannot decompose {n!r}")

    result = walk(e)
    return {m: c for m, c in result.items() if c != ZERO}
