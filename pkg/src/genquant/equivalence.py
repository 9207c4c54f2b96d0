"""Randomized numeric equivalence testing for canonical expressions.

Two expressions are declared equivalent when their canonical forms match
or when they agree, within a relative tolerance, at 64 pseudo-random
sample points drawn from the interior of the variables' domains with a
fixed seed (default ``DEFAULT_SEED``).  Opaque-field derivative atoms are
sampled as independent variables: every identity produced by the
derivation pipeline is polynomial in those atoms, so agreement at generic
points is a sound check.
"""

from __future__ import annotations

import random

from .expr import DomainError, EvaluationError, Expr, FieldDeriv, Sym, atoms, evaluate

DEFAULT_SEED = 1905
DEFAULT_SAMPLES = 64

# fallback interior interval for symbols without a declared domain
# (positive, order one: safe under sqrt, log, and 1/x)
DEFAULT_DOMAIN = (0.25, 2.25)

# field-derivative atoms get magnitudes in this band with a random sign,
# keeping denominators like 1/R away from zero while staying generic
FIELD_MAGNITUDE = (0.3, 1.7)


class InconclusiveEquivalenceError(Exception):
    """Sampling never produced enough valid points (poles everywhere)."""


def interior_interval(lo: float, hi: float) -> tuple:
    """Compact interval strictly inside (lo, hi), clipping infinite ends."""
    if lo == float("-inf"):
        lo = min(-2.5, hi - 5.0) if hi != float("inf") else -2.5
    if hi == float("inf"):
        hi = max(2.8, lo + 5.0)
    span = hi - lo
    return (lo + 0.075 * span, hi - 0.075 * span)


def _draw(rng: random.Random, atom, domains: dict) -> float:
    if isinstance(atom, Sym):
        lo, hi = domains.get(atom.name, DEFAULT_DOMAIN)
        return rng.uniform(lo, hi)
    if isinstance(atom, FieldDeriv):
        mag = rng.uniform(*FIELD_MAGNITUDE)
        return mag if rng.random() < 0.5 else -mag
    raise TypeError(f"not a sampling atom: {atom!r}")


def max_relative_deviation(
    a: Expr,
    b: Expr,
    domains: dict | None = None,
    seed: int | None = None,
    samples: int = DEFAULT_SAMPLES,
):
    """Max of |a-b| / (1+|a|) over valid sample points.

    Returns (deviation, points_used).  Raises
    :class:`InconclusiveEquivalenceError` if fewer than ``samples`` valid
    points are found after a bounded number of attempts.
    """
    domains = domains or {}
    rng = random.Random(DEFAULT_SEED if seed is None else seed)
    names = {}
    names.update(atoms(a))
    names.update(atoms(b))
    ordered = [names[k] for k in sorted(names)]
    worst = 0.0
    used = 0
    attempts = 0
    max_attempts = samples * 16
    while used < samples and attempts < max_attempts:
        attempts += 1
        env = {atom.key: _draw(rng, atom, domains) for atom in ordered}
        try:
            va = evaluate(a, env)
            vb = evaluate(b, env)
        except DomainError:
            continue
        except EvaluationError:
            raise
        if not (abs(va) < 1e300 and abs(vb) < 1e300):
            continue
        worst = max(worst, abs(va - vb) / (1.0 + abs(va)))
        used += 1
    if used < samples:
        raise InconclusiveEquivalenceError(
            f"only {used}/{samples} valid sample points after {attempts} attempts"
        )
    return worst, used


def equivalent(
    a: Expr,
    b: Expr,
    tol: float = 1e-9,
    domains: dict | None = None,
    seed: int | None = None,
    samples: int = DEFAULT_SAMPLES,
) -> bool:
    """Canonical match, or sampled agreement |a-b| < tol*(1+|a|)."""
    if a.key == b.key:
        return True
    dev, _ = max_relative_deviation(a, b, domains=domains, seed=seed, samples=samples)
    return dev < tol
