import random

import pytest

from genquant import pipeline
from genquant.dsl import build_system, parse_document
from genquant.expr import add, cos, exp, mul, pow_, rat, sin, sym


@pytest.fixture(scope="session")
def systems():
    """The four shipped coordinate systems, built once."""
    out = {}
    for name in pipeline.BUILTIN_SYSTEMS:
        doc = parse_document(pipeline.builtin_source(name))
        out[name] = build_system(doc)
    return out


@pytest.fixture(scope="session")
def documents():
    return {
        name: parse_document(pipeline.builtin_source(name))
        for name in pipeline.BUILTIN_SYSTEMS
    }


def random_expression(rng, symbols, depth=3):
    """Small random expression tree over the given symbols.

    Built from rationals, +, *, integer powers, sin/cos/exp; the shapes
    stay tame so finite differences and sampling are well conditioned.
    """
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.4:
            return rat(rng.randint(1, 5))
        return sym(rng.choice(symbols))
    kind = rng.randrange(5)
    if kind == 0:
        return add(
            random_expression(rng, symbols, depth - 1),
            random_expression(rng, symbols, depth - 1),
        )
    if kind == 1:
        return mul(
            random_expression(rng, symbols, depth - 1),
            random_expression(rng, symbols, depth - 1),
        )
    if kind == 2:
        return pow_(random_expression(rng, symbols, depth - 1), rng.choice([2, 3, -1]))
    if kind == 3:
        return sin(random_expression(rng, symbols, depth - 1))
    if kind == 4 and depth >= 2:
        return cos(random_expression(rng, symbols, depth - 1))
    return exp(random_expression(rng, symbols, depth - 1))


@pytest.fixture()
def expression_corpus():
    from genquant.expr import free_symbols

    rng = random.Random(20210)
    out = []
    while len(out) < 50:
        e = random_expression(rng, ["x", "y"])
        if free_symbols(e):
            out.append(e)
    return out
