"""Seeded random form generation for the identity suites and property tests."""

from __future__ import annotations

import random
from fractions import Fraction

from .algebra import Polynomial
from .forms import FiberSpec, Form


def random_polynomial(rng: random.Random, dim: int, max_degree: int = 4,
                      max_terms: int = 4) -> Polynomial:
    terms = {}
    for _ in range(rng.randint(1, max_terms)):
        exps = [0] * dim
        budget = rng.randint(0, max_degree)
        for _ in range(budget):
            exps[rng.randrange(dim)] += 1
        coeff = Fraction(rng.randint(-9, 9), rng.randint(1, 9))
        if coeff != 0:
            terms[tuple(exps)] = terms.get(tuple(exps), Fraction(0)) + coeff
    return Polynomial(dim, terms)


def random_form(rng: random.Random, dim: int, grade: int | None = None,
                fiber: FiberSpec | None = None, max_degree: int = 4) -> Form:
    import itertools

    if grade is None:
        grade = rng.randint(0, dim)
    fiber = fiber or FiberSpec(1, False)
    bases = list(itertools.combinations(range(dim), grade))
    terms = {}
    for basis in bases:
        for fib in fiber.indices():
            if rng.random() < 0.7:
                poly = random_polynomial(rng, dim, max_degree)
                if not poly.is_zero:
                    terms[(basis, fib)] = poly
    return Form(dim, grade, terms, fiber)


def seeded_corpus(seed: int, count: int, dim: int, max_degree: int = 4) -> list[Form]:
    """Forms of every grade (and a few vector-fiber ones) in a fixed order."""
    rng = random.Random(seed)
    corpus = []
    for i in range(count):
        if i % 7 == 6:
            fiber = FiberSpec(2, False)
        else:
            fiber = FiberSpec(1, False)
        corpus.append(random_form(rng, dim, grade=i % (dim + 1), fiber=fiber,
                                  max_degree=max_degree))
    return corpus
