"""Exterior algebra core: wedge, d, insertions, pullback, norms."""

import math
import random
from fractions import Fraction

import pytest

from covtomo.algebra import Polynomial
from covtomo.corpus import random_form
from covtomo.domain import StarDomain
from covtomo.forms import (
    Connection,
    FiberSpec,
    Form,
    convergence_radius,
    exterior_d,
    insert_radial,
    pullback_center,
    sup_norm,
    wedge,
)

x2 = Polynomial.variable(2, 0)
y2 = Polynomial.variable(2, 1)
one2 = Polynomial.const(2, 1)

dx = Form.basis_one_form(2, 0)
dy = Form.basis_one_form(2, 1)


def test_wedge_orientation():
    vol = wedge(dx, dy)
    assert vol == Form.monomial(2, 2, (0, 1), one2)
    assert wedge(dy, dx) == vol.scale(-1)
    assert wedge(dx, dx).is_zero


def test_wedge_top_form_vanishes():
    # anything wedged onto a top form is zero
    top = Form.monomial(2, 2, (0, 1), x2 * y2)
    A = Connection.scalar([x2, y2])
    assert wedge(A.form, top).is_zero


def test_wedge_graded_anticommutativity():
    rng = random.Random(2)
    for _ in range(25):
        dim = rng.choice([2, 3])
        a = random_form(rng, dim, grade=rng.randint(0, dim), max_degree=3)
        b = random_form(rng, dim, grade=rng.randint(0, dim), max_degree=3)
        sign = (-1) ** (a.grade * b.grade)
        assert wedge(a, b) == wedge(b, a).scale(sign)


def test_wedge_matrix_action():
    # End(V) values act on vector values from the left
    fiber_v = FiberSpec(2, False)
    fiber_m = FiberSpec(2, True)
    A = Form(2, 1, {((0,), (0, 1)): one2}, fiber_m)   # E_{01} dx
    phi = Form(2, 0, {((), (1,)): x2}, fiber_v)       # x e_1
    out = wedge(A, phi)
    assert out.fiber == fiber_v
    assert out.coefficient((0,), (0,)) == x2
    assert out.coefficient((0,), (1,)).is_zero


def test_wedge_endo_composition():
    fiber_m = FiberSpec(2, True)
    A = Form(2, 1, {((0,), (0, 1)): one2}, fiber_m)
    B = Form(2, 0, {((), (1, 0)): one2}, fiber_m)
    out = wedge(A, B)
    assert out.coefficient((0,), (0, 0)) == one2
    assert out.coefficient((0,), (1, 1)).is_zero


def test_wedge_incompatible_fibers():
    fiber_v = FiberSpec(2, False)
    a = Form(2, 1, {((0,), (0,)): one2}, fiber_v)
    b = Form(2, 0, {((), (0,)): one2}, fiber_v)
    with pytest.raises(ValueError):
        wedge(a, b)


def test_exterior_d_examples():
    # d(x+1) = dx
    f = Form.from_scalar(x2 + Polynomial.const(2, 1))
    assert exterior_d(f) == dx
    # d(x dy) = dx^dy
    w = Form.monomial(2, 1, (1,), x2)
    assert exterior_d(w) == Form.monomial(2, 2, (0, 1), one2)


def test_d_squared_zero():
    rng = random.Random(4)
    for _ in range(30):
        dim = rng.choice([1, 2, 3])
        w = random_form(rng, dim)
        if w.grade <= dim - 2:
            assert exterior_d(exterior_d(w)).is_zero


def test_insert_radial_examples():
    dom1 = StarDomain.interval(-1, 1, center=0)
    dx1 = Form.basis_one_form(1, 0)
    assert insert_radial(dx1, dom1.center) == Form.from_scalar(Polynomial.variable(1, 0))
    w = Form(2, 1, {((1,), (0,)): x2, ((0,), (0,)): -y2})   # x dy - y dx
    assert insert_radial(w, (0, 0)).is_zero
    vol = Form.monomial(2, 2, (0, 1), one2)
    got = insert_radial(vol, (0, 0))
    assert got == Form(2, 1, {((1,), (0,)): x2, ((0,), (0,)): -y2})


def test_insert_is_antiderivation():
    rng = random.Random(9)
    for _ in range(20):
        dim = 3
        ka = rng.randint(1, 2)
        kb = rng.randint(0, 3 - ka)
        a = random_form(rng, dim, grade=ka, max_degree=2)
        b = random_form(rng, dim, grade=kb, max_degree=2)
        x0 = (0, 0, 0)
        lhs = insert_radial(wedge(a, b), x0)
        rhs = wedge(insert_radial(a, x0), b)
        if b.grade >= 1:
            term = wedge(a, insert_radial(b, x0)).scale((-1) ** a.grade)
            rhs = rhs + term
        assert lhs == rhs


def test_insert_grade_zero_rejected():
    with pytest.raises(ValueError):
        insert_radial(Form.from_scalar(x2), (0, 0))


def test_pullback_center():
    f = Form.from_scalar(x2 + Polynomial.const(2, 1))
    got = pullback_center(f, (Fraction(1, 2), Fraction(0)))
    assert got == Form.from_constant(2, Fraction(3, 2))
    assert pullback_center(dx, (0, 0)).is_zero
    const = Form.from_constant(2, 7)
    assert pullback_center(const, (Fraction(1, 3), Fraction(-1, 4))) == const


def test_sup_norm():
    dom = StarDomain.interval(0, 1, center=Fraction(1, 2))
    w = Form.monomial(1, 1, (0,), Polynomial.variable(1, 0))  # x dx
    assert abs(sup_norm(w, dom) - 1.0) < 1e-9
    assert sup_norm(Form.zero(1, 1), dom) == 0.0
    half = Form.monomial(1, 1, (0,), Polynomial.const(1, Fraction(1, 2)))
    assert abs(sup_norm(half, dom) - 0.5) < 1e-12


def test_sup_norm_monotone_in_density():
    dom = StarDomain.ball(2, 1)
    w = Form.from_scalar(x2 * x2 * y2)
    coarse = sup_norm(w, dom, per_axis=8, max_refine=0)
    fine = sup_norm(w, dom, per_axis=8, max_refine=2)
    assert fine >= coarse


def test_convergence_radius():
    dom = StarDomain.ball(2, 1)
    A = Connection.scalar([Polynomial.const(2, Fraction(1, 2)), Polynomial.zero(2)])
    assert abs(convergence_radius(A, 1, dom) - 2.0) < 1e-9
    A2 = Connection.scalar([Polynomial.const(2, 2), Polynomial.zero(2)])
    assert abs(convergence_radius(A2, 2, dom) - 1.0) < 1e-9
    assert convergence_radius(Connection.zero(2), 1, dom) == math.inf
    with pytest.raises(ValueError):
        convergence_radius(A, 0, dom)


def test_form_json_roundtrip():
    rng = random.Random(12)
    for _ in range(10):
        w = random_form(rng, 3, fiber=FiberSpec(2, False))
        assert Form.from_json(w.to_json()) == w


def test_basis_validation():
    with pytest.raises(ValueError):
        Form(2, 2, {((1, 0), (0,)): one2})      # unsorted basis
    with pytest.raises(ValueError):
        Form(2, 1, {((0, 1), (0,)): one2})      # wrong length
    with pytest.raises(ValueError):
        Form(2, 3, {})                           # grade > dim
