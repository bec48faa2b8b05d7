"""Hodge star, codifferential, dual homotopy, and the dual identity suite."""

import random
from fractions import Fraction

import pytest

from covtomo.algebra import Polynomial
from covtomo.corpus import random_form, seeded_corpus
from covtomo.domain import StarDomain
from covtomo.forms import Form, exterior_d, radial_flat, wedge
from covtomo.metric import (
    center_coprojection,
    codecompose,
    codifferential,
    cohomotopy,
    dual_identity_report,
    hodge_star,
    laplacian,
)

dom1 = StarDomain.interval(0, 1, center=Fraction(1, 2))
dom2 = StarDomain.box(2, 1, center=(Fraction(1, 3), Fraction(-1, 4)))
dom3 = StarDomain.box(3, 1, center=(0, 0, 0))

x1 = Polynomial.variable(1, 0)
x2, y2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)


def test_hodge_star_2d():
    dx, dy = Form.basis_one_form(2, 0), Form.basis_one_form(2, 1)
    assert hodge_star(dx) == dy
    assert hodge_star(dy) == dx.scale(-1)
    vol = Form.monomial(2, 2, (0, 1), Polynomial.const(2, 1))
    assert hodge_star(vol) == Form.from_constant(2, 1)
    assert hodge_star(Form.from_constant(2, 1)) == vol


def test_double_star_sign_law():
    rng = random.Random(3)
    for _ in range(30):
        dim = rng.choice([1, 2, 3])
        w = random_form(rng, dim, max_degree=3)
        sign = (-1) ** (w.grade * (dim - w.grade))
        assert hodge_star(hodge_star(w)) == w.scale(sign)


def test_codifferential_sign_pin():
    # delta(x dx) = +1: the composition with the grade involution in front
    got = codifferential(Form.monomial(1, 1, (0,), x1))
    assert got == Form.from_constant(1, 1)
    # constant-coefficient one-forms are coclosed
    assert codifferential(Form.basis_one_form(1, 0)).is_zero


def test_codifferential_squared():
    rng = random.Random(6)
    for _ in range(25):
        dim = rng.choice([2, 3])
        w = random_form(rng, dim, grade=rng.randint(2, dim), max_degree=3)
        assert codifferential(codifferential(w)).is_zero


def test_laplacian_values():
    # the sign convention makes the Laplacian the analyst's one on functions
    assert laplacian(Form.from_scalar(x1 * x1)) == Form.from_constant(1, 2)
    assert laplacian(Form.from_scalar(x1 + Polynomial.const(1, 1))).is_zero
    harmonic = Form.from_scalar(x2 * x2 - y2 * y2)
    assert laplacian(harmonic).is_zero


def test_laplacian_commutes_with_d():
    rng = random.Random(11)
    for _ in range(15):
        w = random_form(rng, 2, grade=0, max_degree=3)
        assert exterior_d(laplacian(w)) == laplacian(exterior_d(w))


def test_laplacian_commutes_with_codifferential():
    rng = random.Random(29)
    for _ in range(15):
        w = random_form(rng, 2, grade=1, max_degree=3)
        assert codifferential(laplacian(w)) == laplacian(codifferential(w))


def test_cohomotopy_one_dim():
    # h(1) = (x - x0) dx, and delta h (1) = 1 - S(1) = 1
    one = Form.from_constant(1, 1)
    h1 = cohomotopy(one, dom1)
    assert h1 == Form.monomial(1, 1, (0,), x1 - Polynomial.const(1, Fraction(1, 2)))
    assert codifferential(h1) == one


def test_cohomotopy_kernel_mirror():
    # h vanishes on forms whose star is antiexact
    w = Form(2, 1, {((1,), (0,)): x2, ((0,), (0,)): -y2})  # x dy - y dx
    sw = hodge_star(w)
    from covtomo.homotopy import homotopy

    if homotopy(sw, StarDomain.box(2, 1, center=(0, 0))).is_zero:
        assert cohomotopy(w, StarDomain.box(2, 1, center=(0, 0))).is_zero


def test_dual_invariance_suite():
    corpus = seeded_corpus(42, 30, 2) + seeded_corpus(17, 18, 3)
    doms = [dom2] * 30 + [dom3] * 18
    for w, d in zip(corpus, doms):
        cd = codecompose(w, d)
        assert cd.reconstruct() == w
        assert codifferential(cd.coexact_part).is_zero


def test_codecompose_coclosed_input():
    # delta w = 0 below the top grade: (w, 0) with no center term
    w = Form(2, 1, {((1,), (0,)): x2, ((0,), (0,)): -y2})
    assert codifferential(w).is_zero
    cd = codecompose(w, dom2)
    assert cd.coexact_part == w
    assert cd.anticoexact_part.is_zero


def test_codecompose_anticoexact_annihilated_by_radial_flat():
    rng = random.Random(19)
    for _ in range(12):
        w = random_form(rng, 2, grade=rng.randint(1, 2), max_degree=3)
        cd = codecompose(w, dom2)
        kflat = radial_flat(2, dom2.center)
        assert wedge(kflat, cd.anticoexact_part).is_zero
        for poly in cd.anticoexact_part.terms.values():
            assert poly.eval_exact(dom2.center) == 0


def test_codecompose_projector_idempotence():
    # the anticoexact projector is idempotent: re-decomposing the anticoexact
    # part returns it unchanged
    rng = random.Random(23)
    for _ in range(10):
        w = random_form(rng, 2, grade=rng.randint(1, 2), max_degree=3)
        cd = codecompose(w, dom2)
        again = codecompose(cd.anticoexact_part, dom2)
        assert again.anticoexact_part == cd.anticoexact_part
        assert again.coexact_part.is_zero


def test_center_coprojection_top_grade_only():
    top = Form.monomial(2, 2, (0, 1), x2)
    s = center_coprojection(top, dom2)
    assert s == Form.monomial(2, 2, (0, 1), Polynomial.const(2, Fraction(1, 3)))
    assert center_coprojection(Form.from_scalar(x2), dom2).is_zero


def test_dual_identity_report():
    report = dual_identity_report(seeded_corpus(3, 10, 2), dom2)
    assert all(e["status"] == "pass" for e in report)


def test_hodge_star_rejects_endo():
    from covtomo.forms import FiberSpec

    w = Form(2, 1, {((0,), (0, 0)): x2}, FiberSpec(2, True))
    with pytest.raises(ValueError):
        hodge_star(w)
