"""Tower reduction and the Maxwell reconstruction pipeline."""

from fractions import Fraction

import numpy as np
import pytest

from covtomo.algebra import Polynomial, degree_cap
from covtomo.domain import StarDomain
from covtomo.forms import Connection, Form, exterior_d, wedge
from covtomo.grid import BoundaryData
from covtomo.homotopy import homotopy
from covtomo.metric import center_coprojection, codifferential, cohomotopy
from covtomo.tower import (
    ConservationError,
    LevelSpec,
    decompose_operator,
    maxwell_reconstruct,
    solve_tower,
)
from covtomo.transport import SeriesConfig, _max_abs_at

x3, y3, z3 = (Polynomial.variable(3, i) for i in range(3))


def two_level_setup():
    dom = StarDomain.box(3, 1, grid=13)
    phi2_star = Form(3, 1, {((1,), (0,)): x3, ((0,), (0,)): -y3})
    A_top = Connection.scalar([Polynomial.const(3, Fraction(1, 4)),
                               Polynomial.zero(3), Polynomial.zero(3)])
    J = exterior_d(phi2_star) + wedge(A_top.form, phi2_star)
    levels = [
        LevelSpec("contravariant", X=(x3, y3, z3)),
        LevelSpec("covariant", A=A_top),
    ]
    alpha = BoundaryData.from_form(phi2_star)
    return dom, levels, J, alpha, phi2_star


def test_decompose_operator_grades():
    dom, levels, J, alpha, _ = two_level_setup()
    spec = decompose_operator(levels, J, alpha)
    assert spec.grades == [2, 1]


def test_decompose_operator_single_level():
    dom = StarDomain.box(2, 1, grid=9)
    A = Connection.zero(2)
    J = Form.monomial(2, 2, (0, 1), Polynomial.const(2, 1))
    alpha = BoundaryData.from_form(Form.basis_one_form(2, 0))
    spec = decompose_operator([LevelSpec("covariant", A=A)], J, alpha)
    assert spec.grades == [1]


def test_decompose_operator_rejects_bad_grades():
    dom = StarDomain.box(2, 1, grid=9)
    J = Form.monomial(2, 2, (0, 1), Polynomial.const(2, 1))
    levels = [LevelSpec("covariant", A=Connection.zero(2)) for _ in range(3)]
    alpha = BoundaryData.from_form(Form.basis_one_form(2, 0))
    with pytest.raises(ValueError):
        decompose_operator(levels, J, alpha)  # grades would go negative


def test_decompose_operator_boundary_grade_mismatch():
    dom, levels, J, _, _ = two_level_setup()
    bad_alpha = BoundaryData.from_form(Form.from_scalar(x3))
    with pytest.raises(ValueError):
        decompose_operator(levels, J, bad_alpha)


def test_tower_solved_and_telescopes():
    dom, levels, J, alpha, phi2_star = two_level_setup()
    spec = decompose_operator(levels, J, alpha)
    sol = solve_tower(spec, dom, SeriesConfig())
    assert sol.status == "solved"
    assert sol.blocked_level is None
    assert sol.composed_residual <= 1e-8
    assert all(r is not None for r in sol.level_reports)
    # top-level field reproduces the boundary-compatible solution
    diff = sol.phis[1] - phi2_star
    pts = dom.ball_lattice(0.5, 7)
    assert _max_abs_at(diff, pts) < 1e-8


def test_tower_blocked_at_top():
    dom, levels, J, alpha, _ = two_level_setup()
    bad_piece = homotopy(exterior_d(Form.monomial(3, 2, (0, 1), z3)), dom)
    spec = decompose_operator(levels, J + bad_piece, alpha)
    sol = solve_tower(spec, dom, SeriesConfig())
    assert sol.status == "blocked"
    assert sol.blocked_level == 2
    assert "image" in sol.reason


def test_tower_zero_data():
    dom, levels, _, _, _ = two_level_setup()
    J0 = Form.zero(3, 2)
    alpha0 = BoundaryData.from_form(Form.zero(3, 1))
    spec = decompose_operator(levels, J0, alpha0)
    sol = solve_tower(spec, dom, SeriesConfig())
    assert sol.status == "solved"
    pts = dom.ball_lattice(0.5, 5)
    for phi in sol.phis:
        assert _max_abs_at(phi, pts) < 1e-10


def test_tower_no_partial_success():
    dom, levels, J, alpha, _ = two_level_setup()
    spec = decompose_operator(levels, J, alpha)
    sol = solve_tower(spec, dom, SeriesConfig())
    assert sol.status in ("solved", "blocked")
    if sol.status == "solved":
        assert all(r.residual_max <= 10 * r.tail_norm + 1e-8 for r in sol.level_reports)


def test_levelspec_json_roundtrip():
    dom, levels, J, alpha, _ = two_level_setup()
    for lv in levels:
        back = LevelSpec.from_json(lv.to_json())
        assert back.kind == lv.kind
        if lv.A is not None:
            assert back.A.form == lv.A.form
        if lv.X is not None:
            assert back.X == lv.X


def test_tower_runs_maxwell_system():
    # the field/potential system delta F = J, d A = F as a generic two-level
    # tower: contravariant top (zero vector field -> plain delta) with the
    # field trace as boundary data, covariant bottom (zero connection ->
    # plain d).  A degree-2 potential keeps the field components affine, so
    # the box-grid extension reproduces them exactly and the tower solves.
    dom = StarDomain.box(3, 1, grid=13)
    A_star = Form(3, 1, {
        ((0,), (0,)): y3 * z3,
        ((1,), (0,)): x3 * x3,
        ((2,), (0,)): x3 * y3,
    })
    F_star = exterior_d(A_star)
    J_star = codifferential(F_star)
    assert codifferential(J_star).is_zero
    zero_poly = Polynomial.zero(3)
    levels = [
        LevelSpec("covariant", A=Connection.zero(3)),             # d A = F
        LevelSpec("contravariant", X=(zero_poly,) * 3),           # delta F = J
    ]
    spec = decompose_operator(levels, J_star, BoundaryData.from_form(F_star))
    assert spec.grades == [1, 2]
    sol = solve_tower(spec, dom, SeriesConfig())
    assert sol.status == "solved"
    assert sol.composed_residual <= 1e-8
    pts = dom.ball_lattice(0.4, 7)
    assert _max_abs_at(sol.phis[1] - F_star, pts) < 1e-8
    # the recovered potential differs from A_star only by an exact form
    gauge_gap = exterior_d(sol.phis[0]) - F_star
    assert _max_abs_at(gauge_gap, pts) < 1e-8


# ---------------------------------------------------------------------------
# Maxwell
# ---------------------------------------------------------------------------


def manufactured_potential():
    A_star = Form(3, 1, {
        ((0,), (0,)): y3 * y3 * z3,
        ((1,), (0,)): x3 * z3 + z3 * z3 * z3,
        ((2,), (0,)): x3 * x3 * y3,
    })
    F_star = exterior_d(A_star)
    J_star = codifferential(F_star)
    return A_star, F_star, J_star


def test_maxwell_conservation_guard():
    dom = StarDomain.ball(3, 1)
    _, _, J_star = manufactured_potential()
    assert codifferential(J_star).is_zero
    with pytest.raises(ConservationError):
        maxwell_reconstruct(Form.monomial(3, 1, (0,), x3), None, dom)


def test_maxwell_dual_invariance_of_hJ():
    # delta h J = J - S J exactly for conserved polynomial currents
    dom = StarDomain.ball(3, 1)
    _, _, J_star = manufactured_potential()
    hJ = cohomotopy(J_star, dom)
    lhs = codifferential(hJ)
    rhs = J_star - center_coprojection(J_star, dom)
    assert lhs == rhs


def test_maxwell_manufactured_with_boundary():
    dom = StarDomain.ball(3, 1)
    _, F_star, J_star = manufactured_potential()
    rep = maxwell_reconstruct(J_star, F_star, dom, ansatz_degree=4)
    pts = dom.sample_points(9)
    diff = rep.F - F_star
    err = max((float(np.max(np.abs(p.eval_array(pts)))) for p in diff.terms.values()),
              default=0.0)
    assert err <= 1e-6
    assert rep.residual_dF <= 1e-6
    assert rep.residual_coexact <= 1e-6
    assert rep.boundary_misfit <= 1e-6
    # delta d A reproduces the current
    with degree_cap(64):
        defect = codifferential(exterior_d(rep.A)) - J_star
    err2 = max((float(np.max(np.abs(p.eval_array(pts)))) for p in defect.terms.values()),
               default=0.0)
    assert err2 <= 1e-6


def test_maxwell_without_boundary_data():
    dom = StarDomain.ball(3, 1)
    _, _, J_star = manufactured_potential()
    rep = maxwell_reconstruct(J_star, None, dom, ansatz_degree=4)
    assert rep.residual_dF <= 1e-8
    assert rep.residual_coexact <= 1e-12
    assert rep.boundary_misfit is None
    assert rep.coexact_freedom_dim > 0   # stated non-uniqueness is visible


def test_maxwell_zero_current():
    dom = StarDomain.ball(3, 1)
    rep = maxwell_reconstruct(Form.zero(3, 1), None, dom, ansatz_degree=2)
    pts = dom.sample_points(5)
    assert _max_abs_at(rep.F, pts) <= 1e-10
    assert _max_abs_at(rep.A, pts) <= 1e-10
    assert rep.exact_freedom_dim > 0


def test_maxwell_rejects_wrong_shape():
    dom = StarDomain.ball(3, 1)
    with pytest.raises(ValueError):
        maxwell_reconstruct(Form.zero(3, 2), None, dom)
    box = StarDomain.box(3, 1)
    with pytest.raises(ValueError):
        maxwell_reconstruct(Form.zero(3, 1), None, box)
