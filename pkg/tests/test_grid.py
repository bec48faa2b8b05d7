"""Grid backend: sampling, discrete operators, quadrature, PDE solves."""

from fractions import Fraction

import numpy as np
import pytest

from covtomo.algebra import Polynomial
from covtomo.domain import StarDomain
from covtomo.forms import Form
from covtomo.grid import (
    BoundaryData,
    GridForm,
    discrete_d,
    fit_polynomial_form,
    form_channels,
    grid_wedge,
    quadrature_H,
    sample,
    solve_harmonic,
    solve_heat,
    write_csv,
)

x1 = Polynomial.variable(1, 0)


def test_sample_values():
    dom = StarDomain.interval(0, 1, grid=5)
    gf = sample(Form.from_scalar(x1 + Polynomial.const(1, 1)), dom)
    assert np.allclose(gf.values[:, 0], [1, 1.25, 1.5, 1.75, 2])
    zero = sample(Form.zero(1, 0), dom)
    assert not zero.values.any()
    ones = sample(Form.basis_one_form(1, 0), dom)
    assert np.allclose(ones.values[:, 0], 1.0)


def test_discrete_d_oracle():
    dom = StarDomain.interval(0, 1, grid=17)
    nodes = np.linspace(0, 1, 17)
    # quadratics are differentiated exactly (central + 3-point one-sided)
    gf = sample(Form.from_scalar(x1 * x1), dom)
    d = discrete_d(gf)
    assert np.max(np.abs(d.values[:, 0] - 2 * nodes)) < 1e-12
    const = sample(Form.from_constant(1, 3), dom)
    assert not discrete_d(const).values.any()
    affine = sample(Form.from_scalar(x1.scale(Fraction(5, 2))), dom)
    assert np.max(np.abs(discrete_d(affine).values[:, 0] - 2.5)) < 1e-13


def test_discrete_d_second_order_on_cubics():
    errs = []
    for g in (17, 33):
        dom = StarDomain.interval(0, 1, grid=g)
        nodes = np.linspace(0, 1, g)
        gf = sample(Form.from_scalar(x1 * x1 * x1), dom)
        d = discrete_d(gf)
        errs.append(np.max(np.abs(d.values[:, 0] - 3 * nodes**2)))
    assert errs[0] / errs[1] > 3.0  # O(h^2)


def test_discrete_d_too_coarse():
    with pytest.raises(ValueError):
        StarDomain.interval(0, 1, grid=2)


def test_discrete_dd_small_interior():
    # d of d is zero at interior nodes up to O(h^2) on smooth samples
    dom = StarDomain.box(2, 1, grid=21)
    x2, y2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    gf = sample(Form.from_scalar(x2 * x2 * y2), dom)
    dd = discrete_d(discrete_d(gf))
    interior = dd.values[2:-2, 2:-2, :]
    assert np.max(np.abs(interior)) < 1e-2


def test_quadrature_H_matches_exact():
    from covtomo.homotopy import homotopy

    dom = StarDomain.interval(0, 1, center=Fraction(1, 2), grid=33)
    gf = sample(Form.basis_one_form(1, 0), dom)
    got = quadrature_H(gf, dom)
    nodes = np.linspace(0, 1, 33)
    assert np.max(np.abs(got.values[:, 0] - (nodes - 0.5))) < 1e-10

    dom2 = StarDomain.box(2, 1, grid=33)
    x2, y2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    w = Form(2, 1, {((1,), (0,)): x2, ((0,), (0,)): -y2})
    got2 = quadrature_H(sample(w, dom2), dom2)
    assert got2.max_abs() < 1e-9  # antiexact forms are annihilated

    exact = homotopy(Form.monomial(2, 2, (0, 1), x2), dom2)
    got3 = quadrature_H(sample(Form.monomial(2, 2, (0, 1), x2), dom2), dom2)
    want = sample(exact, dom2)
    assert np.max(np.abs(got3.values - want.values)) < 1e-9


def test_quadrature_H_interpolation_error_halves_like_h2():
    errs = []
    for g in (17, 33):
        dom2 = StarDomain.box(2, 1, grid=g)
        # non-polynomial channel: interpolation error dominates
        channels = form_channels(2, 1, Form.zero(2, 1).fiber)
        pts = dom2.node_points()
        vals = np.zeros(pts.shape[:-1] + (len(channels),))
        vals[..., 0] = np.sin(pts[..., 0] * 2)          # dx channel
        gf = GridForm(dom2, 1, Form.zero(2, 1).fiber, vals, channels)
        got = quadrature_H(gf, dom2)
        xs = pts[..., 0]
        truth = (1 - np.cos(2 * xs)) / 2                # int_0^1 sin(2 t x) x dt
        errs.append(np.max(np.abs(got.values[..., 0] - truth)))
    assert 2.5 < errs[0] / errs[1] < 6.5


def test_harmonic_1d_affine_exact():
    dom = StarDomain.interval(0, 1, center=Fraction(1, 2), grid=9)
    phi = solve_harmonic(BoundaryData.from_endpoints(1, 2), dom)
    assert np.max(np.abs(phi.values[:, 0] - (np.linspace(0, 1, 9) + 1))) < 1e-12


def test_harmonic_constant_max_principle():
    dom = StarDomain.ball(2, 1, grid=21)
    phi = solve_harmonic(BoundaryData.from_scalar_callable(lambda p: 4.0), dom)
    mask = dom.interior_mask()
    assert np.max(np.abs(phi.values[..., 0][mask] - 4.0)) < 1e-10


def test_harmonic_disk_second_order():
    errs = {}
    for g in (33, 65):
        dom = StarDomain.ball(2, 1, grid=g)
        phi = solve_harmonic(BoundaryData.from_scalar_callable(lambda p: p[0]), dom)
        pts = dom.node_points()
        mask = dom.interior_mask()
        errs[g] = np.max(np.abs(phi.values[..., 0] - pts[..., 0])[mask])
    assert 3.2 <= errs[33] / errs[65] <= 4.8


def test_harmonic_max_principle_random_boundary():
    dom = StarDomain.ball(2, 1, grid=25)
    phi = solve_harmonic(
        BoundaryData.from_scalar_callable(lambda p: np.cos(3 * np.arctan2(p[1], p[0]))),
        dom)
    mask = dom.interior_mask()
    vals = phi.values[..., 0][mask]
    assert vals.min() >= -1 - 1e-8 and vals.max() <= 1 + 1e-8


def test_heat_steady_state_and_max_principle():
    dom = StarDomain.interval(0, 1, grid=17)
    heat = solve_heat(BoundaryData.from_endpoints(1, 2), dom, T=40.0, steps=120)
    harm = solve_harmonic(BoundaryData.from_endpoints(1, 2), dom)
    assert np.max(np.abs(heat.values - harm.values)) < 1e-10
    zero = solve_heat(BoundaryData.from_endpoints(0, 0), dom, T=1.0)
    assert not zero.values.any()
    disk = StarDomain.ball(2, 1, grid=17)
    c = solve_heat(BoundaryData.from_scalar_callable(lambda p: 2.0), disk, T=5.0)
    mask = disk.interior_mask()
    vals = c.values[..., 0][mask]
    assert np.max(np.abs(vals)) <= 2.0 + 1e-12
    assert np.max(np.abs(vals - 2.0)) < 1e-2


def test_heat_custom_initial_data():
    # starting at the harmonic solution, the flow stays there
    dom = StarDomain.interval(0, 1, grid=17)
    harm = solve_harmonic(BoundaryData.from_endpoints(1, 2), dom)
    out = solve_heat(BoundaryData.from_endpoints(1, 2), dom, T=1.0, steps=20,
                     initial=harm)
    assert np.max(np.abs(out.values - harm.values)) < 1e-12


def test_heat_monotone_approach_to_harmonic():
    dom = StarDomain.ball(2, 1, grid=17)
    alpha = BoundaryData.from_scalar_callable(lambda p: p[0] ** 2)
    harm = solve_harmonic(alpha, dom)
    gaps = []
    for T in (0.2, 1.0, 5.0):
        heat = solve_heat(alpha, dom, T=T, steps=80)
        gaps.append(np.max(np.abs(heat.values - harm.values)))
    assert gaps[0] >= gaps[1] >= gaps[2]


def test_fit_polynomial_form():
    dom = StarDomain.box(2, 1, grid=9)
    x2, y2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    w = Form(2, 1, {((0,), (0,)): x2 * y2, ((1,), (0,)): y2})
    fitted, resid = fit_polynomial_form(sample(w, dom), degree=3)
    assert resid < 1e-10
    pts = dom.sample_points(7)
    for ch in w.terms:
        diff = np.abs(fitted.terms[ch].eval_array(pts) - w.terms[ch].eval_array(pts))
        assert np.max(diff) < 1e-9


def test_grid_wedge_matches_exact():
    from covtomo.forms import wedge

    dom = StarDomain.box(2, 1, grid=9)
    x2, y2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    a = Form(2, 1, {((0,), (0,)): x2, ((1,), (0,)): y2 * y2})
    b = Form(2, 1, {((0,), (0,)): y2, ((1,), (0,)): x2})
    got = grid_wedge(sample(a, dom), sample(b, dom))
    want = sample(wedge(a, b), dom)
    assert np.max(np.abs(got.values - want.values)) < 1e-12


def test_csv_schema(tmp_path):
    dom = StarDomain.interval(0, 1, grid=5)
    phi = solve_harmonic(BoundaryData.from_endpoints(1, 2), dom)
    path = tmp_path / "phi.csv"
    write_csv(phi, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,phi"
    assert len(lines) == 6
    first = lines[1].split(",")
    assert float(first[0]) == 0.0 and float(first[1]) == 1.0

    dom2 = StarDomain.box(2, 1, grid=3)
    x2 = Polynomial.variable(2, 0)
    vol = Form.monomial(2, 2, (0, 1), x2)
    path2 = tmp_path / "vol.csv"
    write_csv(sample(vol, dom2), str(path2))
    header = path2.read_text().splitlines()[0]
    assert header == "x,y,dx^dy"

    disk = StarDomain.ball(2, 1, grid=5)
    path3 = tmp_path / "disk.csv"
    write_csv(sample(Form.from_scalar(x2), disk), str(path3))
    header3 = path3.read_text().splitlines()[0]
    assert header3 == "x,y,inside,phi"


def test_gridform_validate_rejects_nan():
    dom = StarDomain.interval(0, 1, grid=5)
    gf = sample(Form.from_scalar(x1), dom)
    gf.values[2, 0] = np.nan
    with pytest.raises(FloatingPointError):
        gf.validate()
