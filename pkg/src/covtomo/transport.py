"""Neumann-series solvers for covariant and contravariant transport.

The covariant equation (d + A wedge _) phi = J is solved by the
alternating series

    phi = sum_l (-1)^l (H (A wedge _))^l  (c + H J_e)

which telescopes to the operator-fraction form phi = (I + H A wedge _)^{-1}
(c + H J_e).  The series converges geometrically inside the ball of radius
grade / ||A||; truncation stops when the sup-norm of the latest term on the
evaluation region drops below the tail tolerance, and the first neglected
term is reported as the tail proxy.

The contravariant equation (delta + i_X) phi = J is the mirror under the
metric duality d <-> delta, A wedge _ <-> i_X, H <-> h, exact <-> coexact.
Both sides run through the same series engine parameterised by an operator
side, so they cannot drift apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .algebra import Polynomial, degree_cap
from .domain import StarDomain
from .forms import (
    Connection,
    FiberSpec,
    Form,
    exterior_d,
    insert_vector,
    sup_norm,
    wedge,
)
from .homotopy import decompose, exact_projection, homotopy, is_exact
from .metric import codecompose, codifferential, coexact_projection, cohomotopy, is_coexact


class NonExactDatum(ValueError):
    """The prescribed datum or source is not in the solvable (exact) subspace."""


class SeriesDivergence(RuntimeError):
    """The transport series did not decay within the term budget."""


class InfeasibleAlgebraicStep(ValueError):
    """The antiexact source is not in the image of the algebraic wedge map."""


class ResidualCheckFailed(RuntimeError):
    """The assembled field does not satisfy the transport equation to within
    the truncation budget; the equation has no solution for this data."""


RESIDUAL_GUARD_FACTOR = 10.0
RESIDUAL_GUARD_FLOOR = 1e-8


def _guard_residual(residual: float, tail: float, rhs_scale: float) -> None:
    bound = RESIDUAL_GUARD_FACTOR * tail + RESIDUAL_GUARD_FLOOR * max(1.0, rhs_scale)
    if residual > bound:
        raise ResidualCheckFailed(
            f"transport residual {residual:.3e} is not explained by series "
            f"truncation (tail {tail:.3e}); the equation is unsolvable for "
            "this data and split"
        )


@dataclass
class SeriesConfig:
    max_terms: int = 64
    tail_tol: float = 1e-12
    eval_region_radius_fraction: float = 0.5
    max_degree: int = 96            # degree-cap ceiling while the series runs
    lattice_per_axis: int = 7       # residual evaluation lattice
    norm_per_axis: int = 17         # term-norm sampling density
    algebraic_degree: int | None = None  # ansatz degree for the pointwise solve

    def __post_init__(self):
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")
        if self.tail_tol <= 0:
            raise ValueError("tail_tol must be positive")
        if not 0 < self.eval_region_radius_fraction < 1:
            raise ValueError("eval_region_radius_fraction must lie in (0, 1)")


@dataclass
class TransportSolution:
    phi: Form
    terms_used: int
    tail_norm: float
    radius: float
    residual_max: float
    parts: tuple[Form, Form, Form] | None = None
    gauge_note: str | None = None

    def to_json(self) -> dict:
        out = {
            "terms_used": self.terms_used,
            "tail_norm": self.tail_norm,
            "radius": self.radius,
            "residual_max": self.residual_max,
        }
        if self.parts is not None:
            out["parts"] = {
                "phi1": self.parts[0].to_json(),
                "phi2": self.parts[1].to_json(),
                "phi3": self.parts[2].to_json(),
            }
        if self.gauge_note:
            out["gauge_note"] = self.gauge_note
        return out


# ---------------------------------------------------------------------------
# operator sides (covariant / contravariant)
# ---------------------------------------------------------------------------


@dataclass
class OperatorSide:
    """The handful of operations the series engine needs from either side."""

    name: str
    deriv: Callable[[Form], Form]                 # d or delta
    homo: Callable[[Form], Form]                  # H or h
    action: Callable[[Form], Form]                # A wedge _  or  i_X _
    action_norm: float                            # ||A|| or ||X|| on the domain
    solvable_projection: Callable[[Form], Form]   # dH / delta-h projection
    is_solvable: Callable[[Form], bool]           # exact / coexact membership
    split: Callable[[Form], tuple[Form, Form]]    # (solvable part, algebraic part)
    grade_of_unknown: Callable[[int], int]        # rhs grade -> unknown grade
    radius_grade: Callable[[int], int]            # grade entering the radius law


def covariant_side(A: Connection, dom: StarDomain, norm_per_axis: int = 17) -> OperatorSide:
    def split(J: Form) -> tuple[Form, Form]:
        dec = decompose(J, dom)
        return dec.exact_part, dec.antiexact_part

    return OperatorSide(
        name="covariant",
        deriv=exterior_d,
        homo=lambda w: homotopy(w, dom),
        action=lambda w: wedge(A.form, w),
        action_norm=sup_norm(A.form, dom, per_axis=norm_per_axis, max_refine=1),
        solvable_projection=lambda w: exact_projection(w, dom),
        is_solvable=lambda w: is_exact(w, dom),
        split=split,
        grade_of_unknown=lambda rhs_grade: rhs_grade - 1,
        radius_grade=lambda unknown_grade: unknown_grade,
    )


def contravariant_side(X: Sequence[Polynomial], dom: StarDomain,
                       norm_per_axis: int = 17) -> OperatorSide:
    Xform = Form(X[0].dim, 1, {((i,), (0,)): p for i, p in enumerate(X) if not p.is_zero})

    def split(J: Form) -> tuple[Form, Form]:
        dec = codecompose(J, dom)
        return dec.coexact_part, dec.anticoexact_part

    return OperatorSide(
        name="contravariant",
        deriv=lambda w: codifferential(w),
        homo=lambda w: cohomotopy(w, dom),
        action=lambda w: insert_vector(w, list(X)),
        action_norm=sup_norm(Xform, dom, per_axis=norm_per_axis, max_refine=1),
        solvable_projection=lambda w: coexact_projection(w, dom),
        is_solvable=lambda w: is_coexact(w, dom),
        split=split,
        grade_of_unknown=lambda rhs_grade: rhs_grade + 1,
        radius_grade=lambda unknown_grade: X[0].dim - unknown_grade,
    )


# ---------------------------------------------------------------------------
# the series engine
# ---------------------------------------------------------------------------


def _eval_lattice(dom: StarDomain, radius: float, cfg: SeriesConfig) -> np.ndarray:
    r = min(radius, dom.outer_radius()) * cfg.eval_region_radius_fraction
    if not math.isfinite(radius):
        r = dom.outer_radius() * cfg.eval_region_radius_fraction
    pts = dom.ball_lattice(r, cfg.lattice_per_axis)
    if len(pts) == 0:
        pts = np.array([[float(c) for c in dom.center]])
    return pts


def _max_abs_at(w: Form, pts: np.ndarray) -> float:
    best = 0.0
    for poly in w.terms.values():
        vals = poly.eval_array(pts)
        if len(vals):
            best = max(best, float(np.max(np.abs(vals))))
    return best


def _series(side: OperatorSide, seed: Form, dom: StarDomain, cfg: SeriesConfig,
            radius: float, pts: np.ndarray) -> tuple[Form, int, float]:
    """Sum sum_l (-1)^l (homo action)^l seed until the tail is below tolerance."""
    with degree_cap(cfg.max_degree):
        total = seed
        term = seed
        terms_used = 1
        tail = _max_abs_at(term, pts)
        history = [tail]
        while tail > cfg.tail_tol and terms_used < cfg.max_terms:
            term = -side.homo(side.action(term))
            tail = _max_abs_at(term, pts)
            history.append(tail)
            if term.is_zero:
                tail = 0.0
                break
            total = total + term
            terms_used += 1
        if tail > cfg.tail_tol:
            growing = len(history) >= 3 and history[-1] >= history[-2] >= history[-3]
            raise SeriesDivergence(
                f"{side.name} series tail {tail:.3e} above {cfg.tail_tol:.1e} after "
                f"{terms_used} terms (radius {radius:.3g}"
                + (", non-decaying" if growing else "") + ")"
            )
    return total, terms_used, tail


def _radius(side: OperatorSide, unknown_grade: int) -> float:
    k = side.radius_grade(unknown_grade)
    if k < 1:
        raise ValueError("series solver requires the radius-law grade to be >= 1; "
                         "grade-0 equations are out of scope")
    if side.action_norm == 0.0:
        return math.inf
    return k / side.action_norm


def _side_operator(phi: Form, side: OperatorSide) -> Form:
    """The first-order operator of the side applied to phi."""
    return side.deriv(phi) + side.action(phi)


def _residual(side: OperatorSide, phi: Form, J: Form | None, pts: np.ndarray) -> float:
    op = _side_operator(phi, side)
    defect = op if J is None else op - J
    return _max_abs_at(defect, pts)


# ---------------------------------------------------------------------------
# covariant front-ends
# ---------------------------------------------------------------------------


def transport_operator(phi: Form, A: Connection, dom: StarDomain) -> Form:
    """phi + H(A wedge phi): the invertible operator the series expands."""
    return phi + homotopy(wedge(A.form, phi), dom)


def solve_homogeneous(c: Form, A: Connection, dom: StarDomain,
                      cfg: SeriesConfig | None = None) -> TransportSolution:
    """Solve (d + A wedge _) phi = 0 with the exact datum dH phi = c.

    A datum in the kernel of the connection action yields the gauge-mode
    branch phi = c.  Non-exact data is rejected.
    """
    cfg = cfg or SeriesConfig()
    if c.grade < 1:
        raise ValueError("grade-0 equations are out of scope for the series solver")
    with degree_cap(cfg.max_degree):
        return _solve_homogeneous_impl(c, A, dom, cfg)


def _solve_homogeneous_impl(c: Form, A: Connection, dom: StarDomain,
                            cfg: SeriesConfig) -> TransportSolution:
    side = covariant_side(A, dom, cfg.norm_per_axis)
    if not side.is_solvable(c):
        raise NonExactDatum("datum c must satisfy dHc = c")
    radius = _radius(side, c.grade)
    pts = _eval_lattice(dom, radius, cfg)
    if side.action(c).is_zero:
        phi = c
        resid = _residual(side, phi, None, pts)
        _guard_residual(resid, 0.0, _max_abs_at(c, pts))
        return TransportSolution(phi, 1, 0.0, radius, resid,
                                 gauge_note="datum lies in ker(A wedge _): gauge mode phi = c")
    phi, used, tail = _series(side, c, dom, cfg, radius, pts)
    resid = _residual(side, phi, None, pts)
    _guard_residual(resid, tail, _max_abs_at(c, pts))
    return TransportSolution(phi, used, tail, radius, resid)


def solve_exact_source(c: Form | None, J_e: Form, A: Connection, dom: StarDomain,
                       cfg: SeriesConfig | None = None) -> TransportSolution:
    """Solve (d + A wedge _) phi = J_e for an exact source, datum c optional."""
    cfg = cfg or SeriesConfig()
    with degree_cap(cfg.max_degree):
        return _solve_exact_source_impl(c, J_e, A, dom, cfg)


def _solve_exact_source_impl(c: Form | None, J_e: Form, A: Connection, dom: StarDomain,
                             cfg: SeriesConfig) -> TransportSolution:
    side = covariant_side(A, dom, cfg.norm_per_axis)
    if not side.is_solvable(J_e):
        raise NonExactDatum("source must satisfy dH J_e = J_e")
    unknown_grade = J_e.grade - 1
    if unknown_grade < 1:
        raise ValueError("grade-0 equations are out of scope for the series solver")
    if c is not None and not c.is_zero and not side.is_solvable(c):
        raise NonExactDatum("datum c must satisfy dHc = c")
    radius = _radius(side, unknown_grade)
    pts = _eval_lattice(dom, radius, cfg)
    HJ = side.homo(J_e)
    gauge_note = None
    if side.action(HJ).is_zero:
        # particular part already in the kernel: phi = phi_H + H J_e
        gauge_note = "H J_e lies in ker(A wedge _): particular part is H J_e itself"
        if c is None or c.is_zero:
            phi = HJ
            resid = _residual(side, phi, J_e, pts)
            _guard_residual(resid, 0.0, _max_abs_at(J_e, pts))
            return TransportSolution(phi, 1, 0.0, radius, resid, gauge_note=gauge_note)
        hom = solve_homogeneous(c, A, dom, cfg)
        phi = hom.phi + HJ
        resid = _residual(side, phi, J_e, pts)
        _guard_residual(resid, hom.tail_norm, _max_abs_at(J_e, pts))
        return TransportSolution(phi, hom.terms_used, hom.tail_norm, radius, resid,
                                 gauge_note=gauge_note)
    seed = HJ if c is None or c.is_zero else c + HJ
    phi, used, tail = _series(side, seed, dom, cfg, radius, pts)
    resid = _residual(side, phi, J_e, pts)
    _guard_residual(resid, tail, _max_abs_at(J_e, pts))
    return TransportSolution(phi, used, tail, radius, resid, gauge_note=gauge_note)


def solve_general(J: Form, A: Connection, dom: StarDomain,
                  cfg: SeriesConfig | None = None,
                  phi3_choice: Form | None = None) -> TransportSolution:
    """Solve (d + A wedge _) phi = J for a general source.

    Splits J into its exact and antiexact parts; the antiexact part must be
    reachable by the pointwise wedge action (solved over a degree-capped
    polynomial ansatz by least squares), otherwise the equation has no
    solution and the solver raises.  phi = phi1 + phi2 + phi3 where phi2 is
    the algebraic unknown, phi3 the free kernel element (default zero).
    """
    cfg = cfg or SeriesConfig()
    side = covariant_side(A, dom, cfg.norm_per_axis)
    return _solve_general(side, J, None, dom, cfg, phi3_choice)


def _solve_general(side: OperatorSide, J: Form, c: Form | None,
                   dom: StarDomain, cfg: SeriesConfig,
                   phi3_choice: Form | None = None) -> TransportSolution:
    with degree_cap(cfg.max_degree):
        return _solve_general_impl(side, J, c, dom, cfg, phi3_choice)


def _solve_general_impl(side: OperatorSide, J: Form, c: Form | None,
                        dom: StarDomain, cfg: SeriesConfig,
                        phi3_choice: Form | None = None) -> TransportSolution:
    unknown_grade = side.grade_of_unknown(J.grade)
    if not 0 <= unknown_grade <= J.dim:
        raise ValueError("grade bookkeeping: unknown grade out of range")
    J_solv, J_alg = side.split(J)
    fiber = J.fiber
    if J_alg.is_zero:
        phi2 = Form.zero(J.dim, unknown_grade, fiber)
    else:
        phi2 = _solve_algebraic(side, J_alg, unknown_grade, dom, cfg)
    phi3 = Form.zero(J.dim, unknown_grade, fiber)
    if phi3_choice is not None:
        phi3 = _project_to_action_kernel(side, phi3_choice, dom, cfg)
    correction = side.deriv(phi2 + phi3)
    J_tilde = J_solv - correction if not correction.is_zero else J_solv
    J_tilde = side.solvable_projection(J_tilde) if not side.is_solvable(J_tilde) else J_tilde
    radius = _radius(side, unknown_grade)
    pts = _eval_lattice(dom, radius, cfg)
    seed = side.homo(J_tilde)
    if c is not None and not c.is_zero:
        seed = c + seed
    if seed.is_zero:
        phi1 = seed
        used, tail = 1, 0.0
    else:
        phi1, used, tail = _series(side, seed, dom, cfg, radius, pts)
    phi = phi1 + phi2 + phi3
    resid = _residual(side, phi, J, pts)
    _guard_residual(resid, tail, _max_abs_at(J, pts))
    return TransportSolution(phi, used, tail, radius, resid, parts=(phi1, phi2, phi3))


# ---------------------------------------------------------------------------
# the algebraic step: action(phi2) = J_alg over a polynomial ansatz
# ---------------------------------------------------------------------------

ALGEBRAIC_FEASIBILITY_TOL = 1e-9


def _ansatz_basis(dim: int, grade: int, fiber: FiberSpec, degree: int) -> list[Form]:
    from .grid import _monomial_exponents, form_channels

    out = []
    for ch in form_channels(dim, grade, fiber):
        basis, fib = ch
        for exps in _monomial_exponents(dim, degree):
            poly = Polynomial(dim, {tuple(exps): Fraction(1)})
            out.append(Form(dim, grade, {ch: poly}, fiber))
    return out


def _form_coeff_vector(w: Form, channels: list, exps: list) -> np.ndarray:
    vec = np.zeros(len(channels) * len(exps))
    exp_index = {e: i for i, e in enumerate(exps)}
    for ci, ch in enumerate(channels):
        poly = w.terms.get(ch)
        if poly is None:
            continue
        for e, coeff in poly.terms.items():
            if e not in exp_index:
                raise ValueError("coefficient degree exceeds the matching basis")
            vec[ci * len(exps) + exp_index[e]] = float(coeff)
    return vec


def _solve_algebraic(side: OperatorSide, J_alg: Form, unknown_grade: int,
                     dom: StarDomain, cfg: SeriesConfig) -> Form:
    from .grid import _monomial_exponents, form_channels

    dim, fiber = J_alg.dim, J_alg.fiber
    degree = cfg.algebraic_degree
    if degree is None:
        degree = max(J_alg.max_degree(), 1)
    basis = _ansatz_basis(dim, unknown_grade, fiber, degree)
    images = [side.action(b) for b in basis]
    out_degree = max([J_alg.max_degree()] + [im.max_degree() for im in images])
    out_channels = form_channels(dim, J_alg.grade, fiber)
    out_exps = _monomial_exponents(dim, out_degree)
    cols = [_form_coeff_vector(im, out_channels, out_exps) for im in images]
    A_mat = np.stack(cols, axis=1) if cols else np.zeros((len(out_channels) * len(out_exps), 0))
    rhs = _form_coeff_vector(J_alg, out_channels, out_exps)
    if A_mat.shape[1] == 0:
        raise InfeasibleAlgebraicStep("empty ansatz cannot reach the antiexact source")
    coeffs, *_ = np.linalg.lstsq(A_mat, rhs, rcond=None)
    resid = float(np.max(np.abs(A_mat @ coeffs - rhs))) if rhs.size else 0.0
    scale = max(float(np.max(np.abs(rhs))), 1.0)
    if resid > ALGEBRAIC_FEASIBILITY_TOL * scale:
        raise InfeasibleAlgebraicStep(
            f"antiexact source is not in the image of the algebraic action "
            f"(least-squares residual {resid:.3e})"
        )
    phi2 = Form.zero(dim, unknown_grade, fiber)
    for c, b in zip(coeffs, basis):
        if abs(c) > 1e-14:
            phi2 = phi2 + b.scale(Fraction(float(c)))
    return phi2


def _project_to_action_kernel(side: OperatorSide, choice: Form, dom: StarDomain,
                              cfg: SeriesConfig) -> Form:
    """Project a user-supplied form onto ker(action) over its own coefficient span."""
    if side.action(choice).is_zero:
        return choice
    from .grid import _monomial_exponents, form_channels

    degree = max(choice.max_degree(), 1)
    basis = _ansatz_basis(choice.dim, choice.grade, choice.fiber, degree)
    images = [side.action(b) for b in basis]
    out_degree = max(im.max_degree() for im in images)
    out_grade = choice.grade + 1 if side.name == "covariant" else choice.grade - 1
    out_channels = form_channels(choice.dim, out_grade, choice.fiber)
    out_exps = _monomial_exponents(choice.dim, out_degree)
    A_mat = np.stack([_form_coeff_vector(im, out_channels, out_exps) for im in images],
                     axis=1)
    from scipy.linalg import null_space

    ker = null_space(A_mat)
    target_channels = form_channels(choice.dim, choice.grade, choice.fiber)
    target_exps = _monomial_exponents(choice.dim, degree)
    v = _form_coeff_vector(choice, target_channels, target_exps)
    if ker.size == 0:
        return Form.zero(choice.dim, choice.grade, choice.fiber)
    proj = ker @ (ker.T @ v)
    out = Form.zero(choice.dim, choice.grade, choice.fiber)
    for c, b in zip(proj, basis):
        if abs(c) > 1e-14:
            out = out + b.scale(Fraction(float(c)))
    return out


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def check_no_zero_divisors(c_list: Sequence[Form], A: Connection, dom: StarDomain,
                           cfg: SeriesConfig | None = None, tol: float = 1e-8) -> list[dict]:
    """For each exact datum, verify that G phi recovers c (norms match).

    The transfer operator has no kernel on homogeneous solutions, so
    ||G phi|| must come back equal to ||c|| up to truncation error.
    """
    cfg = cfg or SeriesConfig()
    report = []
    for i, c in enumerate(c_list):
        entry: dict = {"datum": i}
        if c.is_zero:
            entry.update(status="pass", note="zero datum: phi = 0, vacuous")
            report.append(entry)
            continue
        sol = solve_homogeneous(c, A, dom, cfg)
        with degree_cap(cfg.max_degree):
            gphi = transport_operator(sol.phi, A, dom)
        defect = gphi - c
        norm_c = sup_norm(c, dom, per_axis=cfg.norm_per_axis, max_refine=0)
        norm_defect = sup_norm(defect, dom, per_axis=cfg.norm_per_axis, max_refine=0) \
            if not defect.is_zero else 0.0
        ok = norm_defect <= tol * max(norm_c, 1.0) and norm_c > 0
        entry.update(status="pass" if ok else "fail",
                     datum_norm=norm_c, defect_norm=norm_defect)
        report.append(entry)
    return report
