"""Reduction of composed first-order operators to sequentially solvable levels.

A tower rewrites D_k ... D_1 phi = J, with boundary data attached to the
top-level unknown, as a chain of first-order transport problems: the top
level is a full boundary-value solve (extension + series projection), and
each lower level takes the previous level's field as its right-hand side.
Covariant levels use (d + A wedge _); contravariant levels use the metric
dual (delta + i_X), running through the same series engine under the swap
d <-> delta, A wedge _ <-> i_X.  A level that cannot be solved blocks the
tower, and the status says which level and why; there is no partial
success.

The Maxwell reconstruction composes the same pieces: the magnetic field is
parametrized as a coexact form plus the dual homotopy of the conserved
current, closedness and optional boundary flux data pin the coexact
freedom by least squares, and the potential is the homotopy of the
recovered field plus an arbitrary exact form.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .algebra import Polynomial, degree_cap
from .domain import SphereBoundary, StarDomain
from .forms import Connection, Form, SCALAR, exterior_d
from .homotopy import homotopy
from .metric import codifferential, cohomotopy, coexact_projection
from .transport import (
    InfeasibleAlgebraicStep,
    NonExactDatum,
    OperatorSide,
    ResidualCheckFailed,
    SeriesConfig,
    SeriesDivergence,
    TransportSolution,
    _eval_lattice,
    _max_abs_at,
    _radius,
    _solve_general,
    contravariant_side,
    covariant_side,
)
from .extension import extend_harmonic, extend_heat
from .grid import BoundaryData
from .tomography import _to_exact_form


@dataclass
class LevelSpec:
    """One first-order operator in the chain.

    kind "covariant" uses the connection A; kind "contravariant" uses the
    vector field X.  ``aux`` is the level's own exact/coexact datum for the
    series representation (zero when omitted: the minimal completion, since
    only the top level carries boundary data).
    """

    kind: str
    A: Connection | None = None
    X: tuple[Polynomial, ...] | None = None
    aux: Form | None = None

    def __post_init__(self):
        if self.kind not in ("covariant", "contravariant"):
            raise ValueError(f"unknown level kind {self.kind!r}")
        if self.kind == "covariant" and self.A is None:
            raise ValueError("covariant level needs a connection")
        if self.kind == "contravariant" and self.X is None:
            raise ValueError("contravariant level needs a vector field")
        if self.X is not None:
            self.X = tuple(self.X)

    def grade_shift(self) -> int:
        return +1 if self.kind == "covariant" else -1

    def side(self, dom: StarDomain, norm_per_axis: int) -> OperatorSide:
        if self.kind == "covariant":
            return covariant_side(self.A, dom, norm_per_axis)
        return contravariant_side(self.X, dom, norm_per_axis)

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.A is not None:
            out["A"] = self.A.form.to_json()
        if self.X is not None:
            out["X"] = [p.to_json() for p in self.X]
        if self.aux is not None:
            out["aux"] = self.aux.to_json()
        return out

    @classmethod
    def from_json(cls, data: dict) -> "LevelSpec":
        A = Connection(Form.from_json(data["A"])) if "A" in data else None
        X = tuple(Polynomial.from_json(p) for p in data["X"]) if "X" in data else None
        aux = Form.from_json(data["aux"]) if "aux" in data else None
        return cls(data["kind"], A=A, X=X, aux=aux)


@dataclass
class TowerSpec:
    """Validated chain: levels[0] is level 1 (the original unknown phi_1),
    levels[-1] is the top level whose unknown carries the boundary data."""

    levels: list[LevelSpec]
    J: Form
    alpha: BoundaryData
    grades: list[int] = field(default_factory=list)  # grade of each level's unknown

    def to_json(self) -> dict:
        return {
            "levels": [lv.to_json() for lv in self.levels],
            "J": self.J.to_json(),
            "grades": list(self.grades),
        }


def decompose_operator(levels: Sequence[LevelSpec], J: Form,
                       alpha: BoundaryData) -> TowerSpec:
    """Validate the grade chain and attach the data; rejects inconsistent chains."""
    if not levels:
        raise ValueError("a tower needs at least one level")
    grades: list[int] = [0] * len(levels)
    rhs_grade = J.grade
    for i in range(len(levels) - 1, -1, -1):
        unknown = rhs_grade - levels[i].grade_shift()
        if not 0 <= unknown <= J.dim:
            raise ValueError(
                f"grade bookkeeping fails at level {i + 1}: unknown would have "
                f"grade {unknown} in dimension {J.dim}")
        grades[i] = unknown
        rhs_grade = unknown
    if alpha.grade != grades[-1]:
        raise ValueError(
            f"boundary data grade {alpha.grade} does not match the top-level "
            f"unknown grade {grades[-1]}")
    return TowerSpec(list(levels), J, alpha, grades)


@dataclass
class TowerSolution:
    phis: list[Form]
    level_reports: list[TransportSolution | None]
    status: str                      # "solved" | "blocked"
    blocked_level: int | None = None
    reason: str | None = None
    composed_residual: float | None = None

    def to_json(self) -> dict:
        out: dict = {"status": self.status}
        if self.status == "blocked":
            out["blocked_level"] = self.blocked_level
            out["reason"] = self.reason
        else:
            out["composed_residual"] = self.composed_residual
            out["levels"] = [r.to_json() if r else None for r in self.level_reports]
        return out


def _top_level_datum(side: OperatorSide, Phi: Form, J: Form, phi_alg: Form | None,
                     dom: StarDomain) -> Form:
    """Exact datum from the extension: the solvable projection of
    G(Phi - phi_alg) - homo(J_tilde)."""
    base = Phi if phi_alg is None else Phi - phi_alg
    with_transfer = base + side.homo(side.action(base))
    J_solv, _ = side.split(J)
    correction = side.deriv(phi_alg) if phi_alg is not None else None
    J_tilde = J_solv if correction is None else J_solv - correction
    raw = with_transfer - side.homo(J_tilde)
    return side.solvable_projection(raw)


def solve_tower(spec: TowerSpec, dom: StarDomain, cfg: SeriesConfig | None = None,
                extension: str = "harmonic", fit_degree: int = 4,
                T: float = 1.0, steps: int = 100) -> TowerSolution:
    """Solve the chain top-down; stop at the first unsolvable level.

    The status is "solved" exactly when every level's report exists and
    meets its residual bound; any failure yields "blocked" naming the level
    (1-based, level k = the boundary-carrying top).
    """
    cfg = cfg or SeriesConfig()
    k = len(spec.levels)
    phis: list[Form | None] = [None] * k
    reports: list[TransportSolution | None] = [None] * k

    # top level: a full boundary-value problem
    top = spec.levels[-1]
    try:
        if extension == "harmonic":
            ext = extend_harmonic(spec.alpha, dom)
        elif extension == "heat":
            ext = extend_heat(spec.alpha, dom, T, steps)
        else:
            raise ValueError(f"extension {extension!r} not usable for towers")
        Phi, _ = _to_exact_form(ext, dom, fit_degree)
        side = top.side(dom, cfg.norm_per_axis)
        with degree_cap(cfg.max_degree):
            _, J_alg = side.split(spec.J)
            phi_alg = None
            if not J_alg.is_zero:
                from .transport import _solve_algebraic

                phi_alg = _solve_algebraic(side, J_alg, spec.grades[-1], dom, cfg)
            c_top = _top_level_datum(side, Phi, spec.J, phi_alg, dom)
            if top.aux is not None:
                c_top = c_top + side.solvable_projection(top.aux)
        sol = _solve_general(side, spec.J, c_top, dom, cfg)
    except (InfeasibleAlgebraicStep, NonExactDatum, SeriesDivergence,
            ResidualCheckFailed, ValueError) as exc:
        return TowerSolution([], reports, "blocked", blocked_level=k, reason=str(exc))
    phis[-1] = sol.phi
    reports[-1] = sol

    # propagate downward: level i's right-hand side is level i+1's field
    for i in range(k - 2, -1, -1):
        level = spec.levels[i]
        rhs = phis[i + 1]
        side = level.side(dom, cfg.norm_per_axis)
        try:
            with degree_cap(cfg.max_degree):
                aux = side.solvable_projection(level.aux) if level.aux is not None else None
            sol_i = _solve_general(side, rhs, aux, dom, cfg)
        except (InfeasibleAlgebraicStep, NonExactDatum, SeriesDivergence,
                ResidualCheckFailed, ValueError) as exc:
            return TowerSolution([], reports, "blocked", blocked_level=i + 1,
                                 reason=str(exc))
        phis[i] = sol_i.phi
        reports[i] = sol_i

    composed = _composed_residual(spec, phis, dom, cfg)
    return TowerSolution(list(phis), reports, "solved", composed_residual=composed)


def _composed_residual(spec: TowerSpec, phis: Sequence[Form], dom: StarDomain,
                       cfg: SeriesConfig) -> float:
    """Apply the operator chain to phi_1 and compare against J on the
    telescoping lattice: the intersection of the levels' certified regions."""
    radius = dom.outer_radius()
    with degree_cap(cfg.max_degree):
        current = phis[0]
        for level, grade in zip(spec.levels, spec.grades):
            side = level.side(dom, cfg.norm_per_axis)
            current = side.deriv(current) + side.action(current)
            radius = min(radius, _radius(side, grade))
        defect = current - spec.J
    pts = _eval_lattice(dom, radius, cfg)
    return _max_abs_at(defect, pts)


# ---------------------------------------------------------------------------
# Maxwell reconstruction in R^3
# ---------------------------------------------------------------------------


class ConservationError(ValueError):
    """The prescribed current is not conserved (its codifferential is nonzero)."""


@dataclass
class MaxwellReport:
    A: Form
    F: Form
    residual_dF: float
    residual_coexact: float
    boundary_misfit: float | None
    conservation_checked: bool
    coexact_freedom_dim: int
    exact_freedom_dim: int

    def to_json(self) -> dict:
        return {
            "A": self.A.to_json(),
            "F": self.F.to_json(),
            "residual_dF": self.residual_dF,
            "residual_coexact": self.residual_coexact,
            "boundary_misfit": self.boundary_misfit,
            "conservation_checked": self.conservation_checked,
            "coexact_freedom_dim": self.coexact_freedom_dim,
            "exact_freedom_dim": self.exact_freedom_dim,
        }


def _fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic well-spread unit directions."""
    i = np.arange(n)
    golden = (1 + 5**0.5) / 2
    zc = 1 - 2 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1 - zc**2))
    phi = 2 * np.pi * i / golden
    return np.stack([r * np.cos(phi), r * np.sin(phi), zc], axis=1)


def _normal_flux_row(F2: Form, points: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Pullback content of a 2-form on a closed surface: the normal flux of
    its Hodge-dual vector field at each sample point."""
    from .metric import hodge_star

    starF = hodge_star(F2)
    out = np.zeros(len(points))
    for (basis, _), poly in starF.terms.items():
        axis = basis[0]
        out += poly.eval_array(points) * normals[:, axis]
    return out


def _coexact_two_form_basis(dom: StarDomain, degree: int) -> list[Form]:
    """Spanning set of coexact polynomial 2-forms up to the degree: the
    coexact projections of the monomial 2-form basis (degree preserved)."""
    basis = []
    seen = set()
    for axes in itertools.combinations(range(3), 2):
        for exps in itertools.product(range(degree + 1), repeat=3):
            if sum(exps) > degree:
                continue
            mono = Form(3, 2, {(axes, (0,)): Polynomial(3, {exps: Fraction(1)})})
            cox = coexact_projection(mono, dom)
            if cox.is_zero:
                continue
            key = str(sorted((k, str(p)) for k, p in cox.terms.items()))
            if key in seen:
                continue
            seen.add(key)
            basis.append(cox)
    return basis


def maxwell_reconstruct(J: Form, alpha_F: Form | None, dom: StarDomain,
                        ansatz_degree: int = 4, flux_samples: int = 200,
                        lstsq_tol: float = 1e-9) -> MaxwellReport:
    """Recover the field 2-form and a potential from a conserved current.

    The current must satisfy delta J = 0 exactly (conservation); the field
    is F = c1 + hJ with c1 coexact, pinned by dF = 0 plus, when boundary
    2-form data is supplied, the normal-flux samples of alpha_F on the
    sphere.  The potential is A = HF (the exact-form freedom c2 defaults to
    zero); its dimension is reported so the non-uniqueness stays visible.
    """
    if J.dim != 3 or J.grade != 1:
        raise ValueError("the reconstruction expects a one-form current in R^3")
    if not isinstance(dom.boundary, SphereBoundary):
        raise ValueError("the reconstruction runs on a ball with spherical boundary")
    dJ = codifferential(J)
    if not dJ.is_zero:
        raise ConservationError(
            f"current is not conserved: delta J = {dJ} (must vanish identically)")
    with degree_cap(max(ansatz_degree + 4, 16)):
        hJ = cohomotopy(J, dom)
        basis = _coexact_two_form_basis(dom, ansatz_degree)
        from .grid import _monomial_exponents, form_channels
        from .transport import _form_coeff_vector

        # closedness rows: coefficients of d(c1) + d(hJ) = 0
        d_basis = [exterior_d(b) for b in basis]
        d_hJ = exterior_d(hJ)
        out_degree = max([d_hJ.max_degree()] + [db.max_degree() for db in d_basis])
        out_channels = form_channels(3, 3, SCALAR)
        out_exps = _monomial_exponents(3, out_degree)
        closed_cols = [_form_coeff_vector(db, out_channels, out_exps) for db in d_basis]
        closed_rhs = -_form_coeff_vector(d_hJ, out_channels, out_exps)
        rows = [np.stack(closed_cols, axis=1)]
        rhs_parts = [closed_rhs]

        misfit_points = None
        if alpha_F is not None:
            if alpha_F.dim != 3 or alpha_F.grade != 2:
                raise ValueError("boundary data must be a 2-form in R^3")
            center = np.array([float(c) for c in dom.center])
            radius = float(dom.boundary.radius)
            normals = _fibonacci_sphere(flux_samples)
            points = center + radius * normals
            flux_cols = [_normal_flux_row(b, points, normals) for b in basis]
            flux_rhs = (_normal_flux_row(alpha_F, points, normals)
                        - _normal_flux_row(hJ, points, normals))
            rows.append(np.stack(flux_cols, axis=1))
            rhs_parts.append(flux_rhs)
            misfit_points = (points, normals)

        A_mat = np.vstack(rows)
        b_vec = np.concatenate(rhs_parts)
        coeffs, _, rank, _ = np.linalg.lstsq(A_mat, b_vec, rcond=None)
        resid = float(np.max(np.abs(A_mat @ coeffs - b_vec))) if b_vec.size else 0.0
        scale = max(float(np.max(np.abs(b_vec))), 1.0) if b_vec.size else 1.0
        if resid > lstsq_tol * scale:
            raise InfeasibleAlgebraicStep(
                f"field constraints are infeasible at ansatz degree "
                f"{ansatz_degree} (residual {resid:.3e})")
        coexact_freedom = len(basis) - int(rank)

        c1 = Form.zero(3, 2)
        for c, b in zip(coeffs, basis):
            if abs(c) > 1e-13:
                c1 = c1 + b.scale(Fraction(float(c)))
        F = c1 + hJ
        A_pot = homotopy(F, dom)

        # diagnostics
        dF = exterior_d(F)
        coexact_defect = codifferential(F) - J
        pts = dom.sample_points(9)
        residual_dF = _max_abs_at(dF, pts)
        residual_coexact = _max_abs_at(coexact_defect, pts)
        boundary_misfit = None
        if misfit_points is not None:
            points, normals = misfit_points
            boundary_misfit = float(np.max(np.abs(
                _normal_flux_row(F, points, normals)
                - _normal_flux_row(alpha_F, points, normals))))

    # dimension of the exact one-form freedom c2 at this degree:
    # gradients of non-constant polynomials of degree <= ansatz_degree + 1
    exact_freedom = math.comb(3 + ansatz_degree + 1, ansatz_degree + 1) - 1
    return MaxwellReport(
        A=A_pot, F=F, residual_dF=residual_dF, residual_coexact=residual_coexact,
        boundary_misfit=boundary_misfit, conservation_checked=True,
        coexact_freedom_dim=coexact_freedom, exact_freedom_dim=exact_freedom,
    )
