"""Boundary-to-interior extension operators and the extension current.

Three extensions are provided: constant-along-rays (radial), heat flow to
a finite time, and harmonic.  Radial extension of discontinuous data in
one dimension produces a genuinely distributional field, represented by
``Distribution1D`` (piecewise polynomials plus Heaviside jumps plus Dirac
atoms); its exterior derivative picks up one Dirac atom per jump, with
weight equal to the jump height.  In higher dimensions the distributional
calculus is not implemented; radial extensions there carry a numeric
center-singularity flag instead.

The extension current d Phi + A wedge Phi measures how far the extended
field is from being covariant constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import numpy as np

from .algebra import Polynomial
from .domain import IntervalBoundary, SphereBoundary, StarDomain
from .forms import Connection, Form, exterior_d, wedge
from . import grid as gridmod
from .grid import BoundaryData, GridForm, discrete_d, grid_wedge, sample


# ---------------------------------------------------------------------------
# 1D distributions
# ---------------------------------------------------------------------------


@dataclass
class Distribution1D:
    """Piecewise polynomial + Heaviside jumps + Dirac atoms on an interval.

    ``pieces`` partition the domain: list of (lo, hi, Polynomial) with
    rational endpoints.  ``jumps`` record (location, height) of Heaviside
    steps, height = right limit - left limit.  ``atoms`` are Dirac deltas
    (location, weight).
    """

    pieces: list[tuple[Fraction, Fraction, Polynomial]]
    jumps: list[tuple[Fraction, Fraction]] = field(default_factory=list)
    atoms: list[tuple[Fraction, Fraction]] = field(default_factory=list)

    def __post_init__(self):
        self.pieces = [(Fraction(a), Fraction(b), p) for a, b, p in self.pieces]
        self.jumps = [(Fraction(a), Fraction(h)) for a, h in self.jumps if h != 0]
        self.atoms = [(Fraction(a), Fraction(w)) for a, w in self.atoms if w != 0]
        for a, b, _ in self.pieces:
            if not a < b:
                raise ValueError("piece interval is empty or reversed")

    def value_at(self, x) -> Fraction:
        """Pointwise value away from jumps/atoms (left-continuous at jumps)."""
        x = Fraction(x)
        for a, b, p in self.pieces:
            if a <= x < b or (x == b and (a, b) == (self.pieces[-1][0], self.pieces[-1][1])):
                return p.eval_exact([x])
        raise ValueError(f"{x} outside the distribution support")

    def derivative(self) -> "Distribution1D":
        """Distributional derivative: piecewise derivative + one atom per jump."""
        if self.atoms:
            raise ValueError("derivative of a Dirac atom is out of scope")
        new_pieces = [(a, b, p.partial(0)) for a, b, p in self.pieces]
        # steps of the differentiated density at interior breakpoints
        new_jumps = []
        for (_, b, left), (a, _, right) in zip(new_pieces, new_pieces[1:]):
            height = right.eval_exact([a]) - left.eval_exact([b])
            if height != 0:
                new_jumps.append((a, height))
        new_atoms = [(loc, height) for loc, height in self.jumps]
        return Distribution1D(new_pieces, new_jumps, new_atoms)

    def multiply_polynomial(self, f: Polynomial) -> "Distribution1D":
        """Density multiplication; atom weights scale by the factor at the atom."""
        pieces = [(a, b, f * p) for a, b, p in self.pieces]
        jumps = []
        for loc, height in self.jumps:
            jumps.append((loc, height * f.eval_exact([loc])))
        atoms = [(loc, w * f.eval_exact([loc])) for loc, w in self.atoms]
        return Distribution1D(pieces, jumps, atoms)

    def __add__(self, other: "Distribution1D") -> "Distribution1D":
        breakpoints = sorted({a for a, _, _ in self.pieces + other.pieces}
                             | {b for _, b, _ in self.pieces + other.pieces})
        pieces = []
        for lo, hi in zip(breakpoints[:-1], breakpoints[1:]):
            mid = (lo + hi) / 2
            p = Polynomial.zero(1)
            for a, b, q in self.pieces:
                if a <= mid < b:
                    p = p + q
            for a, b, q in other.pieces:
                if a <= mid < b:
                    p = p + q
            pieces.append((lo, hi, p))
        jumps: dict[Fraction, Fraction] = {}
        for loc, h in self.jumps + other.jumps:
            jumps[loc] = jumps.get(loc, Fraction(0)) + h
        atoms: dict[Fraction, Fraction] = {}
        for loc, w in self.atoms + other.atoms:
            atoms[loc] = atoms.get(loc, Fraction(0)) + w
        return Distribution1D(pieces, sorted(jumps.items()), sorted(atoms.items()))

    def integrate_against(self, psi: Polynomial) -> Fraction:
        """Exact pairing <self, psi> including atoms."""
        total = Fraction(0)
        for a, b, p in self.pieces:
            total += (psi * p).integrate_interval(a, b)
        for loc, w in self.atoms:
            total += w * psi.eval_exact([loc])
        return total

    def to_json(self) -> dict:
        return {
            "pieces": [
                {"lo": str(a), "hi": str(b), "poly": p.to_json()}
                for a, b, p in self.pieces
            ],
            "jumps": [{"loc": str(a), "height": str(h)} for a, h in self.jumps],
            "atoms": [{"loc": str(a), "weight": str(w)} for a, w in self.atoms],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Distribution1D":
        pieces = [
            (Fraction(p["lo"]), Fraction(p["hi"]), Polynomial.from_json(p["poly"]))
            for p in data.get("pieces", [])
        ]
        jumps = [(Fraction(j["loc"]), Fraction(j["height"])) for j in data.get("jumps", [])]
        atoms = [(Fraction(a["loc"]), Fraction(a["weight"])) for a in data.get("atoms", [])]
        return cls(pieces, jumps, atoms)


def stokes_pairing(dPhi: Distribution1D, Phi: Distribution1D, psi: Polynomial,
                   dom: StarDomain) -> tuple[Fraction, Fraction]:
    """Both sides of the 1D distributional Stokes identity for a test
    polynomial psi vanishing at the endpoints:

        int psi dPhi  =  [psi Phi]_boundary - int psi' Phi.

    Returns (lhs, rhs) as exact rationals.
    """
    if not isinstance(dom.boundary, IntervalBoundary):
        raise ValueError("the distributional Stokes check is one-dimensional")
    lo, hi = dom.boundary.lo, dom.boundary.hi
    lhs = dPhi.integrate_against(psi)
    boundary_term = (psi.eval_exact([hi]) * Phi.value_at(hi)
                     - psi.eval_exact([lo]) * Phi.value_at(lo))
    rhs = boundary_term - Phi.integrate_against(psi.partial(0))
    return lhs, rhs


# ---------------------------------------------------------------------------
# extension results
# ---------------------------------------------------------------------------

REGULARITY_RADIAL = "C0-away-from-center"
REGULARITY_SMOOTH = "smooth"
REGULARITY_DISTRIBUTIONAL = "distributional"


@dataclass
class ExtensionResult:
    Phi: Form | GridForm | Distribution1D
    regularity_tag: str
    J_ext: object | None = None
    center_singularity: bool = False
    notes: str = ""


# ---------------------------------------------------------------------------
# the three extensions
# ---------------------------------------------------------------------------


def extend_radial(alpha: BoundaryData, dom: StarDomain) -> ExtensionResult:
    """Constant extension along rays from the center.

    1D grade-0 data becomes a two-piece constant field with a Heaviside
    jump at the center when the endpoint values differ.  On ball domains
    the grid field is filled by evaluating the data at the radial
    projection of each node; a differing-limit check flags the center
    singularity.  Grade >= 1 data is pulled back along the radial
    retraction, which collapses to the zero form in one dimension.
    """
    if isinstance(dom.boundary, IntervalBoundary):
        return _extend_radial_interval(alpha, dom)
    if isinstance(dom.boundary, SphereBoundary):
        return _extend_radial_ball(alpha, dom)
    raise ValueError("radial extension on box boundaries is not supported "
                     "(the retraction jacobian is only piecewise smooth)")


def _extend_radial_interval(alpha: BoundaryData, dom: StarDomain) -> ExtensionResult:
    if alpha.endpoint_values is None:
        raise ValueError("1D radial extension needs endpoint data")
    lo_vec, hi_vec = alpha.endpoint_values
    bnd = dom.boundary
    x0 = dom.center[0]
    if alpha.grade >= 1:
        # pullback along the locally constant retraction kills positive grades
        return ExtensionResult(
            Form.zero(1, alpha.grade, alpha.fiber), REGULARITY_RADIAL,
            notes="radial retraction is locally constant in 1D; the pullback "
                  "of positive-grade data vanishes")
    if not alpha.fiber.is_scalar:
        raise ValueError("1D distributional radial extension is scalar only")
    a_lo, a_hi = lo_vec[0], hi_vec[0]
    pieces = [
        (bnd.lo, x0, Polynomial.const(1, a_lo)),
        (x0, bnd.hi, Polynomial.const(1, a_hi)),
    ]
    jumps = [(x0, a_hi - a_lo)] if a_hi != a_lo else []
    dist = Distribution1D(pieces, jumps, [])
    tag = REGULARITY_RADIAL
    return ExtensionResult(dist, tag, center_singularity=bool(jumps))


def _extend_radial_ball(alpha: BoundaryData, dom: StarDomain) -> ExtensionResult:
    if dom.grid is None:
        raise ValueError("radial extension on a ball needs a grid resolution")
    center = np.array([float(c) for c in dom.center])
    radius = float(dom.boundary.radius)
    pts = dom.node_points().reshape(-1, dom.dim)
    if alpha.grade == 0:
        channels = gridmod.form_channels(dom.dim, 0, alpha.fiber)
        vals = np.zeros((pts.shape[0], len(channels)))
        for i, p in enumerate(pts):
            rel = p - center
            rho = float(np.linalg.norm(rel))
            surf = center + rel * (radius / rho) if rho > 1e-14 else None
            if surf is None:
                vals[i] = 0.0  # measure-zero center; value is immaterial
            else:
                vals[i] = alpha.fn(surf)
        gf = GridForm(dom, 0, alpha.fiber,
                      vals.reshape(tuple(dom.grid) + (len(channels),)), channels).validate()
        sing = _radial_limits_differ(alpha, center, radius)
        return ExtensionResult(gf, REGULARITY_RADIAL, center_singularity=sing)
    return _extend_radial_ball_pullback(alpha, dom, center, radius)


def _radial_limits_differ(alpha: BoundaryData, center: np.ndarray, radius: float,
                          samples: int = 16, tol: float = 1e-12) -> bool:
    dim = len(center)
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(samples, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = np.stack([alpha.fn(center + radius * d) for d in dirs])
    return bool(np.max(np.abs(vals - vals[0])) > tol)


def _extend_radial_ball_pullback(alpha: BoundaryData, dom: StarDomain,
                                 center: np.ndarray, radius: float) -> ExtensionResult:
    """Pullback of grade >= 1 boundary data along the radial retraction.

    The retraction rho(x) = c + R (x-c)/|x-c| has the analytic jacobian
    d rho = R/|x-c| (I - r r^T / |x-c|^2); the pullback contracts the
    boundary channels with its minors at each node.
    """
    import itertools

    k = alpha.grade
    channels = gridmod.form_channels(dom.dim, k, alpha.fiber)
    pts = dom.node_points().reshape(-1, dom.dim)
    vals = np.zeros((pts.shape[0], len(channels)))
    bases = list(itertools.combinations(range(dom.dim), k))
    fiber_idx = alpha.fiber.indices()
    for i, p in enumerate(pts):
        rel = p - center
        rho = float(np.linalg.norm(rel))
        if rho < 1e-12:
            continue
        surf = center + rel * (radius / rho)
        jac = (radius / rho) * (np.eye(dom.dim) - np.outer(rel, rel) / rho**2)
        avals = alpha.fn(surf)
        amap = {ch: avals[j] for j, ch in enumerate(gridmod.form_channels(dom.dim, k, alpha.fiber))}
        for ci, (basis_out, fib) in enumerate(channels):
            total = 0.0
            cols = jac[:, list(basis_out)]
            for basis_in in bases:
                a = amap.get((basis_in, fib), 0.0)
                if a == 0.0:
                    continue
                minor = cols[list(basis_in), :]
                total += a * float(np.linalg.det(minor))
            vals[i, ci] = total
    gf = GridForm(dom, k, alpha.fiber,
                  vals.reshape(tuple(dom.grid) + (len(channels),)), channels).validate()
    return ExtensionResult(gf, REGULARITY_RADIAL,
                           center_singularity=True,
                           notes="pullback values at the center node are set to zero")


def extend_heat(alpha: BoundaryData, dom: StarDomain, T: float,
                steps: int = 100) -> ExtensionResult:
    """Heat-flow extension to time T (implicit Euler, interior starts at zero)."""
    gf = gridmod.solve_heat(alpha, dom, T, steps)
    return ExtensionResult(gf, REGULARITY_SMOOTH)


def extend_harmonic(alpha: BoundaryData, dom: StarDomain, tol: float = 1e-10) -> ExtensionResult:
    """Harmonic extension; exact affine solve on intervals, grid solve otherwise."""
    if isinstance(dom.boundary, IntervalBoundary) and alpha.endpoint_values is not None:
        lo_vec, hi_vec = alpha.endpoint_values
        bnd = dom.boundary
        span = bnd.hi - bnd.lo
        terms = {}
        channels = gridmod.form_channels(1, alpha.grade, alpha.fiber)
        for ch, lo_v, hi_v in zip(channels, lo_vec, hi_vec):
            slope = (hi_v - lo_v) / span
            poly = Polynomial(1, {(0,): lo_v - slope * bnd.lo, (1,): slope})
            if not poly.is_zero:
                terms[ch] = poly
        phi = Form(1, alpha.grade, terms, alpha.fiber)
        return ExtensionResult(phi, REGULARITY_SMOOTH)
    gf = gridmod.solve_harmonic(alpha, dom, tol)
    return ExtensionResult(gf, REGULARITY_SMOOTH)


# ---------------------------------------------------------------------------
# extension current
# ---------------------------------------------------------------------------


def extension_current(result: ExtensionResult, A: Connection | None,
                      dom: StarDomain):
    """J_ext = d Phi + A wedge Phi for whichever carrier Phi lives in.

    For 1D distributional fields the derivative contributes Dirac atoms at
    the jump locations; the connection term multiplies the density by the
    connection coefficient.  For grid fields in dimension > 1 the current
    is the discrete one; a center-singularity flag rides along instead of
    a distributional part.
    """
    phi = result.Phi
    if isinstance(phi, Form):
        current = exterior_d(phi)
        if A is not None and not A.form.is_zero:
            current = current + wedge(A.form, phi)
        result.J_ext = current
        return current
    if isinstance(phi, Distribution1D):
        d_phi = phi.derivative()
        if A is not None and not A.form.is_zero:
            f = A.form.coefficient((0,), _endo_index(A))
            current = d_phi + phi.multiply_polynomial(f)
        else:
            current = d_phi
        result.J_ext = current
        return current
    if isinstance(phi, GridForm):
        current = discrete_d(phi)
        if A is not None and not A.form.is_zero:
            A_grid = sample(A.form, dom)
            current_vals = current.values + grid_wedge(A_grid, phi).values
            current = GridForm(dom, current.grade, current.fiber, current_vals,
                               current.channels).validate()
        result.J_ext = current
        if result.center_singularity:
            result.notes = (result.notes + " | " if result.notes else "") + \
                "current omits the singular part concentrated at the center"
        return current
    raise TypeError(f"unsupported field carrier {type(phi).__name__}")


def _endo_index(A: Connection) -> tuple[int, ...]:
    return (0, 0) if A.form.fiber.endo else (0,)
