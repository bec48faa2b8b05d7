"""Sampled-grid backend: nodal storage, discrete operators, and PDE solves.

Forms are stored collocated: every (basis, fiber) channel lives at every
node of the bounding-box grid.  Disk/ball domains are embedded in the box;
the interior mask comes from the domain, and Dirichlet data is imposed on
cut stencil arms whose crossing point is located by linear interpolation
of the level set |x-c|^2 - R^2 (Shortley-Weller).  That keeps the harmonic
solve second-order on smooth data.

The heat solve is implicit Euler with the boundary held fixed, so it is
unconditionally stable and obeys the discrete maximum principle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .algebra import Polynomial
from .domain import IntervalBoundary, SphereBoundary, StarDomain
from .forms import (
    FiberSpec,
    Form,
    SCALAR,
    basis_label,
    insert_index,
    merge_basis,
)

Channel = tuple[tuple[int, ...], tuple[int, ...]]


def form_channels(dim: int, grade: int, fiber: FiberSpec) -> list[Channel]:
    """Deterministic channel order: sorted basis tuples x fiber indices."""
    import itertools

    bases = list(itertools.combinations(range(dim), grade))
    return [(b, f) for b in bases for f in fiber.indices()]


def channel_name(channel: Channel, dim: int, fiber: FiberSpec) -> str:
    basis, fib = channel
    label = basis_label(basis, dim) or "phi"
    if fiber.is_scalar:
        return label
    return f"{label}[{','.join(map(str, fib))}]"


@dataclass
class GridForm:
    """Dense nodal samples of a form: values[(node index...), channel]."""

    dom: StarDomain
    grade: int
    fiber: FiberSpec
    values: np.ndarray
    channels: list[Channel] = field(default_factory=list)

    def __post_init__(self):
        if self.dom.grid is None:
            raise ValueError("grid form requires a domain with grid resolution")
        if not self.channels:
            self.channels = form_channels(self.dom.dim, self.grade, self.fiber)
        expected = tuple(self.dom.grid) + (len(self.channels),)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != expected {expected}")

    def validate(self) -> "GridForm":
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("grid form contains NaN or Inf")
        return self

    def channel(self, channel: Channel) -> np.ndarray:
        return self.values[..., self.channels.index(channel)]

    def channel_names(self) -> list[str]:
        return [channel_name(c, self.dom.dim, self.fiber) for c in self.channels]

    def max_abs(self, mask: np.ndarray | None = None) -> float:
        vals = self.values
        if mask is not None:
            vals = vals[mask]
        return float(np.max(np.abs(vals))) if vals.size else 0.0

    @classmethod
    def zeros(cls, dom: StarDomain, grade: int, fiber: FiberSpec = SCALAR) -> "GridForm":
        channels = form_channels(dom.dim, grade, fiber)
        return cls(dom, grade, fiber, np.zeros(tuple(dom.grid) + (len(channels),)), channels)


def sample(w: Form, dom: StarDomain) -> GridForm:
    """Evaluate an exact form at every grid node (exact-to-float rounding only)."""
    if w.dim != dom.dim:
        raise ValueError("form and domain dimensions differ")
    channels = form_channels(dom.dim, w.grade, w.fiber)
    pts = dom.node_points().reshape(-1, dom.dim)
    vals = np.zeros((pts.shape[0], len(channels)))
    for j, ch in enumerate(channels):
        poly = w.terms.get(ch)
        if poly is not None:
            vals[:, j] = poly.eval_array(pts)
    shaped = vals.reshape(tuple(dom.grid) + (len(channels),))
    return GridForm(dom, w.grade, w.fiber, shaped, channels).validate()


# ---------------------------------------------------------------------------
# discrete exterior derivative
# ---------------------------------------------------------------------------


def _partial_axis(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second-order finite difference along one axis: central inside,
    3-point one-sided at the ends (exact on quadratics)."""
    n = arr.shape[axis]
    if n < 3:
        raise ValueError("grid too coarse for differencing: need >= 3 nodes per axis")
    out = np.empty_like(arr)
    sl = lambda i: tuple(slice(None) if a != axis else i for a in range(arr.ndim))
    out[sl(slice(1, -1))] = (arr[sl(slice(2, None))] - arr[sl(slice(None, -2))]) / (2 * h)
    out[sl(0)] = (-3 * arr[sl(0)] + 4 * arr[sl(1)] - arr[sl(2)]) / (2 * h)
    out[sl(-1)] = (3 * arr[sl(-1)] - 4 * arr[sl(-2)] + arr[sl(-3)]) / (2 * h)
    return out


def grid_spacings(dom: StarDomain) -> list[float]:
    return [
        (float(hi) - float(lo)) / (g - 1)
        for (lo, hi), g in zip(dom.bounds(), dom.grid)
    ]


def discrete_d(w: GridForm) -> GridForm:
    """Finite-difference exterior derivative (O(h^2) on smooth channels)."""
    dom = w.dom
    n = dom.dim
    out = GridForm.zeros(dom, min(w.grade + 1, n), w.fiber)
    if w.grade == n:
        return out
    hs = grid_spacings(dom)
    for j, (basis, fib) in enumerate(w.channels):
        data = w.values[..., j]
        for axis in range(n):
            ins = insert_index(basis, axis)
            if ins is None:
                continue
            sign, new_basis = ins
            target = out.channels.index((new_basis, fib))
            out.values[..., target] += sign * _partial_axis(data, axis, hs[axis])
    return out.validate()


def grid_wedge(a: GridForm, b: GridForm) -> GridForm:
    """Pointwise wedge of sampled forms, same fiber rules as the exact wedge."""
    from .forms import _fiber_pairs

    if a.dom is not b.dom and a.dom != b.dom:
        raise ValueError("grid forms live on different domains")
    fiber_out, combine = _fiber_pairs(a.fiber, b.fiber)
    grade = a.grade + b.grade
    dom = a.dom
    if grade > dom.dim:
        return GridForm.zeros(dom, dom.dim, fiber_out)
    out = GridForm.zeros(dom, grade, fiber_out)
    for ja, (ba, fa) in enumerate(a.channels):
        for jb, (bb, fb) in enumerate(b.channels):
            merged = merge_basis(ba, bb)
            if merged is None:
                continue
            sign, basis = merged
            for fib_out, _ in combine(fa, fb):
                target = out.channels.index((basis, fib_out))
                out.values[..., target] += sign * a.values[..., ja] * b.values[..., jb]
    return out.validate()


# ---------------------------------------------------------------------------
# quadrature homotopy
# ---------------------------------------------------------------------------


def quadrature_H(w: GridForm, dom: StarDomain, order: int = 8) -> GridForm:
    """Gauss-Legendre homotopy along rays from the center, with multilinear
    interpolation of the sampled channels at the ray points."""
    if w.grade < 1:
        raise ValueError("homotopy quadrature needs grade >= 1")
    from scipy.interpolate import RegularGridInterpolator

    k = w.grade
    axes = dom.node_axes()
    center = np.array([float(c) for c in dom.center])
    nodes, weights = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (nodes + 1.0)
    wq = 0.5 * weights
    pts = dom.node_points().reshape(-1, dom.dim)
    for p in pts[:: max(1, len(pts) // 8)]:
        if not dom.contains(p, tol=1e-9) and not isinstance(dom.boundary, SphereBoundary):
            raise AssertionError("ray endpoint escaped the domain")
    # ray sample points for all nodes at once: (Q, N, dim)
    ray = center[None, None, :] + t[:, None, None] * (pts[None, :, :] - center[None, None, :])
    out = GridForm.zeros(dom, k - 1, w.fiber)
    interp_cache: dict[int, RegularGridInterpolator] = {}
    for j, (basis, fib) in enumerate(w.channels):
        if not np.any(w.values[..., j]):
            continue
        if j not in interp_cache:
            interp_cache[j] = RegularGridInterpolator(
                axes, w.values[..., j], method="linear", bounds_error=False, fill_value=None
            )
        vals = interp_cache[j](ray.reshape(-1, dom.dim)).reshape(len(t), len(pts))
        profile = np.einsum("q,qn->n", wq * t ** (k - 1), vals)
        for pos, axis in enumerate(basis):
            sign = -1.0 if pos % 2 else 1.0
            contrib = sign * profile * (pts[:, axis] - center[axis])
            new_basis = basis[:pos] + basis[pos + 1:]
            target = out.channels.index((new_basis, fib))
            out.values[..., target] += contrib.reshape(dom.grid)
    return out.validate()


# ---------------------------------------------------------------------------
# boundary data
# ---------------------------------------------------------------------------


class BoundaryData:
    """Dirichlet data on the domain boundary, one value per channel.

    ``fn(point) -> array`` returns the channel values at a boundary point.
    For 1D domains the endpoint constructor stores exact rational values so
    the affine solve can stay exact.
    """

    def __init__(self, grade: int, fiber: FiberSpec, fn: Callable[[np.ndarray], np.ndarray],
                 endpoint_values: tuple | None = None):
        self.grade = grade
        self.fiber = fiber
        self.fn = fn
        self.endpoint_values = endpoint_values

    @classmethod
    def from_form(cls, w: Form) -> "BoundaryData":
        channels = form_channels(w.dim, w.grade, w.fiber)

        def fn(point: np.ndarray) -> np.ndarray:
            return np.array([
                w.terms[ch].eval_float(point) if ch in w.terms else 0.0
                for ch in channels
            ])

        return cls(w.grade, w.fiber, fn)

    @classmethod
    def from_scalar_callable(cls, fn: Callable[[np.ndarray], float]) -> "BoundaryData":
        return cls(0, SCALAR, lambda p: np.array([float(fn(p))]))

    @classmethod
    def from_endpoints(cls, lo_value, hi_value, grade: int = 0,
                       fiber: FiberSpec = SCALAR) -> "BoundaryData":
        """1D two-point data; values may be scalars or per-channel sequences."""
        n_channels = len(form_channels(1, grade, fiber))

        def tovec(v):
            if isinstance(v, (list, tuple)):
                vals = [x if isinstance(x, Fraction) else Fraction(x) for x in v]
            else:
                vals = [v if isinstance(v, Fraction) else Fraction(v)]
            if len(vals) != n_channels:
                raise ValueError("endpoint value count does not match channels")
            return tuple(vals)

        lo_vec, hi_vec = tovec(lo_value), tovec(hi_value)
        data = cls(grade, fiber, lambda p: None, endpoint_values=(lo_vec, hi_vec))
        data._mid = 0.0

        def fn(point: np.ndarray) -> np.ndarray:
            # only ever evaluated at the two endpoints
            vec = lo_vec if float(point[0]) <= data._mid else hi_vec
            return np.array([float(v) for v in vec])

        data.fn = fn
        return data

    def bind_interval(self, dom: StarDomain) -> None:
        if isinstance(dom.boundary, IntervalBoundary) and self.endpoint_values is not None:
            self._mid = 0.5 * (float(dom.boundary.lo) + float(dom.boundary.hi))


# ---------------------------------------------------------------------------
# Dirichlet solves
# ---------------------------------------------------------------------------


@dataclass
class _Discretization:
    """Sparse Laplacian on the unknown (interior) nodes plus boundary load."""

    matrix: sp.csr_matrix           # action of the (negative-definite) Laplacian
    boundary_load: np.ndarray       # per-channel load from Dirichlet data, (n_unknown, n_ch)
    unknown_index: np.ndarray       # flat node index -> unknown index (or -1)
    unknown_nodes: np.ndarray       # (n_unknown,) flat node indices
    full_shape: tuple[int, ...]


def _interval_cut(center: np.ndarray, radius: float, p_in: np.ndarray, p_out: np.ndarray) -> float:
    """Fraction along [p_in, p_out] where the linear interpolant of
    |x-c|^2 - R^2 crosses zero."""
    g_in = float(np.sum((p_in - center) ** 2) - radius**2)
    g_out = float(np.sum((p_out - center) ** 2) - radius**2)
    if g_out == g_in:
        return 1.0
    s = g_in / (g_in - g_out)
    return min(max(s, 1e-6), 1.0)


def _discretize_dirichlet(dom: StarDomain, alpha: BoundaryData) -> _Discretization:
    n = dom.dim
    shape = tuple(dom.grid)
    hs = grid_spacings(dom)
    pts = dom.node_points().reshape(-1, n)
    n_channels = len(form_channels(n, alpha.grade, alpha.fiber))
    total = pts.shape[0]

    if isinstance(dom.boundary, SphereBoundary):
        center = np.array([float(c) for c in dom.center])
        radius = float(dom.boundary.radius)
        inside = (np.sum((pts - center) ** 2, axis=1) < radius**2 - 1e-12)
    else:
        inside = np.ones(total, dtype=bool)
        idx_nd = np.stack(np.unravel_index(np.arange(total), shape), axis=1)
        for axis in range(n):
            inside &= (idx_nd[:, axis] > 0) & (idx_nd[:, axis] < shape[axis] - 1)

    unknown_nodes = np.nonzero(inside)[0]
    unknown_index = -np.ones(total, dtype=int)
    unknown_index[unknown_nodes] = np.arange(len(unknown_nodes))

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    load = np.zeros((len(unknown_nodes), n_channels))
    strides = np.array([int(np.prod(shape[a + 1:])) for a in range(n)], dtype=int)

    sphere = isinstance(dom.boundary, SphereBoundary)
    if sphere:
        center = np.array([float(c) for c in dom.center])
        radius = float(dom.boundary.radius)

    for row, flat in enumerate(unknown_nodes):
        p0 = pts[flat]
        diag = 0.0
        for axis in range(n):
            h = hs[axis]
            arm_entries = []
            for direction in (+1, -1):
                nb = flat + direction * strides[axis]
                idx_axis = (flat // strides[axis]) % shape[axis]
                nb_ok = 0 <= idx_axis + direction < shape[axis]
                neighbor_inside = nb_ok and inside[nb]
                if neighbor_inside:
                    arm_entries.append((h, ("node", nb)))
                else:
                    if sphere:
                        p_out = pts[nb] if nb_ok else p0 + direction * h * np.eye(n)[axis]
                        s = _interval_cut(center, radius, p0, p_out)
                        cut = p0 + s * (p_out - p0)
                        # value taken on the true circle: project radially
                        rho = float(np.linalg.norm(cut - center))
                        surf = center + (cut - center) * (radius / rho)
                        arm_entries.append((s * h, ("dirichlet", alpha.fn(surf))))
                    else:
                        arm_entries.append((h, ("dirichlet", alpha.fn(pts[nb]))))
            (h_p, entry_p), (h_m, entry_m) = arm_entries
            scale = 2.0 / (h_p + h_m)
            for h_arm, entry in ((h_p, entry_p), (h_m, entry_m)):
                coeff = scale / h_arm
                diag -= coeff
                if entry[0] == "node":
                    rows.append(row)
                    cols.append(unknown_index[entry[1]])
                    vals.append(coeff)
                else:
                    load[row] += coeff * entry[1]
        rows.append(row)
        cols.append(row)
        vals.append(diag)

    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(len(unknown_nodes), len(unknown_nodes)))
    return _Discretization(matrix, load, unknown_index, unknown_nodes, shape)


def _boundary_fill(dom: StarDomain, alpha: BoundaryData, values: np.ndarray,
                   disc: _Discretization) -> None:
    """Write Dirichlet values onto the non-unknown nodes."""
    n = dom.dim
    pts = dom.node_points().reshape(-1, n)
    total = pts.shape[0]
    sphere = isinstance(dom.boundary, SphereBoundary)
    if sphere:
        center = np.array([float(c) for c in dom.center])
        radius = float(dom.boundary.radius)
    for flat in range(total):
        if disc.unknown_index[flat] >= 0:
            continue
        p = pts[flat]
        if sphere:
            rho = float(np.linalg.norm(p - center))
            surf = center + (p - center) * (radius / rho) if rho > 0 else p
            values[flat] = alpha.fn(surf)
        else:
            values[flat] = alpha.fn(p)


def solve_harmonic(alpha: BoundaryData, dom: StarDomain, tol: float = 1e-10) -> GridForm:
    """Discrete Laplace solve with Dirichlet data, componentwise per channel.

    Uses a sparse direct factorisation and verifies the relative residual
    against ``tol``; the solve fails loudly if the residual is not met.
    """
    if dom.grid is None:
        raise ValueError("harmonic solve requires a grid resolution")
    alpha.bind_interval(dom)
    disc = _discretize_dirichlet(dom, alpha)
    n_channels = disc.boundary_load.shape[1]
    rhs = -disc.boundary_load
    lu = spla.splu(disc.matrix.tocsc())
    sol = np.stack([lu.solve(rhs[:, c]) for c in range(n_channels)], axis=1)
    resid = disc.matrix @ sol + disc.boundary_load
    scale = max(float(np.max(np.abs(disc.boundary_load))), 1.0)
    rel = float(np.max(np.abs(resid))) / scale
    if rel > tol:
        raise RuntimeError(f"harmonic solve residual {rel:.3e} exceeds tol {tol:.1e}")
    total = int(np.prod(disc.full_shape))
    values = np.zeros((total, n_channels))
    values[disc.unknown_nodes] = sol
    _boundary_fill(dom, alpha, values, disc)
    fiber = alpha.fiber
    channels = form_channels(dom.dim, alpha.grade, fiber)
    shaped = values.reshape(disc.full_shape + (len(channels),))
    return GridForm(dom, alpha.grade, fiber, shaped, channels).validate()


def solve_heat(alpha: BoundaryData, dom: StarDomain, T: float, steps: int = 100,
               initial: GridForm | None = None) -> GridForm:
    """Implicit-Euler heat flow to time T with the boundary held at alpha.

    Interior initial data defaults to zero; pass ``initial`` to start from a
    sampled field instead.  Each step solves (I - dt L) u+ = u with the same
    factorised operator, so the march is unconditionally stable.
    """
    if T <= 0:
        raise ValueError("heat extension needs T > 0")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    alpha.bind_interval(dom)
    disc = _discretize_dirichlet(dom, alpha)
    n_channels = disc.boundary_load.shape[1]
    dt = float(T) / steps
    system = (sp.identity(disc.matrix.shape[0], format="csc") - dt * disc.matrix.tocsc())
    lu = spla.splu(system)
    u = np.zeros((disc.matrix.shape[0], n_channels))
    if initial is not None:
        flat = initial.values.reshape(-1, len(initial.channels))
        if flat.shape[1] != n_channels:
            raise ValueError("initial data channels do not match the boundary data")
        u = flat[disc.unknown_nodes].copy()
    for _ in range(steps):
        rhs = u + dt * disc.boundary_load
        u = np.stack([lu.solve(rhs[:, c]) for c in range(n_channels)], axis=1)
    total = int(np.prod(disc.full_shape))
    values = np.zeros((total, n_channels))
    values[disc.unknown_nodes] = u
    _boundary_fill(dom, alpha, values, disc)
    channels = form_channels(dom.dim, alpha.grade, alpha.fiber)
    shaped = values.reshape(disc.full_shape + (len(channels),))
    return GridForm(dom, alpha.grade, alpha.fiber, shaped, channels).validate()


# ---------------------------------------------------------------------------
# polynomial fitting (grid -> exact backend)
# ---------------------------------------------------------------------------


def _monomial_exponents(dim: int, degree: int) -> list[tuple[int, ...]]:
    import itertools

    out = []
    for exps in itertools.product(range(degree + 1), repeat=dim):
        if sum(exps) <= degree:
            out.append(exps)
    return sorted(out)


def fit_polynomial_form(gf: GridForm, degree: int) -> tuple[Form, float]:
    """Least-squares polynomial fit of every channel over the interior nodes.

    Returns the exact-backend form (float coefficients promoted to exact
    rationals) and the maximum nodal misfit across channels.
    """
    dom = gf.dom
    pts_all = dom.node_points().reshape(-1, dom.dim)
    mask = dom.interior_mask().reshape(-1)
    pts = pts_all[mask]
    exps = _monomial_exponents(dom.dim, degree)
    design = np.stack([
        np.prod(pts ** np.array(e), axis=1) for e in exps
    ], axis=1)
    terms: dict = {}
    worst = 0.0
    flat_vals = gf.values.reshape(-1, len(gf.channels))[mask]
    for j, ch in enumerate(gf.channels):
        target = flat_vals[:, j]
        coeffs, *_ = np.linalg.lstsq(design, target, rcond=None)
        resid = design @ coeffs - target
        worst = max(worst, float(np.max(np.abs(resid))) if resid.size else 0.0)
        poly_terms = {
            e: Fraction(float(c)) for e, c in zip(exps, coeffs) if abs(c) > 1e-13
        }
        if poly_terms:
            terms[ch] = Polynomial(dom.dim, poly_terms)
    form = Form(dom.dim, gf.grade, terms, gf.fiber)
    return form, worst


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def write_csv(gf: GridForm, path: str) -> None:
    """One row per node: coordinates, then each channel; lexicographic node order.

    Ball domains get an extra inside flag column between coordinates and
    channels, since exterior box nodes carry no meaning there.
    """
    dom = gf.dom
    pts = dom.node_points().reshape(-1, dom.dim)
    vals = gf.values.reshape(-1, len(gf.channels))
    masked = isinstance(dom.boundary, SphereBoundary)
    mask = dom.interior_mask().reshape(-1)
    from .algebra import variable_names

    header = list(variable_names(dom.dim))
    if masked:
        header.append("inside")
    header.extend(gf.channel_names())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(pts.shape[0]):
            row = [f"{c:.17g}" for c in pts[i]]
            if masked:
                row.append("1" if mask[i] else "0")
            row.extend(f"{v:.17g}" for v in vals[i])
            writer.writerow(row)
