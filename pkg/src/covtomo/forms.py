"""Graded, fiber-valued differential forms with exact polynomial coefficients.

A form of grade k in n variables is stored as a map

    (basis, fiber) -> Polynomial

where ``basis`` is a strictly increasing k-tuple of coordinate indices
(so dx^I with I sorted; signs from reordering are folded into the
coefficient at construction time) and ``fiber`` indexes the value space:
``(r,)`` for vector values, ``(r, c)`` for endomorphism values, ``(0,)``
for plain scalars.

The operations here are the exterior-algebra core: wedge product (with
matrix action of endomorphism-valued forms on vector-valued ones acting
from the left), exterior derivative, insertion of the radial field
K = (x - x0)^i d_i (and of general polynomial vector fields), pullback
along the constant map into the center, and sampled sup-norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .algebra import Polynomial, format_polynomial
from .domain import StarDomain


@dataclass(frozen=True)
class FiberSpec:
    """Shape of the value space: dim V and whether values sit in End(V)."""

    fiber_dim: int = 1
    endo: bool = False

    def __post_init__(self):
        if self.fiber_dim < 1:
            raise ValueError("fiber_dim must be >= 1")

    @property
    def is_scalar(self) -> bool:
        return self.fiber_dim == 1

    def indices(self) -> list[tuple[int, ...]]:
        if self.endo:
            return [(r, c) for r in range(self.fiber_dim) for c in range(self.fiber_dim)]
        return [(r,) for r in range(self.fiber_dim)]


SCALAR = FiberSpec(1, False)


class Form:
    """Exact-backend differential form."""

    __slots__ = ("dim", "grade", "fiber", "terms")

    def __init__(
        self,
        dim: int,
        grade: int,
        terms: Mapping[tuple, Polynomial] | None = None,
        fiber: FiberSpec = SCALAR,
    ):
        if not 0 <= grade <= dim:
            raise ValueError(f"grade {grade} out of range for dim {dim}")
        self.dim = int(dim)
        self.grade = int(grade)
        self.fiber = fiber
        clean: dict[tuple[tuple[int, ...], tuple[int, ...]], Polynomial] = {}
        if terms:
            for key, poly in terms.items():
                basis, fib = key
                basis = tuple(int(i) for i in basis)
                fib = tuple(int(i) for i in fib)
                if len(basis) != self.grade:
                    raise ValueError(f"basis {basis} has length {len(basis)}, expected {self.grade}")
                if any(not 0 <= i < dim for i in basis):
                    raise ValueError(f"basis index out of range in {basis}")
                if list(basis) != sorted(set(basis)):
                    raise ValueError(f"basis {basis} must be strictly increasing")
                self._check_fiber_index(fib)
                if poly.dim != dim:
                    raise ValueError("coefficient polynomial dimension mismatch")
                if poly.is_zero:
                    continue
                prev = clean.get((basis, fib))
                poly = poly if prev is None else prev + poly
                if poly.is_zero:
                    clean.pop((basis, fib), None)
                else:
                    clean[(basis, fib)] = poly
        self.terms = clean

    def _check_fiber_index(self, fib: tuple[int, ...]) -> None:
        want = 2 if self.fiber.endo else 1
        if len(fib) != want:
            raise ValueError(f"fiber index {fib} has rank {len(fib)}, expected {want}")
        if any(not 0 <= i < self.fiber.fiber_dim for i in fib):
            raise ValueError(f"fiber index {fib} out of range")

    # -- constructors --------------------------------------------------------

    @classmethod
    def zero(cls, dim: int, grade: int, fiber: FiberSpec = SCALAR) -> "Form":
        return cls(dim, grade, {}, fiber)

    @classmethod
    def from_scalar(cls, poly: Polynomial) -> "Form":
        """Grade-0 scalar form from a polynomial."""
        return cls(poly.dim, 0, {((), (0,)): poly})

    @classmethod
    def from_constant(cls, dim: int, value) -> "Form":
        return cls.from_scalar(Polynomial.const(dim, value))

    @classmethod
    def basis_one_form(cls, dim: int, axis: int, coeff: Polynomial | None = None) -> "Form":
        p = coeff if coeff is not None else Polynomial.const(dim, 1)
        return cls(dim, 1, {((axis,), (0,)): p})

    @classmethod
    def monomial(cls, dim: int, grade: int, basis: Sequence[int], poly: Polynomial,
                 fiber: FiberSpec = SCALAR, fiber_index: tuple[int, ...] = (0,)) -> "Form":
        return cls(dim, grade, {(tuple(basis), tuple(fiber_index)): poly}, fiber)

    # -- structure -----------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, basis: Sequence[int], fiber_index: tuple[int, ...] = (0,)) -> Polynomial:
        return self.terms.get((tuple(basis), tuple(fiber_index)), Polynomial.zero(self.dim))

    def max_degree(self) -> int:
        if not self.terms:
            return 0
        return max(p.degree() for p in self.terms.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Form):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.grade == other.grade
            and self.fiber == other.fiber
            and self.terms == other.terms
        )

    __hash__ = None

    # -- linear structure ------------------------------------------------------

    def _check_compatible(self, other: "Form") -> None:
        if self.dim != other.dim or self.grade != other.grade or self.fiber != other.fiber:
            raise ValueError("forms have incompatible dimension, grade, or fiber")

    def __add__(self, other: "Form") -> "Form":
        self._check_compatible(other)
        out = dict(self.terms)
        for key, poly in other.terms.items():
            s = out.get(key)
            s = poly if s is None else s + poly
            if s.is_zero:
                out.pop(key, None)
            else:
                out[key] = s
        return self._raw(self.dim, self.grade, out, self.fiber)

    def __sub__(self, other: "Form") -> "Form":
        return self + (-other)

    def __neg__(self) -> "Form":
        return self._raw(self.dim, self.grade, {k: -p for k, p in self.terms.items()}, self.fiber)

    def scale(self, factor) -> "Form":
        out = {}
        for key, poly in self.terms.items():
            s = poly.scale(factor)
            if not s.is_zero:
                out[key] = s
        return self._raw(self.dim, self.grade, out, self.fiber)

    def map_coefficients(self, fn) -> "Form":
        """Apply ``fn`` to every coefficient polynomial (grade preserved)."""
        out = {}
        for key, poly in self.terms.items():
            s = fn(poly)
            if not s.is_zero:
                out[key] = s
        return self._raw(self.dim, self.grade, out, self.fiber)

    # -- evaluation ------------------------------------------------------------

    def eval_channels(self, point: Sequence[float]) -> dict[tuple, float]:
        return {key: poly.eval_float(point) for key, poly in self.terms.items()}

    def eval_channels_exact(self, point: Sequence) -> dict[tuple, Fraction]:
        return {key: poly.eval_exact(point) for key, poly in self.terms.items()}

    # -- serialisation -----------------------------------------------------------

    def to_json(self) -> dict:
        terms = [
            {"basis": list(basis), "fiber": list(fib), "poly": poly.to_json()}
            for (basis, fib), poly in sorted(self.terms.items())
        ]
        return {
            "dim": self.dim,
            "grade": self.grade,
            "fiber_dim": self.fiber.fiber_dim,
            "endo": self.fiber.endo,
            "terms": terms,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Form":
        fiber = FiberSpec(int(data.get("fiber_dim", 1)), bool(data.get("endo", False)))
        terms = {
            (tuple(t["basis"]), tuple(t["fiber"])): Polynomial.from_json(t["poly"])
            for t in data.get("terms", [])
        }
        return cls(int(data["dim"]), int(data["grade"]), terms, fiber)

    # -- printing ---------------------------------------------------------------

    def __str__(self) -> str:
        return format_form(self)

    def __repr__(self) -> str:
        return f"Form(dim={self.dim}, grade={self.grade}, {self!s})"

    @classmethod
    def _raw(cls, dim, grade, terms, fiber) -> "Form":
        obj = object.__new__(cls)
        obj.dim = dim
        obj.grade = grade
        obj.fiber = fiber
        obj.terms = terms
        return obj


@dataclass
class Connection:
    """End(V)-valued connection one-form, plus the optional dual vector field.

    A scalar-fiber one-form is accepted and treated as a 1x1 endomorphism.
    ``dual_vector`` holds polynomial components of the vector field X used
    by the contravariant (insertion) side of the theory.
    """

    form: Form
    dual_vector: tuple[Polynomial, ...] | None = None

    def __post_init__(self):
        if self.form.grade != 1:
            raise ValueError("a connection is a one-form")
        f = self.form.fiber
        if not f.endo and f.fiber_dim != 1:
            raise ValueError("connection values must be endomorphisms (or scalars)")
        if self.dual_vector is not None:
            self.dual_vector = tuple(self.dual_vector)
            if len(self.dual_vector) != self.form.dim:
                raise ValueError("dual vector field needs one component per coordinate")

    @property
    def dim(self) -> int:
        return self.form.dim

    @classmethod
    def zero(cls, dim: int, fiber_dim: int = 1) -> "Connection":
        fiber = FiberSpec(fiber_dim, endo=fiber_dim > 1)
        return cls(Form.zero(dim, 1, fiber))

    @classmethod
    def scalar(cls, coeffs: Sequence[Polynomial]) -> "Connection":
        """Connection f_i(x) dx^i with scalar (1x1) fiber."""
        dim = coeffs[0].dim
        terms = {((i,), (0,)): c for i, c in enumerate(coeffs) if not c.is_zero}
        return cls(Form(dim, 1, terms))


# ---------------------------------------------------------------------------
# basis bookkeeping
# ---------------------------------------------------------------------------


def merge_basis(b1: tuple[int, ...], b2: tuple[int, ...]) -> tuple[int, tuple[int, ...]] | None:
    """Sign and sorted union of two strictly increasing index tuples.

    Returns None when an index repeats (the wedge vanishes).  The sign is
    the parity of the permutation sorting the concatenation b1 + b2.
    """
    merged: list[int] = []
    inversions = 0
    i = j = 0
    while i < len(b1) and j < len(b2):
        if b1[i] == b2[j]:
            return None
        if b1[i] < b2[j]:
            merged.append(b1[i])
            i += 1
        else:
            merged.append(b2[j])
            inversions += len(b1) - i
            j += 1
    merged.extend(b1[i:])
    merged.extend(b2[j:])
    return (-1) ** inversions, tuple(merged)


def insert_index(basis: tuple[int, ...], axis: int) -> tuple[int, tuple[int, ...]] | None:
    """Sign and basis for dx^axis wedged in front of dx^basis."""
    if axis in basis:
        return None
    pos = sum(1 for b in basis if b < axis)
    new = tuple(sorted(basis + (axis,)))
    return (-1) ** pos, new


def complement_sign(basis: tuple[int, ...], dim: int) -> tuple[int, tuple[int, ...]]:
    """Complementary basis and the sign of the permutation (basis, complement)."""
    comp = tuple(i for i in range(dim) if i not in basis)
    inversions = sum(1 for a in basis for b in comp if a > b)
    return (-1) ** inversions, comp


# ---------------------------------------------------------------------------
# wedge product
# ---------------------------------------------------------------------------


def _fiber_pairs(fa: FiberSpec, fb: FiberSpec):
    """Output fiber and the index-combination rule for a wedge product."""
    if fa.is_scalar:
        return fb, lambda ia, ib: [(ib, None)]
    if fb.is_scalar:
        return fa, lambda ia, ib: [(ia, None)]
    if fa.fiber_dim != fb.fiber_dim:
        raise ValueError("fiber dimensions do not match")
    if fa.endo and not fb.endo:
        # matrix acting on a vector from the left: (r, c) * (c,) -> (r,)
        return fb, lambda ia, ib: [((ia[0],), None)] if ia[1] == ib[0] else []
    if fa.endo and fb.endo:
        return fa, lambda ia, ib: [((ia[0], ib[1]), None)] if ia[1] == ib[0] else []
    raise ValueError("incompatible fibers for wedge (vector on the left)")


def wedge(a: Form, b: Form) -> Form:
    """Wedge product with left matrix action of endomorphism values."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    fiber_out, combine = _fiber_pairs(a.fiber, b.fiber)
    grade = a.grade + b.grade
    if grade > a.dim:
        return Form.zero(a.dim, a.dim, fiber_out)
    out: dict = {}
    for (ba, fa), pa in a.terms.items():
        for (bb, fb), pb in b.terms.items():
            merged = merge_basis(ba, bb)
            if merged is None:
                continue
            sign, basis = merged
            for fib_out, _ in combine(fa, fb):
                prod = pa * pb
                if sign < 0:
                    prod = -prod
                key = (basis, fib_out)
                cur = out.get(key)
                cur = prod if cur is None else cur + prod
                if cur.is_zero:
                    out.pop(key, None)
                else:
                    out[key] = cur
    return Form._raw(a.dim, grade, out, fiber_out)


def connection_action(A: Connection, w: Form) -> Form:
    """A wedge w, the covariant twist of the exterior derivative."""
    return wedge(A.form, w)


# ---------------------------------------------------------------------------
# exterior derivative, insertions, pullback
# ---------------------------------------------------------------------------


def exterior_d(w: Form) -> Form:
    """Exterior differential; d of a top form is zero."""
    if w.grade == w.dim:
        return Form.zero(w.dim, w.dim, w.fiber)
    out: dict = {}
    for (basis, fib), poly in w.terms.items():
        for axis in range(w.dim):
            dp = poly.partial(axis)
            if dp.is_zero:
                continue
            ins = insert_index(basis, axis)
            if ins is None:
                continue
            sign, new_basis = ins
            if sign < 0:
                dp = -dp
            key = (new_basis, fib)
            cur = out.get(key)
            cur = dp if cur is None else cur + dp
            if cur.is_zero:
                out.pop(key, None)
            else:
                out[key] = cur
    return Form._raw(w.dim, w.grade + 1, out, w.fiber)


def insert_vector(w: Form, components: Sequence[Polynomial]) -> Form:
    """Interior product with a polynomial vector field."""
    if w.grade == 0:
        raise ValueError("cannot insert a vector into a grade-0 form")
    if len(components) != w.dim:
        raise ValueError("vector field needs one component per coordinate")
    out: dict = {}
    for (basis, fib), poly in w.terms.items():
        for pos, axis in enumerate(basis):
            comp = components[axis]
            if comp.is_zero:
                continue
            coeff = poly * comp
            if pos % 2:
                coeff = -coeff
            new_basis = basis[:pos] + basis[pos + 1:]
            key = (new_basis, fib)
            cur = out.get(key)
            cur = coeff if cur is None else cur + coeff
            if cur.is_zero:
                out.pop(key, None)
            else:
                out[key] = cur
    return Form._raw(w.dim, w.grade - 1, out, w.fiber)


def radial_field(dim: int, x0: Sequence) -> tuple[Polynomial, ...]:
    """Components of K = (x - x0)^i d_i."""
    comps = []
    for i in range(dim):
        p = Polynomial.variable(dim, i) - Polynomial.const(dim, x0[i])
        comps.append(p)
    return tuple(comps)


def insert_radial(w: Form, x0: Sequence) -> Form:
    """Interior product with the radial field anchored at the homotopy center."""
    return insert_vector(w, radial_field(w.dim, x0))


def radial_flat(dim: int, x0: Sequence) -> Form:
    """The one-form dual to the radial field (Euclidean metric)."""
    terms = {}
    for i, comp in enumerate(radial_field(dim, x0)):
        terms[((i,), (0,))] = comp
    return Form(dim, 1, terms)


def pullback_center(w: Form, x0: Sequence) -> Form:
    """Pullback along the constant map into x0; non-vanishing only on grade 0."""
    if w.grade > 0:
        return Form.zero(w.dim, w.grade, w.fiber)
    out = {}
    for key, poly in w.terms.items():
        v = poly.eval_exact(x0)
        if v != 0:
            out[key] = Polynomial.const(w.dim, v)
    return Form._raw(w.dim, 0, out, w.fiber)


# ---------------------------------------------------------------------------
# norms and convergence radius
# ---------------------------------------------------------------------------


def sup_norm(w: Form, region: StarDomain, per_axis: int = 64, max_refine: int = 1,
             rel_tol: float = 0.01) -> float:
    """Sampled estimate of max over channels of sup |coefficient| on the region.

    Dense sampling with refinement doubling; successive estimates are merged
    with max() so the value is monotone non-decreasing in sample density.
    Refinement stops once two estimates agree within ``rel_tol``.
    """
    if w.dim != region.dim:
        raise ValueError("form and region dimensions differ")
    if w.is_zero:
        return 0.0
    est = _max_abs_on(w, region.sample_points(per_axis))
    for _ in range(max_refine):
        per_axis = 2 * per_axis
        new = max(est, _max_abs_on(w, region.sample_points(per_axis)))
        if new > 0 and (new - est) < rel_tol * new:
            return new
        est = new
    return est


def _max_abs_on(w: Form, points: np.ndarray) -> float:
    best = 0.0
    for _, poly in w.terms.items():
        vals = poly.eval_array(points)
        m = float(np.max(np.abs(vals))) if len(vals) else 0.0
        if m > best:
            best = m
    return best


def convergence_radius(A: Connection, k: int, region: StarDomain,
                       per_axis: int = 64) -> float:
    """Radius of the series convergence ball: grade / sup-norm of the connection."""
    if k < 1:
        raise ValueError("grade-0 equations have no convergence radius; the "
                         "series solver only covers grade >= 1")
    norm = sup_norm(A.form, region, per_axis=per_axis)
    if norm == 0.0:
        return math.inf
    return k / norm


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------


def basis_label(basis: tuple[int, ...], dim: int) -> str:
    from .algebra import variable_names

    names = variable_names(dim)
    if not basis:
        return ""
    return "^".join(f"d{names[i]}" for i in basis)


def format_form(w: Form) -> str:
    """Canonical string such as "(x+1)dx", "dx", "x-1/2", or "0"."""
    if w.is_zero:
        return "0"
    pieces = []
    for (basis, fib), poly in sorted(w.terms.items()):
        body = format_polynomial(poly)
        label = basis_label(basis, w.dim)
        fiber_tag = "" if w.fiber.is_scalar else f"e{','.join(map(str, fib))}:"
        if not label:
            pieces.append(f"{fiber_tag}{body}")
        elif body == "1":
            pieces.append(f"{fiber_tag}{label}")
        elif body == "-1":
            pieces.append(f"{fiber_tag}-{label}")
        elif "+" in body or body.lstrip("-").count("-") > 0:
            pieces.append(f"{fiber_tag}({body}){label}")
        else:
            pieces.append(f"{fiber_tag}({body}){label}")
    return " + ".join(pieces)
