"""Linear homotopy operator and the exact/antiexact geometric decomposition.

For a grade-k form w = a(x) dx^I the operator integrates the pullback of
the coefficient along the ray from the homotopy center against the weight
t^(k-1) and contracts dx^I with the radial field evaluated at the field
point:

    (Hw)(x) = sum_j (-1)^j [ int_0^1 t^(k-1) a(x0 + t(x-x0)) dt ]
                    * (x - x0)^{i_j} dx^{I \\ i_j}

The convention (radial factor at x, ray substitution only inside the
coefficient) is the one under which dH + Hd = I - s* holds exactly on
polynomials; the test suite pins it.  H of a grade-0 form is the zero form,
and the grade-0 part of the invariance formula is carried by the pullback
into the center.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .algebra import Polynomial
from .domain import StarDomain
from .forms import Form, exterior_d, pullback_center


def homotopy(w: Form, dom: StarDomain) -> Form:
    """Apply the degree-lowering homotopy operator for the domain's center."""
    if not isinstance(w, Form):
        raise TypeError("the exact homotopy operator works on the exact backend; "
                        "sampled grid forms go through grid.quadrature_H")
    if w.dim != dom.dim:
        raise ValueError("form and domain dimensions differ")
    if w.grade == 0:
        return Form.zero(w.dim, 0, w.fiber)
    x0 = dom.center
    k = w.grade
    out: dict = {}
    for (basis, fib), poly in w.terms.items():
        ray = poly.substitute_ray(x0)
        radial_profile = ray.integrate_t(k - 1)
        if radial_profile.is_zero:
            continue
        for pos, axis in enumerate(basis):
            k_factor = Polynomial.variable(w.dim, axis) - Polynomial.const(w.dim, x0[axis])
            coeff = radial_profile * k_factor
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
    return Form._raw(w.dim, k - 1, out, w.fiber)


@dataclass
class Decomposition:
    """Split of a form into exact part dHw, antiexact part Hdw, and center value."""

    exact_part: Form
    antiexact_part: Form
    center_value: Form

    def reconstruct(self) -> Form:
        return self.exact_part + self.antiexact_part + self.center_value


def _d_of_homotopy(w: Form, dom: StarDomain, H: Callable[[Form, StarDomain], Form]) -> Form:
    """dHw with the correct (same-grade) zero on grade-0 input."""
    if w.grade == 0:
        return Form.zero(w.dim, 0, w.fiber)
    return exterior_d(H(w, dom))


def _homotopy_of_d(w: Form, dom: StarDomain, H: Callable[[Form, StarDomain], Form]) -> Form:
    """Hdw with the correct (same-grade) zero on top-grade input."""
    if w.grade == w.dim:
        return Form.zero(w.dim, w.dim, w.fiber)
    return H(exterior_d(w), dom)


def decompose(w: Form, dom: StarDomain) -> Decomposition:
    exact = _d_of_homotopy(w, dom, homotopy)
    antiexact = _homotopy_of_d(w, dom, homotopy)
    if w.grade == 0:
        center = pullback_center(w, dom.center)
    else:
        center = Form.zero(w.dim, w.grade, w.fiber)
    return Decomposition(exact, antiexact, center)


def is_exact(w: Form, dom: StarDomain) -> bool:
    """Whether w lies in the exact subspace (dHw = w; constants for grade 0)."""
    if w.grade == 0:
        return w == pullback_center(w, dom.center)
    return exterior_d(homotopy(w, dom)) == w


def exact_projection(w: Form, dom: StarDomain) -> Form:
    """Project onto the exact subspace (dH; identity on grade-0 constants)."""
    if w.grade == 0:
        return pullback_center(w, dom.center)
    return exterior_d(homotopy(w, dom))


# ---------------------------------------------------------------------------
# identity verification
# ---------------------------------------------------------------------------

IDENTITY_NAMES = (
    "invariance",          # dH + Hd = I - s*
    "nilpotency",          # H H = 0
    "dHd=d",
    "HdH=H",
    "exact-projector",     # (dH)^2 = dH
    "antiexact-projector",  # (Hd)^2 = Hd
)


def _identity_defects(w: Form, dom: StarDomain, H: Callable[[Form, StarDomain], Form]) -> dict[str, Form]:
    Hw = H(w, dom)
    dHw = _d_of_homotopy(w, dom, H)
    Hdw = _homotopy_of_d(w, dom, H)
    if w.grade == 0:
        center = pullback_center(w, dom.center)
    else:
        center = Form.zero(w.dim, w.grade, w.fiber)
    return {
        "invariance": dHw + Hdw - (w - center),
        "nilpotency": H(Hw, dom) if w.grade >= 1 else Form.zero(w.dim, 0, w.fiber),
        "dHd=d": _d_of_homotopy(exterior_d(w), dom, H) - exterior_d(w)
                 if w.grade < w.dim else Form.zero(w.dim, w.dim, w.fiber),
        "HdH=H": _homotopy_of_d(Hw, dom, H) - Hw if w.grade >= 1
                 else Form.zero(w.dim, 0, w.fiber),
        "exact-projector": _d_of_homotopy(dHw, dom, H) - dHw,
        "antiexact-projector": _homotopy_of_d(Hdw, dom, H) - Hdw,
    }


def _witness_point(defect: Form, dom: StarDomain) -> list[str] | None:
    """A rational point where a nonzero defect shows a nonzero coefficient."""
    if defect.is_zero:
        return None
    bounds = dom.bounds()
    denom = 7
    for num in range(1, denom):
        pt = [lo + Fraction(num, denom) * (hi - lo) for lo, hi in bounds]
        for poly in defect.terms.values():
            if poly.eval_exact(pt) != 0:
                return [str(c) for c in pt]
    return [str((lo + hi) / 2) for lo, hi in bounds]


def verify_identities(
    corpus: Sequence[Form],
    dom: StarDomain,
    homotopy_fn: Callable[[Form, StarDomain], Form] | None = None,
    workers: int = 1,
) -> list[dict]:
    """Check all operator identities on every corpus element, exactly.

    Violations become report entries, not exceptions.  ``homotopy_fn``
    exists so the harness itself can be mutation-tested.  ``workers`` > 1
    checks forms in a thread pool; results are merged in submission order
    so the report is deterministic.
    """
    H = homotopy_fn or homotopy

    def check(item) -> list[dict]:
        idx, w = item
        entries = []
        for name, defect in _identity_defects(w, dom, H).items():
            ok = defect.is_zero
            entry = {"identity": name, "form_id": idx, "status": "pass" if ok else "fail"}
            if not ok:
                entry["witness_point"] = _witness_point(defect, dom)
            entries.append(entry)
        return entries

    items = list(enumerate(corpus))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            grouped = list(pool.map(check, items))
    else:
        grouped = [check(it) for it in items]
    return [entry for group in grouped for entry in group]
