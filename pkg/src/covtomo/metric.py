"""Euclidean metric structure: Hodge star, codifferential, dual homotopy.

The codifferential is the grade-involution conjugate of d under the star,
composed so that it acts as the plain divergence on one-forms (delta of
x dx in one dimension is +1, and the induced Laplacian on functions is the
analyst's d^2/dx^2).  The dual homotopy operator is the matching conjugate
of H; together they satisfy the dual invariance formula

    h delta + delta h = I - S,    S = star^-1 s* star,

exactly on polynomial forms, with S supported on the top grade.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import StarDomain
from .forms import Form, complement_sign, exterior_d, pullback_center
from .homotopy import homotopy


@dataclass(frozen=True)
class MetricContext:
    """Euclidean metric with standard orientation; dim is all it needs.

    The type exists so a diagonal metric could be added without touching
    call sites; only the identity metric is implemented.
    """

    dim: int


def _ctx_for(w: Form, ctx: MetricContext | None) -> MetricContext:
    if ctx is None:
        return MetricContext(w.dim)
    if ctx.dim != w.dim:
        raise ValueError("metric context dimension mismatch")
    return ctx


def hodge_star(w: Form, ctx: MetricContext | None = None) -> Form:
    """Componentwise Hodge star; scalar or vector fiber only."""
    ctx = _ctx_for(w, ctx)
    if w.fiber.endo:
        raise ValueError("hodge star is defined componentwise on scalar or vector fibers")
    n = w.dim
    out: dict = {}
    for (basis, fib), poly in w.terms.items():
        sign, comp = complement_sign(basis, n)
        coeff = poly if sign > 0 else -poly
        key = (comp, fib)
        cur = out.get(key)
        cur = coeff if cur is None else cur + coeff
        if cur.is_zero:
            out.pop(key, None)
        else:
            out[key] = cur
    return Form._raw(n, n - w.grade, out, w.fiber)


def hodge_star_inverse(w: Form, ctx: MetricContext | None = None) -> Form:
    """Inverse star: the unique u with star(u) = w."""
    ctx = _ctx_for(w, ctx)
    n, j = w.dim, w.grade
    u = hodge_star(w, ctx)
    if (j * (n - j)) % 2:
        u = -u
    return u


def _eta(w: Form) -> Form:
    """Grade involution (-1)^k."""
    return -w if w.grade % 2 else w


def codifferential(w: Form, ctx: MetricContext | None = None) -> Form:
    """delta = eta star^-1 d star; zero on grade 0."""
    ctx = _ctx_for(w, ctx)
    if w.grade == 0:
        return Form.zero(w.dim, 0, w.fiber)
    return _eta(hodge_star_inverse(exterior_d(hodge_star(w, ctx)), ctx))


def cohomotopy(w: Form, dom: StarDomain, ctx: MetricContext | None = None) -> Form:
    """Dual homotopy h = star^-1 H star eta; raises the grade by one."""
    ctx = _ctx_for(w, ctx)
    if w.grade == w.dim:
        # star eta lands on grade 0 where H vanishes
        return Form.zero(w.dim, w.dim, w.fiber)
    return hodge_star_inverse(homotopy(hodge_star(_eta(w), ctx), dom), ctx)


def center_coprojection(w: Form, dom: StarDomain, ctx: MetricContext | None = None) -> Form:
    """S = star^-1 s* star; non-vanishing only on top-grade forms."""
    ctx = _ctx_for(w, ctx)
    if w.grade != w.dim:
        return Form.zero(w.dim, w.grade, w.fiber)
    return hodge_star_inverse(pullback_center(hodge_star(w, ctx), dom.center), ctx)


def laplacian(w: Form, ctx: MetricContext | None = None) -> Form:
    """Laplace-Beltrami d delta + delta d (analyst's sign on functions)."""
    ctx = _ctx_for(w, ctx)
    if w.grade == 0:
        return codifferential(exterior_d(w), ctx)
    if w.grade == w.dim:
        return exterior_d(codifferential(w, ctx))
    return exterior_d(codifferential(w, ctx)) + codifferential(exterior_d(w), ctx)


@dataclass
class CoDecomposition:
    """Split into coexact part (delta h w), anticoexact part (h delta w),
    and the top-grade center term S w (the mirror of the grade-0 term)."""

    coexact_part: Form
    anticoexact_part: Form
    center_value: Form

    def reconstruct(self) -> Form:
        return self.coexact_part + self.anticoexact_part + self.center_value


def codecompose(w: Form, dom: StarDomain, ctx: MetricContext | None = None) -> CoDecomposition:
    ctx = _ctx_for(w, ctx)
    if w.grade == w.dim:
        # dual homotopy vanishes on the top grade; the center term carries
        # the complement, mirroring the grade-0 primal decomposition
        coexact = Form.zero(w.dim, w.grade, w.fiber)
    else:
        coexact = codifferential(cohomotopy(w, dom, ctx), ctx)
    if w.grade == 0:
        anticoexact = Form.zero(w.dim, 0, w.fiber)
    else:
        anticoexact = cohomotopy(codifferential(w, ctx), dom, ctx)
    center = center_coprojection(w, dom, ctx)
    return CoDecomposition(coexact, anticoexact, center)


def is_coexact(w: Form, dom: StarDomain, ctx: MetricContext | None = None) -> bool:
    """Whether w lies in the coexact subspace (delta h w = w; top-grade center)."""
    ctx = _ctx_for(w, ctx)
    if w.grade == w.dim:
        return w == center_coprojection(w, dom, ctx)
    return codifferential(cohomotopy(w, dom, ctx), ctx) == w


def coexact_projection(w: Form, dom: StarDomain, ctx: MetricContext | None = None) -> Form:
    ctx = _ctx_for(w, ctx)
    if w.grade == w.dim:
        return center_coprojection(w, dom, ctx)
    return codifferential(cohomotopy(w, dom, ctx), ctx)


def dual_identity_report(corpus, dom: StarDomain, ctx: MetricContext | None = None) -> list[dict]:
    """Exact checks of the dual invariance formula and delta^2 = 0 on a corpus."""
    entries = []
    for idx, w in enumerate(corpus):
        cd = codecompose(w, dom, ctx)
        ok_inv = cd.reconstruct() == w
        entries.append({"identity": "dual-invariance", "form_id": idx,
                        "status": "pass" if ok_inv else "fail"})
        if w.grade >= 2:
            ok_dd = codifferential(codifferential(w, ctx), ctx).is_zero
            entries.append({"identity": "delta^2", "form_id": idx,
                            "status": "pass" if ok_dd else "fail"})
    return entries
