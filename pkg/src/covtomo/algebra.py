"""Exact sparse multivariate polynomial arithmetic over the rationals.

A polynomial in n variables is a mapping from exponent tuples (one
non-negative integer per variable) to Fraction coefficients.  Zero
coefficients are never stored, so two polynomials are equal iff their
term maps are equal.  All arithmetic is exact; floats only appear in the
explicit sampling helpers used by norm estimation and grid code.

Example (2 variables x, y):
    x^2*y + 3/2  ->  {(2, 1): Fraction(1), (0, 0): Fraction(3, 2)}

Two special helpers support the ray-integration step of the homotopy
operator: ``substitute_ray`` composes a polynomial with the straight-line
homotopy x0 + t*(x - x0), returning a polynomial in (t, x), and
``integrate_t`` integrates such a polynomial against t**weight over [0, 1]
term by term (t**m picks up the factor 1/(m + weight + 1)).

Products are guarded by a configurable total-degree cap (default 16) so a
runaway series product fails fast instead of exhausting memory.  Solvers
that legitimately build high-degree series raise the cap locally with the
``degree_cap`` context manager.
"""

from __future__ import annotations

from contextlib import contextmanager
from contextvars import ContextVar
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Iterator, Mapping, Sequence

import numpy as np

DEFAULT_DEGREE_CAP = 16

_degree_cap: ContextVar[int] = ContextVar("covtomo_degree_cap", default=DEFAULT_DEGREE_CAP)


class DegreeCapExceeded(ValueError):
    """A polynomial product exceeded the active total-degree cap."""


@contextmanager
def degree_cap(limit: int) -> Iterator[None]:
    """Temporarily raise (or lower) the total-degree cap for products."""
    token = _degree_cap.set(int(limit))
    try:
        yield
    finally:
        _degree_cap.reset(token)


def active_degree_cap() -> int:
    return _degree_cap.get()


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, str)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value)
    raise TypeError(f"cannot use {type(value).__name__} as an exact coefficient")


class Polynomial:
    """Sparse exact polynomial in ``dim`` variables with Fraction coefficients."""

    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms: Mapping[tuple, object] | None = None):
        if dim < 0:
            raise ValueError("dim must be non-negative")
        self.dim = int(dim)
        clean: dict[tuple[int, ...], Fraction] = {}
        if terms:
            for exp, coeff in terms.items():
                exp = tuple(int(e) for e in exp)
                if len(exp) != self.dim:
                    raise ValueError(f"exponent {exp} has length {len(exp)}, expected {self.dim}")
                if any(e < 0 for e in exp):
                    raise ValueError(f"negative exponent in {exp}")
                c = _as_fraction(coeff)
                if c != 0:
                    prev = clean.get(exp)
                    c = c if prev is None else prev + c
                    if c == 0:
                        del clean[exp]
                    else:
                        clean[exp] = c
        self.terms = clean

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, dim: int) -> "Polynomial":
        return cls(dim, {})

    @classmethod
    def const(cls, dim: int, value) -> "Polynomial":
        return cls(dim, {(0,) * dim: _as_fraction(value)})

    @classmethod
    def variable(cls, dim: int, index: int) -> "Polynomial":
        if not 0 <= index < dim:
            raise ValueError(f"variable index {index} out of range for dim {dim}")
        exp = [0] * dim
        exp[index] = 1
        return cls(dim, {tuple(exp): Fraction(1)})

    # -- structure ---------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        """Total degree; 0 for the zero polynomial."""
        if not self.terms:
            return 0
        return max(sum(exp) for exp in self.terms)

    def constant_value(self) -> Fraction:
        """Coefficient of the constant monomial."""
        return self.terms.get((0,) * self.dim, Fraction(0))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.dim == other.dim and self.terms == other.terms

    __hash__ = None  # mutable mapping inside; value semantics via __eq__ only

    # -- ring operations ---------------------------------------------------

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check_dim(other)
        out = dict(self.terms)
        for exp, c in other.terms.items():
            s = out.get(exp, Fraction(0)) + c
            if s == 0:
                out.pop(exp, None)
            else:
                out[exp] = s
        return self._raw(self.dim, out)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __neg__(self) -> "Polynomial":
        return self._raw(self.dim, {exp: -c for exp, c in self.terms.items()})

    def scale(self, factor) -> "Polynomial":
        f = _as_fraction(factor)
        if f == 0:
            return Polynomial.zero(self.dim)
        return self._raw(self.dim, {exp: c * f for exp, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        self._check_dim(other)
        if not self.terms or not other.terms:
            return Polynomial.zero(self.dim)
        cap = _degree_cap.get()
        out: dict[tuple[int, ...], Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                exp = tuple(a + b for a, b in zip(e1, e2))
                if sum(exp) > cap:
                    raise DegreeCapExceeded(
                        f"product degree {sum(exp)} exceeds cap {cap}; "
                        "raise it with algebra.degree_cap(...) if intended"
                    )
                s = out.get(exp, Fraction(0)) + c1 * c2
                if s == 0:
                    out.pop(exp, None)
                else:
                    out[exp] = s
        return self._raw(self.dim, out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Polynomial":
        if n < 0:
            raise ValueError("negative powers not supported")
        result = Polynomial.const(self.dim, 1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base_needed = n >> 1
            if base_needed:
                base = base * base
            n = base_needed
        return result

    # -- evaluation --------------------------------------------------------

    def eval_exact(self, point: Sequence) -> Fraction:
        """Exact evaluation at a point with rational coordinates."""
        if len(point) != self.dim:
            raise ValueError(f"point length {len(point)} != dim {self.dim}")
        pt = [_as_fraction(v) for v in point]
        total = Fraction(0)
        for exp, c in self.terms.items():
            term = c
            for v, e in zip(pt, exp):
                if e:
                    term *= v**e
            total += term
        return total

    def eval_float(self, point: Sequence[float]) -> float:
        if len(point) != self.dim:
            raise ValueError(f"point length {len(point)} != dim {self.dim}")
        total = 0.0
        for exp, c in self.terms.items():
            term = float(c)
            for v, e in zip(point, exp):
                if e:
                    term *= float(v) ** e
            total += term
        return total

    def eval_array(self, points: np.ndarray) -> np.ndarray:
        """Vectorised float evaluation at an (N, dim) array of points."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[None, :]
        if points.shape[1] != self.dim:
            raise ValueError(f"points have {points.shape[1]} coords, expected {self.dim}")
        out = np.zeros(points.shape[0])
        for exp, c in self.terms.items():
            term = np.full(points.shape[0], float(c))
            for axis, e in enumerate(exp):
                if e:
                    term *= points[:, axis] ** e
            out += term
        return out

    # -- calculus ----------------------------------------------------------

    def partial(self, axis: int) -> "Polynomial":
        """Exact partial derivative with respect to variable ``axis``."""
        if not 0 <= axis < self.dim:
            raise ValueError(f"axis {axis} out of range")
        out: dict[tuple[int, ...], Fraction] = {}
        for exp, c in self.terms.items():
            e = exp[axis]
            if e == 0:
                continue
            new = list(exp)
            new[axis] = e - 1
            key = tuple(new)
            s = out.get(key, Fraction(0)) + c * e
            if s == 0:
                out.pop(key, None)
            else:
                out[key] = s
        return self._raw(self.dim, out)

    def substitute_ray(self, x0: Sequence) -> "Polynomial":
        """Compose with the ray x0 + t*(x - x0).

        Returns a polynomial in dim+1 variables where variable 0 is the ray
        parameter t and variables 1..dim are the original coordinates.  The
        t-degree never exceeds the total degree of ``self``.
        """
        if len(x0) != self.dim:
            raise ValueError(f"center length {len(x0)} != dim {self.dim}")
        center = tuple(_as_fraction(v) for v in x0)
        out: dict[tuple[int, ...], Fraction] = {}
        for exp, c in self.terms.items():
            # expansion of prod_i (x0_i + t*(x_i - x0_i))**e_i as
            # a map (t-degree, x-exponent tuple) -> coefficient
            partial: dict[tuple[int, tuple[int, ...]], Fraction] = {(0, (0,) * self.dim): c}
            for axis, e in enumerate(exp):
                if e == 0:
                    continue
                factor = _ray_power(e, center[axis])
                nxt: dict[tuple[int, tuple[int, ...]], Fraction] = {}
                for (td, xs), pc in partial.items():
                    for (a, b), fc in factor.items():
                        newxs = list(xs)
                        newxs[axis] += b
                        key = (td + a, tuple(newxs))
                        s = nxt.get(key, Fraction(0)) + pc * fc
                        if s == 0:
                            nxt.pop(key, None)
                        else:
                            nxt[key] = s
                partial = nxt
            for (td, xs), pc in partial.items():
                key = (td,) + xs
                s = out.get(key, Fraction(0)) + pc
                if s == 0:
                    out.pop(key, None)
                else:
                    out[key] = s
        return self._raw(self.dim + 1, out)

    def integrate_t(self, weight_power: int) -> "Polynomial":
        """Integrate a (t, x) polynomial against t**weight_power over t in [0, 1].

        Variable 0 is consumed; the result lives in the remaining variables.
        The monomial t**m integrates to 1/(m + weight_power + 1).
        """
        if self.dim < 1:
            raise ValueError("integrate_t needs the leading t variable")
        if weight_power < 0:
            raise ValueError("weight_power must be non-negative")
        out: dict[tuple[int, ...], Fraction] = {}
        for exp, c in self.terms.items():
            m = exp[0]
            key = exp[1:]
            s = out.get(key, Fraction(0)) + c / (m + weight_power + 1)
            if s == 0:
                out.pop(key, None)
            else:
                out[key] = s
        return self._raw(self.dim - 1, out)

    def antiderivative(self, axis: int = 0) -> "Polynomial":
        out = {}
        for exp, c in self.terms.items():
            new = list(exp)
            new[axis] = exp[axis] + 1
            out[tuple(new)] = c / (exp[axis] + 1)
        return self._raw(self.dim, out)

    def integrate_interval(self, lo, hi) -> Fraction:
        """Exact definite integral over [lo, hi]; univariate polynomials only."""
        if self.dim != 1:
            raise ValueError("integrate_interval is univariate")
        anti = self.antiderivative(0)
        return anti.eval_exact([hi]) - anti.eval_exact([lo])

    def divide_univariate(self, divisor: "Polynomial") -> tuple["Polynomial", "Polynomial"]:
        """Exact univariate division: returns (quotient, remainder)."""
        if self.dim != 1 or divisor.dim != 1:
            raise ValueError("divide_univariate is univariate")
        if divisor.is_zero:
            raise ZeroDivisionError("polynomial division by zero")
        rem = {exp[0]: c for exp, c in self.terms.items()}
        ddeg = divisor.degree()
        dlead = divisor.terms[(ddeg,)]
        quot: dict[int, Fraction] = {}
        while rem:
            rdeg = max(rem)
            if rdeg < ddeg:
                break
            factor = rem[rdeg] / dlead
            quot[rdeg - ddeg] = factor
            for exp, c in divisor.terms.items():
                k = exp[0] + rdeg - ddeg
                s = rem.get(k, Fraction(0)) - factor * c
                if s == 0:
                    rem.pop(k, None)
                else:
                    rem[k] = s
        q = self._raw(1, {(e,): c for e, c in quot.items()})
        r = self._raw(1, {(e,): c for e, c in rem.items()})
        return q, r

    # -- serialisation -----------------------------------------------------

    def to_json(self) -> dict:
        """JSON form with arbitrary-precision integers as decimal strings."""
        terms = [
            {"exp": list(exp), "num": str(c.numerator), "den": str(c.denominator)}
            for exp, c in sorted(self.terms.items())
        ]
        return {"dim": self.dim, "terms": terms}

    @classmethod
    def from_json(cls, data: dict) -> "Polynomial":
        terms = {
            tuple(t["exp"]): Fraction(int(t["num"]), int(t["den"]))
            for t in data.get("terms", [])
        }
        return cls(int(data["dim"]), terms)

    # -- printing ----------------------------------------------------------

    def __str__(self) -> str:
        return format_polynomial(self)

    def __repr__(self) -> str:
        return f"Polynomial({self.dim}, {self!s})"

    # -- internals ---------------------------------------------------------

    def _check_dim(self, other: "Polynomial") -> None:
        if not isinstance(other, Polynomial):
            raise TypeError(f"expected Polynomial, got {type(other).__name__}")
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    @classmethod
    def _raw(cls, dim: int, terms: dict) -> "Polynomial":
        # bypass canonicalisation for maps already known to be clean
        obj = object.__new__(cls)
        obj.dim = dim
        obj.terms = terms
        return obj


@lru_cache(maxsize=4096)
def _ray_power(e: int, x0: Fraction) -> dict:
    """Expansion of (x0 + t*(x - x0))**e as {(t-degree, x-degree): coeff}."""
    out: dict[tuple[int, int], Fraction] = {}
    if x0 == 0:
        out[(e, e)] = Fraction(1)
        return out
    for a in range(e + 1):
        outer = comb(e, a) * x0 ** (e - a)
        for b in range(a + 1):
            coeff = outer * comb(a, b) * (-x0) ** (a - b)
            if coeff == 0:
                continue
            key = (a, b)
            s = out.get(key, Fraction(0)) + coeff
            if s == 0:
                out.pop(key, None)
            else:
                out[key] = s
    return out


def variable_names(dim: int) -> list[str]:
    if dim <= 3:
        return ["x", "y", "z"][:dim]
    return [f"x{i + 1}" for i in range(dim)]


def format_polynomial(p: Polynomial) -> str:
    """Canonical human-readable string, e.g. "x^2y+2xy^2", "x-1/2", "3/2"."""
    if p.is_zero:
        return "0"
    names = variable_names(p.dim)
    ordered = sorted(p.terms.items(), key=lambda kv: (-sum(kv[0]), tuple(-e for e in kv[0])))
    pieces: list[str] = []
    for exp, c in ordered:
        mono = "".join(
            f"{names[i]}" + (f"^{e}" if e > 1 else "")
            for i, e in enumerate(exp)
            if e > 0
        )
        if not mono:
            body = _format_fraction(c)
        elif c == 1:
            body = mono
        elif c == -1:
            body = f"-{mono}"
        elif c.denominator == 1:
            body = f"{c.numerator}{mono}"
        else:
            body = f"({_format_fraction(c)}){mono}"
        if pieces and not body.startswith("-"):
            pieces.append("+" + body)
        else:
            pieces.append(body)
    return "".join(pieces)


def _format_fraction(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"
