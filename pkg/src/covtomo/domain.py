"""Star-shaped computational domains.

A domain carries the dimension, the homotopy center x0 (exact rational
coordinates), a boundary description (interval endpoints, sphere, or box),
and an optional grid resolution per axis for the sampled backend.  All
supported boundary shapes are convex, so every boundary point is visible
from the center along a straight ray.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


@dataclass(frozen=True)
class IntervalBoundary:
    lo: Fraction
    hi: Fraction

    kind = "interval"


@dataclass(frozen=True)
class SphereBoundary:
    radius: Fraction

    kind = "sphere"


@dataclass(frozen=True)
class BoxBoundary:
    half_widths: tuple[Fraction, ...]

    kind = "box"


Boundary = IntervalBoundary | SphereBoundary | BoxBoundary


@dataclass(frozen=True)
class StarDomain:
    dim: int
    center: tuple[Fraction, ...]
    boundary: Boundary
    grid: tuple[int, ...] | None = None

    def __post_init__(self):
        center = tuple(_frac(c) for c in self.center)
        object.__setattr__(self, "center", center)
        if len(center) != self.dim:
            raise ValueError(f"center has {len(center)} coordinates, expected {self.dim}")
        b = self.boundary
        if isinstance(b, IntervalBoundary):
            if self.dim != 1:
                raise ValueError("interval boundary requires dim 1")
            if not b.lo < center[0] < b.hi:
                raise ValueError("center must lie strictly inside the interval")
        elif isinstance(b, SphereBoundary):
            if b.radius <= 0:
                raise ValueError("sphere radius must be positive")
        elif isinstance(b, BoxBoundary):
            if len(b.half_widths) != self.dim:
                raise ValueError("box half_widths length must equal dim")
            if any(w <= 0 for w in b.half_widths):
                raise ValueError("box half-widths must be positive")
        else:
            raise TypeError(f"unsupported boundary {type(b).__name__}")
        if self.grid is not None:
            grid = tuple(int(g) for g in self.grid)
            object.__setattr__(self, "grid", grid)
            if len(grid) != self.dim:
                raise ValueError("grid must give one resolution per axis")
            if any(g < 3 for g in grid):
                raise ValueError("grid too coarse: need at least 3 nodes per axis")

    # -- convenience constructors -------------------------------------------

    @classmethod
    def interval(cls, lo, hi, center=None, grid: int | None = None) -> "StarDomain":
        lo, hi = _frac(lo), _frac(hi)
        c = _frac(center) if center is not None else (lo + hi) / 2
        return cls(1, (c,), IntervalBoundary(lo, hi), (grid,) if grid else None)

    @classmethod
    def ball(cls, dim: int, radius, center=None, grid: int | None = None) -> "StarDomain":
        c = tuple(_frac(v) for v in (center or (0,) * dim))
        g = (grid,) * dim if grid else None
        return cls(dim, c, SphereBoundary(_frac(radius)), g)

    @classmethod
    def box(cls, dim: int, half_widths, center=None, grid: int | None = None) -> "StarDomain":
        if not isinstance(half_widths, (tuple, list)):
            half_widths = (half_widths,) * dim
        hw = tuple(_frac(w) for w in half_widths)
        c = tuple(_frac(v) for v in (center or (0,) * dim))
        g = (grid,) * dim if grid else None
        return cls(dim, c, BoxBoundary(hw), g)

    # -- geometry -------------------------------------------------------------

    def bounds(self) -> list[tuple[Fraction, Fraction]]:
        """Closed coordinate bounds of the (bounding box of the) domain."""
        b = self.boundary
        if isinstance(b, IntervalBoundary):
            return [(b.lo, b.hi)]
        if isinstance(b, SphereBoundary):
            return [(c - b.radius, c + b.radius) for c in self.center]
        return [(c - w, c + w) for c, w in zip(self.center, b.half_widths)]

    def contains(self, point: Sequence[float], tol: float = 1e-12) -> bool:
        b = self.boundary
        if isinstance(b, IntervalBoundary):
            return float(b.lo) - tol <= point[0] <= float(b.hi) + tol
        if isinstance(b, SphereBoundary):
            r2 = sum((float(p) - float(c)) ** 2 for p, c in zip(point, self.center))
            return r2 <= float(b.radius) ** 2 + tol
        return all(
            abs(float(p) - float(c)) <= float(w) + tol
            for p, c, w in zip(point, self.center, b.half_widths)
        )

    def outer_radius(self) -> float:
        """Largest distance from the center to the boundary."""
        b = self.boundary
        if isinstance(b, IntervalBoundary):
            return float(max(b.hi - self.center[0], self.center[0] - b.lo))
        if isinstance(b, SphereBoundary):
            return float(b.radius)
        return math.sqrt(sum(float(w) ** 2 for w in b.half_widths))

    def sample_points(self, per_axis: int = 16) -> np.ndarray:
        """Dense (N, dim) float sample of the closed domain, row-major order."""
        axes = [
            np.linspace(float(lo), float(hi), per_axis)
            for lo, hi in self.bounds()
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        if isinstance(self.boundary, SphereBoundary):
            c = np.array([float(v) for v in self.center])
            mask = np.sum((pts - c) ** 2, axis=1) <= float(self.boundary.radius) ** 2 + 1e-12
            pts = pts[mask]
        return pts

    def ball_lattice(self, radius: float, per_axis: int = 7) -> np.ndarray:
        """Float lattice covering B(center, radius) intersected with the domain."""
        c = np.array([float(v) for v in self.center])
        axes = [np.linspace(ci - radius, ci + radius, per_axis) for ci in c]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        inside_ball = np.sum((pts - c) ** 2, axis=1) <= radius**2 + 1e-12
        pts = pts[inside_ball]
        keep = np.array([self.contains(p) for p in pts])
        return pts[keep] if len(pts) else pts

    def node_axes(self) -> list[np.ndarray]:
        """Per-axis node coordinates for the grid backend."""
        if self.grid is None:
            raise ValueError("domain has no grid resolution set")
        return [
            np.linspace(float(lo), float(hi), g)
            for (lo, hi), g in zip(self.bounds(), self.grid)
        ]

    def node_points(self) -> np.ndarray:
        axes = self.node_axes()
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def interior_mask(self) -> np.ndarray:
        """Boolean node mask; True where the node lies inside the domain."""
        pts = self.node_points()
        if isinstance(self.boundary, SphereBoundary):
            c = np.array([float(v) for v in self.center])
            r2 = np.sum((pts - c) ** 2, axis=-1)
            return r2 <= float(self.boundary.radius) ** 2 + 1e-12
        return np.ones(pts.shape[:-1], dtype=bool)

    def with_grid(self, per_axis: int) -> "StarDomain":
        return StarDomain(self.dim, self.center, self.boundary, (per_axis,) * self.dim)

    # -- serialisation ----------------------------------------------------------

    def to_json(self) -> dict:
        b = self.boundary
        if isinstance(b, IntervalBoundary):
            bj = {"kind": "interval", "lo": str(b.lo), "hi": str(b.hi)}
        elif isinstance(b, SphereBoundary):
            bj = {"kind": "sphere", "radius": str(b.radius)}
        else:
            bj = {"kind": "box", "half_widths": [str(w) for w in b.half_widths]}
        out = {
            "dim": self.dim,
            "center": [str(c) for c in self.center],
            "boundary": bj,
        }
        if self.grid is not None:
            out["grid"] = list(self.grid)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "StarDomain":
        bj = data["boundary"]
        kind = bj["kind"]
        if kind == "interval":
            boundary: Boundary = IntervalBoundary(Fraction(bj["lo"]), Fraction(bj["hi"]))
        elif kind == "sphere":
            boundary = SphereBoundary(Fraction(bj["radius"]))
        elif kind == "box":
            boundary = BoxBoundary(tuple(Fraction(w) for w in bj["half_widths"]))
        else:
            raise ValueError(f"unknown boundary kind {kind!r}")
        grid = tuple(data["grid"]) if "grid" in data else None
        return cls(int(data["dim"]), tuple(Fraction(c) for c in data["center"]), boundary, grid)
