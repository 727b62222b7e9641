"""Half-plane geometry, gridded scalar fields and reflection operators.

The right half-plane is {x1 >= 0}. Fields live on a tensor grid over
[0, X1max] x [X2min, X2max]. The x1 direction may be stretched towards
the wall through a smooth map x1 = g(xi) with xi uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import yaml
from scipy.special import erf

from . import kernels
from .errors import DomainError

# Gregory end correction (third order) for the wall row
GREGORY = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])
MAX_STRETCH_RATIO = 1.1


def _snap(p, tol=1e-9):
    """Round index coordinates that sit on a node up to round-off."""
    r = np.rint(p)
    return np.where(np.abs(p - r) < tol, r, p)


@dataclass(frozen=True)
class HalfPlanePoint:
    x1: float
    x2: float

    def __post_init__(self):
        if not (self.x1 >= 0.0) or not math.isfinite(self.x2):
            raise DomainError(f"x1 must be >= 0, got {self.x1}")

    def __iter__(self):
        yield self.x1
        yield self.x2


def reflect(p):
    """Mirror (x1, x2) -> (-x1, x2). Boundary points are fixed."""
    x1, x2 = p
    return (-x1, x2)


class Grid:
    """Tensor grid; uniform in x2, uniform or wall-stretched in x1.

    ``stretch`` is the ratio between the wall spacing and the bulk spacing
    (``None`` for a uniform grid). Consecutive x1 spacings never grow by
    more than MAX_STRETCH_RATIO.
    """

    def __init__(self, n1: int, n2: int, x1max: float, x2min: float, x2max: float,
                 stretch: Optional[float] = None, end_weights: str = "gregory"):
        if n1 < 8 or n2 < 8:
            raise DomainError("grid needs at least 8 nodes per direction")
        if not x1max > 0 or not x2max > x2min:
            raise DomainError("empty grid box")
        if end_weights not in ("gregory", "trapezoid"):
            raise DomainError(f"unknown end_weights {end_weights!r}")
        self.n1, self.n2 = int(n1), int(n2)
        self.x1max, self.x2min, self.x2max = float(x1max), float(x2min), float(x2max)
        self.h2 = (self.x2max - self.x2min) / (self.n2 - 1)
        self.end_weights = end_weights
        self.stretch = None if stretch is None or stretch >= 1.0 else float(stretch)
        if self.stretch is None:
            self.hxi = self.x1max / (self.n1 - 1)
            self.lam = 0.0
        else:
            s = self.stretch
            # max of g''/g' is about (1-s)/(lam sqrt s); keep hxi * that <= log(ratio)
            c = 1.02 * (1.0 - s) / (math.sqrt(s) * math.log(MAX_STRETCH_RATIO))
            m = self.n1 - 1
            denom = m - (1.0 - s) * c * math.sqrt(math.pi) / 2.0 * math.erf(m / c)
            if denom <= 0:
                raise DomainError("too few x1 nodes for the requested stretching")
            self.hxi = self.x1max / denom
            self.lam = c * self.hxi
        self.xi = np.arange(self.n1) * self.hxi
        x1 = self.g(self.xi)
        x1[0] = 0.0
        x1[-1] = self.x1max
        self.x1 = x1
        self.x2 = self.x2min + np.arange(self.n2) * self.h2

    # x1 <-> xi map
    def g(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.stretch is None:
            return xi.copy()
        s, lam = self.stretch, self.lam
        return xi - (1.0 - s) * lam * math.sqrt(math.pi) / 2.0 * erf(xi / lam)

    def dg(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.stretch is None:
            return np.ones_like(xi)
        return 1.0 - (1.0 - self.stretch) * np.exp(-(xi / self.lam) ** 2)

    def xi_of(self, x1):
        x1 = np.asarray(x1, dtype=float)
        if self.stretch is None:
            return x1.copy()
        # g is increasing and g' >= stretch, Newton from a safe start converges
        xi = x1.copy()
        for _ in range(60):
            step = (self.g(xi) - x1) / self.dg(xi)
            xi = xi - step
            if np.all(np.abs(step) <= 1e-15 * (1.0 + np.abs(xi))):
                break
        return xi

    def index_coords(self, x1, x2):
        p1 = _snap(self.xi_of(x1) / self.hxi)
        p2 = _snap((np.asarray(x2, dtype=float) - self.x2min) / self.h2)
        return p1, p2

    def h1_at(self, x1):
        return self.dg(self.xi_of(x1)) * self.hxi

    @property
    def h1_min(self) -> float:
        return float(self.x1[1] - self.x1[0])

    @property
    def h1_max(self) -> float:
        return float(np.max(np.diff(self.x1)))

    @property
    def shape(self):
        return (self.n1, self.n2)

    def mesh(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def weights1(self):
        """Quadrature weights along x1 on [0, X1max]."""
        w = np.ones(self.n1)
        if self.end_weights == "gregory":
            w[:3] = GREGORY
            w[-3:] = GREGORY[::-1]
        else:
            w[0] = w[-1] = 0.5
        return w * self.dg(self.xi) * self.hxi

    def cell_weights(self):
        """Tensor weights for integrals over the box (x2 rows vanish at the ends)."""
        return np.outer(self.weights1(), np.full(self.n2, self.h2))

    def contains(self, x1, x2, tol=1e-12):
        x1 = np.asarray(x1)
        x2 = np.asarray(x2)
        return ((x1 >= -tol) & (x1 <= self.x1max * (1 + tol) + tol)
                & (x2 >= self.x2min - tol) & (x2 <= self.x2max + tol))

    def to_dict(self):
        return {"n1": self.n1, "n2": self.n2, "x1max": self.x1max, "x2min": self.x2min,
                "x2max": self.x2max, "stretch": self.stretch, "end_weights": self.end_weights}

    @classmethod
    def from_dict(cls, d):
        return cls(d["n1"], d["n2"], d["x1max"], d["x2min"], d["x2max"],
                   stretch=d.get("stretch"), end_weights=d.get("end_weights", "gregory"))

    @classmethod
    def for_support(cls, radius: float, n1: int, n2: int, margin: float = 0.25, **kw):
        """Box covering B(0; radius * (1 + margin)) intersected with the half-plane."""
        ext = radius * (1.0 + margin)
        return cls(n1, n2, ext, -ext, ext, **kw)

    def same_as(self, other: "Grid") -> bool:
        return self.to_dict() == other.to_dict()


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray
    support_radius: float
    analytic_source: Optional[Callable] = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise DomainError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, f: Callable, support_radius: float,
                      keep_source: bool = True, **meta):
        X1, X2 = grid.mesh()
        vals = np.asarray(f(X1, X2), dtype=float)
        vals = np.where(X1 ** 2 + X2 ** 2 > support_radius ** 2, 0.0, vals)
        return cls(grid, vals, float(support_radius), f if keep_source else None, dict(meta))

    @classmethod
    def zeros(cls, grid: Grid, support_radius: float = 1.0):
        return cls(grid, np.zeros(grid.shape), support_radius)

    def with_values(self, values, support_radius=None, keep_source=False):
        return ScalarField(self.grid, values,
                           self.support_radius if support_radius is None else support_radius,
                           self.analytic_source if keep_source else None, dict(self.meta))

    def scaled(self, c: float):
        src = self.analytic_source
        f = None if src is None else (lambda x1, x2: c * src(x1, x2))
        return ScalarField(self.grid, c * self.values, self.support_radius, f, dict(self.meta))

    # evaluation
    def eval(self, p) -> float:
        x1, x2 = p
        return float(self.eval_many(np.array([x1]), np.array([x2]))[0])

    def eval_many(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        shape = np.broadcast(x1, x2).shape
        x1, x2 = np.broadcast_to(x1, shape).ravel(), np.broadcast_to(x2, shape).ravel()
        inside = self.grid.contains(x1, x2)
        out = np.empty(x1.shape)
        if np.any(inside):
            p1, p2 = self.grid.index_coords(x1[inside], x2[inside])
            out[inside] = kernels.interp_cubic(self.values, p1, p2)
        if not np.all(inside):
            if self.analytic_source is None:
                bad = np.flatnonzero(~inside)[0]
                raise DomainError(f"point ({x1[bad]}, {x2[bad]}) outside the grid box")
            out[~inside] = self.analytic_source(x1[~inside], x2[~inside])
        return out.reshape(shape)

    def eval_support(self, x1, x2, npts: int = 4):
        """Interpolate, treating everything outside the box as zero (quadrature use)."""
        x1 = np.asarray(x1, dtype=float).ravel()
        x2 = np.asarray(x2, dtype=float).ravel()
        p1, p2 = self.grid.index_coords(np.maximum(x1, 0.0), x2)
        return kernels.interp_lagrange(self.values, p1, p2, npts, zero_outside=True)

    def exact(self, x1, x2):
        if self.analytic_source is None:
            raise DomainError("no analytic source attached")
        return np.asarray(self.analytic_source(np.asarray(x1, float), np.asarray(x2, float)),
                          dtype=float)

    def trace(self):
        """Boundary row theta(0, x2)."""
        return self.values[0].copy()

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.grid.cell_weights() * self.values ** 2)))

    def support_violation(self, tol: float = 1e-9) -> float:
        """Largest |value| outside support_radius (0 when the invariant holds)."""
        X1, X2 = self.grid.mesh()
        out = X1 ** 2 + X2 ** 2 > self.support_radius ** 2
        return float(np.max(np.abs(self.values[out]), initial=0.0))

    def measured_support(self, tol: float = 1e-10) -> float:
        X1, X2 = self.grid.mesh()
        mask = np.abs(self.values) > tol
        return float(np.sqrt(np.max(X1[mask] ** 2 + X2[mask] ** 2))) if mask.any() else 0.0

    # serialization
    def to_csv(self, path, alpha=None):
        path = Path(path)
        X1, X2 = self.grid.mesh()
        data = np.column_stack([X1.ravel(), X2.ravel(), self.values.ravel()])
        np.savetxt(path, data, delimiter=",", header="x1,x2,value", comments="", fmt="%.17g")
        meta = {"grid": self.grid.to_dict(), "h1_min": self.grid.h1_min, "h2": self.grid.h2,
                "support_radius": self.support_radius, "alpha": alpha, **self.meta}
        path.with_suffix(".meta.yaml").write_text(yaml.safe_dump(meta, sort_keys=True))
        return path

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        meta = yaml.safe_load(path.with_suffix(".meta.yaml").read_text())
        grid = Grid.from_dict(meta.pop("grid"))
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        vals = data[:, 2].reshape(grid.shape)
        r = meta.pop("support_radius")
        for k in ("h1_min", "h2", "alpha"):
            meta.pop(k, None)
        return cls(grid, vals, r, None, meta)


class EvenOddExtension:
    """Full-plane extension of a half-plane field, odd or even in x1."""

    def __init__(self, base: ScalarField, parity: str = "odd"):
        if parity not in ("odd", "even"):
            raise DomainError("parity must be 'odd' or 'even'")
        self.base = base
        self.parity = parity

    def eval_many(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        v = self.base.eval_many(np.abs(x1), x2)
        if self.parity == "odd":
            v = np.where(x1 < 0, -v, v)
        return v

    def eval(self, p):
        return float(self.eval_many(np.array([p[0]]), np.array([p[1]]))[0])


def finite_diff_gradient(f: ScalarField, x1, x2):
    """(d1 f, d2 f) by finite differences of the interpolant.

    Fourth-order centred in the interior, second-order one-sided in x1
    within two cells of the wall (and of the far edge).
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    x1, x2 = np.broadcast_arrays(x1, x2)
    g = f.grid
    h1 = g.h1_at(x1)
    h2 = g.h2
    ev = f.eval_many
    d2 = (ev(x1, x2 - 2 * h2) - 8 * ev(x1, x2 - h2) + 8 * ev(x1, x2 + h2)
          - ev(x1, x2 + 2 * h2)) / (12 * h2)
    d1 = np.empty_like(x1)
    lo = x1 < 2 * h1
    hi = (~lo) & (x1 > g.x1max - 2 * h1)
    mid = ~(lo | hi)
    if lo.any():
        a, b, h = x1[lo], x2[lo], h1[lo]
        d1[lo] = (-3 * ev(a, b) + 4 * ev(a + h, b) - ev(a + 2 * h, b)) / (2 * h)
    if hi.any():
        a, b, h = x1[hi], x2[hi], h1[hi]
        d1[hi] = (3 * ev(a, b) - 4 * ev(a - h, b) + ev(a - 2 * h, b)) / (2 * h)
    if mid.any():
        a, b, h = x1[mid], x2[mid], h1[mid]
        d1[mid] = (ev(a - 2 * h, b) - 8 * ev(a - h, b) + 8 * ev(a + h, b)
                   - ev(a + 2 * h, b)) / (12 * h)
    return d1, d2


def node_gradient(f: ScalarField):
    """Gradient at every grid node (same stencils as finite_diff_gradient)."""
    X1, X2 = f.grid.mesh()
    inner = (X2 >= f.grid.x2min + 2 * f.grid.h2) & (X2 <= f.grid.x2max - 2 * f.grid.h2)
    d1 = np.zeros(f.grid.shape)
    d2 = np.zeros(f.grid.shape)
    a, b = finite_diff_gradient(f, X1[inner], X2[inner])
    d1[inner] = a
    d2[inner] = b
    return d1, d2
