"""Reflected Biot-Savart law on the right half-plane.

    u(x) = int_{x1>0} [K(x - y) - K(x - y~)] theta(y) dy,   K(z) = z_perp / |z|^(2+alpha)

with z_perp = (-z2, z1) and y~ = (-y1, y2). Equivalently u = K * theta_bar with
theta_bar the odd extension of theta in x1.

Numerics: the kernel is split with a smooth radial partition of unity
psi(|x - y| / rho). The smooth remainder K (1 - psi) is summed directly over
grid sources (compiled kernel); the singular part K psi is integrated in
polar coordinates around x with graded radial nodes, splitting rays where
they cross the wall so the jump of theta_bar is never smeared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from . import kernels
from ._fallback import lagrange4, stencil_start
from .errors import DivergentIntegralError, DomainError, UnsupportedModeError
from .geometry_field import Grid, ScalarField


@dataclass(frozen=True)
class Alpha:
    value: float
    mode: str = "standard"

    def __post_init__(self):
        if not (0.0 < self.value <= 1.0):
            raise DomainError(f"alpha must lie in (0, 1], got {self.value}")
        want = "log_lipschitz" if self.value == 1.0 else "standard"
        if self.mode != want:
            raise UnsupportedModeError(f"alpha={self.value} requires mode {want!r}")

    @classmethod
    def of(cls, a, log_lipschitz: bool = False) -> "Alpha":
        if isinstance(a, Alpha):
            return a
        a = float(a)
        if a == 1.0:
            if not log_lipschitz:
                raise UnsupportedModeError(
                    "alpha = 1 is experimental; set quadrature.log_lipschitz: true")
            return cls(a, "log_lipschitz")
        return cls(a, "standard")


@dataclass(frozen=True)
class QuadratureConfig:
    inner_radius: float = 12.0  # rho in units of the coarsest source spacing
    polar_rings: int = 10       # Gauss nodes per radial piece
    polar_sectors: int = 16     # Gauss nodes per angular panel
    far_tolerance: float = 1e-10
    log_lipschitz: bool = False

    def __post_init__(self):
        if self.inner_radius < 2:
            raise DomainError("inner_radius must be >= 2 source cells")
        if self.polar_rings < 8 or self.polar_sectors < 8:
            raise DomainError("polar_rings and polar_sectors must be >= 8")

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "QuadratureConfig":
        return cls(**(d or {}))

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class VelocitySample:
    u1: float
    u2_regular: float
    U2: float

    @property
    def u2(self) -> float:
        return self.u2_regular + self.U2


class VelocityField:
    """Velocity at a list of targets, U2 carried separately."""

    def __init__(self, targets, u1, u2, U2=None):
        self.targets = np.asarray(targets, dtype=float).reshape(-1, 2)
        self.u1 = np.asarray(u1, dtype=float)
        self.u2 = np.asarray(u2, dtype=float)
        self.U2 = None if U2 is None else np.asarray(U2, dtype=float)

    @property
    def u2_regular(self):
        return None if self.U2 is None else self.u2 - self.U2

    def __len__(self):
        return len(self.u1)

    def sup(self) -> float:
        return float(np.max(np.hypot(self.u1, self.u2), initial=0.0))

    def to_csv(self, path):
        U2 = self.U2 if self.U2 is not None else np.full(len(self), np.nan)
        data = np.column_stack([self.targets, self.u1, self.u2, U2])
        np.savetxt(path, data, delimiter=",", header="x1,x2,u1,u2,U2", comments="",
                   fmt="%.17g")
        return path


# constants and 1D boundary integrals

def _check_alpha(alpha):
    a = alpha.value if isinstance(alpha, Alpha) else float(alpha)
    if not (0.0 < a <= 1.0):
        raise DomainError(f"alpha must lie in (0, 1], got {a}")
    return a


def c_alpha(alpha) -> float:
    """2 int_R (1 + z^2)^-(alpha/2 + 1) dz by adaptive quadrature."""
    a = _check_alpha(alpha)
    val, _ = integrate.quad(lambda z: (1.0 + z * z) ** (-(a / 2 + 1)), 0.0, np.inf,
                            epsabs=1e-13, epsrel=1e-13, limit=200)
    return 4.0 * val


def c_alpha_closed(alpha) -> float:
    """Beta-function form 2 sqrt(pi) Gamma((a+1)/2) / Gamma(a/2 + 1)."""
    a = _check_alpha(alpha)
    return 2.0 * math.sqrt(math.pi) * gamma_fn((a + 1) / 2) / gamma_fn(a / 2 + 1)


def trace_function(theta: ScalarField, use_analytic: bool = False):
    """theta(0, .) as a callable: cubic interpolation of the wall row."""
    if use_analytic:
        src = theta.analytic_source
        if src is None:
            raise DomainError("no analytic source attached")
        return lambda y2: np.asarray(src(np.zeros_like(np.asarray(y2, float)), y2), float)
    row = theta.values[:1]
    grid = theta.grid

    def tr(y2):
        y2 = np.atleast_1d(np.asarray(y2, dtype=float))
        p2 = (y2 - grid.x2min) / grid.h2
        vals = np.vstack([row] * 4)
        return kernels.interp_cubic(vals, np.zeros_like(p2), p2, zero_outside=True)

    return tr


def _trace_window(theta: ScalarField, use_analytic: bool):
    if use_analytic:
        r = theta.support_radius
        return -r, r
    nz = np.flatnonzero(theta.values[0] != 0.0)
    if nz.size == 0:
        return None
    g = theta.grid
    lo = max(nz[0] - 2, 0)
    hi = min(nz[-1] + 2, g.n2 - 1)
    return g.x2[lo], g.x2[hi]


def _trace_breaks(theta: ScalarField, use_analytic: bool):
    """Grid nodes where the interpolated trace has derivative jumps."""
    return () if use_analytic else tuple(theta.grid.x2)


def _quad_pieces(fun, lo, hi, pts, tol):
    pts = sorted(p for p in pts if lo < p < hi)
    edges = [lo, *pts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(fun, a, b, epsabs=tol, epsrel=1e-12, limit=400)
        total += v
    return total


def boundary_U2(theta: ScalarField, x, alpha, tol: float = 1e-12,
                use_analytic: bool = False, extra_points=()) -> float:
    """U2(x) = -(2/alpha) int theta(0, y2) |x - (0, y2)|^-alpha dy2."""
    a = _check_alpha(alpha)
    x1, x2 = float(x[0]), float(x[1])
    if x1 < 0:
        raise DomainError("x1 must be >= 0")
    win = _trace_window(theta, use_analytic)
    if win is None:
        return 0.0
    tr = trace_function(theta, use_analytic)
    if x1 == 0.0:
        if a >= 1.0 and abs(float(tr(np.array([x2]))[0])) > 0.0:
            raise DivergentIntegralError("U2 diverges on the wall where theta(0, x2) != 0")
    fun = lambda y: float(tr(np.array([y]))[0]) * (x1 * x1 + (x2 - y) ** 2) ** (-a / 2)
    pts = [x2, *extra_points, *_trace_breaks(theta, use_analytic)]
    return -(2.0 / a) * _quad_pieces(fun, win[0], win[1], pts, tol)


def d1_boundary_U2(theta: ScalarField, x, alpha, tol: float = 1e-12,
                   use_analytic: bool = False, extra_points=()) -> float:
    """Closed derivative 2 x1 int theta(0, y2) |x - (0, y2)|^-(alpha+2) dy2."""
    a = _check_alpha(alpha)
    x1, x2 = float(x[0]), float(x[1])
    if x1 <= 0:
        raise DomainError("d1 U2 needs x1 > 0")
    win = _trace_window(theta, use_analytic)
    if win is None:
        return 0.0
    tr = trace_function(theta, use_analytic)
    fun = lambda y: float(tr(np.array([y]))[0]) * (x1 * x1 + (x2 - y) ** 2) ** (-a / 2 - 1)
    # points near x2 at scale x1 help the adaptive rule
    pts = [x2, x2 - x1, x2 + x1, x2 - 10 * x1, x2 + 10 * x1, *extra_points,
           *_trace_breaks(theta, use_analytic)]
    return 2.0 * x1 * _quad_pieces(fun, win[0], win[1], pts, tol)


# cutoff potential of the bounded-boundary lemma

PHI_INNER, PHI_OUTER = 16.0, 18.0


def phi_profile(x1, x2):
    """1 on B(0;16), 0 outside B(0;18), quintic smoothstep in |x|."""
    r = np.hypot(x1, x2)
    t = np.clip((r - PHI_INNER) / (PHI_OUTER - PHI_INNER), 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def f_cutoff(x, alpha, phi=phi_profile, tol: float = 1e-12) -> float:
    """f(x) = -(2/alpha) int |x - (0, z)|^-alpha phi(0, z) dz."""
    a = _check_alpha(alpha)
    x1, x2 = float(x[0]), float(x[1])
    if x1 < 0:
        raise DomainError("x1 must be >= 0")
    fun = lambda z: (x1 * x1 + (x2 - z) ** 2) ** (-a / 2) * float(phi(0.0, z))
    return -(2.0 / a) * _quad_pieces(fun, -PHI_OUTER, PHI_OUTER,
                                     [x2, -PHI_INNER, PHI_INNER], tol)


def c_alpha_at(x, alpha, phi=phi_profile, tol: float = 1e-12) -> float:
    """C_alpha(x) = 2 int (1 + z^2)^-(1 + alpha/2) phi(0, x2 + x1 z) dz."""
    a = _check_alpha(alpha)
    x1, x2 = float(x[0]), float(x[1])
    if x1 < 0:
        raise DomainError("x1 must be >= 0")
    if x1 == 0.0:
        return float(phi(0.0, x2)) * c_alpha(a)
    fun = lambda z: (1.0 + z * z) ** (-(1 + a / 2)) * float(phi(0.0, x2 + x1 * z))
    lo, hi = (-PHI_OUTER - x2) / x1, (PHI_OUTER - x2) / x1
    pts = [(-PHI_INNER - x2) / x1, (PHI_INNER - x2) / x1, 0.0]
    return 2.0 * _quad_pieces(fun, lo, hi, pts, tol)


# near-zone polar rule

def _psi(r, rho):
    """Near-zone cutoff: 1 on [0, rho/2], 0 beyond rho, smooth in between."""
    s = np.asarray(r, float) / rho
    out = np.zeros_like(s)
    out[s <= 0.5] = 1.0
    mid = (s > 0.5) & (s < 1.0)
    t = 2.0 * s[mid] - 1.0
    a = np.exp(-1.0 / t)
    b = np.exp(-1.0 / (1.0 - t))
    out[mid] = b / (a + b)
    return out


@lru_cache(maxsize=64)
def _gauss(n):
    t, w = np.polynomial.legendre.leggauss(n)
    return t, w


def _panel_dirs(lo, hi, n, mirror=False):
    """Gauss-Legendre directions on the angular panel [lo, hi] (radians)."""
    t, w = _gauss(n)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    ang = mid + half * t
    return np.cos(ang), np.sin(ang), w * half


def _angular_rule(x1, rho, n):
    """Direction cosines, sines and angular weights for a target at height x1."""
    if x1 >= rho:
        m = 4 * n
        ang = 2 * np.pi * (np.arange(m) + 0.5) / m
        return np.cos(ang), np.sin(ang), np.full(m, 2 * np.pi / m)
    phi1 = math.acos(-x1 / rho)
    pieces = []
    # rays that never meet the wall inside rho, symmetric about the x1 axis
    pieces.append(_panel_dirs(-phi1, phi1, 2 * n))
    if 2 * x1 < rho:
        phi2 = math.acos(-2 * x1 / rho)
        if phi2 > phi1:
            c, s, w = _panel_dirs(phi1, phi2, n)
            pieces.append((c, s, w))
            pieces.append((c[::-1], -s[::-1], w[::-1]))
        # panel around pi, built by point reflection of a centred rule
        half = math.pi - phi2
        c, s, w = _panel_dirs(-half, half, 2 * n)
        pieces.append((-c, -s, w))
    else:
        half = math.pi - phi1
        c, s, w = _panel_dirs(-half, half, 2 * n)
        pieces.append((-c, -s, w))
    c = np.concatenate([p[0] for p in pieces])
    s = np.concatenate([p[1] for p in pieces])
    w = np.concatenate([p[2] for p in pieces])
    return c, s, w


def _radial_rule(rc, rho, alpha, n):
    """Nodes/weights on four pieces of [0, rho] for each ray.

    Pieces: [0, b0] and [b0, rho/2] use s = r^(1-alpha) so the r^-alpha
    weight is absorbed; [rho/2, b2] and [b2, rho] are plain Gauss in r with
    the weight r^-alpha psi(r/rho) applied. Returns arrays shaped (rays, 4n)
    plus the odd-extension sign per node.
    """
    t, w = _gauss(n)
    p = 1.0 - alpha
    half = 0.5 * rho
    b0 = np.minimum(rc, half)
    b2 = np.maximum(half, np.minimum(rc, rho))
    nodes, weights, signs = [], [], []
    for a_r, b_r, sgn in ((np.zeros_like(rc), b0, 1.0), (b0, np.full_like(rc, half), -1.0)):
        sa, sb = a_r ** p, b_r ** p
        s = 0.5 * (sa + sb)[:, None] + 0.5 * (sb - sa)[:, None] * t
        r = s ** (1.0 / p)
        nodes.append(r)
        weights.append(0.5 * (sb - sa)[:, None] * w / p)
        signs.append(np.full(r.shape, sgn))
    for a_r, b_r, sgn in ((np.full_like(rc, half), b2, 1.0), (b2, np.full_like(rc, rho), -1.0)):
        r = 0.5 * (a_r + b_r)[:, None] + 0.5 * (b_r - a_r)[:, None] * t
        wr = 0.5 * (b_r - a_r)[:, None] * w * r ** (-alpha) * _psi(r, rho)
        nodes.append(r)
        weights.append(wr)
        signs.append(np.full(r.shape, sgn))
    return np.hstack(nodes), np.hstack(weights), np.hstack(signs)


def _radial_rule_log(rc, rho, n):
    """Plain Gauss pieces for the paired-ray rule used at alpha = 1."""
    t, w = _gauss(n)
    half = 0.5 * rho
    b0 = np.minimum(rc, half)
    b2 = np.maximum(half, np.minimum(rc, rho))
    edges = [(np.zeros_like(rc), b0), (b0, np.full_like(rc, half)),
             (np.full_like(rc, half), b2), (b2, np.full_like(rc, rho))]
    nodes, weights, after = [], [], []
    for k, (a_r, b_r) in enumerate(edges):
        r = 0.5 * (a_r + b_r)[:, None] + 0.5 * (b_r - a_r)[:, None] * t
        nodes.append(r)
        weights.append(0.5 * (b_r - a_r)[:, None] * w / r * _psi(r, rho))
        after.append(np.full(r.shape, k % 2 == 1))
    return np.hstack(nodes), np.hstack(weights), np.hstack(after)


@lru_cache(maxsize=256)
def polar_nodes(x1: float, rho: float, alpha: float, sectors: int, rings: int):
    """Near-zone rule around a target at height x1 (x2 offset 0).

    Returns (dy1, dy2, w1, w2): u_near = sum w * theta(|x1 + dy1|, x2 + dy2),
    with the odd-extension sign folded into the weights.
    """
    if alpha < 1.0:
        c, s, wa = _angular_rule(x1, rho, sectors)
        with np.errstate(divide="ignore"):
            rc = np.where(c < 0, x1 / np.where(c < 0, -c, 1.0), np.inf)
        r, wr, sg = _radial_rule(rc, rho, alpha, rings)
        wt = wa[:, None] * wr * sg
        dy1 = r * c[:, None]
        dy2 = r * s[:, None]
        w1 = wt * s[:, None]
        w2 = -wt * c[:, None]
    else:
        if x1 == 0.0:
            raise DivergentIntegralError("log-Lipschitz mode: velocity diverges on the wall")
        m = 2 * sectors
        ang = np.pi * (np.arange(m) + 0.5) / m
        c, s = np.cos(ang), np.sin(ang)
        wa = np.full(m, np.pi / m)
        rc = x1 / np.abs(c)
        r, wr, after = _radial_rule_log(rc, rho, rings)
        fwd_cross = (c < 0)[:, None]
        sg_f = np.where(after & fwd_cross, -1.0, 1.0)
        sg_b = np.where(after & ~fwd_cross, -1.0, 1.0)
        # forward node +r, backward node -r with opposite kernel sign
        wt_f = wa[:, None] * wr * sg_f
        wt_b = -wa[:, None] * wr * sg_b
        dy1 = np.hstack([r * c[:, None], -r * c[:, None]])
        dy2 = np.hstack([r * s[:, None], -r * s[:, None]])
        wt = np.hstack([wt_f, wt_b])
        ss = np.hstack([np.broadcast_to(s[:, None], r.shape)] * 2)
        cc = np.hstack([np.broadcast_to(c[:, None], r.shape)] * 2)
        w1 = wt * ss
        w2 = -wt * cc
    out = tuple(np.ascontiguousarray(a.ravel()) for a in (dy1, dy2, w1, w2))
    for a in out:
        a.setflags(write=False)
    return out


# velocity evaluation

def _rho(grid: Grid, q: QuadratureConfig) -> float:
    return q.inner_radius * max(grid.h1_max, grid.h2)


def _sources(theta: ScalarField):
    g = theta.grid
    W = g.cell_weights() * theta.values
    X1, X2 = g.mesh()
    nz = W != 0.0
    return X1[nz], X2[nz], W[nz]


def _velocity_points(theta: ScalarField, x1, x2, alpha: Alpha, q: QuadratureConfig,
                     chunk: int = 64):
    """Total (u1, u2) at arbitrary points (pure map, fixed summation order)."""
    g = theta.grid
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if np.any(x1 < 0) or not np.all(g.contains(x1, x2)):
        raise DomainError("velocity target outside the grid box")
    rho = _rho(g, q)
    sy1, sy2, sq = _sources(theta)
    u1, u2 = kernels.far_sum(x1, x2, sy1, sy2, sq, alpha.value, rho)
    for s in range(0, len(x1), chunk):
        rules = [polar_nodes(float(a), rho, alpha.value, q.polar_sectors, q.polar_rings)
                 for a in x1[s:s + chunk]]
        py1 = np.concatenate([np.abs(a + r[0]) for a, r in zip(x1[s:s + chunk], rules)])
        py2 = np.concatenate([b + r[1] for b, r in zip(x2[s:s + chunk], rules)])
        vals = theta.eval_support(py1, py2)
        pos = 0
        for k, r in enumerate(rules):
            m = len(r[0])
            v = vals[pos:pos + m]
            u1[s + k] += np.dot(r[2], v)
            u2[s + k] += np.dot(r[3], v)
            pos += m
    return u1, u2


def velocity(theta: ScalarField, x, alpha, q: Optional[QuadratureConfig] = None,
             with_U2: bool = True) -> VelocitySample:
    q = q or QuadratureConfig()
    a = Alpha.of(alpha, q.log_lipschitz)
    u1, u2 = _velocity_points(theta, [x[0]], [x[1]], a, q)
    U2 = 0.0
    if with_U2 and not (a.mode == "log_lipschitz" and x[0] == 0):
        U2 = boundary_U2(theta, x, a.value, tol=q.far_tolerance)
    return VelocitySample(float(u1[0]), float(u2[0]) - U2, U2)


def velocity_field(theta: ScalarField, targets, alpha, q: Optional[QuadratureConfig] = None,
                   with_U2: bool = False) -> VelocityField:
    """Velocity at every target; identical to calling velocity() pointwise."""
    q = q or QuadratureConfig()
    a = Alpha.of(alpha, q.log_lipschitz)
    t = np.asarray(targets, dtype=float).reshape(-1, 2)
    u1, u2 = _velocity_points(theta, t[:, 0], t[:, 1], a, q)
    U2 = None
    if with_U2:
        U2 = np.array([boundary_U2(theta, p, a.value, tol=q.far_tolerance) for p in t])
    return VelocityField(t, u1, u2, U2)


def velocity_points(theta: ScalarField, x1, x2, alpha, q: Optional[QuadratureConfig] = None):
    """Batched total velocity (u1, u2) at arbitrary points."""
    q = q or QuadratureConfig()
    return _velocity_points(theta, x1, x2, Alpha.of(alpha, q.log_lipschitz), q)


class GridVelocityOperator:
    """Velocity at every grid node for fields on a fixed grid.

    Same discrete rule as velocity(), but translation invariance in x2 is
    used: per pair of rows (target i, source k) the far kernel and the near
    stencil form one 1D convolution, applied by FFT. Agrees with the
    pointwise path to rounding.
    """

    def __init__(self, grid: Grid, alpha, q: Optional[QuadratureConfig] = None):
        q = q or QuadratureConfig()
        self.alpha = Alpha.of(alpha, q.log_lipschitz)
        self.grid, self.q = grid, q
        n1, n2 = grid.shape
        self.L = L = 2 * n2
        a = self.alpha.value
        rho = _rho(grid, q)
        x1 = grid.x1
        w1 = grid.weights1() * grid.h2
        dj = np.arange(L)
        dj = np.where(dj < n2, dj, dj - L).astype(float)   # circular offsets
        d2 = dj * grid.h2
        dj_valid = np.abs(dj) <= n2 - 1
        K1 = np.zeros((n1, n1, L))
        K2 = np.zeros((n1, n1, L))
        pw = 1.0 + 0.5 * a
        for i in range(n1):
            d1 = (x1[i] - x1)[:, None]
            e1 = (x1[i] + x1)[:, None]
            r2 = d1 * d1 + d2[None, :] ** 2
            re2 = e1 * e1 + d2[None, :] ** 2
            k0 = _far_kernel(r2, rho, pw)
            k1 = _far_kernel(re2, rho, pw)
            K1[i] = -w1[:, None] * d2[None, :] * (k0 - k1)
            K2[i] = w1[:, None] * (d1 * k0 - e1 * k1)
            K1[i][:, ~dj_valid] = 0.0
            K2[i][:, ~dj_valid] = 0.0
            self._add_near(K1[i], K2[i], x1[i], rho)
        self.K1 = np.fft.rfft(K1, axis=2)
        self.K2 = np.fft.rfft(K2, axis=2)

    def _add_near(self, A1, A2, x1, rho):
        g, q = self.grid, self.q
        dy1, dy2, w1, w2 = polar_nodes(float(x1), rho, self.alpha.value,
                                       q.polar_sectors, q.polar_rings)
        y1 = np.abs(x1 + dy1)
        keep = y1 <= g.x1max
        y1, dy2, w1, w2 = y1[keep], dy2[keep], w1[keep], w2[keep]
        p1 = g.xi_of(y1) / g.hxi
        p2 = dy2 / g.h2
        s1 = stencil_start(p1, g.n1)
        s2 = np.floor(p2).astype(np.int64) - 1
        c1 = lagrange4(p1 - s1)
        c2 = lagrange4(p2 - s2)
        L = self.L
        idx, v1, v2 = [], [], []
        for a in range(4):
            for b in range(4):
                wt = c1[:, a] * c2[:, b]
                # theta[k, j + m] contributes to u[i, j]; stored at offset -m
                idx.append((s1 + a) * L + (-(s2 + b)) % L)
                v1.append(wt * w1)
                v2.append(wt * w2)
        idx = np.concatenate(idx)
        size = A1.size
        A1 += np.bincount(idx, np.concatenate(v1), minlength=size).reshape(A1.shape)
        A2 += np.bincount(idx, np.concatenate(v2), minlength=size).reshape(A2.shape)

    def __call__(self, values):
        values = np.asarray(values, dtype=float)
        n2 = self.grid.n2
        th = np.fft.rfft(values, n=self.L, axis=1)
        u1 = np.fft.irfft(np.einsum("ikf,kf->if", self.K1, th), n=self.L, axis=1)[:, :n2]
        u2 = np.fft.irfft(np.einsum("ikf,kf->if", self.K2, th), n=self.L, axis=1)[:, :n2]
        return u1, u2


def _far_kernel(r2, rho, pw):
    out = np.zeros_like(r2)
    pos = r2 > 0
    s = np.sqrt(r2[pos]) / rho
    chi = np.ones_like(s)
    chi[s <= 0.5] = 0.0
    mid = (s > 0.5) & (s < 1.0)
    t = 2 * s[mid] - 1
    ea, eb = np.exp(-1 / t), np.exp(-1 / (1 - t))
    chi[mid] = ea / (ea + eb)
    out[pos] = chi * np.exp(-pw * np.log(r2[pos]))
    return out


_OPS: dict = {}


def grid_operator(grid: Grid, alpha, q: Optional[QuadratureConfig] = None):
    q = q or QuadratureConfig()
    a = Alpha.of(alpha, q.log_lipschitz)
    key = (tuple(sorted(grid.to_dict().items(), key=lambda kv: kv[0])), a.value,
           tuple(sorted(q.to_dict().items())))
    op = _OPS.get(key)
    if op is None:
        if len(_OPS) > 6:
            _OPS.clear()
        op = _OPS[key] = GridVelocityOperator(grid, a, q)
    return op


def velocity_grid(theta: ScalarField, alpha, q: Optional[QuadratureConfig] = None):
    """(u1, u2) at every node of theta's grid."""
    return grid_operator(theta.grid, alpha, q)(theta.values)
