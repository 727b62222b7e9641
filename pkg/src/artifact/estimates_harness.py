"""Empirical checks of the velocity estimates and the a priori inequalities.

The estimates only assert that some constant exists, so each checker
reports ratios lhs/rhs, the largest one as the fitted constant, and a
log-log slope where a rate is claimed. Gates act on those numbers.
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from . import biot_savart as bs
from .errors import DomainError, FitRefused
from .geometry_field import Grid, ScalarField, node_gradient
from .norms import sample_pairs, weighted_parts
from .presets import bump, plateau

MIN_HISTORY = 10
U2_LADDER = tuple(2.0 ** -k for k in range(3, 11))
LIP_LADDER = (0.1, 0.2, 0.4, 0.8)


class EstimateId(str, enum.Enum):
    U1_REG = "U1_REG"
    DU2_ASYMP = "DU2_ASYMP"
    U2_D2_BOUND = "U2_D2_BOUND"
    L2_V2 = "L2_V2"
    L2_WEIGHTED_V1 = "L2_WEIGHTED_V1"
    FARFIELD_LIP = "FARFIELD_LIP"
    ENERGY_2THT = "ENERGY_2THT"


@dataclass(frozen=True)
class Sample:
    descriptor: str
    lhs: float
    rhs: float
    ratio: float


def _sample(desc, lhs, rhs) -> Sample:
    lhs, rhs = float(lhs), float(rhs)
    if rhs > 0:
        ratio = lhs / rhs
    else:
        ratio = 0.0 if lhs == 0 else math.inf
    return Sample(desc, lhs, rhs, ratio)


@dataclass
class EstimateReport:
    estimate_id: EstimateId
    samples: List[Sample]
    fitted_constant: float
    fitted_slope: Optional[float] = None
    slope_stderr: Optional[float] = None
    gate: float = math.inf
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict)
    companion: Optional["EstimateReport"] = None

    @property
    def ratios(self):
        return np.array([s.ratio for s in self.samples])

    @property
    def passed(self) -> bool:
        r = self.ratios
        return bool(np.all(np.isfinite(r)) and np.all(r <= self.gate))

    def to_csv(self, path):
        """One row per sample plus a summary row (lhs = constant, rhs = slope, ratio = pass)."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["estimate_id", "descriptor", "lhs", "rhs", "ratio"])
            for s in self.samples:
                w.writerow([self.estimate_id.value, s.descriptor, repr(s.lhs), repr(s.rhs),
                            repr(s.ratio)])
            slope = self.fitted_slope if self.fitted_slope is not None else float("nan")
            w.writerow([self.estimate_id.value, "summary", repr(self.fitted_constant),
                        repr(slope), repr(1.0 if self.passed else 0.0)])
        return path


def _report(eid, samples, gate=math.inf, **kw) -> EstimateReport:
    c = max((s.ratio for s in samples), default=0.0)
    return EstimateReport(eid, list(samples), float(c), gate=gate, **kw)


def loglog_fit(x, y):
    """Least-squares slope of log y against log x; (slope, intercept, stderr)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 3:
        raise FitRefused("need at least 3 positive samples for a log-log fit")
    r = stats.linregress(np.log(x[ok]), np.log(y[ok]))
    return float(r.slope), float(r.intercept), float(r.stderr)


def _pmap(fn, items, workers: int = 1):
    # ordered reduction: results come back in input order whatever the pool does
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# synthetic families

def random_member(grid: Grid, seed: int, k: int) -> ScalarField:
    """Member k of the seeded family; member k does not depend on the family size.

    Even members: sums of 1-4 bumps with random centres, widths and signs,
    some sitting on the wall (nonzero trace). Odd members: a random sign
    pattern smoothed once and windowed into B(0; 1).
    """
    rng = np.random.default_rng([seed, k])
    X1, X2 = grid.mesh()
    if k % 2 == 0:
        vals = np.zeros(grid.shape)
        for _ in range(int(rng.integers(1, 5))):
            on_wall = rng.random() < 0.5
            c1 = 0.0 if on_wall else rng.uniform(0.05, 0.6)
            c2 = rng.uniform(-0.5, 0.5)
            rmax = 1.0 - math.hypot(c1, c2)
            r = rng.uniform(0.3, 1.0) * min(rmax, 0.45)
            vals += bump(X1, X2, (c1, c2), r, rng.uniform(-1.0, 1.0))
    else:
        raw = rng.choice([-1.0, 1.0], size=grid.shape)
        sm = raw.copy()
        sm[1:-1, 1:-1] = sum(raw[1 + a:raw.shape[0] - 1 + a, 1 + b:raw.shape[1] - 1 + b]
                             for a in (-1, 0, 1) for b in (-1, 0, 1)) / 9.0
        vals = sm * plateau(X1, X2, r0=0.4, r1=0.95)
    return ScalarField(grid, vals, 1.0, meta={"family_seed": seed, "member": k})


def random_family(grid: Grid, n: int, seed: int = 0) -> List[ScalarField]:
    return [random_member(grid, seed, k) for k in range(n)]


def bump_family(grid: Grid, n: int = 10) -> List[ScalarField]:
    """Bumps whose boundary trace varies from none to full height."""
    out = []
    for k in range(n):
        c1 = 0.5 * k / max(n - 1, 1)
        f = partial(bump, c=(c1, 0.1 * (k % 3) - 0.1), r=0.45)
        out.append(ScalarField.from_function(grid, f, 1.0, member=k))
    return out


# U1_REG

def _u1_regularity_one(theta: ScalarField, alpha: float, q, pair_budget: int, seed: int):
    u1, _ = bs.velocity_grid(theta, alpha, q)
    f = theta.with_values(u1)
    g1, g2 = node_gradient(f)
    X1, X2 = theta.grid.mesh()
    inner = np.zeros(theta.grid.shape, bool)
    inner[:, 2:-2] = True
    ia, ib = sample_pairs(theta.grid, pair_budget, seed)
    keep = inner.ravel()[ia] & inner.ravel()[ib]
    ia, ib = ia[keep], ib[keep]
    d = np.hypot(X1.ravel()[ia] - X1.ravel()[ib], X2.ravel()[ia] - X2.ravel()[ib])
    dv = np.hypot(g1.ravel()[ia] - g1.ravel()[ib], g2.ravel()[ia] - g2.ravel()[ib])
    ok = d > 0
    semi = float(np.max(dv[ok] / d[ok] ** (1.0 - alpha), initial=0.0))
    wd1, d2 = weighted_parts(theta, alpha)
    return semi, wd1 + d2


def verify_u1_regularity(thetas: Sequence[ScalarField], alpha: float, q=None, *,
                         pair_budget: int = 10_000, seed: int = 0, gate: float = math.inf,
                         workers: int = 1) -> EstimateReport:
    """[grad u1]_{C^(1-alpha)} against ||x1^(1-alpha) d1 theta|| + ||d2 theta||."""
    fn = partial(_u1_regularity_one, alpha=alpha, q=q, pair_budget=pair_budget, seed=seed)
    res = _pmap(fn, list(thetas), workers)
    samples = [_sample(f"member={k}", lhs, rhs) for k, (lhs, rhs) in enumerate(res)]
    return _report(EstimateId.U1_REG, samples, gate, seed=seed)


def d1_u2_regular(theta: ScalarField, points, alpha: float, q=None, rel_step: float = 1e-2):
    """d1 (u2 - U2) at points by centred differences of the u2_regular channel.

    u2 and U2 both carry the x1^(-alpha) boundary singularity in their x1
    derivative; differencing the subtracted channel avoids the cancellation
    of two large derivatives, at the price of quadrature noise / step.
    """
    out = []
    for x1, x2 in points:
        h = rel_step * x1
        a = bs.velocity(theta, (x1 + h, x2), alpha, q).u2_regular
        b = bs.velocity(theta, (x1 - h, x2), alpha, q).u2_regular
        out.append((a - b) / (2 * h))
    return np.array(out)


# DU2_ASYMP and U2_D2_BOUND

def _diff4(fun, x, h):
    return (fun(x - 2 * h) - 8 * fun(x - h) + 8 * fun(x + h) - fun(x + 2 * h)) / (12 * h)


def trace_d2_sup(theta: ScalarField, use_analytic: bool, n: int = 4001) -> float:
    tr = bs.trace_function(theta, use_analytic)
    r = theta.support_radius
    y = np.linspace(-r, r, n)
    return float(np.max(np.abs(np.diff(tr(y)) / np.diff(y))))


def verify_dU2_asymptotic(theta: ScalarField, alpha: float, x1_ladder=U2_LADDER, x2: float = 0.0,
                          *, use_analytic: bool = True, tol: float = 1e-12, rel_step: float = 1e-3,
                          check_d2: bool = True, gate: float = math.inf,
                          breakpoints=()) -> EstimateReport:
    """|d1 U2 - c_alpha x1^(-alpha) theta(0, x2)| against x1^(1-alpha) ||d2 theta||.

    d1 U2 comes from 4th-order centred differences of boundary_U2 with step
    rel_step * x1; the slope of log lhs against log x1 is reported. The
    companion report bounds d2 U2 by ||d2 theta|| on the same ladder.
    """
    tr = bs.trace_function(theta, use_analytic)
    t0 = float(tr(np.array([x2]))[0])
    if t0 == 0.0:
        raise DomainError(f"theta(0, {x2}) = 0: probe rejected")
    ca = bs.c_alpha(alpha)
    d2sup = trace_d2_sup(theta, use_analytic)
    pts = tuple(breakpoints)

    def U(x1, y2=x2):
        return bs.boundary_U2(theta, (x1, y2), alpha, tol, use_analytic, pts)

    samples, lhs_all, d2_samples = [], [], []
    xs = np.asarray(x1_ladder, float)
    for x1 in xs:
        h = rel_step * x1
        d1 = _diff4(U, x1, h)
        lhs = abs(d1 - ca * x1 ** -alpha * t0)
        lhs_all.append(lhs)
        samples.append(_sample(f"x1={x1!r}", lhs, x1 ** (1 - alpha) * d2sup))
        if check_d2:
            d2u = _diff4(lambda y: U(x1, y), x2, h)
            d2_samples.append(_sample(f"x1={x1!r}", abs(d2u), d2sup))
    slope, icpt, err = loglog_fit(xs, lhs_all)
    rep = _report(EstimateId.DU2_ASYMP, samples, gate, fitted_slope=slope, slope_stderr=err)
    rep.extra.update(alpha=alpha, x2=x2, trace=t0, c_alpha=ca, prefactor=math.exp(icpt))
    if check_d2:
        rep.companion = _report(EstimateId.U2_D2_BOUND, d2_samples, gate)
    return rep


# L2 bounds

def _l2_one(g: ScalarField, alpha: float, q):
    u1, u2 = bs.velocity_grid(g, alpha, q)
    w = g.grid.cell_weights()
    x1 = g.grid.x1
    gn = math.sqrt(float(np.sum(w * g.values ** 2)))
    v2 = math.sqrt(float(np.sum(w * u2 ** 2)))
    # weighted integrand on rows x1 >= h1/2 only; the wall row carries x1^(alpha-1) = inf
    wv1 = math.sqrt(float(np.sum(w[1:] * (x1[1:, None] ** (alpha - 1.0) * u1[1:]) ** 2)))
    return gn, v2, wv1


def verify_L2_bounds(gs: Sequence[ScalarField], alpha: float, q=None, *, seed=None,
                     gate: float = math.inf, workers: int = 1) -> EstimateReport:
    """||v2||_2 / ||g||_2; the companion report holds ||x1^(alpha-1) v1||_2 / ||g||_2."""
    res = _pmap(partial(_l2_one, alpha=alpha, q=q), list(gs), workers)
    s2 = [_sample(f"member={k}", v2, gn) for k, (gn, v2, _) in enumerate(res)]
    s1 = [_sample(f"member={k}", wv1, gn) for k, (gn, _, wv1) in enumerate(res)]
    rep = _report(EstimateId.L2_V2, s2, gate, seed=seed)
    rep.companion = _report(EstimateId.L2_WEIGHTED_V1, s1, gate, seed=seed)
    return rep


# far-field Lipschitz

def lipschitz_above(grid: Grid, u1, u2, L: float, pair_budget: int = 10_000, seed: int = 0):
    """max |u(x) - u(x')| / |x - x'| over sampled node pairs with x1, x1' >= L."""
    X1, X2 = grid.mesh()
    ia, ib = sample_pairs(grid, pair_budget, seed)
    x1f = X1.ravel()
    keep = (x1f[ia] >= L) & (x1f[ib] >= L)
    ia, ib = ia[keep], ib[keep]
    d = np.hypot(x1f[ia] - x1f[ib], X2.ravel()[ia] - X2.ravel()[ib])
    dv = np.hypot(u1.ravel()[ia] - u1.ravel()[ib], u2.ravel()[ia] - u2.ravel()[ib])
    ok = d > 0
    return float(np.max(dv[ok] / d[ok], initial=0.0))


def verify_farfield_lipschitz(theta: ScalarField, alpha: float, L_ladder=LIP_LADDER, q=None, *,
                              pair_budget: int = 10_000, seed: int = 0,
                              gate: float = math.inf) -> EstimateReport:
    """Lip(u; x1 >= L) against L^(-alpha) (||x1^(1-alpha) d1 theta|| + ||d2 theta||)."""
    u1, u2 = bs.velocity_grid(theta, alpha, q)
    wd1, d2 = weighted_parts(theta, alpha)
    Ls = np.asarray(L_ladder, float)
    lips = [lipschitz_above(theta.grid, u1, u2, L, pair_budget, seed) for L in Ls]
    samples = [_sample(f"L={L!r}", lip, L ** -alpha * (wd1 + d2)) for L, lip in zip(Ls, lips)]
    slope = err = None
    if any(v > 0 for v in lips):
        slope, _, err = loglog_fit(Ls, lips)
    return _report(EstimateId.FARFIELD_LIP, samples, gate, fitted_slope=slope,
                   slope_stderr=err, seed=seed)


# a priori inequalities along a run

def verify_energy_inequalities(states, alpha: float, beta: float,
                               gate: float = math.inf) -> EstimateReport:
    """Discrete d/dt of recorded norms against the right-hand-side products.

    2tht:   d/dt ||d2 theta|| <~ (||x1^(1-alpha) d1 theta|| + ||d2 theta||) ||d2 theta||
    energy: d/dt ||theta||_X  <~ ||theta||_X^2   (X at beta)

    Only growth is constrained, so lhs = max(d/dt, 0). A reversed sample
    (lhs > gate * rhs) is listed in extra["reversed"].
    """
    hist = [s for s in states if s.monitor is not None and s.norm_beta is not None]
    if len(hist) < MIN_HISTORY:
        raise FitRefused(f"need at least {MIN_HISTORY} diagnostic samples, got {len(hist)}")
    t = np.array([s.t for s in hist])
    d2 = np.array([s.monitor.d2_sup for s in hist])
    wd1 = np.array([s.monitor.wd1_alpha for s in hist])
    xn = np.array([s.norm_beta.x_beta_norm for s in hist])
    dd2 = np.gradient(d2, t)
    dxn = np.gradient(xn, t)
    samples = [_sample(f"2tht t={tk!r}", max(a, 0.0), (w + b) * b)
               for tk, a, w, b in zip(t, dd2, wd1, d2)]
    samples += [_sample(f"energy t={tk!r}", max(a, 0.0), n * n) for tk, a, n in zip(t, dxn, xn)]
    rep = _report(EstimateId.ENERGY_2THT, samples, gate)
    rep.extra["reversed"] = [s.descriptor for s in samples if s.ratio > gate]
    rep.extra["alpha"], rep.extra["beta"] = alpha, beta
    return rep


def write_reports(out_dir, reports: Sequence[EstimateReport]):
    """One CSV per estimate id (companions included); returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in reports:
        while r is not None:
            paths.append(r.to_csv(out_dir / f"{r.estimate_id.value.lower()}.csv"))
            r = r.companion
    return paths
