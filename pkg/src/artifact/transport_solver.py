"""Semi-Lagrangian evolution, Picard iteration and blow-up diagnostics.

theta(t + dt, x) = theta(t, foot(x)) with the foot traced backwards along
the current velocity, then clipped to the initial range. The velocity is
refreshed every step; the default predictor-corrector variant re-traces the
feet with a velocity that is linear in time over the step.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from . import biot_savart as bs
from .errors import CFLError, ConfigError, FitRefused, PicardAbort, SupportError
from .flow import GridVelocity, SnapshotVelocity, feet
from .geometry_field import ScalarField
from .norms import NormReport, holder_seminorm, weighted_parts, weighted_x_norm

log = logging.getLogger(__name__)

CFL = 0.5
EDGE_FRACTION = 0.95
INTERP_POINTS = 4
SUPPORT_TOL = 1e-8         # interpolation tails below this count as empty


@dataclass(frozen=True)
class BlowupMonitor:
    t: float
    d2_sup: float
    wd1_alpha: float
    eta_fit: Optional[float] = None


@dataclass
class SolverState:
    t: float
    theta: ScalarField
    velocity: tuple                 # (u1, u2) on the grid
    norm_beta: Optional[NormReport] = None
    norm_alpha: Optional[NormReport] = None
    monitor: Optional[BlowupMonitor] = None
    support: float = 0.0
    overshoot: float = 0.0

    @property
    def u_sup(self) -> float:
        return float(np.max(np.hypot(*self.velocity), initial=0.0))


@dataclass(frozen=True)
class PicardRecord:
    n: int
    l2_diff: float
    x_beta: float


def min_spacing(grid) -> float:
    return min(grid.h1_min, grid.h2)


def stable_dt(theta: ScalarField, alpha, q=None, cfl: float = CFL) -> float:
    u1, u2 = bs.velocity_grid(theta, alpha, q)
    umax = float(np.max(np.hypot(u1, u2)))
    return math.inf if umax == 0 else cfl * min_spacing(theta.grid) / umax


def check_cfl(grid, u_sup: float, dt: float):
    lim = CFL * min_spacing(grid)
    if dt * u_sup > lim * (1 + 1e-12):
        raise CFLError(f"dt={dt:.3e} violates dt*|u|_inf <= {CFL}*min(h); "
                       f"use dt <= {lim / u_sup:.3e}", suggested_dt=lim / u_sup)


def _check_support(theta: ScalarField, rel_tol: float = SUPPORT_TOL):
    g = theta.grid
    vals = np.abs(theta.values)
    tol = rel_tol * max(float(np.max(vals)), 1e-300)
    X1, X2 = g.mesh()
    edge = ((X1 > EDGE_FRACTION * g.x1max) | (X2 < g.x2min + (1 - EDGE_FRACTION) * (g.x2max - g.x2min))
            | (X2 > g.x2max - (1 - EDGE_FRACTION) * (g.x2max - g.x2min)))
    if np.any(vals[edge] > tol):
        raise SupportError("field support reached the grid edge; enlarge the box")


def advect(theta: ScalarField, provider, t: float, dt: float, lo: float, hi: float,
           npts: int = INTERP_POINTS):
    """One semi-Lagrangian step under `provider`; returns (values, overshoot)."""
    g = theta.grid
    X1, X2 = g.mesh()
    pts = np.column_stack([X1.ravel(), X2.ravel()])
    foot, _ = feet(provider, pts, t + dt, t, dt)
    raw = theta.eval_support(np.maximum(foot[:, 0], 0.0), foot[:, 1], npts).reshape(g.shape)
    over = float(max(np.max(raw) - hi, lo - np.min(raw), 0.0))
    return np.clip(raw, lo, hi), over


def diagnostics(theta: ScalarField, alpha: float, beta: float, t: float,
                pair_budget: int = 10_000):
    nb = weighted_x_norm(theta, beta, pair_budget)
    na = nb if alpha == beta else weighted_x_norm(theta, alpha, pair_budget)
    wd1a, d2 = weighted_parts(theta, alpha) if alpha != beta else (nb.weighted_d1, nb.d2_sup)
    return nb, na, BlowupMonitor(t, d2, wd1a)


def step(state: SolverState, dt: float, alpha, q=None, *, lo: float, hi: float,
         scheme: str = "pc", diag: Optional[tuple] = None) -> SolverState:
    """Advance one step; diag = (alpha, beta, pair_budget) to attach diagnostics."""
    theta = state.theta
    check_cfl(theta.grid, state.u_sup, dt)
    op = bs.grid_operator(theta.grid, alpha, q)
    prov = GridVelocity(theta.grid, *state.velocity)
    vals, over = advect(theta, prov, state.t, dt, lo, hi)
    if scheme == "pc":
        pred = op(vals)
        prov = SnapshotVelocity(theta.grid, [state.t, state.t + dt],
                                [state.velocity[0], pred[0]], [state.velocity[1], pred[1]])
        vals, over = advect(theta, prov, state.t, dt, lo, hi)
    elif scheme != "euler":
        raise ConfigError(f"unknown scheme {scheme!r}")
    new = theta.with_values(vals)
    _check_support(new)
    vel = op(vals)
    out = SolverState(state.t + dt, new, vel, overshoot=over, support=new.measured_support())
    if diag is not None:
        a, b, pb = diag
        out.norm_beta, out.norm_alpha, out.monitor = diagnostics(new, a, b, out.t, pb)
    return out


def validate_window(alpha: float, beta: float, certified: bool):
    ok = 0 < alpha <= 0.5 and alpha - 1e-12 <= beta <= 1 - alpha + 1e-12
    if not ok:
        msg = (f"alpha={alpha}, beta={beta} outside the well-posed window "
               "alpha in (0, 1/2], beta in [alpha, 1 - alpha]")
        if certified:
            raise ConfigError(msg + " (set exploratory mode to run anyway)")
        warnings.warn(msg + "; exploratory run", RuntimeWarning, stacklevel=3)


def default_T(theta0: ScalarField, alpha: float) -> float:
    n = weighted_x_norm(theta0, alpha).x_beta_norm
    return math.inf if n == 0 else 0.5 / n


def simulate(theta0: ScalarField, alpha, beta: float, T: Optional[float], dt: Optional[float],
             q=None, *, certified: bool = True, scheme: str = "pc", pair_budget: int = 10_000,
             diag_every: int = 1, callback=None) -> List[SolverState]:
    """Snapshots at every step (diagnostics every `diag_every` steps and at T).

    dt = None picks the CFL limit from the initial velocity with a 0.8 margin.
    """
    a = bs.Alpha.of(alpha, getattr(q, "log_lipschitz", False)).value
    validate_window(a, beta, certified)
    if T is None:
        T = default_T(theta0, a)
    op = bs.grid_operator(theta0.grid, a, q)
    vel = op(theta0.values)
    lo, hi = float(np.min(theta0.values)), float(np.max(theta0.values))
    s0 = SolverState(0.0, theta0, vel, support=theta0.measured_support())
    s0.norm_beta, s0.norm_alpha, s0.monitor = diagnostics(theta0, a, beta, 0.0, pair_budget)
    states = [s0]
    if not math.isfinite(T) or T <= 0:
        return states
    if dt is None:
        umax = s0.u_sup
        dt = T if umax == 0 else 0.8 * CFL * min_spacing(theta0.grid) / umax
    n = max(int(math.ceil(T / dt - 1e-9)), 1)
    h = T / n
    for k in range(n):
        last = k == n - 1
        d = (a, beta, pair_budget) if (last or (k + 1) % diag_every == 0) else None
        states.append(step(states[-1], h, a, q, lo=lo, hi=hi, scheme=scheme, diag=d))
        if callback is not None:
            callback(states[-1])
    return states


def l2_norm(grid, values) -> float:
    return float(np.sqrt(np.sum(grid.cell_weights() * values ** 2)))


def picard(theta0: ScalarField, alpha, beta: float, T: float, dt: float, n_max: int,
           q=None, *, pair_budget: int = 10_000, bound_factor: float = 10.0):
    """Iterates theta^(n+1) transported by the velocity of theta^(n).

    Returns (records, final iterate history). Each iterate is a list of field
    values at the step times; theta^(0) is theta0 at all times.
    """
    if n_max < 3:
        raise ConfigError("picard needs n_max >= 3")
    a = bs.Alpha.of(alpha, getattr(q, "log_lipschitz", False)).value
    g = theta0.grid
    op = bs.grid_operator(g, a, q)
    n = max(int(math.ceil(T / dt - 1e-9)), 1)
    h = T / n
    times = h * np.arange(n + 1)
    lo, hi = float(np.min(theta0.values)), float(np.max(theta0.values))
    bound = bound_factor * weighted_x_norm(theta0, beta, pair_budget).x_beta_norm
    prev = [theta0.values] * (n + 1)
    records = []
    for it in range(n_max + 1):
        vel = [op(v) for v in prev]
        umax = max(float(np.max(np.hypot(*u))) for u in vel)
        check_cfl(g, umax, h)
        cur = [theta0.values]
        for k in range(n):
            prov = SnapshotVelocity(g, times[k:k + 2], [vel[k][0], vel[k + 1][0]],
                                    [vel[k][1], vel[k + 1][1]])
            v, _ = advect(theta0.with_values(cur[-1]), prov, times[k], h, lo, hi)
            cur.append(v)
        fT = theta0.with_values(cur[-1])
        xb = weighted_x_norm(fT, beta, pair_budget).x_beta_norm
        if xb > bound:
            raise PicardAbort(f"iterate {it + 1} left the ball ||theta||_X <= {bound:.3g}", it + 1)
        records.append(PicardRecord(it, l2_norm(g, cur[-1] - prev[-1]), xb))
        prev = cur
    return records, prev


def blowup_fit(history: Sequence[BlowupMonitor], window=None):
    """Fit log d2_sup = c - eta log(T_fit - t). Returns (eta, T_fit, residual)."""
    hist = list(history)
    if window is not None:
        hist = [m for m in hist if window[0] <= m.t <= window[1]]
    if len(hist) < 5:
        raise FitRefused("need at least 5 samples in the fit window")
    t = np.array([m.t for m in hist])
    d = np.array([m.d2_sup for m in hist])
    if np.any(d <= 0) or np.any(np.diff(d) <= 0):
        raise FitRefused("d2_sup must increase strictly over the window")
    y = np.log(d)
    span = t[-1] - t[0]

    def res(p):
        c, eta, lg = p
        return c - eta * np.log(t[-1] - t + np.exp(lg)) - y

    best = None
    for gap in (1e-3, 1e-2, 1e-1, 1.0, 10.0):
        x0 = [y[-1], 0.5, math.log(gap * span)]
        r = least_squares(res, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
        if best is None or r.cost < best.cost:
            best = r
    c, eta, lg = best.x
    return float(eta), float(t[-1] + math.exp(lg)), float(np.sqrt(2 * best.cost / len(t)))


def time_modulus(states: Sequence[SolverState], beta_prime: float, lags=(1, 2, 4, 8),
                 pair_budget: int = 10_000, seed: int = 0):
    """[theta(t) - theta(s)]_{C^beta'} for s = t - lag steps; a report, not a gate.

    Continuity in time holds only below the regularity index, so these
    numbers are logged for inspection: rows (lag time, max seminorm).
    """
    rows = []
    for lag in lags:
        if lag >= len(states):
            break
        worst = max(holder_seminorm(b.theta.with_values(b.theta.values - a.theta.values),
                                    beta_prime, pair_budget, seed)
                    for a, b in zip(states[:-lag], states[lag:]))
        rows.append((float(states[lag].t - states[0].t), float(worst)))
    return rows


def write_norm_history(path, states: Sequence[SolverState], which: str = "beta"):
    from .norms import write_reports
    rows = [(s.t, s.norm_beta if which == "beta" else s.norm_alpha)
            for s in states if s.norm_beta is not None]
    return write_reports(path, rows)


def write_monitor(path, states: Sequence[SolverState]):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "d2_sup", "wd1_alpha", "support", "overshoot"])
        for s in states:
            if s.monitor is not None:
                w.writerow([repr(float(v)) for v in
                            (s.t, s.monitor.d2_sup, s.monitor.wd1_alpha, s.support, s.overshoot)])
    return path


def write_picard(path, records: Sequence[PicardRecord]):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "l2_diff", "x_beta"])
        for r in records:
            w.writerow([r.n, repr(r.l2_diff), repr(r.x_beta)])
    return path
