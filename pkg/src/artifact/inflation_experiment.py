"""Norm-inflation probes next to the wall.

A wall point x0 = (0, a) and a companion x = (l^-1, a - l^-(1-gamma))
start with a positive vertical gap. Near a nonzero trace, u2 grows like
x1^(1-alpha) off the wall, so the companion catches up and the gap closes
at t* ~ l^-(alpha-gamma). At that time the two evolved points sit at
distance ~ l^-1 while theta differs by ~ l^-(1-gamma) between them, so the
C^beta quotient grows like l^(beta + gamma - 1).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import yaml
from scipy import stats

from . import biot_savart as bs
from .errors import ConfigError, DomainError, FitRefused
from .flow import LiveVelocity, SnapshotVelocity, integrate_many
from .geometry_field import ScalarField
from .transport_solver import simulate

log = logging.getLogger(__name__)

RECORD_COLUMNS = ("ell", "gamma", "beta", "t_star", "quotient", "eps_fit")
MIN_GAP_SAMPLES = 10
RESOLVE_CELLS = 4


@dataclass(frozen=True)
class ProbeConfig:
    a: float = 0.0
    gamma: float = 0.4
    ell_ladder: tuple = (8.0, 16.0, 32.0, 64.0, 128.0)
    beta_test: float = 0.75
    theorem3_mode: bool = False
    safety: float = 2.0
    require_positive_exponent: bool = True

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "ProbeConfig":
        d = dict(d or {})
        if "ell_ladder" in d:
            d["ell_ladder"] = tuple(float(v) for v in d["ell_ladder"])
        return cls(**d)

    def to_dict(self):
        d = dict(self.__dict__)
        d["ell_ladder"] = list(self.ell_ladder)
        return d

    def validate(self, alpha: float, grid=None):
        if not (0.0 < self.gamma < alpha):
            raise ConfigError(f"gamma must lie in the open interval (0, alpha={alpha}), got {self.gamma}")
        if not (1.0 - alpha < self.beta_test <= 1.0):
            raise ConfigError(f"beta_test must lie in (1 - alpha, 1], got {self.beta_test}")
        if self.require_positive_exponent and not (1.0 - self.beta_test < self.gamma):
            raise ConfigError("gamma must exceed 1 - beta_test for a growing quotient")
        ells = np.asarray(self.ell_ladder, float)
        if ells.size < 2 or np.any(ells <= 1.0) or np.any(np.diff(ells) <= 0):
            raise ConfigError("ell_ladder must be increasing and > 1")
        if grid is not None:
            for ell in ells:
                x1 = 1.0 / ell
                if x1 < RESOLVE_CELLS * float(grid.h1_at(x1)):
                    raise ConfigError(f"ell={ell:g}: x1 = 1/ell is below {RESOLVE_CELLS} cells; "
                                      "refine or stretch the grid near the wall")


@dataclass(frozen=True)
class Probe:
    ell: float
    x0: tuple
    x: tuple
    xp: Optional[tuple] = None      # pairing point closer to the wall

    @property
    def separation2(self) -> float:
        return (self.x[0] - self.x0[0]) ** 2 + (self.x[1] - self.x0[1]) ** 2


def anchor_derivatives(theta0: ScalarField, a: float, h: float = 1e-4):
    """theta0(0, a) and d2 theta0(0, a), from the analytic source when attached."""
    f = theta0.exact if theta0.analytic_source is not None else theta0.eval_many
    y = a + h * np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    v = np.asarray(f(np.zeros(5), y), float)
    return float(v[2]), float((v[0] - 8 * v[1] + 8 * v[3] - v[4]) / (12 * h))


def make_probes(theta0: ScalarField, cfg: ProbeConfig, alpha: float,
                check_anchor: bool = True) -> List[Probe]:
    cfg.validate(alpha, theta0.grid)
    if check_anchor:
        v, d2 = anchor_derivatives(theta0, cfg.a)
        if v == 0.0:
            raise ConfigError(f"anchor hypothesis violated: theta0(0, {cfg.a}) = 0")
        if d2 == 0.0:
            raise ConfigError(f"anchor hypothesis violated: d2 theta0(0, {cfg.a}) = 0")
    out = []
    for ell in cfg.ell_ladder:
        x = (ell ** -1.0, cfg.a - ell ** -(1.0 - cfg.gamma))
        xp = (ell ** -2.0, cfg.a - ell ** -(2.0 - cfg.gamma)) if cfg.theorem3_mode else None
        for p in (x, xp):
            if p is not None and not theta0.grid.contains(*p):
                raise DomainError(f"probe {p} outside the grid")
        out.append(Probe(float(ell), (0.0, cfg.a), x, xp))
    return out


@dataclass
class InflationRecord:
    ell: float
    probe: Probe
    times: np.ndarray
    path0: np.ndarray               # (n, 2) trajectory of x0
    path: np.ndarray                # (n, 2) trajectory of x
    crossing_time: Optional[float] = None
    quotient_at_crossing: float = float("nan")
    eps_fit: float = float("nan")
    t_ell: float = float("nan")
    gap_monotone: bool = True
    pathp: Optional[np.ndarray] = None
    crossing_time3: Optional[float] = None
    quotient3: float = float("nan")

    @property
    def gap_history(self):
        return np.column_stack([self.times, self.path0[:, 1] - self.path[:, 1]])

    def positions_at(self, t: float):
        p0 = np.array([np.interp(t, self.times, self.path0[:, k]) for k in (0, 1)])
        p = np.array([np.interp(t, self.times, self.path[:, k]) for k in (0, 1)])
        return p0, p


def first_crossing(times, gap) -> Optional[float]:
    """First t with gap <= 0, linear interpolation between steps."""
    gap = np.asarray(gap, float)
    idx = np.flatnonzero(gap <= 0.0)
    if idx.size == 0:
        return None
    k = int(idx[0])
    if k == 0:
        return float(times[0])
    g0, g1 = gap[k - 1], gap[k]
    return float(times[k - 1] + (times[k] - times[k - 1]) * g0 / (g0 - g1))


def lagrangian_quotient(theta0: ScalarField, y0, y, p0, p, beta: float) -> float:
    """|theta(t, p0) - theta(t, p)| / |p0 - p|^beta with theta(t, Phi(y)) = theta0(y).

    Transport carries values along trajectories, so the evolved values at
    the probes are the initial values at their seeds. This avoids
    interpolating the grid at x1 ~ 1/ell where the profile is least resolved.
    """
    f = theta0.exact if theta0.analytic_source is not None else theta0.eval_many
    v = np.asarray(f(np.array([y0[0], y[0]]), np.array([y0[1], y[1]])), float)
    d = math.hypot(p0[0] - p[0], p0[1] - p[1])
    if d == 0.0:
        raise DomainError("evolved probes coincide")
    return abs(v[0] - v[1]) / d ** beta


@dataclass
class GapDecayReport:
    ell: float
    rate: float
    eps_fit: float
    monotone: bool
    max_increase: float
    n_samples: int


def gap_decay_check(record: InflationRecord, alpha: float, rel_tol: float = 1e-6,
                    min_samples: int = MIN_GAP_SAMPLES) -> GapDecayReport:
    """Decay rate of the gap before the crossing and eps_fit = 2 rate l^(1-alpha)."""
    t, gap = record.gap_history.T
    if record.crossing_time is not None:
        keep = t <= record.crossing_time
        t, gap = t[keep], gap[keep]
    if len(t) < min_samples:
        raise FitRefused(f"need at least {min_samples} gap samples before the crossing")
    inc = np.diff(gap)
    tol = rel_tol * max(abs(gap[0]), 1e-300)
    max_inc = float(max(np.max(inc), 0.0))
    monotone = max_inc <= tol
    if not monotone:
        log.warning("ell=%g: gap increased by %.3e (continuity assumption violated numerically)",
                    record.ell, max_inc)
    rate = -float(np.polyfit(t, gap, 1)[0])
    eps = 2.0 * rate * record.ell ** (1.0 - alpha)
    return GapDecayReport(record.ell, rate, eps, monotone, max_inc, len(t))


def initial_rates(theta0: ScalarField, probes, alpha: float, q=None):
    """u2(x) - u2(x0) at t = 0 for each probe."""
    x1 = np.array([c for p in probes for c in (p.x0[0], p.x[0])])
    x2 = np.array([c for p in probes for c in (p.x0[1], p.x[1])])
    _, u2 = bs.velocity_points(theta0, x1, x2, alpha, q)
    return u2[1::2] - u2[0::2]


@dataclass
class InflationRun:
    records: List[InflationRecord]
    T: float
    dt: float
    alpha: float
    cfg: ProbeConfig
    clamp_events: int = 0
    summary: dict = field(default_factory=dict)


def run_inflation(theta0: ScalarField, alpha: float, cfg: ProbeConfig, q=None, *,
                  dt: Optional[float] = None, T: Optional[float] = None, T_max: float = 1.0,
                  check_anchor: bool = True, provider: str = "live",
                  matched_times: Optional[dict] = None) -> InflationRun:
    """Evolve theta0, trace every probe pair and locate the gap crossings.

    T defaults to safety * max t_l with eps estimated from the initial
    velocity; matched_times (ell -> t) evaluates quotients at given times
    instead of at the crossings (control runs).
    """
    probes = make_probes(theta0, cfg, alpha, check_anchor)
    if T is None:
        if matched_times:
            T = 1.05 * max(matched_times.values())
        else:
            rates = initial_rates(theta0, probes, alpha, q)
            if np.any(rates <= 0):
                raise ConfigError("the gap does not close initially; check the anchor sign")
            eps0 = 2.0 * rates * np.array([p.ell for p in probes]) ** (1.0 - alpha)
            t_ell = [(2.0 / e) * p.ell ** -(alpha - cfg.gamma) for e, p in zip(eps0, probes)]
            T = cfg.safety * max(t_ell)
        T = min(T, T_max)
    states = simulate(theta0, alpha, alpha, T, dt, q, certified=False,
                      diag_every=10 ** 9)
    times = np.array([s.t for s in states])
    h = float(times[1] - times[0])
    if provider == "live":
        prov = LiveVelocity(times, [s.theta for s in states], alpha, q)
    elif provider == "grid":
        prov = SnapshotVelocity(theta0.grid, times, [s.velocity[0] for s in states],
                                [s.velocity[1] for s in states])
    else:
        raise ConfigError(f"unknown probe velocity provider {provider!r}")
    seeds = []
    for p in probes:
        seeds += [p.x0, p.x] + ([p.xp] if p.xp is not None else [])
    tt, pos, _, events = integrate_many(prov, seeds, 0.0, float(times[-1]), h)
    if events:
        log.warning("%d wall clamp events while tracing probes", len(events))
    records = []
    col = 0
    beta = cfg.beta_test
    for p in probes:
        rec = InflationRecord(p.ell, p, tt, pos[:, col], pos[:, col + 1])
        col += 2
        if p.xp is not None:
            rec.pathp = pos[:, col]
            col += 1
        rec.crossing_time = first_crossing(tt, rec.path0[:, 1] - rec.path[:, 1])
        t_eval = matched_times.get(p.ell) if matched_times else rec.crossing_time
        if t_eval is not None and t_eval <= tt[-1]:
            p0, p1 = rec.positions_at(t_eval)
            rec.quotient_at_crossing = lagrangian_quotient(theta0, p.x0, p.x, p0, p1, beta)
        if rec.pathp is not None:
            rec.crossing_time3 = first_crossing(tt, rec.pathp[:, 1] - rec.path[:, 1])
            if rec.crossing_time3 is not None:
                q0 = np.array([np.interp(rec.crossing_time3, tt, rec.pathp[:, k]) for k in (0, 1)])
                q1 = np.array([np.interp(rec.crossing_time3, tt, rec.path[:, k]) for k in (0, 1)])
                rec.quotient3 = lagrangian_quotient(theta0, p.xp, p.x, q0, q1, beta)
        try:
            rep = gap_decay_check(rec, alpha)
            rec.eps_fit, rec.gap_monotone = rep.eps_fit, rep.monotone
            if rep.eps_fit > 0:
                rec.t_ell = (2.0 / rep.eps_fit) * p.ell ** -(alpha - cfg.gamma)
        except FitRefused as exc:
            log.warning("ell=%g: %s", p.ell, exc)
        if rec.crossing_time is None and not matched_times:
            log.warning("ell=%g: no crossing before T=%.4g", p.ell, tt[-1])
        records.append(rec)
    run = InflationRun(records, float(tt[-1]), h, alpha, cfg, len(events))
    run.summary = summarize(run)
    return run


def fit_slope(x, y, level: float = 0.95):
    """log-log slope with a t-based confidence interval; None if < 3 usable points."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = np.isfinite(y) & (y > 0)
    if ok.sum() < 3:
        return None
    r = stats.linregress(np.log(x[ok]), np.log(y[ok]))
    half = stats.t.ppf(0.5 + level / 2, ok.sum() - 2) * r.stderr
    return {"slope": float(r.slope), "intercept": float(r.intercept),
            "ci": [float(r.slope - half), float(r.slope + half)], "n": int(ok.sum())}


def predicted_slopes(alpha: float, gamma: float, beta: float):
    return {"t_star": -(alpha - gamma),
            "quotient": beta * gamma - (1 - beta) * (1 - gamma),
            "gap_rate": -(1 - alpha)}


def summarize(run: InflationRun) -> dict:
    ells = np.array([r.ell for r in run.records])
    ts = np.array([np.nan if r.crossing_time is None else r.crossing_time for r in run.records])
    qs = np.array([r.quotient_at_crossing for r in run.records])
    rates = np.array([r.eps_fit / 2 * r.ell ** -(1 - run.alpha) for r in run.records])
    out = {"alpha": run.alpha, "T": run.T, "dt": run.dt, "probe": run.cfg.to_dict(),
           "missing_crossings": [float(e) for e, t in zip(ells, ts) if not np.isfinite(t)],
           "clamp_events": run.clamp_events,
           "predicted": predicted_slopes(run.alpha, run.cfg.gamma, run.cfg.beta_test),
           "fits": {"t_star": fit_slope(ells, ts), "quotient": fit_slope(ells, qs),
                    "gap_rate": fit_slope(ells, rates)}}
    if run.cfg.theorem3_mode:
        q3 = np.array([r.quotient3 for r in run.records])
        out["fits"]["quotient_theorem3"] = fit_slope(ells, q3)
    return out


def write_outputs(run: InflationRun, out_dir, svg: bool = False):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "inflation.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in run.records:
            t = float("nan") if r.crossing_time is None else r.crossing_time
            w.writerow([repr(float(v)) for v in
                        (r.ell, run.cfg.gamma, run.cfg.beta_test, t, r.quotient_at_crossing, r.eps_fit)])
    for r in run.records:
        np.savetxt(out_dir / f"gap_ell{r.ell:g}.csv", r.gap_history, delimiter=",",
                   header="t,gap", comments="", fmt="%.17g")
    (out_dir / "inflation_summary.yaml").write_text(yaml.safe_dump(run.summary, sort_keys=True))
    if svg:
        write_svg(run, out_dir)
    return out_dir


def write_svg(run: InflationRun, out_dir):
    """Log-log plots of t* and the quotient against ell (needs matplotlib)."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not installed; skipping SVG plots")
        return None
    ells = [r.ell for r in run.records]
    for name, vals in (("t_star", [r.crossing_time or np.nan for r in run.records]),
                       ("quotient", [r.quotient_at_crossing for r in run.records])):
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.loglog(ells, vals, "o-")
        ax.set_xlabel("ell")
        ax.set_ylabel(name)
        fig.tight_layout()
        fig.savefig(Path(out_dir) / f"{name}_vs_ell.svg")
        plt.close(fig)
    return out_dir
