"""Lagrangian trajectories d Phi / dt = u(t, Phi) on the half-plane.

Classical RK4 with a wall guard: a step whose stage would cross x1 = 0
is retried with halved sub-steps down to dt/16, then clamped to the wall
and logged. The exact flow never crosses, so a clamp always signals a
discretization error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DomainError, UnsupportedModeError
from .geometry_field import Grid, HalfPlanePoint

MAX_HALVINGS = 4          # dt/16
MAX_CLAMPS = 10
SNAP_TOL = 1e-9


# velocity providers: callables (t, x1, x2) -> (u1, u2) on arrays

class ConstantVelocity:
    def __init__(self, u1=0.0, u2=0.0):
        self.u = (float(u1), float(u2))

    def __call__(self, t, x1, x2):
        return np.full(np.shape(x1), self.u[0]), np.full(np.shape(x1), self.u[1])


class FunctionVelocity:
    """Wrap an analytic u(t, x1, x2) -> (u1, u2); u1 is zeroed on the wall."""

    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, t, x1, x2):
        u1, u2 = self.fn(t, np.asarray(x1, float), np.asarray(x2, float))
        u1 = np.where(np.asarray(x1) == 0.0, 0.0, u1)
        return np.broadcast_to(u1, np.shape(x1)).copy(), np.broadcast_to(u2, np.shape(x1)).copy()


def _interp_grid(grid: Grid, values, x1, x2):
    x1 = np.clip(np.asarray(x1, float), 0.0, grid.x1max)
    x2 = np.clip(np.asarray(x2, float), grid.x2min, grid.x2max)
    p1, p2 = grid.index_coords(x1.ravel(), x2.ravel())
    return kernels.interp_cubic(values, p1, p2).reshape(x1.shape)


class GridVelocity:
    """Frozen velocity sampled on a grid, cubic interpolation in space.

    Queries outside the box are clamped to its edge (the scalar vanishes
    there, so only the position of empty cells is affected).
    """

    def __init__(self, grid: Grid, u1, u2):
        self.grid = grid
        self.u1 = np.ascontiguousarray(u1, dtype=float)
        self.u2 = np.ascontiguousarray(u2, dtype=float)

    def __call__(self, t, x1, x2):
        a = _interp_grid(self.grid, self.u1, x1, x2)
        b = _interp_grid(self.grid, self.u2, x1, x2)
        a = np.where(np.asarray(x1) == 0.0, 0.0, a)
        return a, b

    def sup(self) -> float:
        return float(np.max(np.hypot(self.u1, self.u2)))


class SnapshotVelocity:
    """Grid snapshots at increasing times, linear interpolation in time."""

    def __init__(self, grid: Grid, times: Sequence[float], u1s, u2s):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("snapshot times must increase")
        self.u1s = [np.ascontiguousarray(u, dtype=float) for u in u1s]
        self.u2s = [np.ascontiguousarray(u, dtype=float) for u in u2s]

    def _bracket(self, t):
        ts = self.times
        if len(ts) == 1:
            return 0, 0, 0.0
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        s = (t - ts[k]) / (ts[k + 1] - ts[k])
        return k, k + 1, float(np.clip(s, 0.0, 1.0))

    def __call__(self, t, x1, x2):
        k0, k1, s = self._bracket(t)
        a = _interp_grid(self.grid, self.u1s[k0], x1, x2)
        b = _interp_grid(self.grid, self.u2s[k0], x1, x2)
        if s > 0.0:
            a = (1 - s) * a + s * _interp_grid(self.grid, self.u1s[k1], x1, x2)
            b = (1 - s) * b + s * _interp_grid(self.grid, self.u2s[k1], x1, x2)
        a = np.where(np.asarray(x1) == 0.0, 0.0, a)
        return a, b


class LiveVelocity:
    """Velocity from scalar snapshots by direct quadrature at the query points.

    Linear in time between snapshots. Used for probes that sit closer to
    the wall than the grid can resolve.
    """

    def __init__(self, times, thetas, alpha, q=None):
        from .biot_savart import velocity_points
        self._vp = velocity_points
        self.times = np.asarray(times, dtype=float)
        self.thetas = list(thetas)
        self.alpha, self.q = alpha, q

    def _at(self, k, x1, x2):
        x1 = np.asarray(x1, float)
        a, b = self._vp(self.thetas[k], x1.ravel(), np.asarray(x2, float).ravel(),
                        self.alpha, self.q)
        return a.reshape(x1.shape), b.reshape(x1.shape)

    def __call__(self, t, x1, x2):
        ts = self.times
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, max(len(ts) - 2, 0)))
        s = 0.0
        if len(ts) > 1:
            s = float(np.clip((t - ts[k]) / (ts[k + 1] - ts[k]), 0.0, 1.0))
            if s > 1.0 - SNAP_TOL:          # step times that land on a snapshot
                k, s = k + 1, 0.0
        a, b = self._at(k, x1, x2)
        if len(ts) > 1:
            if s > SNAP_TOL:
                a2, b2 = self._at(k + 1, x1, x2)
                a, b = (1 - s) * a + s * a2, (1 - s) * b + s * b2
        a = np.where(np.asarray(x1) == 0.0, 0.0, a)
        return a, b


# integration

@dataclass
class FlowTrajectory:
    seed: HalfPlanePoint
    times: np.ndarray
    positions: np.ndarray           # (n, 2)
    velocities: np.ndarray          # (n, 2)
    clamp_events: list = field(default_factory=list)

    @property
    def unreliable(self) -> bool:
        return len(self.clamp_events) > MAX_CLAMPS

    @property
    def final(self) -> HalfPlanePoint:
        return HalfPlanePoint(max(float(self.positions[-1, 0]), 0.0), float(self.positions[-1, 1]))

    def to_csv(self, path):
        data = np.column_stack([self.times, self.positions, self.velocities])
        np.savetxt(path, data, delimiter=",", header="t,x1,x2,u1,u2", comments="", fmt="%.17g")
        return path


def _rk4(provider, t, x1, x2, h):
    k1 = provider(t, x1, x2)
    a1, a2 = x1 + 0.5 * h * k1[0], x2 + 0.5 * h * k1[1]
    k2 = provider(t + 0.5 * h, a1, a2)
    b1, b2 = x1 + 0.5 * h * k2[0], x2 + 0.5 * h * k2[1]
    k3 = provider(t + 0.5 * h, b1, b2)
    c1, c2 = x1 + h * k3[0], x2 + h * k3[1]
    k4 = provider(t + h, c1, c2)
    n1 = x1 + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    n2 = x2 + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    crossed = (a1 < 0) | (b1 < 0) | (c1 < 0) | (n1 < 0)
    return n1, n2, crossed


def _guarded_step(provider, t, x1, x2, h, events, step_index):
    """One step of size h for a batch; retries crossing members with sub-steps."""
    n1, n2, bad = _rk4(provider, t, x1, x2, h)
    if not bad.any():
        return n1, n2
    idx = np.flatnonzero(bad)
    for level in range(1, MAX_HALVINGS + 1):
        m = 2 ** level
        y1, y2 = x1[idx].copy(), x2[idx].copy()
        fail = np.zeros(len(idx), bool)
        for s in range(m):
            y1, y2, c = _rk4(provider, t + s * h / m, y1, y2, h / m)
            fail |= c
        ok = ~fail
        n1[idx[ok]], n2[idx[ok]] = y1[ok], y2[ok]
        if ok.all():
            return n1, n2
        idx = idx[fail]
    # still crossing at dt/16: clamp and record
    n1[idx], n2[idx] = np.maximum(y1[fail], 0.0), y2[fail]
    for i in idx:
        events.append((step_index, int(i)))
    return n1, n2


def integrate_many(provider, seeds, t0: float, t1: float, dt: float, record: bool = True):
    """Advance a batch of seeds from t0 to t1 (t1 < t0 integrates backwards).

    Returns (times, positions[n_steps+1, N, 2], velocities or None, events)
    where events lists (step, seed index) clamp records.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    seeds = np.asarray(seeds, dtype=float).reshape(-1, 2)
    if np.any(seeds[:, 0] < 0):
        raise DomainError("seeds must satisfy x1 >= 0")
    span = t1 - t0
    n = max(int(math.ceil(abs(span) / dt - 1e-12)), 1) if span != 0 else 0
    h = span / n if n else 0.0
    x1, x2 = seeds[:, 0].copy(), seeds[:, 1].copy()
    times = t0 + h * np.arange(n + 1)
    if n:
        times[-1] = t1
    pos = [np.column_stack([x1, x2])] if record else None
    events: list = []
    for k in range(n):
        x1, x2 = _guarded_step(provider, times[k], x1, x2, h, events, k)
        if record:
            pos.append(np.column_stack([x1, x2]))
    vel = None
    if record:
        pos = np.stack(pos)
        vel = np.stack([np.column_stack(provider(t, p[:, 0], p[:, 1])) for t, p in zip(times, pos)])
    else:
        pos = np.column_stack([x1, x2])[None]
    return times, pos, vel, events


def integrate_flow(provider, seed, t0: float, t1: float, dt: float,
                   log_lipschitz: bool = False) -> FlowTrajectory:
    seed = seed if isinstance(seed, HalfPlanePoint) else HalfPlanePoint(*seed)
    if log_lipschitz and seed.x1 == 0.0:
        raise UnsupportedModeError("boundary seeds are refused in log-Lipschitz mode")
    times, pos, vel, events = integrate_many(provider, [tuple(seed)], t0, t1, dt)
    return FlowTrajectory(seed, times, pos[:, 0, :], vel[:, 0, :], [e[0] for e in events])


def inverse_flow_foot(provider, x, t: float, dt: float) -> HalfPlanePoint:
    """Integrate backwards from (t, x) to time 0; returns the foot point."""
    _, pos, _, _ = integrate_many(provider, [tuple(x)], t, 0.0, dt, record=False)
    return HalfPlanePoint(max(float(pos[-1, 0, 0]), 0.0), float(pos[-1, 0, 1]))


def feet(provider, points, t: float, t_back: float, dt: float):
    """Vectorized foot points of many nodes, traced from t back to t_back."""
    _, pos, _, events = integrate_many(provider, points, t, t_back, dt, record=False)
    return pos[-1], events


# envelope check

@dataclass
class EnvelopeReport:
    C: float
    C_times_norm: float
    argmax_time: Optional[float]
    violations: list


def check_phi1_envelope(traj: FlowTrajectory, norm_history) -> EnvelopeReport:
    """Smallest C with x1 e^{-C I(t)} <= Phi1 <= x1 e^{C I(t)}, I(t) = int_0^t ||theta||.

    A constant history N reduces I(t) to N t, as in the a priori bound.
    """
    t = np.asarray(traj.times, float) - traj.times[0]
    N = np.broadcast_to(np.asarray(norm_history, float), t.shape)
    I = np.concatenate([[0.0], np.cumsum(0.5 * (N[1:] + N[:-1]) * np.diff(t))])
    x0 = traj.seed.x1
    p1 = traj.positions[:, 0]
    viol = [int(k) for k in np.flatnonzero(~(p1 > 0))] if x0 > 0 else []
    if x0 <= 0 or len(t) < 2:
        return EnvelopeReport(0.0, 0.0, None, viol)
    ok = (I > 0) & (p1 > 0)
    if not ok.any():
        return EnvelopeReport(0.0, 0.0, None, viol)
    ratio = np.abs(np.log(p1[ok] / x0)) / I[ok]
    k = int(np.argmax(ratio))
    C = float(ratio[k])
    return EnvelopeReport(C, C * float(N[0]), float(t[ok][k]), viol)
