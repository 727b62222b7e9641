"""Initial-data presets: smooth compactly supported scalars on the half-plane."""

from __future__ import annotations

from functools import lru_cache, partial

import numpy as np

from .errors import ConfigError
from .geometry_field import Grid, ScalarField


def smooth_step(t):
    """C-infinity transition: 1 for t <= 0, 0 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.where(t <= 0, 1.0, 0.0)
    mid = (t > 0) & (t < 1)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = b / (a + b)
    return out


def plateau(x1, x2, c=(0.0, 0.0), r0=0.3, r1=1.0, amp=1.0):
    """amp on B(c; r0), smoothly down to 0 on B(c; r1)."""
    r = np.hypot(np.asarray(x1, float) - c[0], np.asarray(x2, float) - c[1])
    return amp * smooth_step((r - r0) / (r1 - r0))


def bump(x1, x2, c=(0.0, 0.0), r=1.0, amp=1.0):
    """amp * exp(1 - 1/(1 - s^2)) with s = |x - c| / r."""
    s2 = ((np.asarray(x1, float) - c[0]) ** 2 + (np.asarray(x2, float) - c[1]) ** 2) / r ** 2
    out = np.zeros(np.shape(s2))
    m = s2 < 1
    out[m] = amp * np.exp(1.0 - 1.0 / (1.0 - s2[m]))
    return out


def gaussian(x1, x2, c=(0.5, 0.0), w=0.15, amp=1.0, r=1.0):
    """Gaussian times a smooth cutoff so the support stays inside B(0; r)."""
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    g = amp * np.exp(-((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2) / (2 * w * w))
    return g * smooth_step((np.hypot(x1, x2) - 0.8 * r) / (0.2 * r))


def two_bump(x1, x2, sep=0.4, r=0.55, amp=1.0):
    """Opposite-signed bumps on the wall at x2 = +-sep (hyperbolic wall point)."""
    return bump(x1, x2, (0.0, sep), r, amp) - bump(x1, x2, (0.0, -sep), r, amp)


def vanishing(x1, x2, width=0.1, **kw):
    """Plateau damped to zero on the wall: theta(0, .) = 0."""
    x1 = np.asarray(x1, float)
    return x1 ** 2 / (x1 ** 2 + width ** 2) * plateau(x1, x2, **kw)


def ramped(x1, x2, kappa=0.25, **kw):
    """Plateau tilted by (1 + kappa x2): value 1 and slope kappa at the wall point (0, 0)."""
    return (1.0 + kappa * np.asarray(x2, float)) * plateau(x1, x2, **kw)


def ramped_vanishing(x1, x2, kappa=0.25, width=0.1, **kw):
    """Same tilt on boundary-vanishing data (control runs)."""
    x1 = np.asarray(x1, float)
    return x1 ** 2 / (x1 ** 2 + width ** 2) * ramped(x1, x2, kappa, **kw)


def tent(y, w=0.5):
    return np.maximum(1.0 - np.abs(y) / w, 0.0)


@lru_cache(maxsize=64)
def kink_compensation(alpha, w=0.5, d=0.7, bw=0.15):
    """Amplitude of the remote trace bump that cancels the O(x1) residual of the tent.

    Near the kink, 2 x1 int (T(y) - 1) |(x1, y)|^(-alpha-2) dy
    = -(4 / (alpha w)) x1^(1-alpha) + B x1 + O(x1^3), B = 4 w^(-1-alpha) / (alpha (1+alpha)).
    A bump b at distance d adds 2 x1 int b |y|^(-alpha-2) dy + O(x1^3).
    """
    from scipy import integrate
    B = 4.0 * w ** (-1.0 - alpha) / (alpha * (1.0 + alpha))
    m, _ = integrate.quad(lambda y: bump(0.0, y, (0.0, d), bw) * abs(y) ** (-2.0 - alpha),
                          d - bw, d + bw, epsabs=1e-14, epsrel=1e-13)
    return -B / (2.0 * m)


def kinked(x1, x2, alpha=0.5, w=0.5, d=0.7, bw=0.15, depth=0.5):
    """Trace with a Lipschitz kink at x2 = 0 plus a compensating bump at x2 = d.

    The residual of d1 U2 against its leading term is then a pure x1^(1-alpha)
    power down to O(x1^3), so the rate of the upper bound is visible.
    """
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    c = kink_compensation(float(alpha), float(w), float(d), float(bw))
    trace = tent(x2, w) + bump(0.0, x2, (0.0, d), bw, amp=c)
    return trace * smooth_step(x1 / depth)


def zero(x1, x2):
    return np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)


PRESETS = {
    "canonical": plateau,
    "plateau": plateau,
    "bump": bump,
    "gaussian": gaussian,
    "two_bump": two_bump,
    "vanishing": vanishing,
    "kinked": kinked,
    "ramped": ramped,
    "ramped_vanishing": ramped_vanishing,
    "zero": zero,
}


def make_function(name: str, params: dict | None = None):
    if name not in PRESETS:
        raise ConfigError(f"unknown initial-data preset {name!r}")
    params = dict(params or {})
    for k in ("c",):
        if k in params:
            params[k] = tuple(params[k])
    return partial(PRESETS[name], **params)


def make_field(name: str, grid: Grid, params: dict | None = None,
               support_radius: float = 1.0, scale: float = 1.0) -> ScalarField:
    f = make_function(name, params)
    if scale != 1.0:
        base = f
        f = lambda x1, x2: scale * base(x1, x2)
    return ScalarField.from_function(grid, f, support_radius, preset=name)


def canonical_grid(n1: int = 128, n2: int | None = None, radius: float = 1.0, **kw) -> Grid:
    return Grid.for_support(radius, n1, n2 or n1, **kw)


def canonical_field(n: int = 128, **kw) -> ScalarField:
    """Plateau of height 1 on B(0; 0.3), supported in B(0; 1), centred on the wall."""
    return make_field("canonical", canonical_grid(n, **kw))
