"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def _far_weight(r2, rho):
    s = np.sqrt(r2) / rho
    out = np.ones_like(r2)
    out[s <= 0.5] = 0.0
    mid = (s > 0.5) & (s < 1.0)
    t = 2.0 * s[mid] - 1.0
    a = np.exp(-1.0 / t)
    b = np.exp(-1.0 / (1.0 - t))
    out[mid] = a / (a + b)
    return out


def _kern(r2, rho, p):
    out = np.zeros_like(r2)
    pos = r2 > 0.0
    out[pos] = _far_weight(r2[pos], rho) * np.exp(-p * np.log(r2[pos]))
    return out


def far_sum(tx1, tx2, sy1, sy2, sq, alpha, rho, out1, out2, chunk=256):
    p = 1.0 + 0.5 * alpha
    for s in range(0, len(tx1), chunk):
        x1 = tx1[s:s + chunk, None]
        x2 = tx2[s:s + chunk, None]
        d1 = x1 - sy1[None, :]
        e1 = x1 + sy1[None, :]
        d2 = x2 - sy2[None, :]
        k0 = _kern(d1 * d1 + d2 * d2, rho, p)
        k1 = _kern(e1 * e1 + d2 * d2, rho, p)
        out1[s:s + chunk] = -(sq * d2 * (k0 - k1)).sum(axis=1)
        out2[s:s + chunk] = (sq * (d1 * k0 - e1 * k1)).sum(axis=1)


def lagrange4(u):
    """Cubic Lagrange weights on nodes 0..3 at offset u (array)."""
    return np.stack([
        -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
        u * (u - 2.0) * (u - 3.0) / 2.0,
        -u * (u - 1.0) * (u - 3.0) / 2.0,
        u * (u - 1.0) * (u - 2.0) / 6.0,
    ], axis=-1)


def stencil_start(p, n):
    return np.clip(np.floor(p).astype(np.int64) - 1, 0, n - 4)


def interp_cubic(values, p1, p2, out, zero_outside):
    n1, n2 = values.shape
    s1 = stencil_start(p1, n1)
    s2 = stencil_start(p2, n2)
    w1 = lagrange4(p1 - s1)
    w2 = lagrange4(p2 - s2)
    ws = w2[:, 0] + w2[:, 1] + w2[:, 2] + w2[:, 3]
    acc = np.zeros(len(p1))
    tot = np.zeros(len(p1))
    for a in range(4):
        row = np.zeros(len(p1))
        for b in range(4):
            row = row + w2[:, b] * values[s1 + a, s2 + b]
        acc = acc + w1[:, a] * row
        tot = tot + w1[:, a] * ws
    acc = acc / tot
    if zero_outside:
        bad = (p1 < 0) | (p1 > n1 - 1) | (p2 < 0) | (p2 > n2 - 1)
        acc[bad] = 0.0
    out[:] = acc


def lagrange_n(u, n):
    """Lagrange weights on nodes 0..n-1 at offsets u (array)."""
    u = np.asarray(u, dtype=float)
    cols = []
    for m in range(n):
        num = np.ones_like(u)
        den = 1.0
        for k in range(n):
            if k != m:
                num = num * (u - k)
                den = den * (m - k)
        cols.append(num / den)
    return np.stack(cols, axis=-1)


def interp_lagrange(values, p1, p2, out, zero_outside, npts):
    n1, n2 = values.shape
    half = npts // 2 - 1
    s1 = np.clip(np.floor(p1).astype(np.int64) - half, 0, n1 - npts)
    s2 = np.clip(np.floor(p2).astype(np.int64) - half, 0, n2 - npts)
    w1 = lagrange_n(p1 - s1, npts)
    w2 = lagrange_n(p2 - s2, npts)
    ws = np.zeros(len(p1))
    for b in range(npts):
        ws = ws + w2[:, b]
    acc = np.zeros(len(p1))
    tot = np.zeros(len(p1))
    for a in range(npts):
        row = np.zeros(len(p1))
        for b in range(npts):
            row = row + w2[:, b] * values[s1 + a, s2 + b]
        acc = acc + w1[:, a] * row
        tot = tot + w1[:, a] * ws
    acc = acc / tot
    if zero_outside:
        bad = (p1 < 0) | (p1 > n1 - 1) | (p2 < 0) | (p2 > n2 - 1)
        acc[bad] = 0.0
    out[:] = acc
