"""Hölder seminorm and weighted anisotropic norm estimators on gridded fields.

    ||f||_{X^beta} = ||f||_inf + [f]_{C^beta} + ||x1^(1-beta) d1 f||_inf + ||d2 f||_inf

The Hölder part is a maximum over sampled pairs, hence a lower bound.
Derivative sups come from node differences, so behaviour on null sets
(where f need not be differentiable) is invisible to these estimators.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError
from .geometry_field import ScalarField, node_gradient

CSV_COLUMNS = ("t", "sup", "holder", "wd1", "d2", "xbeta")


@dataclass(frozen=True)
class NormReport:
    sup_norm: float
    holder_seminorm_lb: float
    beta: float
    weighted_d1: float
    d2_sup: float

    @property
    def x_beta_norm(self) -> float:
        return self.sup_norm + self.holder_seminorm_lb + self.weighted_d1 + self.d2_sup

    def row(self, t: float):
        return (t, self.sup_norm, self.holder_seminorm_lb, self.weighted_d1, self.d2_sup,
                self.x_beta_norm)


def _check_beta(beta):
    if not (0.0 < beta <= 1.0):
        raise DomainError(f"beta must lie in (0, 1], got {beta}")


def _pair_quotients(v, X1, X2, ia, ib, beta):
    d = np.hypot(X1.ravel()[ia] - X1.ravel()[ib], X2.ravel()[ia] - X2.ravel()[ib])
    ok = d > 0
    dv = np.abs(v.ravel()[ia] - v.ravel()[ib])
    return dv[ok] / d[ok] ** beta


def sample_pairs(grid, pair_budget: int = 10_000, seed: int = 0, anchor_rows: int = 8,
                 anchor_span: int = 4):
    """Index pairs (ia, ib) into the flattened grid, three categories.

    Adjacent neighbours (incl. diagonals), seeded random pairs, and pairs
    anchored on the wall row. The random stream is drawn so a larger budget
    extends a smaller one.
    """
    if pair_budget < 10_000:
        raise DomainError("pair_budget must be >= 1e4")
    n1, n2 = grid.shape
    idx = np.arange(n1 * n2).reshape(n1, n2)
    a = [idx[:-1, :].ravel(), idx[:, :-1].ravel(), idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()]
    b = [idx[1:, :].ravel(), idx[:, 1:].ravel(), idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()]
    rng = np.random.default_rng(seed)
    r = rng.integers(0, n1 * n2, size=(pair_budget, 2))
    a.append(r[:, 0])
    b.append(r[:, 1])
    for i in range(1, min(anchor_rows, n1 - 1) + 1):
        for m in range(-anchor_span, anchor_span + 1):
            j0 = np.arange(max(0, -m), min(n2, n2 - m))
            a.append(idx[0, j0])
            b.append(idx[i, j0 + m])
    return np.concatenate(a), np.concatenate(b)


def holder_seminorm(f: ScalarField, beta: float, pair_budget: int = 10_000,
                    seed: int = 0) -> float:
    """max |f(x) - f(x')| / |x - x'|^beta over sampled node pairs."""
    _check_beta(beta)
    X1, X2 = f.grid.mesh()
    ia, ib = sample_pairs(f.grid, pair_budget, seed)
    q = _pair_quotients(f.values, X1, X2, ia, ib, beta)
    return float(np.max(q, initial=0.0))


def weighted_parts(f: ScalarField, beta: float):
    """(||x1^(1-beta) d1 f||_inf over rows x1 >= h1/2, ||d2 f||_inf)."""
    d1, d2 = node_gradient(f)
    x1 = f.grid.x1
    w = x1[1:, None] ** (1.0 - beta)
    wd1 = float(np.max(w * np.abs(d1[1:]), initial=0.0))
    return wd1, float(np.max(np.abs(d2), initial=0.0))


def weighted_x_norm(f: ScalarField, beta: float, pair_budget: int = 10_000,
                    seed: int = 0) -> NormReport:
    _check_beta(beta)
    wd1, d2 = weighted_parts(f, beta)
    return NormReport(f.sup(), holder_seminorm(f, beta, pair_budget, seed), float(beta), wd1, d2)


def holder_quotient(f: ScalarField, x, xp, beta: float) -> float:
    _check_beta(beta)
    d = float(np.hypot(x[0] - xp[0], x[1] - xp[1]))
    if d == 0.0:
        raise DomainError("holder_quotient needs distinct points")
    return abs(f.eval(x) - f.eval(xp)) / d ** beta


def write_reports(path, rows):
    """rows: iterable of (t, NormReport)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for t, rep in rows:
            w.writerow([repr(float(v)) for v in rep.row(t)])
    return path
