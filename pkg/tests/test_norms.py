import numpy as np
import pytest

from artifact import norms, presets
from artifact.errors import DomainError
from artifact.geometry_field import Grid, ScalarField

W = 0.1


def gauss(a, b):
    return np.exp(-((a - 0.5) ** 2 + b ** 2) / (2 * W * W))


def chi(b):
    return presets.smooth_step((np.abs(b) - 0.5) / 0.4)


def field(grid, f):
    return ScalarField.from_function(grid, f, 10.0)


def test_constant_is_zero(grid64):
    assert norms.holder_seminorm(field(grid64, lambda a, b: 3 + 0 * a), 0.5) == 0.0


def test_linear_x2_lipschitz(grid64):
    assert norms.holder_seminorm(field(grid64, lambda a, b: b), 1.0) == pytest.approx(1.0, abs=1e-12)


def test_sqrt_found_by_wall_pairs(grid64):
    f = field(grid64, lambda a, b: np.sqrt(a))
    assert norms.holder_seminorm(f, 0.5) == pytest.approx(1.0, abs=1e-12)
    # the anchored pairs alone reach it
    X1, X2 = grid64.mesh()
    ia, ib = norms.sample_pairs(grid64)
    n_anchor = sum(len(range(max(0, -m), min(64, 64 - m))) for m in range(-4, 5)) * 8
    q = norms._pair_quotients(f.values, X1, X2, ia[-n_anchor:], ib[-n_anchor:], 0.5)
    assert q.max() == pytest.approx(1.0, abs=1e-12)


def test_budget_floor(grid64):
    with pytest.raises(DomainError):
        norms.sample_pairs(grid64, pair_budget=100)
    with pytest.raises(DomainError):
        norms.holder_seminorm(field(grid64, lambda a, b: a), 0.0)


def test_monotone_in_beta_and_budget(canonical64):
    # canonical box has pair distances up to ~3, so restrict to a unit box
    g = Grid(48, 48, 0.6, -0.3, 0.3)
    f = field(g, lambda a, b: np.sin(5 * a) * np.cos(4 * b))
    vals = [norms.holder_seminorm(f, b) for b in (0.25, 0.5, 0.75, 1.0)]
    assert np.all(np.diff(vals) >= 0)
    small = norms.holder_seminorm(canonical64, 0.5, 10_000)
    big = norms.holder_seminorm(canonical64, 0.5, 40_000)
    assert big >= small


def test_scaling(canonical64):
    a = norms.holder_seminorm(canonical64, 0.5)
    b = norms.holder_seminorm(canonical64.scaled(-2.0), 0.5)
    assert b == 2.0 * a


def test_weighted_d1_gaussian():
    g = Grid.for_support(1.0, 128, 128)
    f = field(g, gauss)
    X1, X2 = g.mesh()
    exact = np.max(X1 ** 0.5 * np.abs((X1 - 0.5) / W ** 2 * gauss(X1, X2)))
    rep = norms.weighted_x_norm(f, 0.5)
    assert rep.weighted_d1 == pytest.approx(exact, rel=2e-3)
    assert rep.d2_sup == pytest.approx(np.exp(-0.5) / W, rel=1e-2)


def test_weighted_d1_power_cancels():
    g = Grid.for_support(1.0, 65, 65)
    f = field(g, lambda a, b: np.sqrt(a) * chi(b))
    assert norms.weighted_parts(f, 0.5)[0] == pytest.approx(0.5, abs=1e-5)


def test_weighted_d1_diverges_at_rate():
    hs, wd = [], []
    for n in (33, 65, 129, 257):
        g = Grid.for_support(1.0, n, n)
        hs.append(g.h1_min)
        wd.append(norms.weighted_parts(field(g, lambda a, b: a ** 0.25 * chi(b)), 0.5)[0])
    slope = np.polyfit(np.log(hs), np.log(wd), 1)[0]
    assert abs(slope - (0.25 - 0.5)) < 0.1


def test_report_sums(canonical64):
    r = norms.weighted_x_norm(canonical64, 0.5)
    assert r.x_beta_norm == r.sup_norm + r.holder_seminorm_lb + r.weighted_d1 + r.d2_sup
    assert min(r.row(0.0)) >= 0


def test_holder_quotient(grid64, canonical64):
    assert norms.holder_quotient(field(grid64, lambda a, b: 1 + 0 * a), (0.1, 0), (0.2, 0), 0.5) == 0
    assert norms.holder_quotient(field(grid64, lambda a, b: b), (1, 0), (1, 1), 1.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        norms.holder_quotient(canonical64, (0.1, 0.1), (0.1, 0.1), 0.5)


def test_holder_quotient_ramped_probe():
    # ell = 8, gamma = 0.4, anchor (0, 0): x = (1/8, -8^-0.6)
    g = Grid.for_support(1.0, 96, 128, stretch=0.08)
    th = presets.make_field("ramped", g)
    x0, x = (0.0, 0.0), (0.125, -8 ** -0.6)
    d = np.hypot(0.125, 8 ** -0.6)
    exact = abs(presets.ramped(*x0) - presets.ramped(*x)) / d ** 0.75
    assert norms.holder_quotient(th, x0, x, 0.75) == pytest.approx(float(exact), rel=1e-5)


def test_csv(tmp_path, canonical64):
    r = norms.weighted_x_norm(canonical64, 0.5)
    p = norms.write_reports(tmp_path / "n.csv", [(0.0, r), (0.1, r)])
    lines = p.read_text().splitlines()
    assert lines[0] == "t,sup,holder,wd1,d2,xbeta" and len(lines) == 3
