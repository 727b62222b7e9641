import math

import numpy as np
import pytest
import yaml

from artifact import inflation_experiment as ie
from artifact import presets
from artifact.errors import ConfigError, DomainError, FitRefused
from artifact.geometry_field import Grid


@pytest.fixture(scope="module")
def wall_grid():
    return Grid.for_support(1.0, 96, 128, stretch=0.08)


@pytest.fixture(scope="module")
def ramped(wall_grid):
    return presets.make_field("ramped", wall_grid)


def test_probe_points(ramped):
    cfg = ie.ProbeConfig(ell_ladder=(8.0, 100.0))
    p = ie.make_probes(ramped, cfg, 0.5)[1]
    assert p.x0 == (0.0, 0.0)
    assert p.x == pytest.approx((0.01, -100 ** -0.6), abs=1e-15)
    cfg3 = ie.ProbeConfig(ell_ladder=(8.0, 100.0), theorem3_mode=True)
    p3 = ie.make_probes(ramped, cfg3, 0.5)[1]
    assert p3.xp == pytest.approx((1e-4, -100 ** -1.6), abs=1e-15)


def test_probe_distance_identity(ramped):
    cfg = ie.ProbeConfig()
    for p in ie.make_probes(ramped, cfg, 0.5):
        x1 = p.x[0]
        assert p.separation2 == pytest.approx(x1 * x1 * (1 + p.ell ** (2 * cfg.gamma)), rel=1e-13)


@pytest.mark.parametrize("kw", [{"gamma": 0.5}, {"gamma": 0.0}, {"beta_test": 0.4},
                                {"gamma": 0.2}, {"ell_ladder": (16.0, 8.0)},
                                {"ell_ladder": (1.0, 8.0)}])
def test_config_rejections(kw):
    with pytest.raises(ConfigError):
        ie.ProbeConfig(**kw).validate(0.5)


def test_resolution_check():
    coarse = Grid.for_support(1.0, 48, 48)
    with pytest.raises(ConfigError, match="ell=16"):
        ie.ProbeConfig().validate(0.5, coarse)


def test_anchor_hypothesis(wall_grid):
    # the plateau is flat at the anchor and the vanishing data has no trace
    with pytest.raises(ConfigError, match="d2 theta0"):
        ie.make_probes(presets.make_field("canonical", wall_grid), ie.ProbeConfig(), 0.5)
    with pytest.raises(ConfigError, match="theta0"):
        ie.make_probes(presets.make_field("vanishing", wall_grid), ie.ProbeConfig(), 0.5)


def test_anchor_derivatives(ramped):
    v, d2 = ie.anchor_derivatives(ramped, 0.0)
    assert v == pytest.approx(1.0) and d2 == pytest.approx(0.25, rel=1e-8)


def test_first_crossing():
    t = np.array([0.0, 1.0, 2.0, 3.0])
    assert ie.first_crossing(t, [3.0, 2.0, -2.0, -3.0]) == pytest.approx(1.5)
    assert ie.first_crossing(t, [3.0, 2.0, 1.0, 0.5]) is None


def test_lagrangian_quotient(ramped):
    q = ie.lagrangian_quotient(ramped, (0.0, 0.0), (0.125, -0.2), (0.0, 0.1), (0.1, 0.1), 0.5)
    exact = abs(presets.ramped(0.0, 0.0) - presets.ramped(0.125, -0.2)) / 0.1 ** 0.5
    assert q == pytest.approx(float(exact), rel=1e-14)
    with pytest.raises(DomainError):
        ie.lagrangian_quotient(ramped, (0, 0), (0.1, 0), (0.1, 0.1), (0.1, 0.1), 0.5)


def _record(gap, ell=8.0):
    t = np.linspace(0, 1, len(gap))
    path0 = np.column_stack([np.zeros_like(t), np.asarray(gap, float)])
    path = np.zeros_like(path0)
    probe = ie.Probe(ell, (0.0, 0.0), (1 / ell, -0.1))
    return ie.InflationRecord(ell, probe, t, path0, path)


def test_gap_decay_zero_velocity():
    rep = ie.gap_decay_check(_record(np.full(12, 0.3)), 0.5)
    assert abs(rep.rate) < 1e-15 and abs(rep.eps_fit) < 1e-15 and rep.monotone


def test_gap_decay_linear_and_flags():
    rec = _record(0.3 - 0.2 * np.linspace(0, 1, 12))
    rep = ie.gap_decay_check(rec, 0.5)
    assert rep.rate == pytest.approx(0.2) and rep.eps_fit == pytest.approx(0.4 * 8 ** 0.5)
    bumpy = _record([0.3, 0.29, 0.295] + [0.28 - 0.01 * k for k in range(9)])
    assert not ie.gap_decay_check(bumpy, 0.5).monotone
    with pytest.raises(FitRefused):
        ie.gap_decay_check(_record([0.3, 0.2, 0.1]), 0.5)


def test_eps_linear_in_data():
    g = Grid.for_support(1.0, 48, 64, stretch=0.25)
    th = presets.make_field("ramped", g)
    cfg = ie.ProbeConfig(ell_ladder=(8.0, 16.0))
    a = ie.run_inflation(th, 0.5, cfg, T=0.02, provider="grid")
    b = ie.run_inflation(th.scaled(2.0), 0.5, cfg, T=0.02, provider="grid")
    for ra, rb in zip(a.records, b.records):
        assert rb.eps_fit / ra.eps_fit == pytest.approx(2.0, rel=0.02)
        assert ra.gap_monotone
    assert a.summary["missing_crossings"] == [8.0, 16.0]


def test_bad_provider():
    g = Grid.for_support(1.0, 48, 64, stretch=0.25)
    th = presets.make_field("ramped", g)
    with pytest.raises(ConfigError):
        ie.run_inflation(th, 0.5, ie.ProbeConfig(ell_ladder=(8.0, 16.0)), T=0.002, provider="x")


def test_predicted_slopes():
    p = ie.predicted_slopes(0.5, 0.4, 0.75)
    assert p["t_star"] == pytest.approx(-0.1) and p["quotient"] == pytest.approx(0.15)
    assert p["gap_rate"] == pytest.approx(-0.5)


def test_fit_slope_interval():
    x = np.array([8.0, 16, 32, 64, 128])
    f = ie.fit_slope(x, 2 * x ** 0.15)
    assert f["slope"] == pytest.approx(0.15) and f["ci"][1] - f["ci"][0] < 1e-12
    assert ie.fit_slope(x[:2], x[:2]) is None
    noisy = ie.fit_slope(x, x ** 0.15 * np.array([1, 1.1, 0.9, 1.05, 1.0]))
    assert noisy["ci"][0] < noisy["slope"] < noisy["ci"][1]


def test_outputs(tmp_path):
    g = Grid.for_support(1.0, 48, 64, stretch=0.25)
    th = presets.make_field("ramped", g)
    run = ie.run_inflation(th, 0.5, ie.ProbeConfig(ell_ladder=(8.0, 16.0)), T=0.004,
                           provider="grid")
    ie.write_outputs(run, tmp_path, svg=True)
    head = (tmp_path / "inflation.csv").read_text().splitlines()[0]
    assert head == "ell,gamma,beta,t_star,quotient,eps_fit"
    assert (tmp_path / "gap_ell8.csv").read_text().startswith("t,gap")
    summary = yaml.safe_load((tmp_path / "inflation_summary.yaml").read_text())
    assert summary["predicted"]["quotient"] == pytest.approx(0.15)
    pytest.importorskip("matplotlib")
    assert (tmp_path / "quotient_vs_ell.svg").exists()


def test_config_roundtrip():
    cfg = ie.ProbeConfig(gamma=0.35, ell_ladder=(8, 16, 32))
    assert ie.ProbeConfig.from_dict(cfg.to_dict()) == cfg
