import warnings

import numpy as np
import pytest
from scipy.interpolate import RectBivariateSpline
from scipy.special import gamma

from artifact import flow, presets
from artifact import transport_solver as ts
from artifact.errors import CFLError, ConfigError, FitRefused, SupportError
from artifact.geometry_field import ScalarField


@pytest.fixture(scope="module")
def small():
    return presets.canonical_field(48)


def offwall(p, q):
    return presets.bump(p, q, (0.75, 0.0), 0.25)


def spectral_reference(f, alpha, T, L=8.0, M=512, nsteps=20):
    """Pseudo-spectral full-plane evolution of the odd extension (periodic box, RK4)."""
    x = (np.arange(M) - M // 2) * (L / M)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    th = np.sign(X1) * f(np.abs(X1), X2)
    k = 2 * np.pi * np.fft.fftfreq(M, L / M)
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    kk = np.hypot(K1, K2)
    kk[0, 0] = 1
    # kernel z_perp |z|^-(2+a) = -(1/a) grad_perp |z|^-a, Fourier transform of |z|^-a
    S = 2 ** (2 - alpha) * np.pi * gamma(1 - alpha / 2) / gamma(alpha / 2) * kk ** (alpha - 2) / alpha
    S[0, 0] = 0

    def rhs(v):
        V = np.fft.fft2(v)
        u1 = np.real(np.fft.ifft2(1j * K2 * S * V))
        u2 = np.real(np.fft.ifft2(-1j * K1 * S * V))
        d1 = np.real(np.fft.ifft2(1j * K1 * V))
        d2 = np.real(np.fft.ifft2(1j * K2 * V))
        return -(u1 * d1 + u2 * d2)

    h = T / nsteps
    for _ in range(nsteps):
        k1 = rhs(th)
        k2 = rhs(th + h / 2 * k1)
        k3 = rhs(th + h / 2 * k2)
        k4 = rhs(th + h * k3)
        th = th + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return RectBivariateSpline(x, x, th)


def test_zero_data(grid64):
    states = ts.simulate(ScalarField.zeros(grid64), 0.5, 0.5, 0.1, 0.05)
    for s in states:
        assert not np.any(s.theta.values)
        assert s.norm_beta.x_beta_norm == 0.0 and s.monitor.d2_sup == 0.0


def test_range_preserved_exactly():
    small = ScalarField.from_function(presets.canonical_grid(48), offwall, 1.0)
    lo, hi = small.values.min(), small.values.max()
    dt = 0.002
    states = ts.simulate(small, 0.5, 0.5, 100 * dt, dt, diag_every=50)
    assert len(states) == 101
    for s in states:
        assert s.theta.values.min() >= lo and s.theta.values.max() <= hi
    assert {s.theta.sup() for s in states} == {small.sup()}
    assert states[-1].support <= small.support_radius + 100 * dt * max(s.u_sup for s in states) + 0.1


def test_translation_accuracy():
    errs = []
    for n in (48, 96):
        g = presets.canonical_grid(n)
        th = ScalarField.from_function(g, lambda a, b: presets.gaussian(a, b, (0.5, -0.1), 0.12), 1.0)
        v, _ = ts.advect(th, flow.ConstantVelocity(0.0, 1.0), 0.0, 0.1, -1, 2)
        X1, X2 = g.mesh()
        errs.append(ts.l2_norm(g, v - presets.gaussian(X1, X2 - 0.1, (0.5, -0.1), 0.12)))
    # 1.81e-4 and 1.78e-5 when frozen
    assert errs[1] < 3e-5 and errs[0] / errs[1] > 8


def test_matches_full_plane_reference():
    ref = spectral_reference(offwall, 0.5, 0.05)
    d = []
    for n in (64, 96):
        th0 = ScalarField.from_function(presets.canonical_grid(n), offwall, 1.0)
        st = ts.simulate(th0, 0.5, 0.5, 0.05, None, diag_every=10 ** 9)
        g = th0.grid
        d.append(ts.l2_norm(g, st[-1].theta.values - ref(g.x1, g.x2)))
    # 3.7e-3 and 1.8e-3 when frozen
    assert d[1] < 2.5e-3 and d[1] < d[0]


def test_cfl_error(small):
    s0 = ts.simulate(small, 0.5, 0.5, 0.0, None)[0]
    with pytest.raises(CFLError) as e:
        ts.step(s0, 1.0, 0.5, lo=0, hi=1)
    assert 0 < e.value.suggested_dt < 1.0


def test_support_exit(grid64):
    edge = presets.make_field("bump", grid64, {"c": (1.0, 0.0), "r": 0.2}, support_radius=1.25)
    with pytest.raises(SupportError):
        ts._check_support(edge)


def test_window():
    ts.validate_window(0.5, 0.5, True)
    with pytest.raises(ConfigError):
        ts.validate_window(0.75, 0.5, True)
    with pytest.warns(RuntimeWarning):
        ts.validate_window(0.75, 0.5, False)
    with pytest.raises(ConfigError):
        ts.validate_window(0.25, 0.8, True)


def test_unknown_scheme(small):
    s0 = ts.simulate(small, 0.5, 0.5, 0.0, None)[0]
    with pytest.raises(ConfigError):
        ts.step(s0, 1e-3, 0.5, lo=0, hi=1, scheme="rk3")


def test_default_T(small):
    n = ts.weighted_x_norm(small, 0.5).x_beta_norm
    assert ts.default_T(small, 0.5) == pytest.approx(0.5 / n)


def test_picard_zero(grid64):
    rec, _ = ts.picard(ScalarField.zeros(grid64), 0.5, 0.5, 0.05, 0.01, 3)
    assert [r.l2_diff for r in rec] == [0.0] * 4
    with pytest.raises(ConfigError):
        ts.picard(ScalarField.zeros(grid64), 0.5, 0.5, 0.05, 0.01, 2)


def test_picard_first_difference_linear_in_T(small):
    Ts = [1 / 64, 1 / 128, 1 / 256]
    dt = 0.9 * ts.stable_dt(small, 0.5)
    d0 = [ts.picard(small, 0.5, 0.5, T, min(T / 4, dt), 3)[0][0].l2_diff for T in Ts]
    assert abs(np.polyfit(np.log(Ts), np.log(d0), 1)[0] - 1) < 0.1


def test_picard_contracts(small):
    T = 0.1 / ts.weighted_x_norm(small, 0.5).x_beta_norm
    dt = min(T / 4, 0.8 * ts.stable_dt(small, 0.5))
    rec, _ = ts.picard(small, 0.5, 0.5, T, dt, 4)
    r = [rec[k + 1].l2_diff / rec[k].l2_diff for k in range(1, 4)]
    assert max(r) <= 0.6


def test_blowup_fit_synthetic():
    t = np.linspace(0, 0.9, 30)
    hist = [ts.BlowupMonitor(x, (1 - x) ** -0.5, 0.0) for x in t]
    eta, T, res = ts.blowup_fit(hist)
    assert abs(eta - 0.5) < 1e-3 and abs(T - 1) < 1e-3 and res < 1e-8


def test_blowup_fit_refusals():
    flat = [ts.BlowupMonitor(x, 1.0, 0.0) for x in np.linspace(0, 1, 10)]
    with pytest.raises(FitRefused):
        ts.blowup_fit(flat)
    few = [ts.BlowupMonitor(x, 1 + x, 0.0) for x in (0.1, 0.2, 0.3)]
    with pytest.raises(FitRefused):
        ts.blowup_fit(few)


def test_writers(tmp_path, small):
    states = ts.simulate(small, 0.5, 0.5, 0.004, None)
    h = ts.write_norm_history(tmp_path / "n.csv", states).read_text().splitlines()
    m = ts.write_monitor(tmp_path / "m.csv", states).read_text().splitlines()
    assert h[0] == "t,sup,holder,wd1,d2,xbeta" and len(h) == len(states) + 1
    assert m[0].startswith("t,d2_sup,wd1_alpha")
    rec = [ts.PicardRecord(0, 1.0, 2.0)]
    assert ts.write_picard(tmp_path / "p.csv", rec).read_text().splitlines()[0] == "n,l2_diff,x_beta"


def test_time_modulus(small, grid64):
    st = ts.simulate(small, 0.5, 0.5, 0.016, 0.002, diag_every=10 ** 9)
    rows = ts.time_modulus(st, 0.25, lags=(1, 2, 4))
    assert [r[0] for r in rows] == pytest.approx([0.002, 0.004, 0.008])
    vals = [r[1] for r in rows]
    assert vals[0] > 0 and vals[0] < vals[1] < vals[2]
    zero = ts.simulate(ScalarField(grid64, np.zeros(grid64.shape), 1.0), 0.5, 0.5, 0.01, 0.005)
    assert all(v == 0 for _, v in ts.time_modulus(zero, 0.25))
