import numpy as np
import pytest

from artifact import biot_savart as bs
from artifact import flow, presets
from artifact.errors import DomainError, UnsupportedModeError
from artifact.geometry_field import HalfPlanePoint


def rotation(c=(1.0, 0.0)):
    return flow.FunctionVelocity(lambda t, a, b: (-(b - c[1]), a - c[0]))


@pytest.fixture(scope="module")
def frozen():
    th = presets.canonical_field(64)
    return flow.GridVelocity(th.grid, *bs.velocity_grid(th, 0.5))


def test_zero_velocity_identity():
    tr = flow.integrate_flow(flow.ConstantVelocity(), (0.3, 0.4), 0, 1, 0.1)
    assert np.all(tr.positions == [0.3, 0.4])
    assert flow.inverse_flow_foot(flow.ConstantVelocity(), (0.3, 0.4), 1.0, 0.1) == \
        HalfPlanePoint(0.3, 0.4)


def test_constant_translation():
    u = flow.ConstantVelocity(0.0, 1.0)
    tr = flow.integrate_flow(u, (0.3, 0.4), 0, 0.7, 0.05)
    np.testing.assert_allclose(tr.positions[:, 1], 0.4 + tr.times, atol=1e-14)
    foot = flow.inverse_flow_foot(u, (0.3, 0.4), 0.7, 0.05)
    assert foot.x1 == 0.3 and foot.x2 == pytest.approx(0.4 - 0.7, abs=1e-14)


def test_rotation_fourth_order():
    dts = [1 / 64, 1 / 128, 1 / 256, 1 / 512]
    errs = []
    for dt in dts:
        tr = flow.integrate_flow(rotation(), (1.5, 0.2), 0, 2 * np.pi, dt)
        errs.append(np.hypot(*(tr.positions[-1] - [1.5, 0.2])))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 4) < 0.3


def test_round_trip(frozen):
    rng = np.random.default_rng(5)
    seeds = np.column_stack([rng.uniform(0.05, 0.8, 50), rng.uniform(-0.8, 0.8, 50)])
    _, pos, _, ev = flow.integrate_many(frozen, seeds, 0, 0.1, 1 / 256)
    _, back, _, _ = flow.integrate_many(frozen, pos[-1], 0.1, 0, 1 / 256)
    assert not ev
    assert np.max(np.abs(back[-1] - seeds)) < 1e-6


def test_group_property(frozen):
    a = flow.integrate_flow(frozen, (0.2, 0.1), 0, 0.05, 1 / 256).final
    b = flow.integrate_flow(frozen, tuple(a), 0.05, 0.1, 1 / 256).final
    c = flow.integrate_flow(frozen, (0.2, 0.1), 0, 0.1, 1 / 256).final
    assert np.hypot(b.x1 - c.x1, b.x2 - c.x2) < 1e-10


def test_displacement_bounded(frozen):
    tr = flow.integrate_flow(frozen, (0.1, -0.2), 0, 0.1, 1 / 128)
    step = np.hypot(*np.diff(tr.positions, axis=0).T)
    assert np.all(step <= frozen.sup() * (1 / 128) * (1 + 1e-6))
    assert np.all(tr.positions[:, 0] >= 0)


def test_boundary_seed_stays_on_wall(frozen):
    tr = flow.integrate_flow(frozen, (0.0, 0.2), 0, 0.1, 1 / 128)
    assert np.all(tr.positions[:, 0] == 0.0) and not tr.clamp_events
    with pytest.raises(UnsupportedModeError):
        flow.integrate_flow(frozen, (0.0, 0.2), 0, 0.1, 1 / 128, log_lipschitz=True)


def test_clamps_recorded():
    wall = flow.FunctionVelocity(lambda t, a, b: (-1.0 + 0 * a, 0 * a))
    tr = flow.integrate_flow(wall, (0.05, 0.0), 0, 1.0, 0.04)
    # the wall is invariant once reached, so a single clamp
    assert tr.clamp_events == [1] and not tr.unreliable
    assert np.all(tr.positions[:, 0] >= 0)

    def push(t, a, b):          # ignores the wall condition
        return np.full(np.shape(a), -1.0), np.zeros(np.shape(a))

    tr = flow.integrate_flow(push, (0.05, 0.0), 0, 1.0, 0.04)
    assert len(tr.clamp_events) > flow.MAX_CLAMPS and tr.unreliable


def test_bad_inputs():
    with pytest.raises(DomainError):
        flow.integrate_many(flow.ConstantVelocity(), [(0.1, 0)], 0, 1, 0.0)
    with pytest.raises(DomainError):
        flow.integrate_many(flow.ConstantVelocity(), [(-0.1, 0)], 0, 1, 0.1)


def test_snapshot_linear_in_time(grid64):
    one = np.ones(grid64.shape)
    sv = flow.SnapshotVelocity(grid64, [0.0, 1.0], [0 * one, 2 * one], [one, 3 * one])
    a, b = sv(0.25, np.array([0.3]), np.array([0.1]))
    assert a[0] == pytest.approx(0.5) and b[0] == pytest.approx(1.5)


def test_live_matches_quadrature(canonical64):
    lv = flow.LiveVelocity([0.0, 1.0], [canonical64, canonical64.scaled(3.0)], 0.5)
    a, b = lv(0.5, np.array([0.01]), np.array([0.2]))
    r1, r2 = bs.velocity_points(canonical64, [0.01], [0.2], 0.5)
    assert a[0] == pytest.approx(2 * r1[0], rel=1e-12)
    assert b[0] == pytest.approx(2 * r2[0], rel=1e-12)


def test_envelope_zero_velocity():
    tr = flow.integrate_flow(flow.ConstantVelocity(), (0.3, 0.0), 0, 1, 0.1)
    assert flow.check_phi1_envelope(tr, 2.0).C == 0.0


def test_envelope_exponential():
    k, N = 0.7, 2.0
    t = np.linspace(0, 1, 11)
    pos = np.column_stack([0.2 * np.exp(k * t), np.zeros(11)])
    tr = flow.FlowTrajectory(HalfPlanePoint(0.2, 0.0), t, pos, np.zeros_like(pos))
    rep = flow.check_phi1_envelope(tr, N)
    assert rep.C_times_norm == pytest.approx(k, rel=1e-12)
    assert not rep.violations


def test_trajectory_csv(tmp_path):
    tr = flow.integrate_flow(flow.ConstantVelocity(0, 1), (0.3, 0.4), 0, 0.2, 0.1)
    lines = tr.to_csv(tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,x1,x2,u1,u2" and len(lines) == 4
