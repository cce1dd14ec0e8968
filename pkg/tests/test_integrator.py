import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdecert import integrator as it, model, signals as sg
from fdecert.model import HistorySegment


def steps_fixture(t):
    # method of steps for x' = -x(t - 1), x = 1 on [-1, 0]
    if t <= 1.0:
        return 1.0 - t
    return t * t / 2.0 - 2.0 * t + 1.5


def test_ode_decay(decay_rhs):
    tr = it.integrate(decay_rhs, HistorySegment.constant([1.0], 0.1), 0.0, 1.0, 0.01)
    assert abs(tr.at(1.0)[0] - math.exp(-1.0)) < 1e-6


def test_unit_delay_method_of_steps():
    rhs = model.linear_delay_rhs([[0.0]], [[-1.0]], sg.constant_delay(1.0))
    tr = it.integrate(rhs, HistorySegment.constant([1.0], 1.0), 0.0, 2.0, 1e-3)
    assert abs(tr.at(1.0)[0] - 0.0) < 1e-4
    assert abs(tr.at(2.0)[0] + 0.5) < 1e-4
    ts = np.linspace(0.0, 2.0, 41)
    assert np.max(np.abs([tr.at(t)[0] - steps_fixture(t) for t in ts])) < 1e-9


def test_zero_rhs_keeps_initial_value():
    phi = HistorySegment.from_function(lambda th: [np.sin(5 * th) + 2.0, th], 1.0)
    tr = it.integrate(model.zero_rhs(2, 1.0), phi, 0.0, 3.0, 0.01)
    assert np.all(tr.xs == phi.eval(0.0))


def test_zero_history_stays_zero(tv_rhs):
    tr = it.integrate(tv_rhs, HistorySegment.zeros(1, 0.5), 0.0, 5.0, 0.01)
    assert np.all(tr.xs == 0.0)


def test_bitwise_determinism(tv_rhs):
    phi = model.sample_segment(1, 0.5, 1.0, model.sample_rng(1, 2))
    a = it.integrate(tv_rhs, phi, 0.0, 5.0, 0.01)
    b = it.integrate(tv_rhs, phi, 0.0, 5.0, 0.01)
    assert np.array_equal(a.xs, b.xs)


def test_batch_matches_single_runs(tv_rhs):
    phis = [model.sample_segment(1, 0.5, 1.0, model.sample_rng(3, i)) for i in range(6)]
    batch = it.integrate_batch(tv_rhs, phis, -2.0, 3.0, 0.01)
    for phi, tr in zip(phis, batch):
        assert np.array_equal(tr.xs, it.integrate(tv_rhs, phi, -2.0, 3.0, 0.01).xs)


def test_blowup_is_flagged(growth_rhs):
    tr = it.integrate(growth_rhs, HistorySegment.constant([1.0], 0.1), 0.0, 40.0, 0.01)
    assert tr.blowup
    assert tr.blowup_time == pytest.approx(math.log(1e9), abs=0.02)
    assert np.all(np.isfinite(tr.xs))


def test_blowup_member_does_not_disturb_others(growth_rhs):
    phis = [HistorySegment.constant([1.0], 0.1), HistorySegment.zeros(1, 0.1)]
    a, b = it.integrate_batch(growth_rhs, phis, 0.0, 30.0, 0.01)
    assert a.blowup and not b.blowup
    assert np.all(b.xs == 0.0) and b.n_steps == 3000


@pytest.mark.parametrize("kwargs, match", [
    ({"h": 0.2}, "max_delay/4"),
    ({"h": -1.0}, "positive"),
    ({"horizon": -1.0}, "exceed"),
])
def test_input_validation(decay_rhs, kwargs, match):
    args = {"t0": 0.0, "horizon": 1.0, "h": 0.01, **kwargs}
    with pytest.raises(it.IntegrationError, match=match):
        it.integrate(decay_rhs, HistorySegment.constant([1.0], 0.1), **args)


def test_short_history_rejected(tv_rhs):
    with pytest.raises(it.IntegrationError, match="span"):
        it.integrate(tv_rhs, HistorySegment.constant([1.0], 0.1), 0.0, 1.0, 0.01)


def test_ode_order_four(decay_rhs):
    phi = HistorySegment.constant([1.0], 0.1)
    res = it.convergence_study(decay_rhs, phi, 0.0, 2.0, [0.02, 0.01, 0.005],
                               exact=lambda t: np.exp(-t))
    assert all(abs(p - 4.0) < 0.5 for p in res["orders"])


def test_constant_delay_order_two():
    rhs = model.linear_delay_rhs([[-1.0]], [[-1.0]], sg.constant_delay(1.0))
    phi = HistorySegment.from_function(lambda th: np.cos(2 * th), 1.0)
    res = it.convergence_study(rhs, phi, 0.0, 3.0, [0.1, 0.05, 0.025, 0.00625])
    assert all(abs(p - 2.0) < 0.5 for p in res["orders"])


def test_step_delay_order_at_least_one():
    d = sg.random_piecewise_delay((0.1, 0.5), 0.0, 5.0, 10, seed=2)
    rhs = model.linear_delay_rhs([[-2.0]], [[1.0]], d)
    phi = HistorySegment.from_function(lambda th: np.cos(2 * th), 0.5)
    res = it.convergence_study(rhs, phi, 0.0, 3.0, [0.025, 0.0125, 0.00625, 0.0015625])
    assert all(p != "irregular" and p >= 1.0 for p in res["orders"])


def _glitched_pair(rho, seed=5):
    base = sg.random_piecewise_delay((0.1, 0.5), -1.0, 11.0, 20, seed=3)
    g = sg.random_glitches(base, rho, 10, 0.0, 10.0, seed=seed)
    return (model.linear_delay_rhs([[-2.0]], [[1.0]], g),
            model.linear_delay_rhs([[-2.0]], [[1.0]], g.representative))


PHI = HistorySegment.from_function(lambda th: np.cos(3 * th) + 0.5, 0.5)


def test_identical_systems_deviate_by_zero(tv_rhs):
    res = it.ae_equivalence_deviation(tv_rhs, tv_rhs, PHI, 0.0, 5.0, 0.01)
    assert res["deviation"] == 0.0


def test_glitch_deviation_small():
    a, b = _glitched_pair(1e-3)
    res = it.ae_equivalence_deviation(a, b, PHI, 0.0, 10.0, 1e-3)
    assert res["deviation"] <= 10.0 * (1e-3 + 1e-3)
    assert res["deviation"] <= res["bound"]


def test_halving_rho_and_h_shrinks_deviation():
    a, b = _glitched_pair(2e-3)
    big = it.ae_equivalence_deviation(a, b, PHI, 0.0, 10.0, 2e-3)["deviation"]
    a, b = _glitched_pair(1e-3)
    small = it.ae_equivalence_deviation(a, b, PHI, 0.0, 10.0, 1e-3)["deviation"]
    assert big / small >= 1.5


def test_jump_on_mesh_node_uses_left_limit():
    # x' = r(t) - 0.2 with a jump at t = 0.5 that sits on the mesh: x(1) = 0.1 * 0.5 exactly
    d = sg.piecewise_constant_delay([0.5], [0.3, 0.2], (0.1, 0.5))
    rhs = model.CaratheodoryRHS(1, 0.5, lambda t, s: np.full_like(s.eval(0.0), d.eval(t) - 0.2),
                                lambda x: 1.0, jumps=d.jumps)
    tr = it.integrate(rhs, HistorySegment.zeros(1, 0.5), 0.0, 1.0, 0.1)
    assert tr.at(1.0)[0] == pytest.approx(0.05, abs=1e-14)


def test_jump_inside_step_is_resolved():
    d = sg.piecewise_constant_delay([0.537], [0.3, 0.2], (0.1, 0.5))
    rhs = model.CaratheodoryRHS(1, 0.5, lambda t, s: np.full_like(s.eval(0.0), d.eval(t) - 0.2),
                                lambda x: 1.0, jumps=d.jumps)
    tr = it.integrate(rhs, HistorySegment.zeros(1, 0.5), 0.0, 1.0, 0.1)
    assert tr.at(1.0)[0] == pytest.approx(0.1 * 0.537, abs=1e-14)


def test_trajectory_lipschitz_bound(tv_rhs):
    phi = model.sample_segment(1, 0.5, 1.0, model.sample_rng(0, 0))
    tr = it.integrate(tv_rhs, phi, 0.0, 5.0, 0.01)
    c = tv_rhs.c_bound(1.0)
    xs = tr.xs[:, 0]
    lags = int(round(0.5 / 0.01))
    for k in range(1, lags + 1):
        assert np.all(np.abs(xs[k:] - xs[:-k]) <= c * k * 0.01 + 1e-6)


def test_window_sup_includes_history():
    rhs = model.linear_delay_rhs([[-1.0]], [[0.0]], sg.constant_delay(1.0))
    phi = HistorySegment([-1.0, -0.5, 0.0], [[0.0], [5.0], [1.0]])
    tr = it.integrate(rhs, phi, 0.0, 3.0, 0.01)
    ws = tr.window_sup()
    assert ws[0] == 5.0
    assert ws[40] == 5.0  # theta = -0.5 still inside the window at t = 0.4
    assert ws[-1] == pytest.approx(math.exp(-2.0), rel=1e-8)


def test_table_export(tmp_path, decay_rhs):
    tr = it.integrate(decay_rhs, HistorySegment.constant([1.0], 0.1), 0.0, 0.5, 0.01)
    path = tmp_path / "traj.csv"
    tr.to_table(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["time", "x1"]
    t, x = (float(v) for v in rows[-1])
    assert t == tr.times[-1] and x == tr.xs[-1, 0]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), k=st.floats(-3.0, 3.0))
def test_linearity_in_history(seed, k):
    d = sg.random_piecewise_delay((0.1, 0.5), 0.0, 3.0, 5, seed=seed)
    rhs = model.linear_delay_rhs([[-2.0]], [[1.0]], d)
    phi = model.sample_segment(1, 0.5, 1.0, model.sample_rng(seed, 0))
    a = it.integrate(rhs, phi, 0.0, 2.0, 0.01)
    b = it.integrate(rhs, phi.scaled(k), 0.0, 2.0, 0.01)
    assert np.allclose(b.xs, k * a.xs, rtol=1e-12, atol=1e-14)
