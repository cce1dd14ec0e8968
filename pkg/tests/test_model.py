import dataclasses
import itertools
import math

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from fdecert import model, signals as sg
from fdecert.model import HistorySegment, ModelError


def seg_from(fn, span, n=2001):
    return HistorySegment.from_function(fn, span, n)


def test_linear_rhs_value():
    d = sg.constant_delay(0.5)
    rhs = model.linear_delay_rhs([[-2.0]], [[1.0]], d)
    phi = HistorySegment([-0.5, -0.25, 0.0], [[3.0], [2.0], [1.0]])
    assert rhs(0.0, phi)[0] == 1.0


def test_linear_rhs_without_delay_term_is_ode():
    d = sg.random_piecewise_delay((0.1, 0.5), 0.0, 5.0, 5, seed=0)
    rhs = model.linear_delay_rhs([[-2.0, 1.0], [0.0, -1.0]], np.zeros((2, 2)), d)
    phi = seg_from(lambda th: [np.sin(th), th * th], 0.5)
    assert np.allclose(rhs(1.3, phi), np.array([[-2.0, 1.0], [0.0, -1.0]]) @ phi.eval(0.0))


def test_linear_rhs_bound_value():
    rhs = model.linear_delay_rhs([[-2.0]], [[1.0]], sg.constant_delay(0.5))
    assert rhs.c_bound(1.0) == 3.0


def test_dimension_mismatch():
    with pytest.raises(ModelError):
        model.linear_delay_rhs([[-2.0]], np.eye(2), sg.constant_delay(0.5))


def test_stieltjes_examples():
    d = sg.constant_delay(0.5)
    rhs = model.stieltjes_rhs([[0.0]], [[1.0]], d)
    phi = seg_from(lambda th: th + 1.0, 0.5)
    assert rhs(0.0, phi)[0] == pytest.approx(0.5)


def test_stieltjes_zero_delay():
    d = sg.DelaySignal(0.0, 0.5, lambda t: 0.0 if np.ndim(t) == 0 else np.zeros(np.shape(t)))
    A1, A2 = np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([[0.5, 0.0], [1.0, -1.0]])
    phi = seg_from(lambda th: [1.0 + th, 2.0], 0.5)
    out = model.stieltjes_rhs(A1, A2, d)(0.0, phi)
    assert np.allclose(out, (A1 + A2) @ phi.eval(0.0))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(-20.0, 20.0))
def test_stieltjes_equals_pointwise_bitwise(seed, t):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    A1, A2 = rng.normal(size=(n, n)), rng.normal(size=(n, n))
    base = sg.random_piecewise_delay((0.1, 0.5), -20.0, 20.0, 10, seed=seed)
    d = sg.random_glitches(base, 1e-2, 5, -20.0, 20.0, seed=seed)
    phi = model.sample_segment(n, 0.5, 5.0, rng)
    a = model.linear_delay_rhs(A1, A2, d)(t, phi)
    b = model.stieltjes_rhs(A1, A2, d)(t, phi)
    assert np.array_equal(a, b)


def test_distributed_constant_kernel():
    rhs = model.distributed_delay_rhs([[0.0]], model.constant_kernel([[1.0]]),
                                      delay=sg.constant_delay(1.0))
    phi = HistorySegment.constant([1.0], 1.0)
    assert rhs(0.0, phi)[0] == pytest.approx(1.0, abs=1e-12)


def test_distributed_zero_kernels():
    A1 = np.array([[-1.0, 2.0], [0.5, -3.0]])
    rhs = model.distributed_delay_rhs(A1, model.zero_kernel(2, 2), delay=sg.constant_delay(1.0))
    phi = seg_from(lambda th: [np.cos(th), 1.0 + th], 1.0)
    assert np.allclose(rhs(0.0, phi), A1 @ phi.eval(0.0))


def test_distributed_exponential_kernel():
    rhs = model.distributed_delay_rhs([[0.0]], model.exponential_kernel([[1.0]], 1.0),
                                      delay=sg.constant_delay(1.0))
    phi = seg_from(lambda th: 1.0, 1.0, 2001)
    assert rhs(0.0, phi)[0] == pytest.approx(1.0 - math.exp(-1.0), abs=1e-6)


def test_distributed_quadrature_is_second_order():
    rhs = model.distributed_delay_rhs([[0.0]], model.exponential_kernel([[1.0]], 1.0),
                                      delay=sg.constant_delay(1.0))
    # int_{-1}^0 e^tau cos(tau) dtau = (e^tau (sin tau + cos tau) / 2) from -1 to 0
    exact = 0.5 - math.exp(-1.0) * (math.sin(-1.0) + math.cos(-1.0)) / 2.0
    errs = [abs(rhs(0.0, seg_from(np.cos, 1.0, m))[0] - exact) for m in (21, 41, 81)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(3.5 < r < 4.5 for r in ratios)


def test_output_map_examples():
    out = model.output_map([[1.0]])
    assert out(0.0, HistorySegment.constant([2.0], 1.0))[0] == 2.0
    zero = model.output_map([[0.0]])
    assert zero(0.0, HistorySegment.constant([2.0], 1.0))[0] == 0.0
    integral = model.output_map([[0.0]], model.constant_kernel([[1.0]]), delay=sg.constant_delay(1.0))
    assert integral(0.0, HistorySegment.constant([1.0], 1.0))[0] == pytest.approx(1.0)


def test_disturbance_enters_state_equation():
    w = sg.decaying_exponential(2.0, 1.0)
    rhs = model.distributed_delay_rhs([[-1.0]], model.zero_kernel(1, 1), D1=[[1.0]],
                                      delay=sg.constant_delay(0.1), w=w)
    assert rhs(0.0, HistorySegment.constant([1.0], 0.1))[0] == pytest.approx(1.0)
    assert rhs.c_bound(1.0) == pytest.approx(1.0 + 2.0)


def shipped_rhs():
    d = sg.random_piecewise_delay((0.1, 0.5), -20.0, 20.0, 10, seed=3)
    g = sg.random_glitches(d, 1e-2, 4, -20.0, 20.0, seed=3)
    return {
        "linear": model.linear_delay_rhs([[-2.0]], [[1.0]], d),
        "linear2": model.linear_delay_rhs(np.eye(2) * -3, np.ones((2, 2)), g),
        "stieltjes": model.stieltjes_rhs([[-2.0]], [[1.0]], g),
        "distributed": model.distributed_delay_rhs(
            [[-2.0]], model.exponential_kernel([[1.0]], 2.0), delay=d),
        "zero": model.zero_rhs(1, 0.5),
    }


@pytest.mark.parametrize("name", sorted(shipped_rhs()))
def test_equilibrium(name):
    rhs = shipped_rhs()[name]
    phi = HistorySegment.zeros(rhs.dim, rhs.max_delay)
    for t in np.random.default_rng(0).uniform(-20, 20, 1000):
        assert np.all(rhs(t, phi) == 0.0)


def test_bound_check_passes_and_matches_vertex_oracle():
    rhs = model.linear_delay_rhs([[-2.0]], [[1.0]], sg.constant_delay(0.3))
    res = model.verify_caratheodory_bound(rhs, 1.0, 1000, seed=0)
    assert res.passed and res.max_ratio <= 1.0
    # vertex segments phi in {-1, +1}^2 at (phi(0), phi(-r)) realize the sup
    vertex = max(abs(-2 * a + b) for a, b in itertools.product((-1.0, 1.0), repeat=2))
    assert vertex / rhs.c_bound(1.0) == 1.0
    assert res.max_ratio < vertex / rhs.c_bound(1.0)


def test_bound_check_finds_understated_bound():
    rhs = model.linear_delay_rhs([[-2.0]], [[1.0]], sg.constant_delay(0.3))
    weak = dataclasses.replace(rhs, c_bound=lambda d: d / 10.0)
    res = model.verify_caratheodory_bound(weak, 1.0, 1000, seed=0)
    assert res.status == "counterexample"
    ce = res.counterexample
    t, phi = model.replay_bound_sample(weak, 1.0, ce["seed"], ce["index"])
    assert t == ce["t"]
    assert float(np.sum(np.abs(weak(t, phi)))) == ce["norm"]
    # the hand-made witness phi = 0.99 delta also violates
    assert abs(weak(0.0, HistorySegment.constant([0.99], 0.3))[0]) > 0.1


def test_bound_check_zero_rhs():
    assert model.verify_caratheodory_bound(model.zero_rhs(2, 0.5), 1.0, 200).passed


def test_lipschitz_probe_linear():
    rhs = model.linear_delay_rhs([[-2.0]], [[1.0]], sg.constant_delay(0.3))
    res = model.lipschitz_probe(rhs, 1.0, 1000, seed=0)
    assert res["estimate"] <= 3.0 + 1e-9
    assert res["within_hint"]


def test_lipschitz_probe_zero_and_scaling():
    assert model.lipschitz_probe(model.zero_rhs(1, 0.3), 1.0, 200)["estimate"] == 0.0
    rhs = model.linear_delay_rhs([[-2.0]], [[1.0]], sg.constant_delay(0.3))
    a = model.lipschitz_probe(rhs, 1.0, 300, seed=5)["estimate"]
    b = model.lipschitz_probe(rhs.scaled(10.0), 1.0, 300, seed=5)["estimate"]
    assert b == pytest.approx(10.0 * a, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**63), dim=st.integers(1, 4), radius=st.floats(1e-3, 1e3),
       span=st.floats(0.0, 5.0))
@example(seed=0, dim=1, radius=1.0, span=5e-324)
def test_sampled_segments_stay_in_ball(seed, dim, radius, span):
    phi = model.sample_segment(dim, span, radius, model.sample_rng(seed, 0))
    assert phi.sup_norm() < radius
    assert phi.span == pytest.approx(span)


def test_sampling_is_replayable():
    a = model.sample_segment(3, 1.0, 2.0, model.sample_rng(9, 17, 4))
    b = model.sample_segment(3, 1.0, 2.0, model.sample_rng(9, 17, 4))
    assert np.array_equal(a.values, b.values)


def test_segment_eval_and_errors():
    phi = HistorySegment([-1.0, 0.0], [[0.0], [2.0]])
    assert phi.eval(-0.25)[0] == pytest.approx(1.5)
    with pytest.raises(ModelError):
        phi.eval(-1.5)
    with pytest.raises(ModelError):
        HistorySegment([-1.0, -0.5], [[0.0], [1.0]])
