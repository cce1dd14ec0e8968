import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as spi

from fdecert import comparison as cf, integrator as it, model, signals as sg
from fdecert.functionals import (FunctionalError, QuadraticFunctional, decrease_check,
                                 eval_functional, jacobi_eigenvalues, sandwich_bounds,
                                 window_ladder)
from fdecert.model import HistorySegment


def test_eval_examples():
    V = QuadraticFunctional([[1.0]], [[1.0]], 1.0)
    assert eval_functional(V, HistorySegment.constant([1.0], 1.0)) == pytest.approx(2.0)
    assert eval_functional(V, HistorySegment.zeros(1, 1.0)) == 0.0
    W = QuadraticFunctional([[1.0]], [[0.0]], 0.5)
    assert eval_functional(W, HistorySegment([-0.5, 0.0], [[7.0], [3.0]])) == 9.0


def test_eval_against_quadrature_oracle():
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    Q = np.array([[1.0, 0.2], [0.2, 0.5]])
    R = np.array([[0.3, 0.0], [0.0, 0.7]])
    r = 0.8
    V = QuadraticFunctional(P, Q, r, R)
    fn = lambda th: np.array([np.cos(2 * th), 1.0 + th])
    seg = HistorySegment.from_function(fn, r, 4001)
    x0 = fn(0.0)
    qq, _ = spi.quad(lambda th: fn(th) @ Q @ fn(th), -r, 0.0)
    rr, _ = spi.dblquad(lambda u, s: fn(u) @ R @ fn(u), -r, 0.0, lambda s: s, lambda s: 0.0)
    oracle = x0 @ P @ x0 + qq + rr
    assert eval_functional(V, seg) == pytest.approx(oracle, rel=1e-6)


@pytest.mark.parametrize("P, Q, r, lo, hi", [
    ([[1.0]], [[1.0]], 1.0, 1.0, 2.0),
    (np.diag([1.0, 4.0]), np.zeros((2, 2)), 1.0, 1.0, 4.0),
    ([[2.0]], [[3.0]], 0.5, 2.0, 3.5),
])
def test_sandwich_examples(P, Q, r, lo, hi):
    a1, a2 = sandwich_bounds(QuadraticFunctional(P, Q, r))
    assert a1(1.0) == pytest.approx(lo) and a2(1.0) == pytest.approx(hi)
    assert a1(3.0) == pytest.approx(9 * lo)


def test_sandwich_needs_positive_definite_P():
    with pytest.raises(FunctionalError):
        sandwich_bounds(QuadraticFunctional([[0.0]], [[1.0]], 1.0))


@pytest.mark.parametrize("P, Q, match", [
    ([[1.0, 1.0], [0.0, 1.0]], np.zeros((2, 2)), "symmetric"),
    ([[1.0]], [[-1.0]], "semidefinite"),
    (np.eye(9), np.eye(9), "exceeds"),
])
def test_invalid_functionals(P, Q, match):
    with pytest.raises(FunctionalError, match=match):
        QuadraticFunctional(P, Q, 1.0)


@settings(max_examples=150, deadline=None)
@given(n=st.integers(1, 8), seed=st.integers(0, 2**32))
def test_jacobi_matches_lapack(n, seed):
    a = np.random.default_rng(seed).normal(size=(n, n))
    a = a + a.T
    assert np.allclose(jacobi_eigenvalues(a), np.linalg.eigvalsh(a), atol=1e-10 * np.linalg.norm(a))


def shipped_functionals():
    return {
        "state": QuadraticFunctional([[1.0]], [[0.0]], 0.1),
        "delay": QuadraticFunctional([[1.0]], [[1.0]], 0.5),
        "distributed": QuadraticFunctional([[1.0]], None, 0.5, [[1.0]]),
        "coupled": QuadraticFunctional([[2.0, 0.5], [0.5, 1.0]], [[1.0, 0.0], [0.0, 0.5]], 0.7,
                                       [[0.2, 0.1], [0.1, 0.3]]),
    }


@pytest.mark.parametrize("name", sorted(shipped_functionals()))
def test_sandwich_property_random_segments(name):
    V = shipped_functionals()[name]
    a1, a2 = sandwich_bounds(V)
    for i in range(300):
        phi = model.sample_segment(V.dim, V.r, 10.0, model.sample_rng(11, i))
        v = eval_functional(V, phi)
        assert a1(float(np.linalg.norm(phi.eval(0.0)))) <= v * (1 + 1e-12)
        assert v <= a2(phi.sup_norm()) + 1e-9 * max(1.0, v)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32), k=st.floats(-50.0, 50.0))
def test_homogeneous_degree_two(seed, k):
    V = shipped_functionals()["coupled"]
    phi = model.sample_segment(2, 0.7, 3.0, model.sample_rng(seed, 0))
    assert eval_functional(V, phi.scaled(k)) == pytest.approx(k * k * eval_functional(V, phi),
                                                               rel=1e-12, abs=1e-300)


@pytest.fixture
def decay_traj(decay_rhs):
    return it.integrate(decay_rhs, HistorySegment.constant([1.0], 0.1), 0.0, 5.0, 1e-3)


def test_decrease_equality_case(decay_traj, state_only):
    res = decrease_check(state_only, cf.quadratic(2.0), decay_traj, window_ladder(0.0, 5.0))
    assert res.passed
    assert np.max(np.abs(res.lhs - res.rhs)) <= 1e-6


def test_decrease_too_strong_alpha3_fails(decay_traj, state_only):
    res = decrease_check(state_only, cf.quadratic(4.0), decay_traj, window_ladder(0.0, 5.0))
    assert not res.passed
    assert len(res.violations) == len(res.windows)


def test_decrease_constant_delay_against_fine_oracle():
    rhs = model.linear_delay_rhs([[-2.0]], [[1.0]], sg.constant_delay(0.3))
    V = QuadraticFunctional([[1.0]], [[1.0]], 0.3)
    phi = HistorySegment.from_function(lambda th: np.cos(4 * th), 0.3)
    coarse = it.integrate(rhs, phi, 0.0, 10.0, 0.01)
    fine = it.integrate(rhs, phi, 0.0, 10.0, 0.001)
    windows = window_ladder(0.0, 10.0, 20, min_rung=0.3)
    a3 = cf.quadratic(0.5)
    res = decrease_check(V, a3, coarse, windows, tol=1e-4)
    ref = decrease_check(V, a3, fine, windows, tol=1e-6)
    assert res.passed and ref.passed
    assert np.allclose(res.margins, ref.margins, atol=1e-4)


def test_decrease_chaining_is_additive(decay_traj, state_only):
    a3 = cf.quadratic(1.0)
    full = decrease_check(state_only, a3, decay_traj, [(0.0, 4.0)])
    parts = decrease_check(state_only, a3, decay_traj, [(0.0, 1.7), (1.7, 4.0)])
    assert abs(parts.margins.sum() - full.margins[0]) <= 2 * 1e-6


def test_window_ladder_respects_min_rung():
    ws = window_ladder(0.0, 10.0, 20, min_rung=2.0)
    steps = [b - a for a, b in ws]
    assert min(steps) >= 2.0 - 1e-12
    assert ws[0][0] == 0.0 and max(b for _, b in ws) == 10.0


def test_span_mismatch_rejected():
    V = QuadraticFunctional([[1.0]], [[1.0]], 1.0)
    with pytest.raises(FunctionalError):
        eval_functional(V, HistorySegment.constant([1.0], 0.5))
