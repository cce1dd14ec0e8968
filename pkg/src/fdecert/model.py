"""Right-hand sides ``f(t, x_t)`` of delay equations holding almost everywhere.

Every right-hand side is evaluated against a *segment*: any object exposing
``span``, ``dim``, ``eval(theta)`` for ``theta`` in ``[-span, 0]`` and
``nodes(lo)`` returning the mesh on ``[lo, 0]`` (endpoints included).
:class:`HistorySegment` is the materialised form; the integrator passes a
lightweight view over its own buffers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .signals import DelaySignal, DisturbanceSignal

KNOTS = 16


class ModelError(ValueError):
    pass


class HistorySegment:
    """Piecewise-linear function on ``[-span, 0]`` backed by a mesh.

    ``values`` has shape ``(m, n)``, or ``(m, B, n)`` for a batch of ``B``
    segments sharing one mesh.
    """

    def __init__(self, thetas, values):
        thetas = np.asarray(thetas, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if thetas.ndim != 1 or len(thetas) != len(values) or len(thetas) < 1:
            raise ModelError("segment mesh and values must have matching length")
        if len(thetas) > 1 and np.any(np.diff(thetas) <= 0):
            raise ModelError("segment mesh must be strictly increasing")
        if thetas[-1] != 0.0:
            raise ModelError("segment mesh must end at theta = 0")
        self.thetas = thetas
        self.values = values
        self.span = float(-thetas[0])
        self.dim = values.shape[-1]
        self.batch = values.shape[1] if values.ndim == 3 else None

    @classmethod
    def from_function(cls, fn: Callable[[float], object], span: float, n_points: int = 201):
        thetas = np.linspace(-span, 0.0, n_points) if span > 0 else np.array([0.0])
        return cls(thetas, np.array([np.atleast_1d(fn(th)) for th in thetas], dtype=float))

    @classmethod
    def constant(cls, value, span: float):
        v = np.atleast_1d(np.asarray(value, dtype=float))
        if span == 0:
            return cls([0.0], v[None, :])
        return cls([-span, 0.0], np.stack([v, v]))

    @classmethod
    def zeros(cls, dim: int, span: float):
        return cls.constant(np.zeros(dim), span)

    @classmethod
    def stack(cls, segments) -> "HistorySegment":
        """Batch segments of equal span on the union of their meshes (exact for piecewise-linear data)."""
        segments = list(segments)
        spans = {s.span for s in segments}
        if len(spans) != 1:
            raise ModelError("stacked segments must share one span")
        grid = segments[0].thetas
        if any(len(s.thetas) != len(grid) or np.any(s.thetas != grid) for s in segments):
            grid = np.unique(np.concatenate([s.thetas for s in segments]))
            vals = [s.resample(grid) for s in segments]
        else:
            vals = [s.values for s in segments]
        return cls(grid, np.stack(vals, axis=1))

    def member(self, b: int) -> "HistorySegment":
        return HistorySegment(self.thetas, self.values[:, b, :])

    @property
    def local_lipschitz(self) -> float:
        """Largest slope between adjacent mesh nodes (2-norm)."""
        if len(self.thetas) < 2:
            return 0.0
        dv = np.linalg.norm(np.diff(self.values, axis=0), axis=-1)
        dth = np.diff(self.thetas).reshape((-1,) + (1,) * (dv.ndim - 1))
        return float(np.max(dv / dth))

    def eval(self, theta: float) -> np.ndarray:
        th = self.thetas
        if theta >= 0.0:
            if theta > 1e-12:
                raise ModelError(f"theta={theta} outside [-{self.span}, 0]")
            return self.values[-1]
        if theta < th[0]:
            if theta < th[0] - 1e-12 * max(1.0, self.span):
                raise ModelError(f"theta={theta} outside [-{self.span}, 0]")
            return self.values[0]
        i = int(np.searchsorted(th, theta, side="right")) - 1
        f = (theta - th[i]) / (th[i + 1] - th[i])
        return self.values[i] + f * (self.values[i + 1] - self.values[i])

    def resample(self, thetas) -> np.ndarray:
        return np.stack([self.eval(float(x)) for x in thetas])

    def nodes(self, lo: float):
        """Mesh restricted to ``[lo, 0]`` with the interpolated value at ``lo`` prepended."""
        lo = max(lo, self.thetas[0])
        i = int(np.searchsorted(self.thetas, lo, side="right"))
        th = self.thetas[i:]
        vals = self.values[i:]
        if len(th) == 0 or th[0] > lo:
            th = np.concatenate([[lo], th])
            vals = np.concatenate([self.eval(lo)[None], vals])
        return th, vals

    def sup_norm(self):
        """``max ||phi(theta)||_2``; attained at a node for piecewise-linear data.

        Per-member array for batches.
        """
        norms = np.linalg.norm(self.values, axis=-1)
        return norms.max(axis=0) if self.batch is not None else float(norms.max())

    def scaled(self, k: float) -> "HistorySegment":
        return HistorySegment(self.thetas, k * self.values)


@dataclass(frozen=True, eq=False)
class CaratheodoryRHS:
    """Right-hand side with its declared bound ``c(delta)``.

    ``c_bound`` returns ``None`` where no essential bound is available.
    ``jumps`` lists times where ``eval`` may jump in ``t`` (the integrator
    substeps across them).
    """

    dim: int
    max_delay: float
    eval: Callable[[float, object], np.ndarray]
    c_bound: Callable[[float], Optional[float]]
    lipschitz_hint: Optional[float] = None
    name: str = "custom"
    min_delay: float = 0.0
    meta: dict = field(default_factory=dict)
    jumps: tuple = ()

    def __call__(self, t, segment):
        return self.eval(t, segment)

    def scaled(self, k: float) -> "CaratheodoryRHS":
        ev, cb = self.eval, self.c_bound

        def c_scaled(d):
            c = cb(d)
            return None if c is None else abs(k) * c

        return CaratheodoryRHS(self.dim, self.max_delay, lambda t, s: k * ev(t, s), c_scaled,
                               None if self.lipschitz_hint is None else abs(k) * self.lipschitz_hint,
                               f"{k:g}*{self.name}", self.min_delay, dict(self.meta), self.jumps)


def induced_norm_1(a: np.ndarray) -> float:
    """Matrix norm induced by the vector 1-norm (max absolute column sum)."""
    a = np.atleast_2d(a)
    return float(np.max(np.sum(np.abs(a), axis=0))) if a.size else 0.0


def _as_matrix(a, n: Optional[int] = None, name: str = "matrix") -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if n is not None and m.shape[0] != n:
        raise ModelError(f"{name} has {m.shape[0]} rows, expected {n}")
    return m


def zero_rhs(dim: int = 1, max_delay: float = 1.0) -> CaratheodoryRHS:
    return CaratheodoryRHS(dim, max_delay, lambda t, seg: np.zeros_like(seg.eval(0.0)),
                           lambda d: d, 0.0, "zero")


def linear_delay_rhs(A1, A2, delay: DelaySignal) -> CaratheodoryRHS:
    """``A1 x(t) + A2 x(t - r(t))``.

    The declared bound is ``sqrt(n) (|A1|_1 + |A2|_1) delta``: the ``sqrt(n)``
    converts the 2-norm ball of the history into a 1-norm bound on the output.
    """
    A1 = _as_matrix(A1, name="A1")
    n = A1.shape[0]
    A2 = _as_matrix(A2, n, "A2")
    if A1.shape != (n, n) or A2.shape != (n, n):
        raise ModelError(f"A1 and A2 must be square and equal-sized, got {A1.shape}, {A2.shape}")
    gain = math.sqrt(n) * (induced_norm_1(A1) + induced_norm_1(A2))
    rdelay = delay.eval
    A1T, A2T = A1.T.copy(), A2.T.copy()

    def ev(t, seg):
        return seg.eval(0.0) @ A1T + seg.eval(-rdelay(t)) @ A2T

    return CaratheodoryRHS(n, delay.r2, ev, lambda d: gain * d, gain, "linear_delay",
                           delay.r1, {"A1": A1, "A2": A2, "delay": delay}, delay.jumps)


def stieltjes_rhs(A1, A2, delay: DelaySignal, r2: Optional[float] = None) -> CaratheodoryRHS:
    """``A1 x(t) + int_{-r2}^0 A2 x(t + tau) d1(tau + r(t))``.

    The integrator measure is the jump of the Heaviside step at
    ``tau = -r(t)``; the integral is a sum over the atoms of that measure.
    """
    A1 = _as_matrix(A1, name="A1")
    n = A1.shape[0]
    A2 = _as_matrix(A2, n, "A2")
    if A1.shape != (n, n) or A2.shape != (n, n):
        raise ModelError(f"A1 and A2 must be square and equal-sized, got {A1.shape}, {A2.shape}")
    r2 = delay.r2 if r2 is None else float(r2)
    if delay.r2 > r2:
        raise ModelError(f"delay bound {delay.r2} exceeds integration span {r2}")
    gain = math.sqrt(n) * (induced_norm_1(A1) + induced_norm_1(A2))
    rdelay = delay.eval
    A1T, A2T = A1.T.copy(), A2.T.copy()

    def heaviside_atoms(t):
        # d1(tau + r(t)) on [-r2, 0]: unit jump at tau = -r(t)
        return ((-rdelay(t), 1.0),)

    def ev(t, seg):
        acc = seg.eval(0.0) @ A1T
        for tau, mass in heaviside_atoms(t):
            acc = acc + mass * (seg.eval(tau) @ A2T)
        return acc

    return CaratheodoryRHS(n, r2, ev, lambda d: gain * d, gain, "stieltjes",
                           delay.r1, {"A1": A1, "A2": A2, "delay": delay}, delay.jumps)


# ---------------------------------------------------------------- kernels

@dataclass(frozen=True, eq=False)
class Kernel:
    """Matrix-valued kernel ``tau -> K(tau)`` evaluated on arrays of ``tau``."""

    fn: Callable[[np.ndarray], np.ndarray]
    shape: tuple
    kind: str = "custom"

    def __call__(self, taus) -> np.ndarray:
        return self.fn(np.atleast_1d(np.asarray(taus, dtype=float)))

    def sup_norm(self, span: float, n: int = 2001) -> float:
        """``sup |K(tau)|_1`` on ``[-span, 0]`` (sampled)."""
        if span <= 0:
            return induced_norm_1(self(np.array([0.0]))[0])
        vals = self(np.linspace(-span, 0.0, n))
        return float(np.max(np.sum(np.abs(vals), axis=1)))


def constant_kernel(matrix) -> Kernel:
    m = _as_matrix(matrix)
    return Kernel(lambda taus: np.broadcast_to(m, (len(taus),) + m.shape), m.shape, "constant")


def exponential_kernel(matrix, rate: float) -> Kernel:
    """``matrix * exp(rate * tau)``."""
    m = _as_matrix(matrix)
    return Kernel(lambda taus: np.exp(rate * taus)[:, None, None] * m, m.shape, "exponential")


def polynomial_kernel(coefficients) -> Kernel:
    """``sum_k coefficients[k] * tau**k`` with matrix coefficients."""
    cs = [_as_matrix(c) for c in coefficients]
    if not cs:
        raise ModelError("polynomial kernel needs at least one coefficient")
    shape = cs[0].shape

    def fn(taus):
        out = np.zeros((len(taus),) + shape)
        for k, c in enumerate(cs):
            out += (taus**k)[:, None, None] * c
        return out

    return Kernel(fn, shape, "polynomial")


def zero_kernel(rows: int, cols: int) -> Kernel:
    return constant_kernel(np.zeros((rows, cols)))


def kernel_from_preset(kind: str, **params) -> Kernel:
    presets = {"constant": constant_kernel, "exponential": exponential_kernel,
               "polynomial": polynomial_kernel}
    if kind not in presets:
        raise ModelError(f"unknown kernel preset {kind!r}")
    return presets[kind](**params)


def _trapezoid(thetas: np.ndarray, integrand: np.ndarray) -> np.ndarray:
    if len(thetas) < 2:
        return np.zeros(integrand.shape[1:])
    dt = np.diff(thetas)
    mids = 0.5 * (integrand[1:] + integrand[:-1])
    return np.tensordot(dt, mids, axes=(0, 0))


def distributed_term(kernel: Kernel, seg, span: float) -> np.ndarray:
    """``int_{-span}^0 K(tau) x(t + tau) dtau`` by composite trapezoid on the segment mesh."""
    if span <= 0:
        return np.zeros(kernel.shape[0])
    th, vals = seg.nodes(-span)
    kv = np.einsum("kij,k...j->k...i", kernel(th), vals)
    return _trapezoid(th, kv)


class _SignalSegment:
    """Segment view of an open-loop signal ``u`` around time ``t``."""

    def __init__(self, u, t, span, h):
        self.u, self.t, self.span, self.h = u, t, span, h

    def nodes(self, lo):
        n = max(2, int(math.ceil(-lo / self.h)) + 1)
        th = np.linspace(lo, 0.0, n)
        return th, np.array([np.atleast_1d(self.u(self.t + x)) for x in th])


@dataclass(frozen=True)
class DistributedParts:
    A1: np.ndarray
    A2_kernel: Kernel
    B1: np.ndarray
    B2_kernel: Kernel
    D1: np.ndarray
    delay: DelaySignal
    u: Optional[Callable]
    w: Optional[DisturbanceSignal]
    u_mesh: float


def distributed_delay_rhs(A1, A2_kernel: Kernel, B1=None, B2_kernel: Optional[Kernel] = None,
                          D1=None, delay: Optional[DelaySignal] = None, u=None,
                          w: Optional[DisturbanceSignal] = None, u_mesh: float = 1e-2,
                          u_sup: float = 0.0) -> CaratheodoryRHS:
    """Distributed-delay system with open-loop input ``u`` and disturbance ``w``.

    ``x' = A1 x + int_{-r(t)}^0 A2(tau) x(t+tau) dtau + B1 u + int B2(tau) u(t+tau) dtau + D1 w``.
    ``u_sup`` is an essential bound on ``|u(t)|_2`` used in ``c(delta)``. The bound is
    unavailable (``None``) when ``w`` has no finite essential bound.
    """
    A1 = _as_matrix(A1, name="A1")
    n = A1.shape[0]
    if delay is None:
        raise ModelError("distributed system needs a delay signal")
    if A2_kernel.shape != (n, n):
        raise ModelError(f"A2 kernel shape {A2_kernel.shape} != {(n, n)}")
    m_u = 0 if B1 is None else _as_matrix(B1, n, "B1").shape[1]
    B1 = np.zeros((n, 0)) if B1 is None else _as_matrix(B1, n, "B1")
    if B2_kernel is not None and B2_kernel.shape[0] != n:
        raise ModelError("B2 kernel row count must match state dimension")
    m_w = 0 if w is None else w.dim
    D1 = np.zeros((n, m_w)) if D1 is None else _as_matrix(D1, n, "D1")
    if D1.shape[1] != m_w:
        raise ModelError(f"D1 has {D1.shape[1]} columns but disturbance has dimension {m_w}")
    if (m_u or B2_kernel is not None) and u is None:
        raise ModelError("input matrices given without an input signal u")
    r2 = delay.r2
    rdelay = delay.eval
    A1T = A1.T.copy()

    def ev(t, seg):
        out = seg.eval(0.0) @ A1T + distributed_term(A2_kernel, seg, rdelay(t))
        if u is not None:
            if m_u:
                out = out + np.atleast_1d(u(t)) @ B1.T
            if B2_kernel is not None:
                out = out + distributed_term(B2_kernel, _SignalSegment(u, t, r2, u_mesh), rdelay(t))
        if m_w:
            out = out + w.eval(t) @ D1.T
        return out

    rootn = math.sqrt(n)
    x_gain = rootn * (induced_norm_1(A1) + r2 * A2_kernel.sup_norm(r2))
    u_gain = 0.0
    if u is not None:
        u_gain = induced_norm_1(B1) if m_u else 0.0
        if B2_kernel is not None:
            u_gain += r2 * B2_kernel.sup_norm(r2)
        u_gain *= math.sqrt(max(B1.shape[1], 1)) * u_sup
    w_sup = 0.0 if w is None else w.sup_norm()
    w_gain = induced_norm_1(D1) * math.sqrt(max(m_w, 1)) * w_sup if m_w else 0.0

    def c_bound(d):
        if not math.isfinite(w_gain):
            return None
        return x_gain * d + u_gain + w_gain

    parts = DistributedParts(A1, A2_kernel, B1, B2_kernel, D1, delay, u, w, u_mesh)
    return CaratheodoryRHS(n, r2, ev, c_bound, x_gain, "distributed", delay.r1,
                           {"parts": parts, "delay": delay},
                           tuple(sorted(set(delay.jumps) | set(w.jumps if m_w else ()))))


class OutputMap:
    """Regulated output ``z = C1 x + int C2(tau) x dtau + B4 u + int B5(tau) u dtau + D2 w``."""

    def __init__(self, C1, C2_kernel: Optional[Kernel] = None, B4=None,
                 B5_kernel: Optional[Kernel] = None, D2=None,
                 delay: Optional[DelaySignal] = None, u_mesh: float = 1e-2):
        self.C1 = _as_matrix(C1, name="C1")
        self.dim_z = self.C1.shape[0]
        self.C2_kernel = C2_kernel
        self.B4 = None if B4 is None else _as_matrix(B4, self.dim_z, "B4")
        self.B5_kernel = B5_kernel
        self.D2 = None if D2 is None else _as_matrix(D2, self.dim_z, "D2")
        if (C2_kernel is not None or B5_kernel is not None) and delay is None:
            raise ModelError("output kernels need a delay signal")
        self.delay = delay
        self.u_mesh = u_mesh

    def __call__(self, t, seg, u=None, w=None) -> np.ndarray:
        z = seg.eval(0.0) @ self.C1.T
        r = 0.0 if self.delay is None else self.delay.eval(t)
        if self.C2_kernel is not None:
            z = z + distributed_term(self.C2_kernel, seg, r)
        if u is not None:
            if self.B4 is not None:
                z = z + np.atleast_1d(u(t)) @ self.B4.T
            if self.B5_kernel is not None:
                span = 0.0 if self.delay is None else self.delay.r2
                z = z + distributed_term(self.B5_kernel, _SignalSegment(u, t, span, self.u_mesh), r)
        if w is not None and self.D2 is not None:
            z = z + np.atleast_1d(w.eval(t)) @ self.D2.T
        return z


def output_map(C1, C2_kernel=None, B4=None, B5_kernel=None, D2=None, delay=None,
               u_mesh: float = 1e-2) -> OutputMap:
    return OutputMap(C1, C2_kernel, B4, B5_kernel, D2, delay, u_mesh)


# ------------------------------------------------------------ sampled checks

def sample_segment(dim: int, span: float, radius: float, rng: np.random.Generator,
                   knots: int = KNOTS) -> HistorySegment:
    """Random piecewise-linear segment with ``sup_norm < radius``.

    Knot values are uniform in the 2-norm ball of the given radius.
    """
    thetas = np.linspace(-span, 0.0, knots) if span > 0 else np.array([0.0])
    if np.any(np.diff(thetas) <= 0):  # spans near the float floor: keep only the endpoints
        thetas = np.array([-span, 0.0])
    k = len(thetas)
    g = rng.standard_normal((k, dim))
    g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    vals = g * (radius * rng.uniform(0.0, 1.0, (k, 1)) ** (1.0 / dim))
    sup = np.max(np.linalg.norm(vals, axis=1))
    if sup >= radius:
        vals *= radius * (1.0 - 2.0**-20) / sup
    return HistorySegment(thetas, vals)


def sample_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Generator for sample ``index``; replaying ``(seed, index)`` reproduces the sample."""
    return np.random.default_rng([seed, stream, index])


@dataclass
class BoundCheck:
    passed: bool
    max_ratio: float
    n_samples: int
    delta: float
    c_delta: Optional[float]
    counterexample: Optional[dict] = None
    status: str = "pass"


def verify_caratheodory_bound(rhs: CaratheodoryRHS, delta: float, n_samples: int = 1000,
                              seed: int = 0, t_range: tuple = (-10.0, 10.0)) -> BoundCheck:
    """Falsify ``|f(t, phi)|_1 < c(delta)`` on random ``phi`` with ``sup |phi| < delta``.

    A pass is evidence, not proof. The first violating sample is returned with
    its ``(seed, index)`` so it can be replayed by :func:`replay_bound_sample`.
    """
    c = rhs.c_bound(delta)
    if c is None:
        return BoundCheck(False, math.nan, 0, delta, None, status="unavailable")
    worst = 0.0
    for i in range(n_samples):
        t, phi = replay_bound_sample(rhs, delta, seed, i, t_range)
        val = float(np.sum(np.abs(rhs.eval(t, phi))))
        ratio = 0.0 if val == 0.0 else (val / c if c > 0 else math.inf)
        worst = max(worst, ratio)
        if not val < c and val != 0.0:
            return BoundCheck(False, worst, i + 1, delta, c,
                              {"seed": seed, "index": i, "t": t, "norm": val}, "counterexample")
    return BoundCheck(True, worst, n_samples, delta, c)


def replay_bound_sample(rhs: CaratheodoryRHS, delta: float, seed: int, index: int,
                        t_range: tuple = (-10.0, 10.0)):
    rng = sample_rng(seed, index, stream=1)
    t = float(rng.uniform(*t_range))
    return t, sample_segment(rhs.dim, rhs.max_delay, delta, rng)


def lipschitz_probe(rhs: CaratheodoryRHS, delta: float, n_pairs: int = 1000, seed: int = 0,
                    t_range: tuple = (-10.0, 10.0)) -> dict:
    """Largest sampled ``|f(t,phi1) - f(t,phi2)|_1 / sup|phi1 - phi2|`` on the delta-ball."""
    est = 0.0
    for i in range(n_pairs):
        rng = sample_rng(seed, i, stream=2)
        t = float(rng.uniform(*t_range))
        p1 = sample_segment(rhs.dim, rhs.max_delay, delta, rng)
        p2 = sample_segment(rhs.dim, rhs.max_delay, delta, rng)
        dist = np.max(np.linalg.norm(p1.values - p2.resample(p1.thetas), axis=1))
        if dist == 0:
            continue
        diff = float(np.sum(np.abs(rhs.eval(t, p1) - rhs.eval(t, p2))))
        est = max(est, diff / dist)
    out = {"estimate": est, "n_pairs": n_pairs, "hint": rhs.lipschitz_hint}
    if rhs.lipschitz_hint is not None:
        out["within_hint"] = est <= rhs.lipschitz_hint * (1 + 1e-9) + 1e-12
    return out


