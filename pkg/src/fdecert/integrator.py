"""Fixed-step RK4 for delay equations holding almost everywhere.

Delayed arguments are read from the accepted mesh by linear interpolation.
When a delayed time falls inside the step being taken (only possible for
delays shorter than the step), the value is interpolated between the last
accepted point and the current stage value, so every stage stays explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .model import CaratheodoryRHS, HistorySegment

BLOWUP_NORM = 1e9


class IntegrationError(ValueError):
    pass


class _View:
    """Segment ``theta -> x(s + theta)`` over the integrator buffers.

    ``s`` is the current (stage) time with state ``Y``; the buffer is
    accepted up to index ``n``.
    """

    __slots__ = ("xs", "t0", "h", "phi", "n", "t_acc", "s", "Y", "span", "dim")

    def __init__(self, xs, t0, h, phi, span):
        self.xs, self.t0, self.h, self.phi, self.span = xs, t0, h, phi, span
        self.dim = xs.shape[1]
        self.n = 0
        self.t_acc = t0
        self.s = t0
        self.Y = xs[0]

    def set(self, n, s, Y):
        self.n = n
        self.t_acc = self.t0 + n * self.h
        self.s = s
        self.Y = Y

    def eval(self, theta):
        if theta >= 0.0:
            return self.Y
        tau = self.s + theta
        if tau > self.t_acc:
            frac = (tau - self.t_acc) / (self.s - self.t_acc)
            xa = self.xs[self.n]
            return xa + frac * (self.Y - xa)
        if tau >= self.t0:
            k = (tau - self.t0) / self.h
            i = int(k)
            if i >= self.n:
                return self.xs[self.n]
            f = k - i
            return self.xs[i] + f * (self.xs[i + 1] - self.xs[i])
        return self.phi.eval(max(tau - self.t0, -self.phi.span))

    def nodes(self, lo):
        a = self.s + lo
        parts_t, parts_v = [], []
        if a < self.t0:
            th, vals = self.phi.nodes(a - self.t0)
            parts_t.append(th[:-1] + self.t0)
            parts_v.append(vals[:-1])
            i0 = 0
        else:
            i0 = int(math.ceil((a - self.t0) / self.h - 1e-9))
            start = self.t0 + i0 * self.h
            if start > a + 1e-12 * max(1.0, abs(a)) or i0 > self.n:
                parts_t.append(np.array([a]))
                parts_v.append(self.eval(lo)[None, :])
        i0 = min(i0, self.n + 1)
        if i0 <= self.n:
            idx = np.arange(i0, self.n + 1)
            parts_t.append(self.t0 + idx * self.h)
            parts_v.append(self.xs[i0:self.n + 1])
        if self.s > self.t_acc:
            parts_t.append(np.array([self.s]))
            parts_v.append(np.asarray(self.Y)[None, :])
        ts = np.concatenate(parts_t) - self.s
        ts[-1] = 0.0
        return ts, np.vstack(parts_v)

    def sup_norm(self):
        _, vals = self.nodes(-self.span)
        return float(np.max(np.linalg.norm(vals, axis=1)))


@dataclass
class Trajectory:
    """Dense piecewise-linear solution on ``[t0 - r, t_end]``."""

    t0: float
    horizon: float
    h: float
    xs: np.ndarray
    phi: HistorySegment
    rhs: CaratheodoryRHS
    blowup: bool = False
    blowup_time: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.xs) - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.xs)) * self.h

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.h

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    def states(self):
        """Full mesh ``(times, values)`` including the prepended history samples."""
        th = self.phi.thetas[:-1] + self.t0
        return (np.concatenate([th, self.times]),
                np.vstack([self.phi.values[:-1], self.xs]))

    def at(self, t: float) -> np.ndarray:
        if t < self.t0:
            return self.phi.eval(t - self.t0)
        k = (t - self.t0) / self.h
        i = min(int(k), self.n_steps)
        if i >= self.n_steps:
            if t > self.t_end + 1e-9 * self.h:
                raise IntegrationError(f"t={t} beyond trajectory end {self.t_end}")
            return self.xs[-1].copy()
        f = k - i
        return self.xs[i] + f * (self.xs[i + 1] - self.xs[i])

    def view(self, t: float) -> _View:
        """Lightweight segment at time ``t`` (no copying)."""
        v = _View(self.xs, self.t0, self.h, self.phi, self.phi.span)
        if t < self.t0 - 1e-12:
            raise IntegrationError("views before t0 are not supported")
        k = (t - self.t0) / self.h
        n = min(int(round(k)) if abs(k - round(k)) < 1e-9 else int(k), self.n_steps)
        if abs(t - (self.t0 + n * self.h)) <= 1e-9 * self.h:
            v.set(n, self.t0 + n * self.h, self.xs[n])
        else:
            v.set(n, t, self.at(t))
        return v

    def segment_at(self, t: float, span: Optional[float] = None) -> HistorySegment:
        span = self.phi.span if span is None else span
        th, vals = self.view(t).nodes(-span)
        return HistorySegment(th, vals)

    def norms(self) -> np.ndarray:
        """``|x(t_k)|_2`` on the accepted mesh."""
        return np.linalg.norm(self.xs, axis=1)

    def window_sup(self) -> np.ndarray:
        """``|x_{t_k}|_inf`` (sup over the trailing window of length r) per mesh index."""
        r = self.phi.span
        hist = float(np.max(np.linalg.norm(self.phi.values, axis=1)))
        norms = self.norms()
        lag = int(math.ceil(r / self.h - 1e-9))
        out = np.empty_like(norms)
        padded = np.concatenate([np.full(lag, -np.inf), norms])
        out[:] = np.max(sliding_window_view(padded, lag + 1), axis=1)
        # windows still reaching into the history
        k_hist = np.arange(len(norms)) * self.h < r - 1e-12
        if r > 0:
            for k in np.nonzero(k_hist)[0]:
                th, vals = self.phi.nodes(k * self.h - r)
                out[k] = max(out[k], float(np.max(np.linalg.norm(vals, axis=1))))
        else:
            out[0] = max(out[0], hist)
        return out

    def to_table(self, path, delimiter: str = ",") -> None:
        """Write ``time, x1..xn`` rows (17 significant digits) including history samples."""
        ts, vals = self.states()
        header = delimiter.join(["time"] + [f"x{i + 1}" for i in range(self.dim)])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for t, row in zip(ts, vals):
                fh.write(delimiter.join(f"{v:.17g}" for v in (t, *row)) + "\n")


def default_step(rhs: CaratheodoryRHS) -> float:
    """``min(0.01, r1/8)`` for a positive shortest delay, else ``1e-3``."""
    if rhs.min_delay > 0:
        return min(0.01, rhs.min_delay / 8.0)
    return 1e-3


def _check_inputs(rhs, phi, t0, horizon, h):
    if not h > 0:
        raise IntegrationError("step must be positive")
    if not horizon > t0:
        raise IntegrationError(f"horizon {horizon} must exceed t0 {t0}")
    if phi.span < rhs.max_delay - 1e-12:
        raise IntegrationError(f"history span {phi.span} shorter than max delay {rhs.max_delay}")
    if phi.dim != rhs.dim:
        raise IntegrationError(f"history dimension {phi.dim} != system dimension {rhs.dim}")
    if rhs.max_delay > 0 and h > rhs.max_delay / 4.0 * (1 + 1e-12):
        raise IntegrationError(f"step {h} exceeds max_delay/4 = {rhs.max_delay / 4.0}")


def integrate(rhs: CaratheodoryRHS, phi: HistorySegment, t0: float, horizon: float,
              h: Optional[float] = None) -> Trajectory:
    """Integrate from ``t0`` with history ``phi`` up to ``horizon`` with step ``h``.

    The mesh is uniform, so the last node may overshoot ``horizon`` by less
    than one step. Blow-up (non-finite state or ``|x|_2 > 1e9``) truncates
    the trajectory and sets ``blowup``.
    """
    return integrate_batch(rhs, [phi], t0, horizon, h)[0]


def integrate_batch(rhs: CaratheodoryRHS, phis, t0: float, horizon: float,
                    h: Optional[float] = None) -> list:
    """Integrate several histories in lockstep; one :class:`Trajectory` per history.

    The right-hand side must broadcast over a leading batch axis. Members are
    independent: a blown-up member is truncated and then held at the
    equilibrium so the others proceed unaffected.
    """
    h = default_step(rhs) if h is None else float(h)
    phis = list(phis)
    batch = HistorySegment.stack(phis)
    _check_inputs(rhs, batch, t0, horizon, h)
    B = len(phis)

    n_steps = int(math.ceil((horizon - t0) / h - 1e-9))
    xs = np.empty((n_steps + 1, B, rhs.dim))
    xs[0] = batch.values[-1]
    view = _View(xs, t0, h, batch, batch.span)
    f = rhs.eval
    half = 0.5 * h
    sixth = h / 6.0
    alive = np.ones(B, dtype=bool)
    last = np.full(B, n_steps)
    blow_t = [None] * B
    jumps = np.asarray(rhs.jumps, dtype=float)
    jtol = 1e-12 * max(1.0, abs(t0), abs(horizon))
    for n in range(n_steps):
        t = t0 + n * h
        x = xs[n]
        inner = jumps[np.searchsorted(jumps, t + jtol, "right"):
                      np.searchsorted(jumps, t + h - jtol, "left")] if len(jumps) else jumps
        if len(inner) == 0:
            t_end = t + h
            if len(jumps) and (np.searchsorted(jumps, t_end + jtol)
                               > np.searchsorted(jumps, t_end - jtol)):
                # jump on the mesh node: sample the left limit
                t_end = math.nextafter(t_end, t)
            view.set(n, t, x)
            k1 = f(t, view)
            y = x + half * k1
            view.set(n, t + half, y)
            k2 = f(t + half, view)
            y = x + half * k2
            view.set(n, t + half, y)
            k3 = f(t + half, view)
            y = x + h * k3
            view.set(n, t + h, y)
            k4 = f(t_end, view)
            x_new = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            x_new = _substeps(f, view, n, x, t, t + h, inner)
        nrm = np.sqrt(np.einsum("bi,bi->b", x_new, x_new))
        bad = ~(nrm <= BLOWUP_NORM) & alive
        if bad.any():
            for b in np.nonzero(bad)[0]:
                last[b] = n
                blow_t[b] = t + h
            alive &= ~bad
            x_new[~alive] = 0.0
            if not alive.any():
                xs = xs[:n + 1]
                break
        xs[n + 1] = x_new
    return [
        Trajectory(t0, horizon, h, xs[:last[b] + 1, b, :].copy(), phis[b], rhs,
                   blow_t[b] is not None, blow_t[b])
        for b in range(B)
    ]


def _substeps(f, view, n, x, a, b, inner):
    """RK4 over ``[a, b]`` split at the jump times ``inner``.

    Each piece takes its right-end stage as a left limit, so the rhs is
    sampled on one continuity interval per piece.
    """
    edges = [a, *inner.tolist(), b]
    y0 = x
    for lo, hi in zip(edges[:-1], edges[1:]):
        d = hi - lo
        mid = lo + 0.5 * d
        view.set(n, lo, y0)
        k1 = f(lo, view)
        y = y0 + 0.5 * d * k1
        view.set(n, mid, y)
        k2 = f(mid, view)
        y = y0 + 0.5 * d * k2
        view.set(n, mid, y)
        k3 = f(mid, view)
        y = y0 + d * k3
        view.set(n, hi, y)
        k4 = f(math.nextafter(hi, lo), view)
        y0 = y0 + d / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y0


def _delay_of(rhs):
    return rhs.meta.get("delay")


def ae_equivalence_deviation(rhs_a: CaratheodoryRHS, rhs_b: CaratheodoryRHS,
                             phi: HistorySegment, t0: float, horizon: float,
                             h: Optional[float] = None) -> dict:
    """Max ``|x_a - x_b|_2`` over the common mesh of two a.e.-equal systems.

    Also reports the a priori constant ``K`` with ``deviation <= K (rho + h)``:
    the two right-hand sides differ (as sampled by the stages) on a set of
    measure at most ``rho + N h`` for ``N`` glitch intervals, by at most
    ``2 L M`` there, and Gronwall spreads that over the horizon.
    """
    ta = integrate(rhs_a, phi, t0, horizon, h)
    tb = integrate(rhs_b, phi, t0, horizon, h)
    m = min(len(ta.xs), len(tb.xs))
    dev = float(np.max(np.linalg.norm(ta.xs[:m] - tb.xs[:m], axis=1)))
    da, db = _delay_of(rhs_a), _delay_of(rhs_b)
    rho = max(getattr(da, "glitch_measure", 0.0), getattr(db, "glitch_measure", 0.0))
    n_gl = max((d.params.get("n_glitches", 0) for d in (da, db) if d is not None), default=0)
    L = max(rhs_a.lipschitz_hint or 0.0, rhs_b.lipschitz_hint or 0.0)
    M = max(float(np.max(ta.norms()[:m])), float(np.max(tb.norms()[:m])), phi.sup_norm())
    span = ta.t0 + (m - 1) * ta.h - t0
    K = 2.0 * L * M * max(1, n_gl) * math.exp(L * span)
    return {
        "deviation": dev,
        "rho": rho,
        "h": ta.h,
        "K": K,
        "bound": K * (rho + ta.h),
        "observed_K": dev / (rho + ta.h),
        "blowup": ta.blowup or tb.blowup,
    }


def convergence_study(rhs: CaratheodoryRHS, phi: HistorySegment, t0: float, horizon: float,
                      h_list: Sequence[float],
                      exact: Optional[Callable[[float], np.ndarray]] = None) -> dict:
    """Observed orders from errors at the coarsest mesh nodes.

    Without ``exact`` the finest step serves as the reference and gets no
    error of its own. A non-decreasing error sequence is reported as
    ``"irregular"``.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3 or any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise IntegrationError("h_list needs at least 3 strictly decreasing steps")
    trajs = [integrate(rhs, phi, t0, horizon, h) for h in h_list]
    coarse = trajs[0].times
    coarse = coarse[coarse <= min(tr.t_end for tr in trajs) + 1e-12]
    if exact is not None:
        ref = np.array([np.atleast_1d(exact(t)) for t in coarse])
        tested = list(zip(h_list, trajs))
    else:
        ref = np.array([trajs[-1].at(t) for t in coarse])
        tested = list(zip(h_list[:-1], trajs[:-1]))
    errors = []
    for _, tr in tested:
        vals = np.array([tr.at(t) for t in coarse])
        errors.append(float(np.max(np.linalg.norm(vals - ref, axis=1))))
    orders = []
    for (h1, _), (h2, _), e1, e2 in zip(tested, tested[1:], errors, errors[1:]):
        if e2 >= e1 or e2 <= 0:
            orders.append("irregular")
        else:
            orders.append(math.log(e1 / e2) / math.log(h1 / h2))
    return {"h": [h for h, _ in tested], "errors": errors, "orders": orders}
