"""Time-varying delays and square-integrable disturbances.

Delays carry an a.e.-representative: a piecewise-continuous signal that agrees
with them outside a set of known Lebesgue measure. Null-set glitches are
modelled as short intervals of positive total measure so that sampled
integration can see them at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate


class SignalError(ValueError):
    pass


@dataclass(frozen=True, eq=False, repr=False)
class DelaySignal:
    """Measurable delay ``t -> r(t)`` with ``r1 <= r(t) <= r2``.

    ``eval`` accepts scalars or arrays. ``representative`` is ``None`` only
    while constructing a signal that is its own representative. ``jumps``
    lists the times where the signal may be discontinuous (empty if unknown).
    """

    r1: float
    r2: float
    eval: Callable
    representative: Optional["DelaySignal"] = None
    glitch_measure: float = 0.0
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    jumps: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "jumps", tuple(sorted(float(t) for t in self.jumps)))
        if not (0.0 <= self.r1 <= self.r2 and self.r2 > 0):
            raise SignalError(f"delay bounds must satisfy 0 <= r1 <= r2, r2 > 0; got ({self.r1}, {self.r2})")
        if self.representative is None:
            object.__setattr__(self, "representative", self)

    def __call__(self, t):
        return self.eval(t)

    def __repr__(self):
        return f"DelaySignal(kind={self.kind!r}, r1={self.r1}, r2={self.r2}, glitch_measure={self.glitch_measure})"

    def disagreement_estimate(self, t_start: float, t_end: float, n: int = 1_000_000) -> float:
        """Estimated measure of ``{t : r(t) != representative(t)}`` on a uniform grid."""
        t = np.linspace(t_start, t_end, n, endpoint=False) + 0.5 * (t_end - t_start) / n
        diff = np.asarray(self.eval(t)) != np.asarray(self.representative.eval(t))
        return float(np.count_nonzero(diff)) / n * (t_end - t_start)


def _check_bounds(values, r1, r2):
    values = np.asarray(values, dtype=float)
    if np.any(values < r1) or np.any(values > r2):
        raise SignalError(f"delay values {values.min():g}..{values.max():g} outside [{r1}, {r2}]")


def constant_delay(value: float, bounds: Optional[tuple] = None) -> DelaySignal:
    return piecewise_constant_delay([], [value], bounds or (value, value))


def piecewise_constant_delay(breakpoints: Sequence[float], values: Sequence[float],
                             bounds: tuple) -> DelaySignal:
    """Right-continuous step delay: ``values[k]`` on ``[breakpoints[k-1], breakpoints[k])``."""
    bp = np.asarray(breakpoints, dtype=float)
    vals = np.asarray(values, dtype=float)
    r1, r2 = float(bounds[0]), float(bounds[1])
    if len(vals) != len(bp) + 1:
        raise SignalError(f"need len(values) == len(breakpoints) + 1, got {len(vals)} and {len(bp)}")
    if len(bp) > 1 and np.any(np.diff(bp) <= 0):
        raise SignalError("breakpoints must be strictly increasing")
    _check_bounds(vals, r1, r2)

    if len(bp) == 0:
        c = float(vals[0])

        def ev(t):
            if np.ndim(t) == 0:
                return c
            return np.full(np.shape(t), c)
    else:
        def ev(t):
            idx = np.searchsorted(bp, t, side="right")
            return vals[idx] if np.ndim(t) else float(vals[idx])

    return DelaySignal(r1, r2, ev, kind="piecewise_constant",
                       params={"breakpoints": bp.tolist(), "values": vals.tolist()},
                       jumps=tuple(bp.tolist()))


def random_piecewise_delay(bounds: tuple, t_start: float, t_end: float, n_jumps: int,
                           seed: int) -> DelaySignal:
    """Step delay with ``n_jumps`` uniformly placed jumps and uniform values in ``bounds``."""
    rng = np.random.default_rng(seed)
    bp = np.sort(rng.uniform(t_start, t_end, n_jumps))
    vals = rng.uniform(bounds[0], bounds[1], n_jumps + 1)
    sig = piecewise_constant_delay(bp, vals, bounds)
    sig.params.update(seed=seed, n_jumps=n_jumps)
    return sig


def glitched_delay(base: DelaySignal, glitch_intervals: Sequence[tuple],
                   glitch_values: Sequence[float]) -> DelaySignal:
    """Overwrite ``base`` on half-open intervals ``[start, start + width)``.

    The result has ``base`` as representative and glitch measure equal to
    the summed widths.
    """
    if len(glitch_intervals) != len(glitch_values):
        raise SignalError("one glitch value per glitch interval required")
    rep = base.representative
    if not glitch_intervals:
        return DelaySignal(base.r1, base.r2, base.eval, representative=rep,
                           glitch_measure=base.glitch_measure, kind=base.kind, params=dict(base.params),
                           jumps=base.jumps)
    order = np.argsort([s for s, _ in glitch_intervals])
    starts = np.array([glitch_intervals[i][0] for i in order], dtype=float)
    widths = np.array([glitch_intervals[i][1] for i in order], dtype=float)
    gvals = np.array([glitch_values[i] for i in order], dtype=float)
    if np.any(widths <= 0):
        raise SignalError("glitch widths must be positive")
    ends = starts + widths
    if np.any(starts[1:] < ends[:-1]):
        raise SignalError("glitch intervals overlap")
    _check_bounds(gvals, base.r1, base.r2)
    base_eval = base.eval

    def ev(t):
        idx = np.searchsorted(starts, t, side="right") - 1
        if np.ndim(t) == 0:
            if idx >= 0 and t < ends[idx]:
                return float(gvals[idx])
            return base_eval(t)
        t = np.asarray(t, dtype=float)
        safe = np.clip(idx, 0, len(starts) - 1)
        inside = (idx >= 0) & (t < ends[safe])
        return np.where(inside, gvals[safe], base_eval(t))

    return DelaySignal(base.r1, base.r2, ev, representative=rep,
                       glitch_measure=base.glitch_measure + float(widths.sum()),
                       kind="glitched", params={"n_glitches": len(starts)},
                       jumps=tuple(sorted(set(base.jumps) | set(starts.tolist()) | set(ends.tolist()))))


def random_glitches(base: DelaySignal, total_measure: float, count: int, t_start: float,
                    t_end: float, seed: int, value: Optional[float] = None) -> DelaySignal:
    """``count`` equal-width glitches of summed width ``total_measure``.

    Glitch starts are drawn on a stratified grid, so glitch sets for smaller
    ``total_measure`` with the same seed are nested inside larger ones.
    Without ``value`` each glitch jumps to whichever delay bound lies
    farther from the base value.
    """
    if count <= 0 or total_measure <= 0:
        return glitched_delay(base, [], [])
    width = total_measure / count
    slot = (t_end - t_start) / count
    if width >= slot:
        raise SignalError("glitch measure too large for the horizon and count")
    rng = np.random.default_rng(seed)
    starts = t_start + slot * np.arange(count) + rng.uniform(0.0, 1.0, count) * (slot - width)
    if value is None:
        b = np.asarray(base.eval(starts), dtype=float)
        vals = np.where(b - base.r1 > base.r2 - b, base.r1, base.r2)
    else:
        vals = np.full(count, float(value))
    sig = glitched_delay(base, [(float(s), width) for s in starts], vals.tolist())
    sig.params.update(seed=seed, total_measure=total_measure)
    return sig


@dataclass(frozen=True, eq=False)
class DisturbanceSignal:
    """Disturbance ``w(t) = profile(t) * direction`` in L2."""

    profile: Callable[[float], float]
    direction: np.ndarray
    l2_sq: Callable[[float, float], float]
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    jumps: tuple = ()

    @property
    def dim(self) -> int:
        return len(self.direction)

    def eval(self, t: float) -> np.ndarray:
        return self.profile(t) * self.direction

    def __call__(self, t):
        return self.eval(t)

    def l2_norm_on(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        return math.sqrt(max(self.l2_sq(a, b), 0.0)) * float(np.linalg.norm(self.direction))

    def sup_norm(self) -> float:
        return float(self.params.get("sup", math.inf)) * float(np.linalg.norm(self.direction))


def _sin_sq_antiderivative(omega, phase):
    # integral of sin^2(omega t + phase) dt
    if omega == 0:
        return lambda t: t * math.sin(phase) ** 2
    return lambda t: t / 2.0 - math.sin(2.0 * (omega * t + phase)) / (4.0 * omega)


def _overlap(a, b, lo, hi):
    return max(a, lo), min(b, hi)


def zero_disturbance(dim: int = 1) -> DisturbanceSignal:
    return DisturbanceSignal(lambda t: 0.0, np.ones(dim), lambda a, b: 0.0, kind="zero",
                             params={"sup": 0.0})


def decaying_exponential(amplitude: float, rate: float, t_start: float = 0.0,
                         direction=None) -> DisturbanceSignal:
    """``amplitude * exp(-rate (t - t_start))`` for ``t >= t_start``, zero before."""
    if not rate > 0:
        raise SignalError(f"decaying exponential needs rate > 0 for finite L2 norm, got {rate}")
    a, lam, t0 = float(amplitude), float(rate), float(t_start)

    def profile(t):
        return a * math.exp(-lam * (t - t0)) if t >= t0 else 0.0

    def l2_sq(lo, hi):
        lo = max(lo, t0)
        if hi <= lo:
            return 0.0
        upper = 0.0 if math.isinf(hi) else math.exp(-2.0 * lam * (hi - t0))
        return a * a / (2.0 * lam) * (math.exp(-2.0 * lam * (lo - t0)) - upper)

    d = np.atleast_1d(np.asarray(direction if direction is not None else [1.0], dtype=float))
    return DisturbanceSignal(profile, d, l2_sq, kind="decaying_exponential",
                             params={"amplitude": a, "rate": lam, "t_start": t0, "sup": abs(a)},
                             jumps=(t0,))


def truncated_sinusoid(amplitude: float, omega: float, t_on: float, t_off: float,
                       phase: float = 0.0, direction=None) -> DisturbanceSignal:
    """``amplitude * sin(omega t + phase)`` on ``[t_on, t_off)``, zero elsewhere."""
    if not (math.isfinite(t_on) and math.isfinite(t_off)) or t_off <= t_on:
        raise SignalError("truncated sinusoid needs a finite window t_on < t_off")
    a = float(amplitude)
    anti = _sin_sq_antiderivative(float(omega), float(phase))

    def profile(t):
        return a * math.sin(omega * t + phase) if t_on <= t < t_off else 0.0

    def l2_sq(lo, hi):
        lo, hi = _overlap(t_on, t_off, lo, hi)
        if hi <= lo:
            return 0.0
        return a * a * (anti(hi) - anti(lo))

    d = np.atleast_1d(np.asarray(direction if direction is not None else [1.0], dtype=float))
    return DisturbanceSignal(profile, d, l2_sq, kind="truncated_sinusoid",
                             params={"amplitude": a, "omega": omega, "t_on": t_on,
                                     "t_off": t_off, "phase": phase, "sup": abs(a)},
                             jumps=(float(t_on), float(t_off)))


def burst_train(amplitude: float, omega: float, width: float, period: float, count: int,
                t_start: float = 0.0, direction=None) -> DisturbanceSignal:
    """``count`` sinusoidal bursts of length ``width`` repeating every ``period``."""
    if count < 0 or not math.isfinite(count):
        raise SignalError("burst train needs a finite burst count")
    if not (0 < width <= period):
        raise SignalError("burst width must lie in (0, period]")
    a = float(amplitude)
    anti = _sin_sq_antiderivative(float(omega), 0.0)
    ons = t_start + period * np.arange(count)

    def profile(t):
        k = math.floor((t - t_start) / period)
        if 0 <= k < count and t - ons[k] < width:
            return a * math.sin(omega * (t - ons[k]))
        return 0.0

    def l2_sq(lo, hi):
        total = 0.0
        for on in ons:
            s, e = _overlap(on, on + width, lo, hi)
            if e > s:
                total += anti(e - on) - anti(s - on)
        return a * a * total

    d = np.atleast_1d(np.asarray(direction if direction is not None else [1.0], dtype=float))
    return DisturbanceSignal(profile, d, l2_sq, kind="burst_train",
                             params={"amplitude": a, "omega": omega, "width": width,
                                     "period": period, "count": count, "t_start": t_start,
                                     "sup": abs(a)},
                             jumps=tuple(sorted(set(ons.tolist()) | set((ons + width).tolist()))))


def custom_disturbance(profile: Callable[[float], float], support: tuple, direction=None,
                       sup: float = math.inf) -> DisturbanceSignal:
    """Arbitrary profile vanishing outside the bounded ``support``; L2 by adaptive quadrature."""
    s0, s1 = support
    if not (math.isfinite(s0) and math.isfinite(s1)):
        raise SignalError("custom disturbance needs bounded support")

    def clipped(t):
        return profile(t) if s0 <= t < s1 else 0.0

    def l2_sq(lo, hi):
        lo, hi = _overlap(s0, s1, lo, hi)
        if hi <= lo:
            return 0.0
        val, _ = integrate.quad(lambda t: profile(t) ** 2, lo, hi, limit=200)
        return val

    d = np.atleast_1d(np.asarray(direction if direction is not None else [1.0], dtype=float))
    return DisturbanceSignal(clipped, d, l2_sq, kind="custom", params={"sup": sup},
                             jumps=(float(s0), float(s1)))


def l2_disturbance(kind: str, **params) -> DisturbanceSignal:
    """Factory keyed by kind: ``truncated_sinusoid``, ``decaying_exponential``, ``burst_train``, ``zero``."""
    kinds = {
        "truncated_sinusoid": truncated_sinusoid,
        "decaying_exponential": decaying_exponential,
        "burst_train": burst_train,
        "zero": zero_disturbance,
    }
    key = kind.replace("-", "_")
    if key not in kinds:
        raise SignalError(f"unknown disturbance kind {kind!r}")
    return kinds[key](**params)
