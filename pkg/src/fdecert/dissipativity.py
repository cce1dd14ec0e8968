"""Supply-rate dissipativity checks along simulated trajectories.

Both sides of ``v(t) - v(s) <= int_s^t s(z, w)`` are evaluated on the
trajectory mesh: ``v`` on exact mesh segments, the supply integral by the
trapezoid rule on the same nodes as the state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .certifier import classify_margin, _merge
from .functionals import QuadraticFunctional, cumulative_trapezoid, functional_along, window_ladder
from .integrator import default_step, integrate
from .model import CaratheodoryRHS, HistorySegment, OutputMap
from .signals import DisturbanceSignal


class SupplyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SupplyRate:
    """``s(z, w)`` evaluated row-wise on stacked ``(K, p)`` and ``(K, m)`` arrays."""

    eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, z, w):
        z, w = np.atleast_1d(z), np.atleast_1d(w)
        single = z.ndim == 1
        out = self.eval(np.atleast_2d(z), np.atleast_2d(w))
        return float(out[0]) if single else np.asarray(out, dtype=float)


def l2_gain(gamma: float) -> SupplyRate:
    """``gamma^2 |w|^2 - |z|^2``."""
    if not gamma >= 0:
        raise SupplyError("gamma must be nonnegative")
    g2 = float(gamma) ** 2
    return SupplyRate(lambda z, w: g2 * np.sum(w * w, axis=1) - np.sum(z * z, axis=1),
                      "l2_gain", {"gamma": float(gamma)})


def passivity() -> SupplyRate:
    """``z . w``; output and disturbance must have the same dimension."""
    def ev(z, w):
        if z.shape[1] != w.shape[1]:
            raise SupplyError(f"passivity needs dim z == dim w, got {z.shape[1]} and {w.shape[1]}")
        return np.sum(z * w, axis=1)
    return SupplyRate(ev, "passivity", {})


def output_penalty(weight: float = 1.0) -> SupplyRate:
    """``-weight |z|^2``: with ``w = 0`` this is a decrease check in output form."""
    k = float(weight)
    return SupplyRate(lambda z, w: -k * np.sum(z * z, axis=1), "output_penalty", {"weight": k})


PRESETS = {"l2_gain": l2_gain, "passivity": passivity, "output_penalty": output_penalty}


def supply_rate(kind: str, **params) -> SupplyRate:
    key = kind.replace("-", "_")
    if key not in PRESETS:
        raise SupplyError(f"unknown supply rate {kind!r}; known: {sorted(PRESETS)}")
    return PRESETS[key](**params)


@dataclass
class DissipativityResult:
    status: str
    worst_margin: float
    worst_window: Optional[tuple]
    margins: np.ndarray
    windows: list
    tolerances: np.ndarray
    blowup: bool = False
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def as_dict(self) -> dict:
        return {"status": self.status, "margin": self.worst_margin,
                "worst_window": self.worst_window, "n_windows": len(self.windows),
                "blowup": self.blowup, "notes": self.notes}


def supply_along(traj, out: OutputMap, s: SupplyRate, w: DisturbanceSignal, u=None) -> np.ndarray:
    """``s(z(t_k), w(t_k))`` at every accepted mesh point."""
    ts = traj.times
    z = np.array([np.atleast_1d(out(t, traj.view(t), u, w)) for t in ts])
    ws = np.array([np.atleast_1d(w.eval(t)) for t in ts])
    return s(z, ws)


def _windows_margins(V, traj, supply, windows, tol):
    cum = cumulative_trapezoid(traj, supply)
    pairs = []
    for a, b in windows:
        i = min(max(int(round((a - traj.t0) / traj.h)), 0), traj.n_steps)
        j = min(max(int(round((b - traj.t0) / traj.h)), 0), traj.n_steps)
        pairs.append((i, j))
    needed = sorted({k for p in pairs for k in p})
    vals = dict(zip(needed, functional_along(V, traj, needed)))
    margins = np.array([(cum[j] - cum[i]) - (vals[j] - vals[i]) for i, j in pairs])
    tols = np.array([tol * (1.0 + abs(vals[i])) for i, _ in pairs])
    scales = np.array([abs(vals[j] - vals[i]) for i, j in pairs])
    snapped = [(traj.t0 + i * traj.h, traj.t0 + j * traj.h) for i, j in pairs]
    return margins, tols, scales, snapped


def _result(margins, tols, scales, windows, blowup, notes) -> DissipativityResult:
    if blowup:
        notes = notes + ["integration blew up: dissipation inequality cannot hold"]
    if len(margins) == 0:
        return DissipativityResult("inconclusive", math.inf, None, margins, windows, tols,
                                   blowup, notes + ["no windows inside the simulated horizon"])
    statuses = [classify_margin(float(m), float(t), float(sc))
                for m, t, sc in zip(margins, tols, scales)]
    status = "violation" if blowup else _merge(statuses)
    k = int(np.argmin(margins + tols))
    return DissipativityResult(status, float(margins[k]), windows[k], margins, windows, tols,
                               blowup, notes)


def _simulate(rhs, phi, t0, horizon, h):
    if phi is None:
        phi = HistorySegment.zeros(rhs.dim, rhs.max_delay)
    h = default_step(rhs) if h is None else h
    return integrate(rhs, phi, t0, t0 + horizon, h)


def check_dissipativity(rhs: CaratheodoryRHS, out: OutputMap, V: QuadraticFunctional,
                        s: SupplyRate, w: DisturbanceSignal,
                        phi: Optional[HistorySegment] = None, t0: float = 0.0,
                        horizon: float = 10.0, h: Optional[float] = None,
                        windows: Optional[Sequence[tuple]] = None, tol: float = 1e-6,
                        u=None, traj=None) -> DissipativityResult:
    """Integrated dissipation inequality on each window.

    ``rhs`` must already carry the disturbance ``w`` (it enters the state
    equation); ``w`` is passed again so the supply rate sees the same
    signal. The margin of a window is ``int s - (v(t) - v(s))``.
    """
    traj = _simulate(rhs, phi, t0, horizon, h) if traj is None else traj
    if windows is None:
        windows = window_ladder(traj.t0, traj.t_end)
    windows = [(a, b) for a, b in windows if b <= traj.t_end + 1e-9 * traj.h]
    supply = supply_along(traj, out, s, w, u)
    m, tols, scales, snapped = _windows_margins(V, traj, supply, windows, tol)
    return _result(m, tols, scales, snapped, traj.blowup, [])


def micro_windows(t0: float, t_end: float, width: float) -> list:
    """Back-to-back windows of the given width tiling ``[t0, t_end]`` (last one may be short)."""
    n = int(math.floor((t_end - t0) / width + 1e-9))
    edges = [t0 + k * width for k in range(n + 1)]
    if t_end - edges[-1] > 1e-9 * width:
        edges.append(t_end)
    return list(zip(edges[:-1], edges[1:]))


def differential_form_check(rhs: CaratheodoryRHS, out: OutputMap, V: QuadraticFunctional,
                            s: SupplyRate, w: DisturbanceSignal,
                            phi: Optional[HistorySegment] = None, t0: float = 0.0,
                            horizon: float = 10.0, h: Optional[float] = None,
                            width: Optional[float] = None, tol: float = 1e-6,
                            u=None, traj=None) -> DissipativityResult:
    """Rate form ``dv/dt <= s(z, w)`` checked in integrated form on short tiling windows.

    Because the micro-windows tile the horizon, their margins sum to the
    margin of the full window.
    """
    traj = _simulate(rhs, phi, t0, horizon, h) if traj is None else traj
    width = 2 * traj.h if width is None else width
    if width < 2 * traj.h * (1 - 1e-9):
        raise ValueError(f"micro-window width {width} must be at least 2h = {2 * traj.h}")
    windows = micro_windows(traj.t0, traj.t_end, width)
    supply = supply_along(traj, out, s, w, u)
    m, tols, scales, snapped = _windows_margins(V, traj, supply, windows, tol)
    return _result(m, tols, scales, snapped, traj.blowup, [])
