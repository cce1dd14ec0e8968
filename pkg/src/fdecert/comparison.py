"""Class-K-infinity comparison functions and the explicit stability constants.

A :class:`KInfFn` wraps an opaque scalar map together with an optional
closed-form inverse. Numeric inversion falls back on bracketed bisection,
which always converges for strictly increasing unbounded functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

DEFAULT_DOMAIN_CAP = 1e12
INVERSE_RTOL = 1e-10
INVERSE_MAX_ITER = 200


class NotKInfError(ValueError):
    """Raised when a function fails a sampled class-K-infinity check."""


@dataclass(frozen=True)
class KInfFn:
    """Comparison function ``s -> eval(s)`` on the nonnegative reals."""

    eval: Callable[[float], float]
    analytic_inverse: Optional[Callable[[float], float]] = None
    domain_cap: float = DEFAULT_DOMAIN_CAP
    name: str = "custom"

    def __call__(self, s):
        return self.eval(s)

    def inverse(self, y: float, tol: float = INVERSE_RTOL) -> float:
        return inverse(self, y, tol)


def identity() -> KInfFn:
    return KInfFn(lambda s: s, lambda y: y, name="identity")


def linear(k: float) -> KInfFn:
    if not k > 0:
        raise NotKInfError(f"linear gain must be positive, got {k}")
    return KInfFn(lambda s: k * s, lambda y: y / k, name=f"linear {k:g}")


def quadratic(k: float = 1.0) -> KInfFn:
    if not k > 0:
        raise NotKInfError(f"quadratic gain must be positive, got {k}")
    return KInfFn(lambda s: k * s * s, lambda y: math.sqrt(y / k), name=f"quadratic {k:g}")


def power(p: float, k: float = 1.0) -> KInfFn:
    """``k * s**p`` for ``p > 0``."""
    if not (p > 0 and k > 0):
        raise NotKInfError(f"power preset needs p > 0 and k > 0, got p={p}, k={k}")
    return KInfFn(lambda s: k * s**p, lambda y: (y / k) ** (1.0 / p), name=f"power {p:g} x{k:g}")


PRESETS = {
    "identity": identity,
    "linear": linear,
    "quadratic": quadratic,
    "power": power,
}


def from_preset(kind: str, **params) -> KInfFn:
    """Build a named preset (``identity``, ``linear``, ``quadratic``, ``power``)."""
    try:
        factory = PRESETS[kind]
    except KeyError:
        raise NotKInfError(f"unknown comparison-function preset {kind!r}") from None
    return factory(**params)


def validate(f: KInfFn, n_points: int = 1000, cap: Optional[float] = None) -> None:
    """Sampled class-K-infinity membership test; raises :class:`NotKInfError`.

    Checks ``f(0) = 0``, strict increase on a grid of ``n_points`` over
    ``[0, cap]`` (log-spaced beyond 1), and growth along a doubling sequence.
    """
    cap = min(f.domain_cap, 1e6) if cap is None else cap
    if abs(f.eval(0.0)) > 1e-12:
        raise NotKInfError(f"{f.name}: f(0) = {f.eval(0.0)!r}, expected 0")
    grid = np.unique(np.concatenate([
        np.linspace(0.0, min(1.0, cap), n_points // 2),
        np.geomspace(min(1.0, cap), cap, n_points - n_points // 2),
    ]))
    vals = np.array([f.eval(float(s)) for s in grid])
    if not np.all(np.isfinite(vals)):
        raise NotKInfError(f"{f.name}: non-finite values on [0, {cap:g}]")
    if np.any(np.diff(vals) <= 0):
        i = int(np.argmax(np.diff(vals) <= 0))
        raise NotKInfError(f"{f.name}: not strictly increasing near s={grid[i]:g}")
    s, last = 1.0, f.eval(1.0)
    first = last
    while s * 2.0 <= f.domain_cap:
        s *= 2.0
        cur = f.eval(s)
        if not cur > last:
            raise NotKInfError(f"{f.name}: stalls at {last:g} near s={s:g}")
        last = cur
    if not last > 10.0 * first:
        raise NotKInfError(f"{f.name}: appears bounded (reached {last:g} at s={s:g})")


def inverse(f: KInfFn, y: float, tol: float = INVERSE_RTOL) -> float:
    """Return ``s`` with ``|f(s) - y| <= tol * max(1, y)``.

    Uses ``f.analytic_inverse`` when available; otherwise bisection with a
    doubling upper bracket starting at ``max(1, y)``.
    """
    if y < 0:
        raise ValueError(f"inverse needs y >= 0, got {y}")
    if f.analytic_inverse is not None:
        return float(f.analytic_inverse(y))
    if y == 0:
        return 0.0
    target_tol = tol * max(1.0, y)
    lo, hi = 0.0, max(1.0, y)
    while f.eval(hi) < y:
        lo = hi
        hi *= 2.0
        if hi > f.domain_cap:
            raise NotKInfError(
                f"not K-infinity on tested range: {f.name} stays below {y:g} up to {f.domain_cap:g}"
            )
    mid = 0.5 * (lo + hi)
    for _ in range(INVERSE_MAX_ITER):
        mid = 0.5 * (lo + hi)
        val = f.eval(mid)
        if abs(val - y) <= target_tol:
            break
        if val < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, hi):
            break
    return mid


def delta_of_epsilon(a1: KInfFn, a2: KInfFn, eps: float) -> float:
    """Uniform-stability radius ``1/2 * min(eps, a2^-1(a1(eps)))``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return 0.5 * min(eps, inverse(a2, a1.eval(eps)))


def epsilon_of_eta(a1: KInfFn, a2: KInfFn, eta: float) -> float:
    """Target radius ``1/3 * min(eta, a2^-1(a1(eta)))`` used for settling."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    return min(eta, inverse(a2, a1.eval(eta))) / 3.0


def _ceil(x: float) -> int:
    # snap float noise like 6750.000000000001 onto the integer it represents
    nearest = round(x)
    if abs(x - nearest) <= 1e-12 * max(1.0, abs(x)):
        return int(nearest)
    return math.ceil(x)


def kappa(a2: KInfFn, a3: KInfFn, c_of_delta: float, eps: float, delta: float) -> int:
    """Number of 2r-windows after which the trajectory must have entered the eps-ball."""
    if not (c_of_delta > 0 and eps > 0 and delta > 0):
        raise ValueError("kappa needs positive c(delta), eps and delta")
    decay = a3.eval(eps / 2.0)
    if not decay > 0:
        raise NotKInfError(f"degenerate alpha3: {a3.name}(eps/2) = {decay!r}")
    return _ceil(a2.eval(delta) / decay * c_of_delta / eps) + 1


def beta_settling(kappa_value: int, r: float) -> float:
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    return 2 * kappa_value * r


@dataclass(frozen=True)
class StabilityConstants:
    eps: float
    eta: float
    delta: float
    delta_of_eps: float
    eps_of_eta: float
    kappa: int
    beta: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def stability_constants(a1: KInfFn, a2: KInfFn, a3: KInfFn, c_of_delta: float, r: float,
                        eps: float, eta: float, delta: float) -> StabilityConstants:
    """Evaluate the full constant chain for one ``(eps, eta, delta)`` query."""
    eps_eta = epsilon_of_eta(a1, a2, eta)
    k = kappa(a2, a3, c_of_delta, eps_eta, delta)
    return StabilityConstants(
        eps=eps, eta=eta, delta=delta,
        delta_of_eps=delta_of_epsilon(a1, a2, eps),
        eps_of_eta=eps_eta,
        kappa=k,
        beta=beta_settling(k, r),
    )
