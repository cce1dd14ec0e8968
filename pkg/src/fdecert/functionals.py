"""Quadratic Krasovskii functionals and their integrated decrease check.

The shipped family is

    v(x_t) = x(t)' P x(t) + int_{-r}^0 x(t+s)' Q x(t+s) ds
             + int_{-r}^0 int_s^0 x(t+u)' R x(t+u) du ds,

with integral memory terms only; point evaluations such as x(t-r)' Q x(t-r)
are excluded because they are not absolutely continuous along solutions
whose history is merely continuous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import comparison
from .comparison import KInfFn

MAX_DIM = 8
JACOBI_OFFDIAG_TOL = 1e-12


class FunctionalError(ValueError):
    pass


def jacobi_eigenvalues(a, tol: float = JACOBI_OFFDIAG_TOL, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.

    Closed form for n <= 2. Sweeps stop once the off-diagonal Frobenius
    norm drops below ``tol`` times the matrix norm. Returned ascending.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise FunctionalError("matrix must be square")
    if n > MAX_DIM:
        raise FunctionalError(f"dimension {n} exceeds supported maximum {MAX_DIM}")
    if n == 1:
        return a.diagonal().copy()
    if n == 2:
        p, q, s = a[0, 0], a[1, 1], a[0, 1]
        mean = 0.5 * (p + q)
        rad = math.hypot(0.5 * (p - q), s)
        return np.array([mean - rad, mean + rad])
    scale = max(np.linalg.norm(a), 1e-300)
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a[offdiag]))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = float(a[p, q])
                diff = float(a[q, q] - a[p, p])
                if abs(apq) <= 1e-150 * abs(diff) or apq == 0.0:
                    # rotation angle below rounding: drop the entry
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = diff / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = sn
                rot[q, p] = -sn
                a = rot.T @ a @ rot
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))


@dataclass(frozen=True, eq=False)
class QuadraticFunctional:
    P: np.ndarray
    Q: np.ndarray
    r: float
    R: Optional[np.ndarray] = None
    eig: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        n = P.shape[0]
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float)) if self.Q is not None else np.zeros((n, n))
        R = None if self.R is None else np.atleast_2d(np.asarray(self.R, dtype=float))
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if n > MAX_DIM:
            raise FunctionalError(f"dimension {n} exceeds supported maximum {MAX_DIM}")
        for name, m in (("P", P), ("Q", Q), ("R", R)):
            if m is None:
                continue
            if m.shape != (n, n):
                raise FunctionalError(f"{name} has shape {m.shape}, expected {(n, n)}")
            if not np.array_equal(m, m.T):
                raise FunctionalError(f"{name} is not symmetric")
        if not self.r >= 0:
            raise FunctionalError("functional span r must be nonnegative")
        eig = {"P": jacobi_eigenvalues(P), "Q": jacobi_eigenvalues(Q)}
        eig["R"] = jacobi_eigenvalues(R) if R is not None else np.zeros(n)
        if eig["Q"][0] < -1e-12 * max(1.0, abs(eig["Q"][-1])):
            raise FunctionalError("Q is not positive semidefinite")
        if eig["R"][0] < -1e-12 * max(1.0, abs(eig["R"][-1])):
            raise FunctionalError("R is not positive semidefinite")
        object.__setattr__(self, "eig", eig)

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    @property
    def positive_definite(self) -> bool:
        return bool(self.eig["P"][0] > 0)


def eval_functional(V: QuadraticFunctional, segment) -> float:
    """``v`` on a segment; integral terms by composite trapezoid on the segment mesh."""
    if segment.span < V.r - 1e-12:
        raise FunctionalError(f"segment span {segment.span} shorter than functional span {V.r}")
    x0 = segment.eval(0.0)
    val = float(x0 @ V.P @ x0)
    if V.r == 0:
        return val
    th, xs = segment.nodes(-V.r)
    dth = np.diff(th)
    if np.any(V.Q):
        g = np.einsum("ki,ij,kj->k", xs, V.Q, xs)
        val += float(np.dot(dth, 0.5 * (g[1:] + g[:-1])))
    if V.R is not None and np.any(V.R):
        g = np.einsum("ki,ij,kj->k", xs, V.R, xs) * (th + V.r)
        val += float(np.dot(dth, 0.5 * (g[1:] + g[:-1])))
    return val


def sandwich_bounds(V: QuadraticFunctional):
    """``(a1, a2)`` with ``a1(|phi(0)|) <= v(phi) <= a2(sup |phi|)``."""
    lo = float(V.eig["P"][0])
    if not lo > 0:
        raise FunctionalError("P is not positive definite: no lower comparison function exists")
    hi = float(V.eig["P"][-1] + V.r * V.eig["Q"][-1] + 0.5 * V.r**2 * V.eig["R"][-1])
    return comparison.quadratic(lo), comparison.quadratic(hi)


@dataclass
class DecreaseResult:
    passed: bool
    worst_margin: float
    worst_window: Optional[tuple]
    margins: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    windows: list
    tolerances: np.ndarray

    @property
    def violations(self) -> list:
        return [w for w, m, tol in zip(self.windows, self.margins, self.tolerances) if m < -tol]


def snap_index(traj, t: float) -> int:
    k = int(round((t - traj.t0) / traj.h))
    return min(max(k, 0), traj.n_steps)


def functional_along(V: QuadraticFunctional, traj, indices) -> np.ndarray:
    """``v(x_{t_k})`` at the given mesh indices."""
    out = np.empty(len(indices))
    for j, k in enumerate(indices):
        out[j] = eval_functional(V, traj.view(traj.t0 + k * traj.h))
    return out


def cumulative_trapezoid(traj, integrand: np.ndarray) -> np.ndarray:
    """Running trapezoid integral on the uniform trajectory mesh, starting at 0."""
    out = np.zeros(len(integrand))
    out[1:] = np.cumsum(0.5 * traj.h * (integrand[1:] + integrand[:-1]))
    return out


def evaluate_on(f: KInfFn, values: np.ndarray) -> np.ndarray:
    """Apply a comparison function elementwise, vectorised when the callable allows it."""
    try:
        out = np.asarray(f.eval(values), dtype=float)
        if out.shape == values.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([f.eval(float(s)) for s in values])


def decrease_check(V: QuadraticFunctional, a3: KInfFn, traj, window_times: Sequence[tuple],
                   tol: float = 1e-6) -> DecreaseResult:
    """Integrated decrease ``v(t) - v(s) <= -int_s^t a3(|x|)`` on each window.

    Window endpoints are snapped to the trajectory mesh. The margin of a
    window is ``-int a3 - (v(t) - v(s))``; it passes when the margin is at
    least ``-tol * (1 + |v(s)|)``.
    """
    norms = traj.norms()
    decay = evaluate_on(a3, norms)
    cum = cumulative_trapezoid(traj, decay)
    pairs = [(snap_index(traj, s), snap_index(traj, t)) for s, t in window_times]
    needed = sorted({k for p in pairs for k in p})
    vals = dict(zip(needed, functional_along(V, traj, needed)))
    lhs = np.array([vals[j] - vals[i] for i, j in pairs])
    rhs = np.array([-(cum[j] - cum[i]) for i, j in pairs])
    margins = rhs - lhs
    tols = np.array([tol * (1.0 + abs(vals[i])) for i, _ in pairs])
    windows = [(traj.t0 + i * traj.h, traj.t0 + j * traj.h) for i, j in pairs]
    if len(margins):
        w = int(np.argmin(margins + tols))
        worst, worst_w = float(margins[w]), windows[w]
    else:
        worst, worst_w = math.inf, None
    passed = bool(np.all(margins >= -tols))
    return DecreaseResult(passed, worst, worst_w, margins, lhs, rhs, windows, tols)


def window_ladder(t0: float, t_end: float, n_rungs: int = 20, min_rung: float = 0.0) -> list:
    """Windows for the decrease check: growing ``(t0, t_k)`` plus consecutive ``(t_{k-1}, t_k)``.

    Rungs are at least ``min_rung`` long (callers pass the maximal delay).
    """
    if min_rung > 0:
        n_rungs = max(1, min(n_rungs, int((t_end - t0) / min_rung)))
    ts = np.linspace(t0, t_end, n_rungs + 1)
    growing = [(t0, float(t)) for t in ts[1:]]
    steps = [(float(a), float(b)) for a, b in zip(ts[:-1], ts[1:])]
    return growing + steps[1:]
