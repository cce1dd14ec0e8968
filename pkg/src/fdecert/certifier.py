"""Sampled verification of the Krasovskii stability conditions.

Everything here is falsification: a pass means no counterexample was found
on the sampled budget. Reports say "evidence", never "proof".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import comparison
from .comparison import KInfFn, StabilityConstants
from .functionals import (QuadraticFunctional, decrease_check, eval_functional,
                          sandwich_bounds, window_ladder)
from .integrator import default_step, integrate_batch
from .model import CaratheodoryRHS, sample_rng, sample_segment, verify_caratheodory_bound

ABS_SLACK = 1e-9
REL_SLACK = 1e-6
LIPSCHITZ_TOL = 1e-6
EVIDENCE_NOTE = ("Verdicts are sampled evidence, not proof: universally quantified "
                 "conditions were only falsified on a finite sample.")

CERTIFIED = "certified-GUAS-evidence"
REFUTED = "refuted"
INCONCLUSIVE = "inconclusive"


def classify_margin(margin: float, tol: float, scale: float) -> str:
    """``pass`` / ``inconclusive`` / ``violation`` for a signed margin (>= -tol passes).

    Violations within the absolute 1e-9 plus relative 1e-6 slack are
    inconclusive rather than refuting.
    """
    if margin >= -tol:
        return "pass"
    if margin >= -(tol + ABS_SLACK + REL_SLACK * abs(scale)):
        return "inconclusive"
    return "violation"


def _merge(statuses) -> str:
    statuses = list(statuses)
    if "violation" in statuses or "counterexample" in statuses:
        return "violation"
    if all(s == "pass" for s in statuses):
        return "pass"
    return "inconclusive"


def history_span(rhs: CaratheodoryRHS, V: Optional[QuadraticFunctional] = None) -> float:
    return max(rhs.max_delay, V.r if V is not None else 0.0)


def sample_histories(dim: int, span: float, radius: float, n: int, seed: int, stream: int):
    """``n`` replayable random histories; history ``i`` depends only on ``(seed, stream, i)``."""
    return [sample_segment(dim, span, radius, sample_rng(seed, i, stream)) for i in range(n)]


def lipschitz_check(traj, c_bound, max_lag_time: float, tol: float = LIPSCHITZ_TOL) -> dict:
    """``|x(t) - x(s)|_1 <= c(delta) |t - s| + tol`` for mesh pairs with ``|t - s| <= max_lag_time``.

    ``delta`` is taken just above the largest ``|x|_2`` seen on the run,
    history included.
    """
    delta = max(float(np.max(traj.norms())), traj.phi.sup_norm()) * (1 + 1e-12) + 1e-300
    c = c_bound(delta)
    if c is None:
        return {"status": "unavailable", "delta": delta}
    xs = traj.xs
    worst, worst_pair = -math.inf, None
    lags = max(1, min(int(round(max_lag_time / traj.h)), len(xs) - 1))
    for k in range(1, lags + 1):
        d = np.sum(np.abs(xs[k:] - xs[:-k]), axis=1) - c * k * traj.h
        if len(d) == 0:
            break
        j = int(np.argmax(d))
        if d[j] > worst:
            worst = float(d[j])
            worst_pair = (traj.t0 + j * traj.h, traj.t0 + (j + k) * traj.h)
    status = "pass" if worst <= tol else "violation"
    return {"status": status, "delta": delta, "c_delta": c, "worst_excess": worst,
            "worst_pair": worst_pair}


def verdict_from(bound: str, sandwich: str, decrease: str, lipschitz: str = "unavailable",
                 internal: bool = False) -> str:
    """Refuted on any violation; certified only when every check passes."""
    checks = [bound, sandwich, decrease]
    if lipschitz != "unavailable":
        checks.append(lipschitz)
    if "violation" in checks:
        return REFUTED
    if all(c == "pass" for c in checks) and not internal:
        return CERTIFIED
    return INCONCLUSIVE


@dataclass
class CertificateReport:
    bound_check: dict
    sandwich_check: dict
    decrease_check: dict
    lipschitz_check: dict
    constants: list
    verdict: str
    seed: int
    samples: dict
    notes: list = field(default_factory=list)
    internal_inconsistency: bool = False

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "bound_check": self.bound_check,
            "sandwich_check": self.sandwich_check,
            "decrease_check": self.decrease_check,
            "lipschitz_check": self.lipschitz_check,
            "constants": [c.as_dict() for c in self.constants],
            "seed": self.seed,
            "samples": self.samples,
            "notes": self.notes,
            "internal_inconsistency": self.internal_inconsistency,
        }


def sandwich_check(V: QuadraticFunctional, n_samples: int, radius: float, seed: int,
                   span: Optional[float] = None, tol: float = 1e-9) -> dict:
    """Sampled ``a1(|phi(0)|) <= v(phi) <= a2(sup|phi|) + tol`` on random histories."""
    a1, a2 = sandwich_bounds(V)
    span = V.r if span is None else span
    worst_margin, worst_idx, status = math.inf, None, "pass"
    for i in range(n_samples):
        phi = sample_segment(V.dim, span, radius, sample_rng(seed, i, stream=3))
        v = eval_functional(V, phi)
        lower = a1.eval(float(np.linalg.norm(phi.eval(0.0))))
        upper = a2.eval(phi.sup_norm())
        scale = max(abs(v), 1.0)
        margin = min(v - lower, upper - v)
        s = classify_margin(margin, tol * scale, v)
        if margin < worst_margin:
            worst_margin, worst_idx = margin, i
        if s != "pass":
            status = _merge([status, s])
    return {"status": status, "margin": worst_margin,
            "worst_sample": {"seed": seed, "stream": 3, "index": worst_idx},
            "a1_gain": a1.eval(1.0), "a2_gain": a2.eval(1.0), "n_samples": n_samples}


def theorem1_certificate(rhs: CaratheodoryRHS, V: QuadraticFunctional, a3: KInfFn, *,
                         delta: float = 1.0, n_bound: int = 1000, n_sandwich: int = 1000,
                         sandwich_radius: float = 10.0, n_phi: int = 20, t0: float = 0.0,
                         horizon: float = 10.0, h: Optional[float] = None, n_rungs: int = 20,
                         decrease_tol: float = 1e-4,
                         queries: Sequence[tuple] = ((1.0, 0.1, 1.0),),
                         seed: int = 0) -> CertificateReport:
    """Check the bound, sandwich and decrease conditions and collect the proof constants.

    ``queries`` holds ``(eps, eta, delta)`` triples for the constant chain.
    ``horizon`` is the simulated duration after ``t0``.
    """
    comparison.validate(a3)
    if V.dim != rhs.dim:
        raise ValueError(f"functional dimension {V.dim} != system dimension {rhs.dim}")
    notes = [EVIDENCE_NOTE]
    bc = verify_caratheodory_bound(rhs, delta, n_bound, seed)
    bound = {"status": {"pass": "pass", "counterexample": "violation"}.get(bc.status, "inconclusive"),
             "margin": None if bc.c_delta is None else 1.0 - bc.max_ratio,
             "max_ratio": bc.max_ratio, "c_delta": bc.c_delta, "delta": delta,
             "worst_sample": bc.counterexample, "n_samples": bc.n_samples}
    if bc.status == "unavailable":
        notes.append("c(delta) unavailable: bound check and Lipschitz check skipped")

    span = history_span(rhs, V)
    sandwich = sandwich_check(V, n_sandwich, sandwich_radius, seed, span)
    a1, a2 = sandwich_bounds(V)

    h = default_step(rhs) if h is None else h
    phis = sample_histories(rhs.dim, span, delta, n_phi, seed, stream=4)
    trajs = integrate_batch(rhs, phis, t0, t0 + horizon, h)
    windows = window_ladder(t0, t0 + horizon, n_rungs, min_rung=span)
    statuses, worst, worst_sample = [], math.inf, None
    lip_statuses, lip_worst, lip_sample = [], -math.inf, None
    blowups = 0
    for i, tr in enumerate(trajs):
        res = decrease_check(V, a3, tr, windows, decrease_tol)
        for m, tol, w, lhs in zip(res.margins, res.tolerances, res.windows, res.lhs):
            st = classify_margin(float(m), float(tol), float(lhs))
            statuses.append(st)
        if res.worst_margin < worst:
            worst = res.worst_margin
            worst_sample = {"seed": seed, "stream": 4, "index": i, "window": res.worst_window}
        blowups += tr.blowup
        lc = lipschitz_check(tr, rhs.c_bound, span)
        lip_statuses.append(lc["status"])
        if lc.get("worst_excess", -math.inf) > lip_worst:
            lip_worst = lc["worst_excess"]
            lip_sample = {"seed": seed, "stream": 4, "index": i, "pair": lc.get("worst_pair")}
    dec_status = _merge(statuses) if statuses else "inconclusive"
    decrease = {"status": dec_status, "margin": worst, "worst_sample": worst_sample,
                "n_phi": n_phi, "n_windows": len(windows), "tol": decrease_tol,
                "blowups": blowups}
    internal = bool(blowups and dec_status == "pass")
    if internal:
        notes.append("integration blew up although the decrease check passed: "
                     "tolerances are misconfigured")
    if "unavailable" in lip_statuses:
        lip_status = "unavailable"
    else:
        lip_status = _merge(lip_statuses)
    lipschitz = {"status": lip_status, "margin": None if lip_worst == -math.inf else -lip_worst,
                 "worst_sample": lip_sample, "tol": LIPSCHITZ_TOL}

    constants = []
    r = rhs.max_delay if rhs.max_delay > 0 else span
    for eps, eta, d in queries:
        c = rhs.c_bound(d)
        if c is None or not c > 0:
            notes.append(f"no constants for delta={d}: c(delta) unavailable")
            continue
        constants.append(comparison.stability_constants(a1, a2, a3, c, r, eps, eta, d))

    verdict = verdict_from(bound["status"], sandwich["status"], dec_status, lip_status, internal)
    samples = {"n_bound": n_bound, "n_sandwich": n_sandwich, "n_phi": n_phi,
               "horizon": horizon, "h": h, "t0": t0}
    return CertificateReport(bound, sandwich, decrease, lipschitz, constants, verdict, seed,
                             samples, notes, internal)


def uniform_stability_probe(rhs: CaratheodoryRHS, a1: KInfFn, a2: KInfFn, eps_list: Sequence[float],
                            n_phi: int, t0_list: Sequence[float], horizon: float, seed: int = 0,
                            h: Optional[float] = None) -> list:
    """For each eps, start inside the delta(eps) ball and report ``max sup|x_t| / eps``.

    A ratio >= 1 contradicts uniform stability with the given (a1, a2).
    """
    out = []
    span = rhs.max_delay
    for j, eps in enumerate(eps_list):
        d = comparison.delta_of_epsilon(a1, a2, eps)
        eq7 = bool(0 < d < eps and a2.eval(d) < a1.eval(eps))
        phis = sample_histories(rhs.dim, span, d, n_phi, seed, stream=100 + j)
        worst, worst_sample, blowup = 0.0, None, False
        for t0 in t0_list:
            for i, tr in enumerate(integrate_batch(rhs, phis, t0, t0 + horizon, h)):
                m = max(float(np.max(tr.norms())), tr.phi.sup_norm())
                if tr.blowup:
                    blowup = True
                    m = math.inf
                if m / eps > worst:
                    worst = m / eps
                    worst_sample = {"seed": seed, "stream": 100 + j, "index": i, "t0": t0}
        out.append({"eps": eps, "delta": d, "eq7_holds": eq7, "max_ratio": worst,
                    "status": "pass" if (worst < 1.0 and eq7) else "violation",
                    "blowup": blowup, "worst_sample": worst_sample})
    return out


@dataclass(frozen=True)
class SettlingBound:
    eps_eta: float
    kappa: int
    beta: float


def settling_bound(a1: KInfFn, a2: KInfFn, a3: KInfFn, c_at_delta: float, r: float,
                   eta: float, delta: float) -> SettlingBound:
    eps_eta = comparison.epsilon_of_eta(a1, a2, eta)
    k = comparison.kappa(a2, a3, c_at_delta, eps_eta, delta)
    return SettlingBound(eps_eta, k, comparison.beta_settling(k, r))


def _settling_time(traj, eta: float) -> float:
    """Time after ``t0`` from which ``sup|x_t| < eta`` holds for the rest of the run."""
    ws = traj.window_sup()
    above = np.nonzero(ws >= eta)[0]
    if len(above) == 0:
        return 0.0
    k = int(above[-1]) + 1
    return k * traj.h


def settling_consistency(rhs: CaratheodoryRHS, V: QuadraticFunctional, a3: KInfFn, eta: float,
                         delta: float, n_phi: int = 10, seed: int = 0, t0: float = 0.0,
                         h: Optional[float] = None, horizon_cap: Optional[float] = None) -> dict:
    """Compare the proof's settling bound beta with simulated settling.

    Runs to ``t0 + min(beta, horizon_cap)`` with the cap defaulting to
    ``1e4 r``. A violation is an excursion ``sup|x_t| >= eta`` after
    ``t0 + beta``. When the cap cuts the run short, the check requires the
    run to have settled within the simulated horizon.
    """
    a1, a2 = sandwich_bounds(V)
    c = rhs.c_bound(delta)
    if c is None:
        return {"status": "inconclusive", "note": "c(delta) unavailable"}
    r = rhs.max_delay if rhs.max_delay > 0 else history_span(rhs, V)
    sb = settling_bound(a1, a2, a3, c, r, eta, delta)
    cap = 1e4 * r if horizon_cap is None else horizon_cap
    run = min(sb.beta, cap)
    capped = sb.beta > cap
    span = history_span(rhs, V)
    phis = sample_histories(rhs.dim, span, delta, n_phi, seed, stream=5)
    h = default_step(rhs) if h is None else h
    # one extra window past beta so the post-beta check is never empty
    trajs = integrate_batch(rhs, phis, t0, t0 + run + (0.0 if capped else span + h), h)
    observed, status, worst_sample, worst_after = 0.0, "pass", None, 0.0
    for i, tr in enumerate(trajs):
        settle = _settling_time(tr, eta)
        if tr.blowup:
            settle = math.inf
        if settle > observed or worst_sample is None:
            observed = max(observed, settle)
            worst_sample = {"seed": seed, "stream": 5, "index": i}
        ws = tr.window_sup()
        after = ws[tr.times >= t0 + sb.beta]
        if len(after):
            worst_after = max(worst_after, float(after.max()))
            if after.max() >= eta:
                status = "violation"
        elif capped and (tr.blowup or ws[-1] >= eta):
            status = _merge([status, "inconclusive"])
    ratio = math.inf if observed == 0 else sb.beta / observed
    notes = []
    if capped:
        notes.append(f"cap: simulated {run:g} time units of beta={sb.beta:g}; "
                     f"checked settled state on [t0 + observed settling, t0 + {run:g}]")
    return {"status": status, "eta": eta, "delta": delta, "c_delta": c,
            "eps_eta": sb.eps_eta, "kappa": sb.kappa, "beta": sb.beta,
            "horizon_simulated": run, "capped": capped, "observed_settling": observed,
            "conservativeness_ratio": ratio, "max_sup_after_beta": worst_after,
            "margin": eta - worst_after if not capped else eta - max(
                float(tr.window_sup()[-1]) for tr in trajs),
            "worst_sample": worst_sample, "n_phi": n_phi, "notes": notes}


@dataclass
class EnsembleSpec:
    delta_grid: Sequence[float] = (0.01, 0.1, 1.0, 10.0)
    eps_grid: Sequence[float] = (0.05, 0.5, 5.0, 50.0)
    t0_grid: Sequence[float] = (-5.0, 0.0, 7.3)
    n_phi: int = 10
    horizon: float = 20.0
    h: Optional[float] = None
    decay_tol: float = 1e-3


STABLE = "stable-evidence"
UNIFORM = "uniform-stable-evidence"
GUAS = "GUAS-evidence"
UNSTABLE = "unstable"


def classify(rhs: CaratheodoryRHS, ensemble: EnsembleSpec, seed: int = 0) -> dict:
    """Empirical stability label without any functional.

    For each ``(eps, t0)`` the largest grid ``delta`` keeping every sampled
    run inside ``eps`` is recorded; uniformity means that value does not
    depend on ``t0``, and asymptotic decay means the final window norm fell
    below ``decay_tol`` times the initial one.
    """
    span = rhs.max_delay
    shapes = sample_histories(rhs.dim, span, 1.0, ensemble.n_phi, seed, stream=6)
    deltas = sorted(ensemble.delta_grid)
    sups = {}
    worst_decay, blowup = 0.0, False
    for t0 in ensemble.t0_grid:
        phis = [s.scaled(d) for d in deltas for s in shapes]
        trajs = integrate_batch(rhs, phis, t0, t0 + ensemble.horizon, ensemble.h)
        for idx, tr in enumerate(trajs):
            d = deltas[idx // ensemble.n_phi]
            init = tr.phi.sup_norm()
            sup = max(float(np.max(tr.norms())), init)
            if tr.blowup:
                blowup, sup = True, math.inf
                decay = math.inf
            else:
                decay = float(tr.window_sup()[-1]) / init if init > 0 else 0.0
            worst_decay = max(worst_decay, decay)
            key = (t0, d)
            sups[key] = max(sups.get(key, 0.0), sup)
    admissible = {}
    for eps in ensemble.eps_grid:
        for t0 in ensemble.t0_grid:
            ok = [d for d in deltas if sups[(t0, d)] < eps]
            admissible[(eps, t0)] = max(ok) if ok else None
    stable = all(v is not None for v in admissible.values())
    uniform = stable and all(
        len({admissible[(eps, t0)] for t0 in ensemble.t0_grid}) == 1 for eps in ensemble.eps_grid)
    asymptotic = worst_decay <= ensemble.decay_tol
    if blowup or worst_decay > 1.0:
        verdict = UNSTABLE
    elif stable and uniform and asymptotic:
        verdict = GUAS
    elif stable and uniform:
        verdict = UNIFORM
    elif stable:
        verdict = STABLE
    else:
        verdict = INCONCLUSIVE
    status = {GUAS: "pass", UNIFORM: "pass", STABLE: "pass", UNSTABLE: "violation"}.get(
        verdict, "inconclusive")
    return {
        "verdict": verdict,
        "status": status,
        "stable": stable,
        "uniform": uniform,
        "asymptotic": asymptotic,
        "blowup": blowup,
        "worst_decay_ratio": worst_decay,
        "margin": ensemble.decay_tol - worst_decay,
        "admissible_delta": {f"eps={e:g},t0={t:g}": d for (e, t), d in admissible.items()},
        "worst_sample": None,
    }
