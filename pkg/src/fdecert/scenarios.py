"""TOML scenarios: parsing, validation, assembly and execution of checks.

A scenario file has the sections ``[system]``, ``[delay]``, ``[functional]``,
``[alpha3]``, ``[checks]``, ``[numerics]`` and ``[seed]``, plus the optional
``[disturbance]``, ``[output]`` and ``[supply]`` for dissipativity runs.
Every key has a default; unknown keys are rejected with their full path.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import certifier, comparison, dissipativity, model, signals
from .functionals import QuadraticFunctional
from .integrator import ae_equivalence_deviation, integrate

SCHEMA_VERSION = 1

DEFAULTS = {
    "name": "",
    "description": "",
    "system": {
        "kind": "linear_delay",  # linear_delay | stieltjes | distributed
        "A1": None,
        "A2": None,
        "A2_kernel": None,
        "D1": None,
    },
    "delay": {
        "kind": "constant",  # constant | piecewise_constant | random_piecewise
        "value": 0.0,
        "bounds": None,
        "breakpoints": [],
        "values": [],
        "n_jumps": 10,
        "t_start": -10.0,
        "t_end": 100.0,
        "seed": 0,
        "glitch_measure": 0.0,
        "glitch_count": 1,
        "glitch_value": None,
    },
    "functional": {"P": None, "Q": None, "R": None, "r": None},
    "alpha3": {"kind": "quadratic", "k": 1.0, "p": 2.0},
    "disturbance": {
        "kind": "zero",
        "amplitude": 1.0,
        "rate": 1.0,
        "omega": 1.0,
        "phase": 0.0,
        "t_on": 0.0,
        "t_off": 1.0,
        "width": 1.0,
        "period": 2.0,
        "count": 1,
        "t_start": 0.0,
        "direction": None,
    },
    "output": {"C1": None, "C2_kernel": None, "D2": None},
    "supply": {"kind": "l2_gain", "gamma": 1.0, "weight": 1.0},
    "checks": {
        "certificate": True,
        "probe": False,
        "settling": False,
        "classify": False,
        "equivalence": False,
        "dissipativity": False,
        "dissipativity_rate": False,
        "tables": False,
    },
    "numerics": {
        "h": 0.01,
        "t0": 0.0,
        "horizon": 10.0,
        "delta": 1.0,
        "n_bound": 1000,
        "n_sandwich": 1000,
        "sandwich_radius": 10.0,
        "n_phi": 20,
        "n_rungs": 20,
        "decrease_tol": 1e-4,
        "eps": [1.0],
        "eta": 0.1,
        "probe_t0": [-5.0, 0.0, 7.3],
        "probe_horizon": 10.0,
        "settling_n_phi": 5,
        "settling_cap": None,
        "classify_delta": [0.01, 0.1, 1.0, 10.0],
        "classify_eps": [0.05, 0.5, 5.0, 50.0],
        "classify_t0": [-5.0, 0.0, 7.3],
        "classify_n_phi": 5,
        "classify_horizon": 20.0,
        "classify_decay_tol": 1e-3,
        "dissipation_tol": 1e-6,
        "micro_width": None,
        "table_phi": 1.0,
    },
    "seed": {"value": 0},
}

_OPEN_DICT_KEYS = {"system.A2_kernel", "output.C2_kernel"}


class ConfigError(ValueError):
    pass


def _merge(defaults: dict, given: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown key '{where}'")
        if isinstance(defaults[key], dict) and where not in _OPEN_DICT_KEYS:
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(defaults[key], val, where)
        else:
            out[key] = val
    return out


def _matrix(val, where: str, rows: Optional[int] = None, cols: Optional[int] = None) -> np.ndarray:
    if val is None:
        raise ConfigError(f"'{where}' is required")
    if isinstance(val, (int, float)):
        val = [[val]]
    if not isinstance(val, list) or not all(isinstance(r, list) for r in val) or not val:
        raise ConfigError(f"'{where}' must be a nested array of rows")
    widths = {len(r) for r in val}
    if len(widths) != 1:
        raise ConfigError(f"'{where}' has rows of unequal length {sorted(widths)}")
    try:
        m = np.array(val, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{where}' has non-numeric entries") from exc
    if rows is not None and m.shape[0] != rows:
        raise ConfigError(f"'{where}' has {m.shape[0]} rows, expected {rows}")
    if cols is not None and m.shape[1] != cols:
        raise ConfigError(f"'{where}' has {m.shape[1]} columns, expected {cols}")
    return m


def _positive(cfg: dict, section: str, keys) -> None:
    for k in keys:
        v = cfg[section][k]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
            raise ConfigError(f"'{section}.{k}' must be a positive number, got {v!r}")


@dataclass
class Scenario:
    name: str
    description: str
    config: dict
    source: str

    @property
    def seed(self) -> int:
        return int(self.config["seed"]["value"])

    @property
    def hash(self) -> str:
        body = {k: v for k, v in self.config.items() if k != "seed"}
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "Scenario":
        cfg = copy.deepcopy(self.config)
        cfg["seed"]["value"] = int(seed)
        return Scenario(self.name, self.description, cfg, self.source)


def validate(cfg: dict) -> None:
    """Dimension and range checks that must pass before any simulation."""
    sysc = cfg["system"]
    if sysc["kind"] not in ("linear_delay", "stieltjes", "distributed"):
        raise ConfigError(f"'system.kind' must be linear_delay, stieltjes or distributed, "
                          f"got {sysc['kind']!r}")
    A1 = _matrix(sysc["A1"], "system.A1")
    n = A1.shape[0]
    if A1.shape != (n, n):
        raise ConfigError(f"'system.A1' must be square, got shape {A1.shape}")
    if sysc["kind"] == "distributed":
        if sysc["A2_kernel"] is None:
            raise ConfigError("'system.A2_kernel' is required for distributed systems")
        _kernel_cfg(sysc["A2_kernel"], "system.A2_kernel", n, n)
    else:
        _matrix(sysc["A2"], "system.A2", n, n)
    dl = cfg["delay"]
    if dl["kind"] not in ("constant", "piecewise_constant", "random_piecewise"):
        raise ConfigError(f"'delay.kind' unknown: {dl['kind']!r}")
    if dl["kind"] == "constant" and not dl["value"] >= 0:
        raise ConfigError("'delay.value' must be nonnegative")
    if dl["kind"] != "constant":
        b = dl["bounds"]
        if not (isinstance(b, list) and len(b) == 2 and 0 <= b[0] <= b[1]):
            raise ConfigError("'delay.bounds' must be [r1, r2] with 0 <= r1 <= r2")
    if dl["glitch_measure"] < 0:
        raise ConfigError("'delay.glitch_measure' must be nonnegative")
    fn = cfg["functional"]
    _matrix(fn["P"], "functional.P", n, n)
    for k in ("Q", "R"):
        if fn[k] is not None:
            _matrix(fn[k], f"functional.{k}", n, n)
    if fn["r"] is not None and not fn["r"] >= 0:
        raise ConfigError("'functional.r' must be nonnegative")
    if cfg["alpha3"]["kind"] not in comparison.PRESETS:
        raise ConfigError(f"'alpha3.kind' unknown: {cfg['alpha3']['kind']!r}")
    _positive(cfg, "numerics", ("h", "horizon", "delta", "eta", "n_phi", "n_bound",
                                "n_sandwich", "sandwich_radius"))
    ds = cfg["disturbance"]
    if ds["kind"].replace("-", "_") not in ("zero", "decaying_exponential", "truncated_sinusoid",
                                            "burst_train"):
        raise ConfigError(f"'disturbance.kind' unknown: {ds['kind']!r}")
    if cfg["checks"]["dissipativity"] or cfg["checks"]["dissipativity_rate"]:
        _matrix(cfg["output"]["C1"], "output.C1", cols=n)
        if cfg["supply"]["kind"].replace("-", "_") not in dissipativity.PRESETS:
            raise ConfigError(f"'supply.kind' unknown: {cfg['supply']['kind']!r}")
        if sysc["kind"] != "distributed":
            raise ConfigError("dissipativity checks need 'system.kind = \"distributed\"'")
    if sysc["D1"] is not None:
        _matrix(sysc["D1"], "system.D1", rows=n)
    seed = cfg["seed"]["value"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("'seed.value' must be an unsigned 64-bit integer")


_KERNEL_KEYS = {"kind", "matrix", "rate", "coefficients"}


def _kernel_cfg(kc, where: str, rows: int, cols: int) -> model.Kernel:
    if not isinstance(kc, dict):
        raise ConfigError(f"'{where}' must be a table with a 'kind'")
    for k in kc:
        if k not in _KERNEL_KEYS:
            raise ConfigError(f"unknown key '{where}.{k}'")
    kind = kc.get("kind", "constant")
    if kind == "zero":
        return model.zero_kernel(rows, cols)
    if kind == "constant":
        return model.constant_kernel(_matrix(kc.get("matrix"), f"{where}.matrix", rows, cols))
    if kind == "exponential":
        return model.exponential_kernel(_matrix(kc.get("matrix"), f"{where}.matrix", rows, cols),
                                        float(kc.get("rate", 1.0)))
    if kind == "polynomial":
        coeffs = kc.get("coefficients")
        if not isinstance(coeffs, list) or not coeffs:
            raise ConfigError(f"'{where}.coefficients' must be a list of matrices")
        return model.polynomial_kernel([_matrix(c, f"{where}.coefficients", rows, cols)
                                        for c in coeffs])
    raise ConfigError(f"'{where}.kind' unknown: {kind!r}")


def parse(text: str, source: str = "<string>") -> Scenario:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    cfg = _merge(DEFAULTS, raw)
    validate(cfg)
    return Scenario(cfg["name"] or Path(source).stem, cfg["description"], cfg, source)


def load(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {p}: {exc}") from exc
    return parse(text, str(p))


def _shipped_dir():
    return resources.files("fdecert") / "scenarios"


def list_scenarios() -> list:
    """``(name, description)`` for every shipped scenario, sorted by name."""
    out = []
    for entry in sorted(_shipped_dir().iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".toml"):
            sc = parse(entry.read_text(), entry.name)
            out.append((sc.name, sc.description))
    return out


def shipped(name: str) -> Scenario:
    entry = _shipped_dir() / f"{name}.toml"
    if not entry.is_file():
        known = ", ".join(n for n, _ in list_scenarios())
        raise ConfigError(f"unknown scenario {name!r}; shipped scenarios: {known}")
    return parse(entry.read_text(), entry.name)


def resolve(name_or_path: str) -> Scenario:
    p = Path(name_or_path)
    if p.suffix == ".toml" or p.exists():
        return load(p)
    return shipped(name_or_path)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{ " + ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items()) + " }"
    return str(v)


def effective_text(cfg: dict) -> str:
    """Effective configuration as TOML; unset optional keys are shown commented out."""
    lines = [f"name = {_toml_value(cfg['name'])}", f"description = {_toml_value(cfg['description'])}"]
    for section, body in cfg.items():
        if not isinstance(body, dict):
            continue
        lines.append("")
        lines.append(f"[{section}]")
        for k, v in body.items():
            lines.append(f"# {k} (unset)" if v is None else f"{k} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"


def describe(name: str) -> str:
    sc = shipped(name)
    return f"{sc.name}: {sc.description}\n\n" + effective_text(sc.config)


# assembly


@dataclass
class Built:
    rhs: model.CaratheodoryRHS
    rhs_free: model.CaratheodoryRHS
    representative: Optional[model.CaratheodoryRHS]
    V: QuadraticFunctional
    a3: comparison.KInfFn
    delay: signals.DelaySignal
    w: signals.DisturbanceSignal
    out: Optional[model.OutputMap]
    supply: Optional[dissipativity.SupplyRate]


def build_delay(dl: dict) -> signals.DelaySignal:
    if dl["kind"] == "constant":
        d = signals.constant_delay(float(dl["value"]))
    elif dl["kind"] == "piecewise_constant":
        d = signals.piecewise_constant_delay(dl["breakpoints"], dl["values"], tuple(dl["bounds"]))
    else:
        d = signals.random_piecewise_delay(tuple(dl["bounds"]), dl["t_start"], dl["t_end"],
                                           int(dl["n_jumps"]), int(dl["seed"]))
    if dl["glitch_measure"] > 0:
        d = signals.random_glitches(d, float(dl["glitch_measure"]), int(dl["glitch_count"]),
                                    dl["t_start"], dl["t_end"], int(dl["seed"]) + 1,
                                    dl["glitch_value"])
    return d


def build_disturbance(ds: dict, dim: int) -> signals.DisturbanceSignal:
    kind = ds["kind"].replace("-", "_")
    direction = None if ds["direction"] is None else np.asarray(ds["direction"], dtype=float)
    if kind == "zero":
        return signals.zero_disturbance(dim)
    if kind == "decaying_exponential":
        return signals.decaying_exponential(ds["amplitude"], ds["rate"], ds["t_start"], direction)
    if kind == "truncated_sinusoid":
        return signals.truncated_sinusoid(ds["amplitude"], ds["omega"], ds["t_on"], ds["t_off"],
                                          ds["phase"], direction)
    return signals.burst_train(ds["amplitude"], ds["omega"], ds["width"], ds["period"],
                               int(ds["count"]), ds["t_start"], direction)


def _system(sysc, delay, w, n):
    A1 = _matrix(sysc["A1"], "system.A1")
    if sysc["kind"] == "distributed":
        kern = _kernel_cfg(sysc["A2_kernel"], "system.A2_kernel", n, n)
        D1 = None if w is None or sysc["D1"] is None else _matrix(sysc["D1"], "system.D1", n)
        return model.distributed_delay_rhs(A1, kern, D1=D1, delay=delay,
                                           w=w if D1 is not None else None)
    A2 = _matrix(sysc["A2"], "system.A2", n, n)
    make = model.stieltjes_rhs if sysc["kind"] == "stieltjes" else model.linear_delay_rhs
    return make(A1, A2, delay)


def build(sc: Scenario) -> Built:
    cfg = sc.config
    sysc = cfg["system"]
    n = _matrix(sysc["A1"], "system.A1").shape[0]
    delay = build_delay(cfg["delay"])
    try:
        m_w = n if sysc["D1"] is None else _matrix(sysc["D1"], "system.D1", n).shape[1]
        w = build_disturbance(cfg["disturbance"], m_w)
        rhs = _system(sysc, delay, w, n)
        rhs_free = _system(sysc, delay, None, n)
        rep = None
        if delay.representative is not delay:
            rep = _system(sysc, delay.representative, None, n)
        fn = cfg["functional"]
        r = delay.r2 if fn["r"] is None else float(fn["r"])
        V = QuadraticFunctional(_matrix(fn["P"], "functional.P", n, n),
                                None if fn["Q"] is None else _matrix(fn["Q"], "functional.Q", n, n),
                                r,
                                None if fn["R"] is None else _matrix(fn["R"], "functional.R", n, n))
        a3c = cfg["alpha3"]
        params = {k: a3c[k] for k in ("k", "p") if k in _preset_params(a3c["kind"])}
        a3 = comparison.from_preset(a3c["kind"], **params)
        out = supply = None
        if cfg["checks"]["dissipativity"] or cfg["checks"]["dissipativity_rate"]:
            oc = cfg["output"]
            C1 = _matrix(oc["C1"], "output.C1", cols=n)
            C2 = None if oc["C2_kernel"] is None else _kernel_cfg(
                oc["C2_kernel"], "output.C2_kernel", C1.shape[0], n)
            D2 = None if oc["D2"] is None else _matrix(oc["D2"], "output.D2", C1.shape[0], m_w)
            out = model.output_map(C1, C2, D2=D2, delay=delay if C2 is not None else None)
            sp = cfg["supply"]
            kind = sp["kind"].replace("-", "_")
            sparams = {"l2_gain": {"gamma": sp["gamma"]}, "passivity": {},
                       "output_penalty": {"weight": sp["weight"]}}[kind]
            supply = dissipativity.supply_rate(kind, **sparams)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return Built(rhs, rhs_free, rep, V, a3, delay, w, out, supply)


def _preset_params(kind: str) -> set:
    return {"identity": set(), "linear": {"k"}, "quadratic": {"k"}, "power": {"k", "p"}}[kind]


# execution


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def _check(status, margin, worst_sample, **details) -> dict:
    return {"status": status, "margin": margin, "worst_sample": worst_sample, **details}


def run_scenario(sc: Scenario) -> dict:
    """Run every enabled check; returns the machine-readable results object."""
    cfg = sc.config
    num, chk = cfg["numerics"], cfg["checks"]
    seed = sc.seed
    b = build(sc)
    checks = {}
    cert = None
    if chk["certificate"]:
        queries = [(float(e), float(num["eta"]), float(num["delta"])) for e in num["eps"]]
        cert = certifier.theorem1_certificate(
            b.rhs_free, b.V, b.a3, delta=num["delta"], n_bound=int(num["n_bound"]),
            n_sandwich=int(num["n_sandwich"]), sandwich_radius=num["sandwich_radius"],
            n_phi=int(num["n_phi"]), t0=num["t0"], horizon=num["horizon"], h=num["h"],
            n_rungs=int(num["n_rungs"]), decrease_tol=num["decrease_tol"], queries=queries,
            seed=seed)
        status = {"certified-GUAS-evidence": "pass", "refuted": "violation"}.get(
            cert.verdict, "inconclusive")
        checks["certificate"] = _check(status, cert.decrease_check["margin"],
                                       cert.decrease_check["worst_sample"], **cert.as_dict())
    certified = cert is not None and cert.verdict == certifier.CERTIFIED
    if chk["probe"]:
        a1, a2 = certifier.sandwich_bounds(b.V)
        res = certifier.uniform_stability_probe(b.rhs_free, a1, a2, num["eps"], int(num["n_phi"]),
                                                num["probe_t0"], num["probe_horizon"], seed,
                                                num["h"])
        worst = max(res, key=lambda x: x["max_ratio"])
        status = certifier._merge([x["status"] for x in res])
        checks["probe"] = _check(status, 1.0 - worst["max_ratio"], worst["worst_sample"],
                                 per_eps=res)
    if chk["settling"]:
        if not certified:
            checks["settling"] = _check("skipped", None, None,
                                        note="settling needs a certified functional")
        else:
            res = certifier.settling_consistency(
                b.rhs_free, b.V, b.a3, num["eta"], num["delta"], int(num["settling_n_phi"]),
                seed, num["t0"], num["h"], num["settling_cap"])
            checks["settling"] = _check(res.pop("status"), res.pop("margin", None),
                                        res.pop("worst_sample", None), **res)
    if chk["classify"]:
        ens = certifier.EnsembleSpec(num["classify_delta"], num["classify_eps"],
                                     num["classify_t0"], int(num["classify_n_phi"]),
                                     num["classify_horizon"], num["h"], num["classify_decay_tol"])
        res = certifier.classify(b.rhs_free, ens, seed)
        checks["classify"] = _check(res.pop("status"), res.pop("margin"),
                                    res.pop("worst_sample"), **res)
    if chk["equivalence"]:
        if b.representative is None:
            checks["equivalence"] = _check("skipped", None, None,
                                           note="delay has no separate representative")
        else:
            phi = model.HistorySegment.constant(np.full(b.rhs_free.dim, num["table_phi"]),
                                                b.rhs_free.max_delay)
            res = ae_equivalence_deviation(b.rhs_free, b.representative, phi, num["t0"],
                                           num["t0"] + num["horizon"], num["h"])
            status = "pass" if res["deviation"] <= res["bound"] else "violation"
            checks["equivalence"] = _check(status, res["bound"] - res["deviation"], None,
                                           glitch_measure=b.delay.glitch_measure, **res)
    if chk["dissipativity"] or chk["dissipativity_rate"]:
        phi = model.HistorySegment.zeros(b.rhs.dim, b.rhs.max_delay)
        traj = integrate(b.rhs, phi, num["t0"], num["t0"] + num["horizon"], num["h"])
        tol = num["dissipation_tol"]
        if chk["dissipativity"]:
            res = dissipativity.check_dissipativity(b.rhs, b.out, b.V, b.supply, b.w, tol=tol,
                                                    traj=traj)
            checks["dissipativity"] = _check(res.status, res.worst_margin,
                                             {"window": res.worst_window}, **_diss_details(res, b))
        if chk["dissipativity_rate"]:
            res = dissipativity.differential_form_check(b.rhs, b.out, b.V, b.supply, b.w,
                                                        width=num["micro_width"], tol=tol,
                                                        traj=traj)
            checks["dissipativity_rate"] = _check(res.status, res.worst_margin,
                                                  {"window": res.worst_window},
                                                  **_diss_details(res, b))
    statuses = [c["status"] for c in checks.values() if c["status"] != "skipped"]
    exit_code = 0 if all(s == "pass" for s in statuses) else 1
    return _jsonable({
        "schema": SCHEMA_VERSION,
        "scenario": sc.name,
        "scenario_hash": sc.hash,
        "seed": seed,
        "checks": checks,
        "verdict": None if cert is None else cert.verdict,
        "exit_code": exit_code,
        "evidence_note": certifier.EVIDENCE_NOTE,
        "effective_config": cfg,
    })


def _diss_details(res, b) -> dict:
    d = res.as_dict()
    d.pop("status")
    d.pop("margin")
    d["supply"] = {"kind": b.supply.kind, **b.supply.params}
    d["disturbance"] = {"kind": b.w.kind, "l2_norm": b.w.l2_norm_on(0.0, math.inf)}
    return d


def nominal_trajectory(sc: Scenario):
    """Run from the constant history ``numerics.table_phi`` for the trajectory table."""
    b = build(sc)
    num = sc.config["numerics"]
    rhs = b.rhs if sc.config["checks"]["dissipativity"] else b.rhs_free
    phi = model.HistorySegment.constant(np.full(rhs.dim, float(num["table_phi"])),
                                        max(rhs.max_delay, b.V.r))
    return integrate(rhs, phi, num["t0"], num["t0"] + num["horizon"], num["h"])


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def render_report(results: dict) -> str:
    """Human-readable summary; deterministic for identical results."""
    lines = [f"scenario: {results['scenario']}",
             f"scenario hash: {results['scenario_hash']}",
             f"seed: {results['seed']}"]
    if results["verdict"] is not None:
        lines.append(f"verdict: {results['verdict']}")
    lines.append(f"exit code: {results['exit_code']}")
    lines.append("")
    settling = results["checks"].get("settling")
    if settling and settling["status"] != "skipped":
        lines.append(f"conservativeness ratio beta/observed settling: "
                     f"{_fmt(settling['conservativeness_ratio'])} "
                     f"(beta = {_fmt(settling['beta'])}, observed = "
                     f"{_fmt(settling['observed_settling'])})")
        for note in settling.get("notes", []):
            lines.append(f"  {note}")
        lines.append("")
    lines.append("checks:")
    for name, c in results["checks"].items():
        lines.append(f"  {name:<20} {c['status']:<13} margin={_fmt(c['margin'])}")
        if c.get("worst_sample"):
            lines.append(f"  {'':<20} worst sample: {json.dumps(c['worst_sample'], sort_keys=True)}")
    cert = results["checks"].get("certificate")
    if cert:
        lines.append("")
        lines.append("certificate:")
        for part in ("bound_check", "sandwich_check", "decrease_check", "lipschitz_check"):
            lines.append(f"  {part:<16} {cert[part]['status']:<13} "
                         f"margin={_fmt(cert[part].get('margin'))}")
        for c in cert["constants"]:
            lines.append("  constants: " + ", ".join(f"{k}={_fmt(v)}" for k, v in c.items()))
        for note in cert["notes"]:
            if note == results["evidence_note"]:
                continue
            lines.append(f"  note: {note}")
    lines.append("")
    lines.append(results["evidence_note"])
    lines.append("")
    lines.append("effective configuration:")
    lines.append(effective_text(results["effective_config"]))
    return "\n".join(lines)
