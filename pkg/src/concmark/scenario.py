"""Scenario files: one JSON document describing a certify, envelope and tail-check run.

A scenario names a model, an observable, how to obtain ``(a, b, V)``, where
the inequality constants come from, which envelope to build, an r-grid and
the ground-truth oracle.  :func:`run` executes the pipeline and writes its
artifacts into a directory of its own.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import bounds
from .chain_core import BirthDeathChain, Observable, geometric_n, mm_infinity, potential_chain, \
    stationary_measure, tabulated
from .constants import InequalityConstants, entropic_criterion, spectral_gap_exact
from .lyapunov import CertificationError, DiffusionModel, TestFunction, certify, residual, \
    recipe_birth_death, recipe_diffusion, recipe_glauber
from .oracles import TailCurve, chi_square_tail, exact_tail_interval, format_float, \
    regularized_gamma_q
from .simulators import GlauberSystem, dobrushin_epsilon, empirical_tail, \
    glauber_enumerate_gibbs, nearest_neighbor_potential, sample_ou, simulate_birth_death, \
    simulate_glauber

__all__ = ["SCHEMA", "ScenarioError", "Scenario", "ScenarioResult", "load", "bundled", "run",
           "parse_grid", "dump_json"]

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "name", "model", "observable", "envelope", "grid", "oracle"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "model": {
            "type": "object",
            "required": ["type", "family"],
            "properties": {
                "type": {"enum": ["chain", "diffusion", "glauber"]},
                "family": {"enum": ["geometric_n", "mm_infinity", "potential", "tabulated",
                                    "ou", "quadratic_form", "radial_boltzmann", "lattice"]},
                "params": {"type": "object"},
                "N": {"type": "integer", "minimum": 1},
            },
        },
        "observable": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"type": "string"}, "param": {}},
        },
        "test_function": {
            "type": "object",
            "required": ["kind", "param"],
            "properties": {"kind": {"type": "string"}, "param": _POS},
        },
        "lyapunov": {
            "type": "object",
            "properties": {
                "recipe": {"type": "object"},
                "a": _POS,
                "b": _POS,
                "certify_up_to": _POS,
            },
        },
        "constants": {
            "type": "object",
            "required": ["mode"],
            "properties": {
                "mode": {"enum": ["computed", "supplied"]},
                "rho0": _POS,
                "spectral_gap": _POS,
                "alpha": {"type": "object", "additionalProperties": _POS},
                "provenance": {"type": "object", "additionalProperties": {"type": "string"}},
            },
        },
        "envelope": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["entropic", "beckner", "covariance", "super_exponential"]},
                "p": {"type": "number", "exclusiveMinimum": 1, "maximum": 2},
            },
        },
        "grid": {
            "type": "object",
            "required": ["r0", "r1", "steps"],
            "properties": {"r0": {"type": "number", "minimum": 0}, "r1": _NUM,
                           "steps": {"type": "integer", "minimum": 1}},
        },
        "oracle": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["exact", "simulation", "monte_carlo"]},
                "n_events": {"type": "integer", "minimum": 1},
                "samples": {"type": "integer", "minimum": 100},
                "x0": {},
            },
        },
    },
}


class ScenarioError(ValueError):
    """Malformed scenario or an inconsistent combination of its parts."""


@dataclass
class Scenario:
    doc: dict
    source: str = ""

    @property
    def name(self) -> str:
        return self.doc["name"]

    @property
    def seed(self) -> int:
        return int(self.doc.get("seed", 0))


@dataclass
class ScenarioResult:
    name: str
    passed: bool
    certificate: dict | None = None
    constants: dict | None = None
    envelope: dict | None = None
    curve: TailCurve | None = None
    failures: list = field(default_factory=list)
    recipe: dict | None = None

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 2

    def report(self) -> dict:
        out = {"name": self.name, "passed": self.passed, "failures": self.failures,
               "recipe": self.recipe, "certificate": self.certificate,
               "constants": self.constants, "envelope": self.envelope}
        if self.curve is not None:
            out["dominated"] = self.curve.dominated()
            out["first_violation"] = self.curve.first_violation()
            out["oracle"] = self.curve.meta
        return out


# --- loading -------------------------------------------------------------------

def parse_grid(spec: str) -> dict:
    """``"r0:r1:steps"`` to a grid mapping."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ScenarioError(f"grid must read r0:r1:steps, got {spec!r}")
    try:
        r0, r1, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ScenarioError(f"bad grid {spec!r}: {exc}") from None
    if r0 < 0 or steps < 1 or (steps > 1 and r1 <= r0):
        raise ScenarioError("grid needs 0 <= r0 < r1 and steps >= 1")
    return {"r0": r0, "r1": r1, "steps": steps}


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package."""
    res = resources.files("concmark") / "scenarios" / f"{name}.json"
    if not res.is_file():
        raise ScenarioError(f"no bundled scenario {name!r}")
    return Path(str(res))


def _resolve(path) -> Path:
    p = Path(path)
    if p.is_file():
        return p
    if p.suffix == "" and not p.exists():
        return bundled(p.name)
    raise ScenarioError(f"scenario file not found: {path}")


def load(path, seed: int | None = None, grid: dict | None = None) -> Scenario:
    """Read, validate and apply command-line overrides."""
    p = _resolve(path)
    try:
        doc = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot parse {p}: {exc}") from None
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{p}: {where}: {exc.message}") from None
    if seed is not None:
        doc["seed"] = int(seed)
    if grid is not None:
        doc["grid"] = grid
    g = doc["grid"]
    if g["steps"] > 1 and g["r1"] <= g["r0"]:
        raise ScenarioError("grid needs r0 < r1")
    sc = Scenario(doc, str(p))
    _check_pairing(sc)
    return sc


def _check_pairing(sc: Scenario):
    doc = sc.doc
    const = doc.get("constants", {"mode": "computed"})
    kind = doc["envelope"]["kind"]
    mtype = doc["model"]["type"]
    if const["mode"] == "supplied":
        prov = const.get("provenance", {})
        for key in ("rho0", "spectral_gap", "alpha"):
            if key in const and key not in prov:
                raise ScenarioError(f"supplied constant {key!r} lacks a provenance tag")
        if kind != "beckner" and "rho0" not in const:
            raise ScenarioError(f"{kind} envelope requires rho0")
        if kind == "beckner":
            p = doc["envelope"].get("p", 2)
            if str(p) not in const.get("alpha", {}) and not (p == 2 and "spectral_gap" in const):
                raise ScenarioError(f"beckner envelope with p={p} requires alpha_p")
    else:
        if mtype == "diffusion":
            raise ScenarioError("diffusion constants cannot be computed; supply them")
        if kind == "beckner" and doc["envelope"].get("p", 2) != 2 and mtype == "chain":
            raise ScenarioError("only alpha_2 can be computed; supply alpha_p for p < 2")
        if kind == "beckner" and mtype == "glauber":
            raise ScenarioError("the Glauber route computes rho0 only; use an entropic envelope")


# --- building blocks -----------------------------------------------------------

def _build_model(spec: dict):
    t, fam, prm = spec["type"], spec["family"], spec.get("params", {})
    try:
        if t == "chain":
            if fam == "geometric_n":
                return geometric_n(prm["p"], prm.get("n", 0))
            if fam == "mm_infinity":
                return mm_infinity(prm["lam"])
            if fam == "potential":
                coeffs = np.asarray(prm["poly"], dtype=float)
                return potential_chain(lambda x: np.polyval(coeffs, np.asarray(x, dtype=float)))
            if fam == "tabulated":
                return tabulated(prm["birth"], prm["death"])
        elif t == "diffusion":
            if fam == "ou":
                return DiffusionModel("ou", prm["d"])
            if fam == "quadratic_form":
                A = np.asarray(prm["A"], dtype=float)
                return DiffusionModel("quadratic_form", A.shape[0], A)
            if fam == "radial_boltzmann":
                return DiffusionModel("radial_boltzmann", prm["d"], beta=prm["beta"])
        elif t == "glauber" and fam == "lattice":
            pot = prm.get("potential", "nearest_neighbor")
            if pot == "nearest_neighbor":
                dim = len(np.atleast_1d(prm["sites"][0]))
                pot = nearest_neighbor_potential(dim, prm.get("strength", 1.0))
            else:
                pot = {tuple(int(c) for c in k.split(",")): v for k, v in pot.items()}
            return GlauberSystem(prm["sites"], prm["intensity"], pot, prm["beta"],
                                 prm.get("cutoff", 15))
    except KeyError as exc:
        raise ScenarioError(f"model parameter missing: {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"invalid model: {exc}") from None
    raise ScenarioError(f"family {fam!r} does not belong to model type {t!r}")


def _observable(spec: dict) -> Observable:
    try:
        return Observable(spec["kind"], spec.get("param"))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def _constants(sc: Scenario, model) -> InequalityConstants:
    const = sc.doc.get("constants", {"mode": "computed"})
    if const["mode"] == "supplied":
        try:
            return InequalityConstants(
                spectral_gap=const.get("spectral_gap"),
                entropic_lower=const.get("rho0", 0.0),
                beckner_lower={float(k): v for k, v in const.get("alpha", {}).items()},
                provenance=dict(const.get("provenance", {})))
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
    if isinstance(model, BirthDeathChain):
        N = sc.doc["model"].get("N")
        gap = spectral_gap_exact(model, N)
        crit = entropic_criterion(model, N)
        prov = {"spectral_gap": "eigensolve"}
        if crit.applicable and crit.alpha > 0:
            prov["entropic_lower"] = "daipra_criterion"
        return InequalityConstants(gap, crit.alpha, {}, prov)
    eps, rho = dobrushin_epsilon(model.potential, model.beta, max(model.intensity))
    if rho is None:
        raise ScenarioError(f"Dobrushin condition fails: |lambda|_inf * eps = "
                            f"{max(model.intensity) * eps:.6g} >= 1")
    return InequalityConstants(None, rho, {}, {"entropic_lower": "dobrushin"},
                               note=f"eps={format_float(eps)}")


def _recipe(sc: Scenario, model, consts: InequalityConstants):
    lyap = sc.doc.get("lyapunov", {})
    spec = dict(lyap.get("recipe", {}))
    env = sc.doc["envelope"]
    beckner2 = env["kind"] == "beckner" and env.get("p", 2) == 2
    try:
        if isinstance(model, BirthDeathChain):
            case = spec.pop("case", "geometric_n")
            if case == "geometric_n":
                spec.setdefault("poincare_floor", beckner2)
                if beckner2:
                    spec.setdefault("spectral_gap", consts.beckner(2))
            rec = recipe_birth_death(model, case, N=sc.doc["model"].get("N"), **spec)
        elif isinstance(model, DiffusionModel):
            gap = consts.gap_upper() if beckner2 else None
            rec = recipe_diffusion(model, spectral_gap=gap)
        else:
            rec = recipe_glauber(model, spec.get("kappa", 2.0))
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"recipe: {exc}") from None
    a = float(lyap.get("a", rec.a))
    b = float(lyap.get("b", rec.b))
    V = rec.V
    if "test_function" in sc.doc:
        tf = sc.doc["test_function"]
        try:
            V = TestFunction(tf["kind"], tf["param"])
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
    floor = 0.0
    if beckner2 and consts.spectral_gap is not None:
        floor = 3 * a * consts.beckner(2)
        b = max(b, floor)
    info = {k: (float(v) if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool)
                else v) for k, v in rec.info.items()}
    return a, b, V, floor, {"a": a, "b": b, "V": V.describe(), **info}


def _envelope(sc: Scenario, consts: InequalityConstants, a: float, b: float):
    env = sc.doc["envelope"]
    kind = env["kind"]
    if kind == "beckner":
        p = env.get("p", 2)
        return bounds.beckner_envelope(consts.beckner(p), p, a, b)
    rho0 = consts.entropic_lower
    if not rho0 > 0:
        raise ScenarioError(f"{kind} envelope needs a positive entropic constant; "
                            "the criterion gave none")
    if kind == "entropic":
        return bounds.entropic_envelope(rho0, a, b)
    if kind == "covariance":
        return bounds.covariance_envelope(rho0, a, b)
    return bounds.super_exp_envelope(rho0, a, b)


def _grid(sc: Scenario) -> np.ndarray:
    g = sc.doc["grid"]
    if g["steps"] == 1:
        return np.array([float(g["r0"])])
    return np.linspace(float(g["r0"]), float(g["r1"]), int(g["steps"]))


# --- oracles -------------------------------------------------------------------

def _truth(sc: Scenario, model, f: Observable, rs: np.ndarray):
    """``(lo, hi, comparison, meta)`` for the tail ``P(f - mean f > r)``."""
    oracle = sc.doc["oracle"]
    kind = oracle["kind"]
    seed = sc.seed
    if isinstance(model, BirthDeathChain):
        mu = stationary_measure(model, sc.doc["model"].get("N"))
        if kind == "exact":
            pairs = [exact_tail_interval(mu, f, r) for r in rs]
            return ([p[0] for p in pairs], [p[1] for p in pairs], "hi",
                    {"kind": "exact", "N": mu.N, "tail_mass_bound": mu.tail_mass_bound})
        if kind == "simulation":
            run = simulate_birth_death(model, int(oracle.get("x0", 0)), seed=seed,
                                       n_events=int(oracle.get("n_events", 10**6)))
            mean = mu.expect(f(np.arange(mu.N + 1)))
            return _empirical(run.states, run.holding, f, rs, mean, seed,
                              {"n_events": run.event_count})
    elif isinstance(model, DiffusionModel):
        if kind == "exact":
            return _diffusion_exact(model, f, rs)
        if kind == "monte_carlo":
            n = int(oracle.get("samples", 10**5))
            pts = sample_ou(model.d, n, seed)
            if model.family == "radial_boltzmann":
                raise ScenarioError("Monte Carlo sampling is only available for Gaussian models")
            vals = f(pts)
            mean = _diffusion_mean(model, f)
            return _empirical(vals, None, None, rs, mean, seed, {"samples": n})
    else:
        gibbs = glauber_enumerate_gibbs(model)
        vals = f(gibbs.states)
        mean = gibbs.expect(vals)
        if kind == "exact":
            lo = [float(np.sum(gibbs.probs[vals - mean > r])) for r in rs]
            hi = [min(v + gibbs.truncation_deficit, 1.0) for v in lo]
            return lo, hi, "hi", {"kind": "exact", "truncation_deficit": gibbs.truncation_deficit}
        if kind == "simulation":
            eta0 = oracle.get("x0", [0] * model.size)
            run = simulate_glauber(model, eta0, seed=seed,
                                   n_events=int(oracle.get("n_events", 10**6)))
            return _empirical(run.states, run.holding, f, rs, mean, seed,
                              {"n_events": run.event_count})
    raise ScenarioError(f"oracle {kind!r} is not available for this model")


def _diffusion_mean(model, f):
    if f.kind == "radial_power" and f.param == 2 and model.family != "radial_boltzmann":
        return float(model.d)
    if f.kind == "quadratic_form" and model.family != "radial_boltzmann":
        return float(np.trace(np.asarray(f.param, dtype=float)))
    raise ScenarioError(f"no closed-form mean for {f.kind} under {model.family}")


def _diffusion_exact(model, f, rs):
    d = model.d
    if model.family in ("ou", "quadratic_form") and f.kind == "radial_power" and f.param == 2:
        vals = [chi_square_tail(d, r) for r in rs]
        return vals, vals, "hi", {"kind": "chi_square", "d": d}
    if model.family == "quadratic_form" and f.kind == "quadratic_form":
        A = np.asarray(f.param, dtype=float)
        ev = np.linalg.eigvalsh(A)
        if np.allclose(ev, ev[0]):
            s = float(ev[0])
            vals = [chi_square_tail(d, r / s) for r in rs]
            return vals, vals, "hi", {"kind": "chi_square", "d": d, "scale": s}
    if model.family == "radial_boltzmann" and f.kind == "radial_power" and f.param == model.beta:
        # |x|^beta is Gamma(d/beta, 1) under exp(-|x|^beta)
        k = d / model.beta
        vals = [regularized_gamma_q(k, k + r) for r in rs]
        return vals, vals, "hi", {"kind": "gamma", "shape": k}
    raise ScenarioError(f"no exact tail for {f.kind} under {model.family}; use monte_carlo")


def _empirical(samples, weights, f, rs, mean, seed, meta):
    lo, hi = [], []
    skipped = 0
    for r in rs:
        try:
            ti = empirical_tail(samples, f, r, mean=mean, weights=weights)
            lo.append(ti.lo)
            hi.append(ti.hi)
        except ValueError:
            # too few effective samples: the interval is uninformative
            lo.append(0.0)
            hi.append(1.0)
            skipped += 1
    return lo, hi, "lo", {"kind": "empirical", "seed": seed, "mean": mean,
                          "uninformative_points": skipped, **meta}


# --- pipeline ------------------------------------------------------------------

def _certificate(sc, model, f, V, a, b, floor):
    up_to = sc.doc.get("lyapunov", {}).get("certify_up_to")
    if up_to is None and isinstance(model, BirthDeathChain):
        up_to = sc.doc["model"].get("N")
    try:
        cert = certify(model, f, V, a, N=up_to, floor=floor)
    except CertificationError as exc:
        state = exc.state
        if isinstance(model, BirthDeathChain):
            xs = np.arange(model.max_state(int(up_to) if up_to else None) + 1)
            over = np.flatnonzero(residual(model, f, V, a, xs) > b)
            if len(over):
                state = int(xs[over[0]])
        return None, {"stage": "certify", "state": state,
                      "message": f"{exc}; with b={b!r} the residual first exceeds b at x={state}"}
    except ValueError as exc:
        raise ScenarioError(f"certify: {exc}") from None
    out = cert.to_json()
    out["b_used"] = b
    if cert.b > b * (1 + 1e-12):
        return out, {"stage": "certify", "message": f"b={b!r} is below the certified minimum "
                     f"{cert.b!r}", "state": out["residual_argmax_state"]}
    if cert.range_limited:
        return out, {"stage": "certify", "message": "no tail witness: the certificate is "
                     f"range-limited to {cert.verified_up_to}", "state": None}
    return out, None


def run(sc: Scenario, stages=("certify", "envelope", "tails")) -> ScenarioResult:
    """Execute the selected stages; failures of checks are collected, not raised."""
    model = _build_model(sc.doc["model"])
    f = _observable(sc.doc["observable"])
    consts = _constants(sc, model)
    a, b, V, floor, recipe = _recipe(sc, model, consts)
    res = ScenarioResult(sc.name, True, recipe=recipe, constants=consts.to_json())
    if "certify" in stages:
        cert, failure = _certificate(sc, model, f, V, a, b, floor)
        res.certificate = cert
        if failure:
            res.failures.append(failure)
    if "envelope" in stages or "tails" in stages:
        try:
            env = _envelope(sc, consts, a, b)
        except bounds.RestrictionError as exc:
            res.failures.append({"stage": "envelope", "message": str(exc), "state": None})
            res.passed = False
            return res
        except ValueError as exc:
            raise ScenarioError(f"envelope: {exc}") from None
        res.envelope = env.describe()
        if "tails" in stages:
            rs = _grid(sc)
            lo, hi, comparison, meta = _truth(sc, model, f, rs)
            bound = np.asarray(env.bound(rs), dtype=float).reshape(-1)
            regime = [env.regime(float(r)) for r in rs]
            res.curve = TailCurve(rs, lo, hi, bound, regime, comparison, meta)
            bad = res.curve.first_violation()
            if bad is not None:
                res.failures.append({"stage": "tails", "message": "tail exceeds the envelope",
                                     "state": bad})
    res.passed = not res.failures
    return res


# --- output --------------------------------------------------------------------

def _encode(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(_encode(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v) or math.isinf(v):
            return json.dumps(str(v))
        return format_float(v)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent)
    return json.dumps(str(obj))


def dump_json(obj, path) -> None:
    """JSON with every float at 17 significant digits."""
    Path(path).write_text(_encode(obj) + "\n")


def write_artifacts(res: ScenarioResult, out_dir) -> Path:
    target = Path(out_dir) / res.name
    target.mkdir(parents=True, exist_ok=True)
    if res.certificate is not None:
        dump_json(res.certificate, target / "certificate.json")
    dump_json({"constants": res.constants, "envelope": res.envelope, "recipe": res.recipe},
              target / "constants.json")
    if res.curve is not None:
        res.curve.to_csv(target / "tails.csv")
    dump_json(res.report(), target / "report.json")
    return target
