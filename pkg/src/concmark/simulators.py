"""Stochastic engines and empirical tails.

Random streams come from the counter-based Philox generator; replicas get
independent child streams spawned from one ``SeedSequence`` so results do
not depend on how replicas are scheduled.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import beta as beta_dist
from scipy.stats import poisson

from .chain_core import BirthDeathChain, Observable

__all__ = [
    "GlauberSystem",
    "SimulationRun",
    "GibbsEnumeration",
    "TailInterval",
    "SimulationError",
    "make_rng",
    "spawn_rngs",
    "worker_count",
    "run_replicas",
    "nearest_neighbor_potential",
    "simulate_birth_death",
    "sample_ou",
    "glauber_hamiltonian",
    "glauber_birth_rates",
    "glauber_enumerate_gibbs",
    "detailed_balance_residual",
    "simulate_glauber",
    "dobrushin_epsilon",
    "clopper_pearson",
    "empirical_tail",
]

CONFIDENCE = 0.99
DEFAULT_EVENT_CAP = 50_000_000
_BLOCK = 65536


class SimulationError(RuntimeError):
    pass


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent Philox streams for ``count`` replicas."""
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("CONCMARK_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def run_replicas(fn: Callable, seed: int, count: int, workers: int | None = None) -> list:
    """Evaluate ``fn(child_seed_sequence)`` for each replica; results keep replica order."""
    children = np.random.SeedSequence(seed).spawn(count)
    workers = worker_count(workers)
    if workers == 1 or count == 1:
        return [fn(c) for c in children]
    with ProcessPoolExecutor(max_workers=min(workers, count)) as pool:
        return list(pool.map(fn, children))


@dataclass
class SimulationRun:
    """Embedded jump chain of a simulated path.

    ``states[i]`` is occupied for ``holding[i]`` time units; the final
    holding time is cut at the horizon.
    """

    seed: int
    event_count: int
    horizon: float
    states: np.ndarray
    holding: np.ndarray
    params: dict = field(default_factory=dict)

    def occupation(self) -> dict:
        """Time-weighted empirical law over visited states."""
        total = float(np.sum(self.holding))
        keys = self.states if self.states.ndim == 1 else [tuple(s) for s in self.states]
        out: dict = {}
        for k, h in zip(keys.tolist() if self.states.ndim == 1 else keys, self.holding):
            out[k] = out.get(k, 0.0) + float(h)
        return {k: v / total for k, v in out.items()}

    def time_average(self, values: np.ndarray) -> float:
        values = np.asarray(values, dtype=float)
        return float(np.dot(values, self.holding) / np.sum(self.holding))

    def summary(self) -> dict:
        elapsed = float(np.sum(self.holding))
        vals = self.states if self.states.ndim == 1 else self.states.sum(axis=1)
        return {
            "seed": self.seed,
            "event_count": self.event_count,
            "horizon": self.horizon,
            "elapsed": elapsed,
            "time_average": float(np.dot(vals, self.holding) / elapsed) if elapsed > 0 else None,
            "params": self.params,
        }


def _stop_rule(horizon, n_events):
    if not math.isfinite(horizon) and n_events is None:
        raise ValueError("give a finite horizon or an event count")
    return n_events if n_events is not None else None


def simulate_birth_death(chain: BirthDeathChain, x0: int, horizon: float = math.inf,
                         seed: int = 0, n_events: int | None = None,
                         event_cap: int = DEFAULT_EVENT_CAP) -> SimulationRun:
    """Exact event-driven path of a birth-death chain.

    Holding times are exponential with rate ``lambda_x + nu_x``; the jump
    goes up with probability ``lambda_x / (lambda_x + nu_x)``.  The run stops
    at ``horizon`` or after ``n_events`` jumps, whichever comes first.
    """
    target = _stop_rule(horizon, n_events)
    limit = target if target is not None else event_cap
    rng = make_rng(seed)

    def rates(size):
        if chain.size is not None:
            size = chain.size
        lam_ = np.asarray(chain.birth(np.arange(size)), dtype=float)
        nu_ = np.asarray(chain.death(np.arange(size)), dtype=float)
        nu_[0] = 0.0
        return size, lam_, nu_

    cache, lam, nu = rates(64)
    states = [int(x0)]
    holding = []
    t = 0.0
    x = int(x0)
    events = 0
    exps = rng.standard_exponential(_BLOCK)
    unis = rng.random(_BLOCK)
    j = 0
    while True:
        if chain.size is None and x + 2 >= cache:
            cache, lam, nu = rates(max(2 * cache, x + 64))
        if chain.size is not None and x == chain.size - 1:
            up, down = 0.0, float(nu[x])
        else:
            up, down = float(lam[x]), float(nu[x])
        rate = up + down
        if rate <= 0.0:
            holding.append(horizon - t if math.isfinite(horizon) else 0.0)
            break
        if j == _BLOCK:
            exps = rng.standard_exponential(_BLOCK)
            unis = rng.random(_BLOCK)
            j = 0
        dt = exps[j] / rate
        u = unis[j]
        j += 1
        if t + dt >= horizon:
            holding.append(horizon - t)
            break
        if events >= limit:
            if target is not None:
                holding.append(dt)
                break
            raise SimulationError(f"event cap {event_cap} exceeded before t={horizon}: "
                                  "possible explosion at this horizon")
        holding.append(dt)
        t += dt
        x = x + 1 if u * rate < up else x - 1
        states.append(x)
        events += 1
    return SimulationRun(seed, events, horizon, np.asarray(states, dtype=np.int64),
                         np.asarray(holding, dtype=float), {"chain": chain.describe(), "x0": int(x0)})


def sample_ou(d: int, n: int, seed: int = 0) -> np.ndarray:
    """``n`` draws from the OU invariant law, the standard Gaussian on ``R^d``."""
    return make_rng(seed).standard_normal((n, d))


# --- Glauber dynamics --------------------------------------------------------

def nearest_neighbor_potential(dim: int = 1, strength: float = 1.0) -> dict:
    pot = {}
    for i in range(dim):
        e = [0] * dim
        e[i] = 1
        pot[tuple(e)] = strength
        e[i] = -1
        pot[tuple(e)] = strength
    return pot


@dataclass(frozen=True)
class GlauberSystem:
    """Particles on a finite box with Poisson reference intensities and a pair potential.

    ``potential`` maps lattice offsets to nonnegative values; it must be even
    and vanish at the origin.
    """

    sites: tuple
    intensity: tuple
    potential: dict
    beta: float
    cutoff: int = 15

    def __post_init__(self):
        sites = tuple(tuple(int(c) for c in np.atleast_1d(s)) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "intensity", tuple(float(v) for v in self.intensity))
        pot = {tuple(int(c) for c in np.atleast_1d(k)): float(v) for k, v in self.potential.items()}
        object.__setattr__(self, "potential", pot)
        if len(set(sites)) != len(sites) or not sites:
            raise ValueError("sites must be distinct and nonempty")
        if len(self.intensity) != len(sites):
            raise ValueError("one intensity per site")
        if any(v < 0 or not math.isfinite(v) for v in self.intensity):
            raise ValueError("intensity must be bounded and nonnegative")
        for k, v in pot.items():
            if v < 0:
                raise ValueError("potential must be nonnegative")
            if all(c == 0 for c in k) and v != 0:
                raise ValueError("potential must vanish at the origin")
            if pot.get(tuple(-c for c in k), 0.0) != v:
                raise ValueError(f"potential must be even; phi{k} != phi(-{k})")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.cutoff < 1:
            raise ValueError("cutoff must be positive")

    @property
    def size(self) -> int:
        return len(self.sites)

    @property
    def range_radius(self) -> float:
        nz = [np.linalg.norm(k) for k, v in self.potential.items() if v > 0]
        return max(nz) if nz else 0.0

    def interaction(self) -> np.ndarray:
        pts = np.asarray(self.sites)
        J = np.zeros((self.size, self.size))
        for i, j in itertools.product(range(self.size), repeat=2):
            J[i, j] = self.potential.get(tuple((pts[i] - pts[j]).tolist()), 0.0)
        return J

    def describe(self) -> dict:
        return {"sites": [list(s) for s in self.sites], "intensity": list(self.intensity),
                "potential": {",".join(map(str, k)): v for k, v in sorted(self.potential.items())},
                "beta": self.beta, "cutoff": self.cutoff}


def glauber_hamiltonian(system: GlauberSystem, eta):
    """``H(eta) = 1/2 sum_{x,y} phi(x-y) eta_x eta_y``; rows of a 2-d array are configurations."""
    eta = np.asarray(eta, dtype=float)
    J = system.interaction()
    out = 0.5 * np.einsum("...i,ij,...j->...", eta, J, eta)
    return float(out) if np.ndim(out) == 0 else out


def glauber_birth_rates(system: GlauberSystem, eta) -> np.ndarray:
    """``c+(eta, x) = lambda(x) exp(-beta sum_y phi(x-y) eta_y)`` for every site."""
    eta = np.asarray(eta, dtype=float)
    J = system.interaction()
    return np.asarray(system.intensity) * np.exp(-system.beta * (eta @ J.T))


class GibbsEnumeration(NamedTuple):
    states: np.ndarray
    probs: np.ndarray
    truncation_deficit: float

    def index(self, K: int) -> Callable:
        base = (K + 1) ** np.arange(self.states.shape[1])[::-1]
        return lambda eta: int(np.dot(np.asarray(eta), base))

    def expect(self, values) -> float:
        return float(np.dot(self.probs, values))


def glauber_enumerate_gibbs(system: GlauberSystem) -> GibbsEnumeration:
    """Gibbs measure on ``{0..K}^sites`` (row-major order), exactly normalised.

    The truncation deficit is the mass a product Poisson reference puts
    outside the box, which bounds the interacting deficit since the
    Boltzmann factor is at most one.
    """
    K, n = system.cutoff, system.size
    if (K + 1) ** n > 10**7:
        raise ValueError(f"state space too large: {(K + 1)}^{n} configurations")
    states = np.array(list(itertools.product(range(K + 1), repeat=n)), dtype=np.int64)
    lam = np.asarray(system.intensity)
    with np.errstate(divide="ignore"):
        loglam = np.log(lam)
    ref = np.where(states > 0, states * loglam, 0.0) - gammaln(states + 1) - lam
    logw = -system.beta * np.atleast_1d(glauber_hamiltonian(system, states)) + ref.sum(axis=1)
    probs = np.exp(logw - logsumexp(logw))
    inside = float(np.prod(poisson.cdf(K, lam)))
    return GibbsEnumeration(states, probs, 1.0 - inside)


def detailed_balance_residual(system: GlauberSystem, gibbs: GibbsEnumeration) -> float:
    """``max |c+(eta,x) mu(eta) - c-(eta+delta_x, x) mu(eta+delta_x)|`` over the box."""
    K = system.cutoff
    births = glauber_birth_rates(system, gibbs.states)
    worst = 0.0
    strides = (K + 1) ** np.arange(system.size)[::-1]
    for x in range(system.size):
        ok = gibbs.states[:, x] < K
        src = np.flatnonzero(ok)
        dst = src + strides[x]
        lhs = births[src, x] * gibbs.probs[src]
        rhs = (gibbs.states[dst, x]) * gibbs.probs[dst]
        if len(src):
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


class _Fenwick:
    """Prefix sums with O(log n) update and search."""

    def __init__(self, values):
        self.n = len(values)
        self.tree = [0.0] * (self.n + 1)
        self.vals = [0.0] * self.n
        for i, v in enumerate(values):
            self.update(i, v)
        self.top = 1 << max(0, self.n.bit_length() - 1)

    def update(self, i, value):
        delta = value - self.vals[i]
        self.vals[i] = value
        i += 1
        while i <= self.n:
            self.tree[i] += delta
            i += i & -i

    def total(self):
        s, i = 0.0, self.n
        while i > 0:
            s += self.tree[i]
            i -= i & -i
        return s

    def find(self, u):
        """Smallest index whose prefix sum exceeds ``u``, and ``u`` minus the sum before it."""
        pos, step = 0, self.top
        while step:
            nxt = pos + step
            if nxt <= self.n and self.tree[nxt] <= u:
                pos = nxt
                u -= self.tree[nxt]
            step >>= 1
        if pos >= self.n:
            # rounding pushed u past the total
            return self.n - 1, self.vals[self.n - 1]
        return pos, u


def simulate_glauber(system: GlauberSystem, eta0, horizon: float = math.inf, seed: int = 0,
                     n_events: int | None = None,
                     event_cap: int = DEFAULT_EVENT_CAP) -> SimulationRun:
    """Event-driven Glauber dynamics with birth rates ``c+`` and death rates ``eta_x``.

    A site is drawn from the per-site total rates by a Fenwick-tree search;
    after a jump only sites interacting with the changed one are updated.
    """
    target = _stop_rule(horizon, n_events)
    limit = target if target is not None else event_cap
    n = system.size
    J = system.interaction()
    nbrs = [np.flatnonzero(J[:, i]).tolist() for i in range(n)]
    lam = list(system.intensity)
    beta = system.beta
    eta = [int(v) for v in np.asarray(eta0)]
    if len(eta) != n or min(eta) < 0:
        raise ValueError("eta0 must be a nonnegative configuration on the sites")
    field_ = (J @ np.asarray(eta, dtype=float)).tolist()
    birth = [lam[i] * math.exp(-beta * field_[i]) for i in range(n)]
    tree = _Fenwick([birth[i] + eta[i] for i in range(n)])
    rng = make_rng(seed)
    states = [tuple(eta)]
    holding = []
    t = 0.0
    events = 0
    exps = rng.standard_exponential(_BLOCK)
    unis = rng.random(_BLOCK)
    j = 0
    while True:
        rate = tree.total()
        if rate <= 0.0:
            holding.append(horizon - t if math.isfinite(horizon) else 0.0)
            break
        if j == _BLOCK:
            exps = rng.standard_exponential(_BLOCK)
            unis = rng.random(_BLOCK)
            j = 0
        dt = exps[j] / rate
        u = unis[j] * rate
        j += 1
        if t + dt >= horizon:
            holding.append(horizon - t)
            break
        if events >= limit:
            if target is not None:
                holding.append(dt)
                break
            raise SimulationError(f"event cap {event_cap} exceeded before t={horizon}")
        holding.append(dt)
        t += dt
        site, within = tree.find(u)
        # position inside the chosen site's rate decides birth or death
        if within < birth[site]:
            eta[site] += 1
            sign = 1
        else:
            eta[site] -= 1
            sign = -1
        for y in nbrs[site]:
            field_[y] += sign * J[y, site]
            birth[y] = lam[y] * math.exp(-beta * field_[y])
            tree.update(y, birth[y] + eta[y])
        tree.update(site, birth[site] + eta[site])
        states.append(tuple(eta))
        events += 1
    return SimulationRun(seed, events, horizon, np.asarray(states, dtype=np.int64),
                         np.asarray(holding, dtype=float),
                         {"system": system.describe(), "eta0": [int(v) for v in np.asarray(eta0)]})


def dobrushin_epsilon(potential: dict, beta: float, intensity_sup: float
                      ) -> tuple[float, float | None]:
    """``eps = sum_x (1 - exp(-beta phi(x)))`` and ``1 - |lambda|_inf eps`` when positive."""
    eps = float(sum(-math.expm1(-beta * v) for v in potential.values()))
    if intensity_sup * eps < 1.0:
        return eps, 1.0 - intensity_sup * eps
    return eps, None


# --- empirical tails ---------------------------------------------------------

class TailInterval(NamedTuple):
    estimate: float
    lo: float
    hi: float
    n_eff: float


def clopper_pearson(k: float, n: float, confidence: float = CONFIDENCE) -> tuple[float, float]:
    """Two-sided exact binomial interval; accepts fractional effective counts."""
    alpha = 1.0 - confidence
    lo = 0.0 if k <= 0 else float(beta_dist.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k >= n else float(beta_dist.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def _batch_means(values, weights, batches):
    edges = np.linspace(0, len(values), batches + 1).astype(int)
    out = []
    for s, e in zip(edges[:-1], edges[1:]):
        w = weights[s:e]
        out.append(np.dot(values[s:e], w) / np.sum(w))
    return np.asarray(out)


def empirical_tail(samples, f: Observable | Callable | None, r: float, mean: float | None = None,
                   weights=None, batches: int = 50, confidence: float = CONFIDENCE) -> TailInterval:
    """Estimate ``P(f - mean > r)`` with a Clopper-Pearson interval.

    ``samples`` are i.i.d. draws unless ``weights`` (holding times of a path)
    are given; then batch means over ``batches >= 30`` consecutive blocks
    estimate the variance and set the effective sample size.
    """
    vals = np.asarray(samples if f is None else f(samples), dtype=float)
    if vals.ndim != 1:
        raise ValueError("observable must map samples to scalars")
    if weights is None:
        n = len(vals)
        if n < 100:
            raise ValueError("fewer than 100 effective samples")
        m = float(np.mean(vals)) if mean is None else mean
        k = int(np.sum(vals - m > r))
        lo, hi = clopper_pearson(k, n, confidence)
        return TailInterval(k / n, lo, hi, float(n))
    if batches < 30:
        raise ValueError("batch means need at least 30 batches")
    w = np.asarray(weights, dtype=float)
    m = float(np.dot(vals, w) / np.sum(w)) if mean is None else mean
    ind = (vals - m > r).astype(float)
    p = float(np.dot(ind, w) / np.sum(w))
    bm = _batch_means(ind, w, batches)
    var_p = float(np.var(bm, ddof=1)) / batches
    if 0.0 < p < 1.0 and var_p > 0:
        n_eff = p * (1.0 - p) / var_p
    else:
        # no hits: borrow the decorrelation scale of the observable itself
        fm = _batch_means(vals, w, batches)
        var_f = float(np.dot((vals - m) ** 2, w) / np.sum(w))
        var_mean = float(np.var(fm, ddof=1)) / batches
        n_eff = var_f / var_mean if var_mean > 0 else float(len(vals))
    n_eff = min(n_eff, float(len(vals)))
    if n_eff < 100:
        raise ValueError(f"fewer than 100 effective samples ({n_eff:.1f})")
    lo, hi = clopper_pearson(p * n_eff, n_eff, confidence)
    return TailInterval(p, lo, hi, n_eff)
