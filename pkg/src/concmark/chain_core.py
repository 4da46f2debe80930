"""Reversible birth-death chains on the nonnegative integers.

Every chain is described by vectorised rate functions ``birth(x)`` and
``death(x)``.  Finite computations work on the reflected truncation
``{0..N}``: the birth rate at ``N`` is zeroed so the truncated chain is
again a reversible birth-death chain whose renormalised measure is exactly
stationary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import poisson

__all__ = [
    "DomainError",
    "BirthDeathChain",
    "TruncatedMeasure",
    "Observable",
    "PhiEntropyKind",
    "geometric_n",
    "mm_infinity",
    "potential_chain",
    "tabulated",
    "chain_from_csv",
    "stationary_measure",
    "generator_apply",
    "carre_du_champ",
    "dirichlet_form",
    "phi_entropy",
    "semigroup_evolve",
]

RateFn = Callable[[np.ndarray], np.ndarray]

# Fraction of the truncation range inspected for geometric domination.
TAIL_WINDOW = 0.2


class DomainError(ValueError):
    """An observable or density was evaluated outside its domain."""


@dataclass(frozen=True)
class BirthDeathChain:
    """Nearest-neighbour jump process with rates ``birth(x)`` and ``death(x)``.

    ``size`` is set for chains living on a finite set ``{0..size-1}``;
    their birth rate at the last state is zero by construction.
    """

    birth: RateFn
    death: RateFn
    family: str = "tabulated"
    params: dict = field(default_factory=dict)
    truncation_hint: int = 200
    size: int | None = None

    def rates(self, N: int, reflect: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Birth and death rate arrays on ``0..N``.

        With ``reflect`` the birth rate at ``N`` is set to zero.
        """
        if N < 0:
            raise ValueError("N must be nonnegative")
        if self.size is not None and N > self.size - 1:
            raise ValueError(f"chain has only {self.size} states; N={N} is out of range")
        x = np.arange(N + 1)
        lam = np.asarray(self.birth(x), dtype=float).copy()
        nu = np.asarray(self.death(x), dtype=float).copy()
        nu[0] = 0.0
        if reflect:
            lam[N] = 0.0
        return lam, nu

    def max_state(self, N: int | None = None) -> int:
        if N is None:
            N = self.truncation_hint
        if self.size is not None:
            return min(N, self.size - 1)
        return N

    def check_invariants(self, N: int) -> None:
        lam, nu = self.rates(N, reflect=False)
        inner = lam[:N] if self.size is not None and N == self.size - 1 else lam
        if np.any(~np.isfinite(lam)) or np.any(~np.isfinite(nu)):
            raise ValueError("rates must be finite (stability)")
        if np.any(inner <= 0):
            x = int(np.flatnonzero(inner <= 0)[0])
            raise ValueError(f"birth rate must be positive; birth({x}) = {lam[x]}")
        if N >= 1 and np.any(nu[1:] <= 0):
            x = int(np.flatnonzero(nu[1:] <= 0)[0]) + 1
            raise ValueError(f"death rate must be positive for x >= 1; death({x}) = {nu[x]}")

    def describe(self) -> dict:
        return {"family": self.family, **self.params}


def geometric_n(p: float, n: int = 0, truncation_hint: int = 400) -> BirthDeathChain:
    """Chain with ``birth = p (x+1)^n`` and ``death = x^n``; stationary law geometric(p)."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if n < 0 or int(n) != n:
        raise ValueError("n must be a nonnegative integer")
    n = int(n)

    def birth(x):
        return p * (np.asarray(x, dtype=float) + 1.0) ** n

    def death(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, x**n, 0.0)

    return BirthDeathChain(birth, death, "geometric_n", {"p": p, "n": n}, truncation_hint)


def mm_infinity(lam: float, truncation_hint: int = 200) -> BirthDeathChain:
    """M/M/infinity queue: constant arrivals, death rate ``x``; Poisson(lam) law."""
    if lam <= 0:
        raise ValueError("lam must be positive")

    def birth(x):
        return np.full(np.shape(x), float(lam))

    def death(x):
        return np.asarray(x, dtype=float)

    return BirthDeathChain(birth, death, "mm_infinity", {"lambda": lam}, truncation_hint)


def potential_chain(U: Callable[[np.ndarray], np.ndarray], truncation_hint: int = 200,
                    name: str = "potential") -> BirthDeathChain:
    """Chain with unit births and ``death(x) = exp(U(x) - U(x-1))``; law ``exp(-U)/Z``."""

    def birth(x):
        return np.ones(np.shape(x))

    def death(x):
        x = np.asarray(x)
        xs = np.maximum(x, 1)
        return np.where(x > 0, np.exp(U(xs) - U(xs - 1)), 0.0)

    return BirthDeathChain(birth, death, "potential", {"U": name}, truncation_hint)


def tabulated(birth: Sequence[float], death: Sequence[float]) -> BirthDeathChain:
    """Finite chain on ``{0..len-1}``; the last birth rate is forced to zero."""
    b = np.asarray(birth, dtype=float).copy()
    d = np.asarray(death, dtype=float).copy()
    if b.shape != d.shape or b.ndim != 1 or len(b) < 2:
        raise ValueError("birth and death tables must be 1-d and of equal length >= 2")
    b[-1] = 0.0
    d[0] = 0.0

    def bfn(x):
        return b[np.asarray(x)]

    def dfn(x):
        return d[np.asarray(x)]

    return BirthDeathChain(bfn, dfn, "tabulated", {"size": len(b)}, len(b) - 1, size=len(b))


def chain_from_csv(path) -> BirthDeathChain:
    """Read a tabulated chain from a CSV file with columns ``x,birth,death``."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    missing = {"x", "birth", "death"} - set(data.dtype.names or ())
    if missing:
        raise ValueError(f"rate table is missing columns: {sorted(missing)}")
    order = np.argsort(data["x"])
    xs = data["x"][order]
    if not np.array_equal(xs, np.arange(len(xs))):
        raise ValueError("rate table must list states 0..N exactly once")
    return tabulated(data["birth"][order], data["death"][order])


@dataclass(frozen=True)
class TruncatedMeasure:
    """Stationary weights on ``0..N`` with an estimate of the mass beyond ``N``.

    ``tail_mass_bound`` is ``None`` when no geometric domination was found.
    ``log_weights`` are the unnormalised log products and ``log_tail`` the
    log of the extrapolated unnormalised mass beyond ``N`` (``-inf`` for
    finite chains); together they describe the untruncated chain.
    """

    weights: np.ndarray
    tail_mass_bound: float | None
    log_weights: np.ndarray
    log_tail: float | None = None
    tail_ratio: float | None = None

    @property
    def N(self) -> int:
        return len(self.weights) - 1

    def expect(self, values) -> float:
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class Observable:
    """Real function on the state space.

    ``kind`` is one of ``identity``, ``power``, ``log1p``, ``indicator``,
    ``table``, ``radial_power``, ``quadratic_form`` or ``particle_count``.
    """

    kind: str
    param: Any = None

    def __post_init__(self):
        known = {"identity", "constant", "power", "log1p", "indicator", "table",
                 "radial_power", "quadratic_form", "particle_count"}
        if self.kind not in known:
            raise ValueError(f"unknown observable kind {self.kind!r}")

    def __call__(self, x):
        k = self.kind
        if k == "identity":
            return np.asarray(x, dtype=float)
        if k == "constant":
            return np.full(np.shape(x), float(self.param))
        if k == "power":
            return np.asarray(x, dtype=float) ** self.param
        if k == "log1p":
            return np.log1p(np.asarray(x, dtype=float))
        if k == "indicator":
            return (np.asarray(x) >= self.param).astype(float)
        if k == "table":
            table = np.asarray(self.param, dtype=float)
            idx = np.asarray(x)
            if np.any(idx < 0) or np.any(idx >= len(table)):
                raise DomainError(f"table observable is defined on 0..{len(table) - 1} only")
            return table[idx]
        if k == "radial_power":
            pts = np.atleast_1d(np.asarray(x, dtype=float))
            return np.linalg.norm(pts, axis=-1) ** self.param
        if k == "quadratic_form":
            A = np.asarray(self.param, dtype=float)
            pts = np.asarray(x, dtype=float)
            return np.einsum("...i,ij,...j->...", pts, A, pts)
        # particle_count: configurations along the last axis
        return np.sum(np.asarray(x, dtype=float), axis=-1)

    def support_size(self) -> int | None:
        if self.kind == "table":
            return len(self.param)
        return None

    def describe(self) -> dict:
        if self.kind in ("table", "quadratic_form"):
            return {"kind": self.kind, "param": np.asarray(self.param).tolist()}
        return {"kind": self.kind, "param": self.param}


@dataclass(frozen=True)
class PhiEntropyKind:
    variant: str  # "square", "xlogx" or "power"
    p: float | None = None

    def __post_init__(self):
        if self.variant not in ("square", "xlogx", "power"):
            raise ValueError(f"unknown phi-entropy variant {self.variant!r}")
        if self.variant == "power" and (self.p is None or not 1 < self.p <= 2):
            raise ValueError("power exponent p must lie in (1, 2]")


def stationary_measure(chain: BirthDeathChain, N: int | None = None) -> TruncatedMeasure:
    """Stationary law of ``chain`` restricted to ``0..N`` and renormalised.

    Products ``prod lambda_{y-1}/nu_y`` are accumulated in log space.  When
    ``lambda_x / nu_{x+1} <= rho < 1`` over the last fifth of the range, the
    mass beyond ``N`` is bounded by a geometric series; otherwise
    ``tail_mass_bound`` is ``None``.

    Raises
    ------
    ValueError
        If the weights are nondecreasing over the whole inspected tail
        (the chain is not positive recurrent at this truncation).
    """
    N = chain.max_state(N)
    if N < 1:
        raise ValueError("N must be at least 1")
    chain.check_invariants(N)
    lam, nu = chain.rates(N, reflect=False)
    logw = np.zeros(N + 1)
    logw[1:] = np.cumsum(np.log(lam[:-1]) - np.log(nu[1:]))
    logZ = logsumexp(logw)
    weights = np.exp(logw - logZ)

    if chain.size is not None and N == chain.size - 1:
        return TruncatedMeasure(weights, 0.0, logw, -np.inf, 0.0)

    # lambda_x / nu_{x+1} for x in the last window, including x = N
    start = int(np.floor((1 - TAIL_WINDOW) * N))
    xs = np.arange(start, N + 1)
    ratios = np.asarray(chain.birth(xs), dtype=float) / np.asarray(chain.death(xs + 1), dtype=float)
    rho = float(np.max(ratios))
    if np.min(ratios) >= 1.0:
        raise ValueError("not positive recurrent at this truncation: stationary weights do not decay")
    if rho >= 1.0:
        return TruncatedMeasure(weights, None, logw, None, rho)
    log_tail = logw[N] + np.log(rho) - np.log1p(-rho)
    tail = float(np.exp(log_tail - np.logaddexp(logZ, log_tail)))
    return TruncatedMeasure(weights, tail, logw, float(log_tail), rho)


def _values(f: Observable, x: np.ndarray) -> np.ndarray:
    return np.asarray(f(x), dtype=float)


def _neighbours(chain, f, x, N):
    x = np.asarray(x)
    if np.any(x < 0):
        raise DomainError("states are nonnegative integers")
    if N is None:
        lam = np.asarray(chain.birth(x), dtype=float)
        nu = np.where(x > 0, np.asarray(chain.death(np.maximum(x, 0)), dtype=float), 0.0)
    else:
        if np.any(x > N):
            raise DomainError(f"state beyond the truncation N={N}")
        lam_all, nu_all = chain.rates(N)
        lam, nu = lam_all[x], nu_all[x]
    fx = _values(f, x)
    size = f.support_size()
    up_ok = lam > 0
    if size is not None and np.any(up_ok & (x + 1 >= size)):
        raise DomainError(f"observable undefined at x+1; table covers 0..{size - 1}")
    fup = np.where(up_ok, _values(f, np.where(up_ok, x + 1, x)), fx)
    fdown = np.where(x > 0, _values(f, np.maximum(x - 1, 0)), fx)
    return lam, nu, fx, fup, fdown


def generator_apply(chain: BirthDeathChain, f: Observable, x, N: int | None = None):
    """``Lf(x) = lambda_x (f(x+1) - f(x)) + nu_x (f(x-1) - f(x))``.

    ``N`` selects the reflected truncation (birth rate zero at ``N``).
    """
    lam, nu, fx, fup, fdown = _neighbours(chain, f, x, N)
    out = lam * (fup - fx) + nu * (fdown - fx)
    return float(out) if np.ndim(out) == 0 else out


def carre_du_champ(chain: BirthDeathChain, f: Observable, x, N: int | None = None):
    """``Gamma(f,f)(x) = (lambda_x (f(x+1)-f(x))^2 + nu_x (f(x-1)-f(x))^2) / 2``."""
    lam, nu, fx, fup, fdown = _neighbours(chain, f, x, N)
    out = 0.5 * (lam * (fup - fx) ** 2 + nu * (fdown - fx) ** 2)
    return float(out) if np.ndim(out) == 0 else out


def dirichlet_form(chain: BirthDeathChain, f: Observable, g: Observable,
                   mu: TruncatedMeasure) -> float:
    """One-sided edge sum ``sum_x lambda_x (f(x+1)-f(x)) (g(x+1)-g(x)) mu(x)``
    on the reflected truncation carried by ``mu``."""
    N = mu.N
    for h in (f, g):
        size = h.support_size()
        if size is not None and size < N + 1:
            raise DomainError(f"observable must be tabulated on 0..{N}; increase the table to N={N}")
    lam, _ = chain.rates(N)
    x = np.arange(N + 1)
    fv, gv = _values(f, x), _values(g, x)
    return float(np.sum(lam[:-1] * np.diff(fv) * np.diff(gv) * mu.weights[:-1]))


def _xlogx(v):
    return np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0)


def phi_entropy(mu: TruncatedMeasure, f, kind: PhiEntropyKind) -> float:
    """``mu(phi(f)) - phi(mu(f))`` for the square, x log x or power-p convex function.

    ``f`` may be an :class:`Observable` or an array of values on ``0..N``.
    """
    if isinstance(f, Observable):
        vals = _values(f, np.arange(mu.N + 1))
    else:
        vals = np.asarray(f, dtype=float)
        if vals.shape != mu.weights.shape:
            raise ValueError("value array must match the truncation")
    w = mu.weights
    m = float(np.dot(w, vals))
    if kind.variant == "square":
        return float(np.dot(w, (vals - m) ** 2))
    support = w > 0
    if np.any(vals[support] < 0) or (kind.variant == "power" and np.any(vals[support] <= 0)):
        raise DomainError(f"{kind.variant} entropy needs a positive function")
    if kind.variant == "xlogx":
        if m <= 0:
            raise DomainError("xlogx entropy needs a function with positive mean")
        val = float(np.dot(w, _xlogx(vals)) - m * np.log(m))
    else:
        val = float(np.dot(w, vals**kind.p) - m**kind.p)
    # convexity: negative values are rounding noise
    return max(val, 0.0)


def semigroup_evolve(chain: BirthDeathChain, h0, t: float, N: int | None = None,
                     tol: float = 1e-12) -> np.ndarray:
    """``P_t h0`` on the reflected truncation by uniformisation.

    ``P_t = sum_k Pois(Lambda t; k) K^k`` with ``K = I + L / Lambda`` and
    ``Lambda`` the largest exit rate; the series stops once the remaining
    Poisson mass drops below ``tol``.
    """
    h = np.asarray(h0, dtype=float)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if np.any(h < 0):
        raise ValueError("density has negative entries")
    if N is None:
        N = len(h) - 1
    if len(h) != N + 1:
        raise ValueError("density length must be N+1")
    if t == 0:
        return h.copy()
    lam, nu = chain.rates(N)
    rate = float(np.max(lam + nu))
    if rate == 0:
        return h.copy()
    mean = rate * t
    kmax = int(poisson.isf(tol, mean)) + 1
    ks = np.arange(kmax + 1)
    logpmf = -mean + ks * np.log(mean) - gammaln(ks + 1)
    wts = np.exp(logpmf)
    up, down = lam / rate, nu / rate
    stay = 1.0 - up - down
    cur = h.copy()
    acc = wts[0] * cur
    for k in range(1, kmax + 1):
        nxt = stay * cur
        nxt[:-1] += up[:-1] * cur[1:]
        nxt[1:] += down[1:] * cur[:-1]
        cur = nxt
        acc += wts[k] * cur
    # the truncated Poisson mass is renormalised so constants stay fixed
    return acc / wts.sum()
