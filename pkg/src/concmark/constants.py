"""Functional-inequality constants for birth-death chains.

Spectral gaps come from a Sturm-sequence bisection on the symmetrised
generator of the reflected truncation.  Miclo's quantity is evaluated for
the untruncated chain by completing the stationary tail geometrically.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import logsumexp

from .chain_core import BirthDeathChain, stationary_measure

__all__ = [
    "InequalityConstants",
    "MicloResult",
    "EntropicCriterion",
    "ULCResult",
    "symmetrized_generator",
    "sturm_count",
    "tridiagonal_eigenvalue",
    "spectral_gap_exact",
    "miclo_delta",
    "entropic_criterion",
    "entropic_lower_bound",
    "ultra_log_concave_check",
]

PROVENANCES = ("eigensolve", "miclo_bracket", "daipra_criterion", "ultra_log_concave",
               "dobrushin", "user_supplied")


@dataclass
class InequalityConstants:
    """Poincare, entropic and Beckner-type constants with their origin."""

    spectral_gap: float | tuple[float, float] | None = None
    entropic_lower: float = 0.0
    beckner_lower: dict[float, float] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)
    note: str = ""

    def __post_init__(self):
        for key, tag in self.provenance.items():
            if tag not in PROVENANCES:
                raise ValueError(f"unknown provenance {tag!r} for {key}")
        if isinstance(self.spectral_gap, (tuple, list)):
            lo, hi = self.spectral_gap
            if not 0 <= lo <= hi:
                raise ValueError("gap bracket must satisfy 0 <= lo <= hi")
            if self.provenance.get("spectral_gap") == "miclo_bracket" and hi > 4 * lo * (1 + 1e-12):
                raise ValueError("a Miclo bracket spans at most a factor 4")
            self.spectral_gap = (float(lo), float(hi))
        hi = self.gap_upper()
        # linearising f = 1 + eps g in rho Ent(f) <= E(f, log f) gives rho <= 2 lambda_1
        if hi is not None and self.entropic_lower > 2 * hi * (1 + 1e-9):
            raise ValueError("entropic constant cannot exceed twice the spectral gap")

    def gap_upper(self) -> float | None:
        if self.spectral_gap is None:
            return None
        if isinstance(self.spectral_gap, tuple):
            return self.spectral_gap[1]
        return self.spectral_gap

    def beckner(self, p: float) -> float:
        """``alpha_p``; for ``p = 2`` falls back to the spectral gap."""
        if p in self.beckner_lower:
            return self.beckner_lower[p]
        if p == 2 and self.spectral_gap is not None:
            if isinstance(self.spectral_gap, tuple):
                return self.spectral_gap[0]
            return self.spectral_gap
        raise KeyError(f"no Beckner constant available for p={p}")

    def to_json(self) -> dict:
        out = asdict(self)
        if isinstance(self.spectral_gap, tuple):
            out["spectral_gap"] = list(self.spectral_gap)
        out["beckner_lower"] = {str(k): v for k, v in self.beckner_lower.items()}
        return out


def symmetrized_generator(chain: BirthDeathChain, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of ``diag(sqrt mu) (-L) diag(sqrt mu)^-1``
    on the reflected truncation ``0..N``."""
    lam, nu = chain.rates(N)
    diag = lam + nu
    off = -np.sqrt(lam[:-1] * nu[1:])
    return diag, off


def sturm_count(diag, off, s: float) -> int:
    """Number of eigenvalues strictly below ``s`` of a symmetric tridiagonal matrix."""
    count = 0
    d = diag[0] - s
    tiny = 1e-300
    if d < 0:
        count += 1
    for i in range(1, len(diag)):
        if d == 0.0:
            d = tiny
        d = (diag[i] - s) - off[i - 1] * off[i - 1] / d
        if d < 0:
            count += 1
    return count


def tridiagonal_eigenvalue(diag, off, k: int, tol: float = 1e-10) -> float:
    """``k``-th smallest eigenvalue (0-based) by bisection on Sturm counts."""
    diag = [float(v) for v in diag]
    off = [float(v) for v in off]
    n = len(diag)
    if not 0 <= k < n:
        raise ValueError("eigenvalue index out of range")
    radius = [0.0] * n
    for i, b in enumerate(off):
        radius[i] += abs(b)
        radius[i + 1] += abs(b)
    lo = min(d - r for d, r in zip(diag, radius))
    hi = max(d + r for d, r in zip(diag, radius))
    # count(lo) <= k < count(hi) throughout
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if sturm_count(diag, off, mid) > k:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def spectral_gap_exact(chain: BirthDeathChain, N: int | None = None, tol: float = 1e-10) -> float:
    """Smallest nonzero eigenvalue of ``-L`` on the reflected truncation ``0..N``.

    This is the gap of the truncated chain; compare values across ``N``
    to judge how close it is to the untruncated one.
    """
    N = chain.max_state(N)
    if N < 1:
        raise ValueError("N must be at least 1")
    chain.check_invariants(N)
    diag, off = symmetrized_generator(chain, N)
    return tridiagonal_eigenvalue(diag, off, 1, tol)


class MicloResult(NamedTuple):
    delta: float
    gap_bracket: tuple[float, float]
    argmax: int
    attained: bool  # False when the supremum sits at the truncation edge


def miclo_delta(chain: BirthDeathChain, N: int | None = None) -> MicloResult:
    """``delta = sup_x (sum_{k<x} 1/(lambda_k mu_k)) (sum_{l>=x} mu_l)``.

    ``mu`` is the untruncated stationary law; the mass beyond ``N`` comes from
    the geometric tail completion of :func:`stationary_measure`.  The gap of
    the untruncated chain lies in ``[1/(4 delta), 1/delta]``.
    """
    mu = stationary_measure(chain, N)
    if mu.tail_mass_bound is None:
        raise ValueError("stationary tail bound unknown; increase N")
    N = mu.N
    lam, _ = chain.rates(N, reflect=False)
    logw = mu.log_weights
    log_tail = mu.log_tail if mu.log_tail is not None else -np.inf
    logZ = np.logaddexp(logsumexp(logw), log_tail)
    logmu = logw - logZ
    # suffix sums of mu over l >= x, completed with the tail beyond N
    suffix = np.empty(N + 1)
    acc = log_tail - logZ
    for x in range(N, -1, -1):
        acc = np.logaddexp(acc, logmu[x])
        suffix[x] = acc
    head_terms = -np.log(lam[:N]) - logmu[:N]
    head = np.logaddexp.accumulate(head_terms)  # head[x-1] = log sum_{k<x}
    vals = head + suffix[1:]
    # ties resolve to the largest state
    best = len(vals) - 1 - int(np.argmax(vals[::-1]))
    delta = float(np.exp(vals[best]))
    x_star = best + 1
    attained = x_star < N or chain.size is not None
    return MicloResult(delta, (1.0 / (4.0 * delta), 1.0 / delta), x_star, attained)


class EntropicCriterion(NamedTuple):
    alpha: float
    applicable: bool
    argmin: int | None


def entropic_criterion(chain: BirthDeathChain, N: int | None = None) -> EntropicCriterion:
    """Monotone-rate criterion: ``inf_x lambda_x - lambda_{x+1} + nu_{x+1} - nu_x``.

    Needs ``lambda`` non-increasing and ``nu`` non-decreasing on the range;
    otherwise ``alpha = 0`` and ``applicable`` is False.
    """
    N = chain.max_state(N)
    if chain.size is not None:
        top = chain.size - 1
        M = min(N, top - 1)
        lam, nu = chain.rates(top, reflect=False)
        lam, nu = lam[: M + 2], nu[: M + 2]
    else:
        x = np.arange(N + 2)
        lam = np.asarray(chain.birth(x), dtype=float)
        nu = np.where(x > 0, np.asarray(chain.death(x), dtype=float), 0.0)
    if np.any(np.diff(lam) > 0) or np.any(np.diff(nu) < 0):
        return EntropicCriterion(0.0, False, None)
    inc = lam[:-1] - lam[1:] + nu[1:] - nu[:-1]
    idx = int(np.argmin(inc))
    return EntropicCriterion(max(float(inc[idx]), 0.0), True, idx)


def entropic_lower_bound(chain: BirthDeathChain, N: int | None = None) -> float:
    """Lower bound on the entropic constant from the monotone-rate criterion (0 if inapplicable)."""
    return entropic_criterion(chain, N).alpha


class ULCResult(NamedTuple):
    ulc: bool
    lc: bool
    rho0_lower: float
    miclo_sup: float | None
    first_violation: int | None


def ultra_log_concave_check(U: Callable[[np.ndarray], np.ndarray], N: int,
                            atol: float = 1e-9) -> ULCResult:
    """Discrete-Laplacian test of (ultra) log-concavity of ``exp(-U)`` on ``1..N``.

    Ultra log-concave when ``Delta U(x) >= log(1 + 1/x)``; then the
    entropic constant is at least ``exp(U(1) - U(0))``.  When only
    log-concavity holds, the supremum in the rewritten Miclo condition
    ``sum_{k <= x-1 < l} exp(U(k) - U(l))`` is evaluated over ``l <= N+1``.
    """
    x = np.arange(N + 2)
    u = np.asarray(U(x), dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("potential must be finite on 0..N+1")
    lap = u[2:] - 2 * u[1:-1] + u[:-2]  # x = 1..N
    xs = np.arange(1, N + 1)
    ulc_mask = lap >= np.log1p(1.0 / xs) - atol
    lc_mask = lap >= -atol
    ulc = bool(np.all(ulc_mask))
    lc = bool(np.all(lc_mask))
    first = None
    if not lc:
        first = int(xs[np.argmin(lc_mask)])
    elif not ulc:
        first = int(xs[np.argmin(ulc_mask)])
    rho0 = math.exp(u[1] - u[0]) if ulc else 0.0
    miclo_sup = None
    if lc and not ulc:
        head = np.logaddexp.accumulate(u[:-1])            # log sum_{k<x} e^{U(k)}
        tail = np.logaddexp.accumulate((-u[1:])[::-1])[::-1]  # log sum_{l>=x} e^{-U(l)}
        miclo_sup = float(np.exp(np.max(head + tail)))
    return ULCResult(ulc, lc, rho0, miclo_sup, first)
