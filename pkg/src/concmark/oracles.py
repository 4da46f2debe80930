"""Ground-truth tails and information functionals used to check the envelopes."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .chain_core import BirthDeathChain, Observable, TruncatedMeasure, TAIL_WINDOW

__all__ = [
    "TailCurve",
    "regularized_gamma_q",
    "chi_square_tail",
    "exact_tail_discrete",
    "exact_tail_interval",
    "exact_dv_information",
    "fisher_variational_check",
    "format_float",
]

CSV_COLUMNS = ("r", "truth_lo", "truth_hi", "bound", "regime")


def format_float(v) -> str:
    """17 significant digits: round-trips every double exactly."""
    return format(float(v), ".17g")


@dataclass
class TailCurve:
    """Tail truth (possibly an interval) next to an envelope on an r-grid.

    ``comparison`` picks which edge of the truth is tested against the bound:
    ``"hi"`` for exact tails widened by the truncation mass, ``"lo"`` for
    empirical tails (lower confidence limit).
    """

    r: np.ndarray
    truth_lo: np.ndarray
    truth_hi: np.ndarray
    bound: np.ndarray
    regime: list[str]
    comparison: str = "hi"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.truth_lo = np.asarray(self.truth_lo, dtype=float)
        self.truth_hi = np.asarray(self.truth_hi, dtype=float)
        self.bound = np.asarray(self.bound, dtype=float)
        n = len(self.r)
        if any(len(v) != n for v in (self.truth_lo, self.truth_hi, self.bound, self.regime)):
            raise ValueError("tail curve columns must have equal length")
        if n > 1 and np.any(np.diff(self.r) <= 0):
            raise ValueError("r must be strictly increasing")
        if self.comparison not in ("hi", "lo"):
            raise ValueError("comparison must be 'hi' or 'lo'")

    @property
    def compared(self) -> np.ndarray:
        return self.truth_hi if self.comparison == "hi" else self.truth_lo

    def violations(self) -> np.ndarray:
        return np.flatnonzero(self.compared > self.bound)

    def dominated(self) -> bool:
        return len(self.violations()) == 0

    def first_violation(self) -> dict | None:
        bad = self.violations()
        if len(bad) == 0:
            return None
        i = int(bad[0])
        return {"index": i, "r": float(self.r[i]), "truth": float(self.compared[i]),
                "bound": float(self.bound[i])}

    def rows(self):
        for i in range(len(self.r)):
            yield (format_float(self.r[i]), format_float(self.truth_lo[i]),
                   format_float(self.truth_hi[i]), format_float(self.bound[i]), self.regime[i])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            writer.writerows(self.rows())

    @classmethod
    def from_csv(cls, path, comparison: str = "hi") -> "TailCurve":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ValueError(f"expected columns {CSV_COLUMNS}, got {reader.fieldnames}")
            rows = list(reader)
        return cls([float(x["r"]) for x in rows], [float(x["truth_lo"]) for x in rows],
                   [float(x["truth_hi"]) for x in rows], [float(x["bound"]) for x in rows],
                   [x["regime"] for x in rows], comparison)


# --- regularised incomplete gamma -------------------------------------------

_EPS = 1e-16
_TINY = 1e-300


def _gamma_p_series(s: float, x: float) -> float:
    term = 1.0 / s
    total = term
    k = s
    for _ in range(10000):
        k += 1.0
        term *= x / k
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + s * math.log(x) - math.lgamma(s))


def _gamma_q_fraction(s: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(s, x)
    b = x + 1.0 - s
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + s * math.log(x) - math.lgamma(s)) * h


def regularized_gamma_q(s: float, x: float) -> float:
    """Upper regularised incomplete gamma ``Q(s, x) = Gamma(s, x) / Gamma(s)``.

    Series for ``x < s + 1``, continued fraction otherwise.
    """
    if s <= 0:
        raise ValueError("shape must be positive")
    if x <= 0:
        return 1.0
    if x < s + 1.0:
        return 1.0 - _gamma_p_series(s, x)
    return _gamma_q_fraction(s, x)


def chi_square_tail(d: int, r: float) -> float:
    """``P(chi2_d > d + r)``."""
    if d < 1 or int(d) != d:
        raise ValueError("degrees of freedom must be a positive integer")
    t = d + r
    if t <= 0:
        return 1.0
    return regularized_gamma_q(d / 2.0, t / 2.0)


# --- discrete chains ---------------------------------------------------------

def _tail_mask(vals, mean, r, rel):
    slack = rel * max(1.0, abs(r), abs(mean))
    return vals - mean - r > slack


def exact_tail_interval(mu: TruncatedMeasure, f: Observable, r: float,
                        rel: float = 1e-12) -> tuple[float, float]:
    """``(truth, truth + tail_mass_bound)`` for ``mu(f - mu(f) > r)``.

    The inequality is strict; atoms within ``rel`` of the threshold are
    treated as boundary atoms and excluded.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    x = np.arange(mu.N + 1)
    vals = np.asarray(f(x), dtype=float)
    if mu.tail_mass_bound is None:
        raise ValueError("stationary tail bound unknown; refusing an exact tail for an "
                         "observable unbounded above")
    mean = mu.expect(vals)
    truth = float(np.sum(mu.weights[_tail_mask(vals, mean, r, rel)]))
    return truth, min(truth + mu.tail_mass_bound, 1.0)


def exact_tail_discrete(mu: TruncatedMeasure, f: Observable, r: float,
                        widen: bool = True) -> float:
    """Exact stationary tail on the truncation; ``widen`` adds the tail mass bound."""
    lo, hi = exact_tail_interval(mu, f, r)
    return hi if widen else lo


def _tilt(chain, mu, f, lam):
    N = mu.N
    x = np.arange(N + 1)
    vals = np.asarray(f(x), dtype=float)
    if chain.size is None or N < chain.size - 1:
        start = int(np.floor((1 - TAIL_WINDOW) * N))
        xs = np.arange(start, N + 1)
        step = np.asarray(f(xs + 1), dtype=float) - np.asarray(f(xs), dtype=float)
        ratio = np.exp(lam * step) * np.asarray(chain.birth(xs), dtype=float) \
            / np.asarray(chain.death(xs + 1), dtype=float)
        if np.max(ratio) >= 1.0:
            raise ValueError(f"divergent Z_lambda: tilted weights do not decay for lambda={lam}")
    with np.errstate(divide="ignore"):
        logmu = np.log(mu.weights)
    logfl = lam * vals - logsumexp(lam * vals + logmu)
    return vals, logmu, logfl


def exact_dv_information(chain: BirthDeathChain, mu: TruncatedMeasure, f: Observable,
                         lam: float) -> float:
    """Donsker-Varadhan information of ``mu_lam = exp(lam f) mu / Z``.

    ``sum_x lambda_x (sqrt(g(x+1)) - sqrt(g(x)))^2 mu(x)`` with ``g`` the
    density of ``mu_lam``, summed over the birth edges of the reflected
    truncation.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if lam == 0:
        return 0.0
    vals, logmu, logfl = _tilt(chain, mu, f, lam)
    birth, _ = chain.rates(mu.N)
    edge = np.expm1(0.5 * lam * np.diff(vals)) ** 2
    return float(np.sum(birth[:-1] * np.exp(logfl[:-1] + logmu[:-1]) * edge))


class VariationalCheck(NamedTuple):
    lhs: float
    rhs: float
    ok: bool


def fisher_variational_check(chain: BirthDeathChain, mu: TruncatedMeasure, f: Observable,
                             lam: float, V) -> VariationalCheck:
    """Check ``integral (-LV/V) d mu_lam <= I(mu_lam | mu)`` on the truncation."""
    from .lyapunov import neg_drift_ratio

    rhs = exact_dv_information(chain, mu, f, lam)
    if lam == 0:
        density = np.ones(mu.N + 1)
    else:
        _, _, logfl = _tilt(chain, mu, f, lam)
        density = np.exp(logfl)
    drift = neg_drift_ratio(chain, V, np.arange(mu.N + 1), N=mu.N)
    lhs = float(np.sum(drift * density * mu.weights))
    return VariationalCheck(lhs, rhs, lhs <= rhs + 1e-10)
