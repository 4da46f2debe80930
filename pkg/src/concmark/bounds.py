"""Concentration envelopes for observables in a Lyapunov class ``L_V(a, b)``.

All exponents are computed in log space; ``bound(r) = exp(-exponent(r))``.
Constants are kept exact (``fractions.Fraction``) whenever the inputs are
rational and ``a`` is a perfect square, so closed-form windows and slopes
can be compared without rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Callable

import numpy as np

__all__ = [
    "ConcentrationEnvelope",
    "RestrictionError",
    "entropic_envelope",
    "beckner_envelope",
    "covariance_alpha",
    "covariance_envelope",
    "fisher_bound",
    "log_laplace_bound",
    "chernoff_exponent",
    "super_exp_exponent",
    "super_exp_tail",
    "super_exp_envelope",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class RestrictionError(ValueError):
    """The Beckner-type restriction ``alpha_p <= 2 b (p-1) / (3 p a)`` fails."""


def _exact(v):
    if isinstance(v, (bool, np.bool_)):
        raise TypeError("boolean parameter")
    if isinstance(v, Rational):
        return Fraction(v)
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return Fraction(int(v))
    return float(v)


def _sqrt(v):
    if isinstance(v, Fraction):
        num, den = math.isqrt(v.numerator), math.isqrt(v.denominator)
        if num * num == v.numerator and den * den == v.denominator:
            return Fraction(num, den)
    return math.sqrt(v)


def _positive(**params):
    for name, v in params.items():
        if not (v > 0) or not math.isfinite(float(v)):
            raise ValueError(f"{name} must be positive, got {v}")


@dataclass(frozen=True)
class ConcentrationEnvelope:
    """Piecewise Gaussian/exponential tail bound.

    For ``r <= r_max`` the exponent is ``gaussian_coeff * r**2``; beyond it
    is ``exponential_coeff * r`` (plus ``exponential_offset`` for kinds
    whose linear branch is not through the origin).  Kinds without a closed
    form (``covariance``, ``super_exponential``) carry an ``exponent_fn``.
    """

    kind: str
    gaussian_coeff: float
    exponential_coeff: float
    r_max: float | None
    params: dict
    exponential_offset: float = 0.0
    exponent_fn: Callable[[float], float] | None = None

    def exponent(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("deviation level r must be nonnegative")
        if self.exponent_fn is not None:
            out = np.vectorize(self.exponent_fn, otypes=[float])(r)
        else:
            g = float(self.gaussian_coeff)
            e = float(self.exponential_coeff)
            rm = math.inf if self.r_max is None else float(self.r_max)
            out = np.where(r <= rm, g * r * r, e * r + float(self.exponential_offset))
        return float(out) if out.ndim == 0 else out

    def bound(self, r):
        out = np.minimum(np.exp(-np.asarray(self.exponent(r))), 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def regime(self, r) -> str:
        if self.r_max is None:
            return self.kind
        return "gaussian" if r <= float(self.r_max) else "exponential"

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "gaussian_coeff": float(self.gaussian_coeff),
            "exponential_coeff": float(self.exponential_coeff),
            "r_max": None if self.r_max is None else float(self.r_max),
            "params": {k: float(v) for k, v in self.params.items()},
        }


def entropic_envelope(rho0, a, b) -> ConcentrationEnvelope:
    """Tail bound under an entropic inequality with constant ``rho0``.

    ``exp(-3 rho0 r^2 / (16 b))`` on ``[0, r_max]`` with
    ``r_max = 8 b / (3 rho0 sqrt(a))`` and ``exp(-r / (2 sqrt(a)))`` beyond.
    """
    _positive(rho0=rho0, a=a, b=b)
    rho0, a, b = _exact(rho0), _exact(a), _exact(b)
    sa = _sqrt(a)
    gauss = 3 * rho0 / (16 * b)
    slope = 1 / (2 * sa)
    r_max = 8 * b / (3 * rho0 * sa)
    return ConcentrationEnvelope("entropic", gauss, slope, r_max, {"rho0": rho0, "a": a, "b": b})


def beckner_envelope(alpha_p, p, a, b) -> ConcentrationEnvelope:
    """Tail bound under a Beckner-type inequality with constant ``alpha_p``.

    Requires ``alpha_p <= 2 b (p-1) / (3 p a)``.  Gaussian exponent
    ``9 alpha_p r^2 / (32 b)`` up to ``r_max = sqrt(32 b p / (27 (p-1) alpha_p))``,
    then ``r sqrt(3 p alpha_p / (32 b (p-1)))``.
    """
    _positive(alpha_p=alpha_p, a=a, b=b)
    if not 1 < p <= 2:
        raise ValueError("p must lie in (1, 2]")
    alpha_p, p, a, b = _exact(alpha_p), _exact(p), _exact(a), _exact(b)
    limit = 2 * b * (p - 1) / (3 * p * a)
    if alpha_p > limit:
        raise RestrictionError(
            f"alpha_p={float(alpha_p):.6g} exceeds 2b(p-1)/(3pa)={float(limit):.6g}; "
            f"raise b to at least {float(3 * p * a * alpha_p / (2 * (p - 1))):.6g}")
    gauss = 9 * alpha_p / (32 * b)
    slope = _sqrt(3 * p * alpha_p / (32 * b * (p - 1)))
    r_max = _sqrt(32 * b * p / (27 * (p - 1) * alpha_p))
    return ConcentrationEnvelope("beckner", gauss, slope, r_max,
                                 {"alpha_p": alpha_p, "p": p, "a": a, "b": b})


def covariance_alpha(rho0, a, b, r):
    """``alpha(r) = rho0 r^2 / (4 b + 2 rho0 sqrt(a) r)``; the tail is at most ``exp(-alpha(r))``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    out = rho0 * r * r / (4.0 * b + 2.0 * rho0 * math.sqrt(a) * r)
    return float(out) if out.ndim == 0 else out


def covariance_envelope(rho0, a, b) -> ConcentrationEnvelope:
    _positive(rho0=rho0, a=a, b=b)
    return ConcentrationEnvelope(
        "covariance", float(rho0) / (4.0 * b), 1.0 / (2.0 * math.sqrt(a)), None,
        {"rho0": rho0, "a": a, "b": b},
        exponent_fn=lambda r: covariance_alpha(rho0, a, b, r))


def fisher_bound(lam: float, a: float, b: float) -> float:
    """Upper bound ``lam^2 b / (4 - lam^2 a)`` on the information of the tilted measure."""
    if not 0 < lam < 2.0 / math.sqrt(a):
        raise ValueError(f"lambda must lie in (0, 2/sqrt(a)) = (0, {2.0 / math.sqrt(a):.6g})")
    return lam * lam * b / (4.0 - lam * lam * a)


def log_laplace_bound(lam: float, mean: float, rho0: float, b: float, a: float) -> float:
    """``lam * mean + 4 b lam^2 / (3 rho0)``, valid for ``0 < lam < 1/sqrt(a)``."""
    if not 0 < lam < 1.0 / math.sqrt(a):
        raise ValueError(f"lambda must lie in (0, 1/sqrt(a)) = (0, {1.0 / math.sqrt(a):.6g})")
    return lam * mean + 4.0 * b * lam * lam / (3.0 * rho0)


def _golden_max(fn, lo, hi, tol):
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    fc, fd = fn(c), fn(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - GOLDEN * (hi - lo)
            fc = fn(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + GOLDEN * (hi - lo)
            fd = fn(d)
    return 0.5 * (lo + hi)


def chernoff_exponent(log_mgf: Callable[[float], float], r: float, lam_max: float,
                      tol: float = 1e-12) -> tuple[float, float]:
    """``sup_{0 < lam < lam_max} lam r - log_mgf(lam)`` for a centred log-Laplace bound.

    The objective must be concave in ``lam``.  Returns ``(exponent, lam*)``.
    """
    def obj(lam):
        return lam * r - log_mgf(lam)

    upper = lam_max * (1.0 - 1e-15)
    lam = _golden_max(obj, 0.0, upper, tol * max(1.0, upper))
    lam = min(max(lam, 0.0), upper)
    return max(obj(lam), 0.0), lam


def _quartic_log_mgf(rho0, a, b):
    sb = math.sqrt(b)
    return lambda lam: (2.0 / rho0) * (a * lam**4 / 6.0 + lam * lam * sb)


def super_exp_exponent(rho0, a, b, r, tol: float = 1e-10) -> float:
    """``sup_{lam > 0} lam r - (2/rho0)(a lam^4 / 6 + lam^2 sqrt(b))``.

    Golden-section search on a bracket containing the maximiser, then
    Newton steps on the stationarity condition.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r == 0:
        return 0.0
    sb = math.sqrt(b)
    k = 2.0 / rho0
    hi = r / (2.0 * k * sb) if sb > 0 else math.inf
    if a > 0:
        hi = min(hi, (1.5 * r / (k * a)) ** (1.0 / 3.0))
    if not math.isfinite(hi):
        raise ValueError("b = 0 and a = 0 give an unbounded exponent")

    def obj(lam):
        return lam * r - k * (a * lam**4 / 6.0 + lam * lam * sb)

    lam = _golden_max(obj, 0.0, hi, tol * max(1.0, hi))
    for _ in range(50):
        grad = r - k * (2.0 * a * lam**3 / 3.0 + 2.0 * lam * sb)
        hess = -k * (2.0 * a * lam * lam + 2.0 * sb)
        if hess >= 0:
            break
        step = grad / hess
        lam_new = min(max(lam - step, 0.0), hi)
        if abs(lam_new - lam) <= tol * max(1.0, lam):
            lam = lam_new
            break
        lam = lam_new
    return max(obj(lam), 0.0)


def super_exp_tail(rho0, a, b, r) -> float:
    """``exp(-super_exp_exponent)``: tail bound for observables far below the Lyapunov edge."""
    return math.exp(-super_exp_exponent(rho0, a, b, r))


def super_exp_envelope(rho0, a, b) -> ConcentrationEnvelope:
    _positive(rho0=rho0, b=b)
    if a < 0:
        raise ValueError("a must be nonnegative")
    return ConcentrationEnvelope(
        "super_exponential", float(rho0) / (8.0 * math.sqrt(b)), 0.0, None,
        {"rho0": rho0, "a": a, "b": b},
        exponent_fn=lambda r: super_exp_exponent(rho0, a, b, r))
