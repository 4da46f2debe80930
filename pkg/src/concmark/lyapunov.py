"""Membership of observables in the Lyapunov class ``L_V(a, b)``.

An observable ``f`` is in ``L_V(a, b)`` when ``Gamma(f,f) <= -a LV/V + b``.
:func:`certify` finds the smallest such ``b`` over a verified range and
attaches a heuristic witness for the region beyond it.  The ``recipe_*``
functions return ready-made parameters for the standard model families.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from .chain_core import BirthDeathChain, Observable, TAIL_WINDOW, carre_du_champ
from .constants import spectral_gap_exact
from .simulators import GlauberSystem, glauber_birth_rates

__all__ = [
    "TestFunction",
    "DiffusionModel",
    "LyapunovCertificate",
    "CertificationError",
    "Recipe",
    "ou",
    "quadratic_form",
    "radial_boltzmann",
    "neg_drift_ratio",
    "diffusion_carre_du_champ",
    "glauber_carre_du_champ",
    "certify",
    "residual",
    "recipe_birth_death",
    "recipe_diffusion",
    "recipe_glauber",
]


class CertificationError(ValueError):
    def __init__(self, message: str, state=None, value: float | None = None):
        super().__init__(message)
        self.state = state
        self.value = value


@dataclass(frozen=True)
class TestFunction:
    """Positive test function ``V``.

    Kinds: ``exp_scaled_state`` (``kappa**x``), ``exp_potential``
    (``exp(c U)``), ``exp_quadratic`` (``exp(c <Ax, x>)``, ``A`` taken from
    the model), ``power`` (``|x|**k``) and ``exp_total_particles``
    (``kappa**sum(eta)``).
    """

    __test__ = False  # not a pytest class

    kind: str
    param: float

    def __post_init__(self):
        if self.kind in ("exp_scaled_state", "exp_total_particles"):
            if not self.param > 1:
                raise ValueError("kappa must exceed 1")
        elif self.kind in ("exp_potential", "exp_quadratic"):
            if not 0 < self.param < 1:
                raise ValueError("c must lie in (0, 1)")
        elif self.kind == "power":
            if not self.param > 0:
                raise ValueError("power must be positive")
        else:
            raise ValueError(f"unknown test function kind {self.kind!r}")

    def describe(self) -> dict:
        return {"kind": self.kind, "param": float(self.param)}


@dataclass(frozen=True)
class DiffusionModel:
    """Kolmogorov diffusion ``L = Delta - <grad U, grad>`` with a closed-form potential.

    ``ou``: ``U = |x|^2 / 2``.  ``quadratic_form``: the same dynamics, with
    the matrix ``A`` of the observable ``<Ax, x>`` attached.
    ``radial_boltzmann``: ``U = |x|^beta``.
    """

    family: str
    d: int
    A: Any = None
    beta: float = 2.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be at least 1")
        if self.family == "quadratic_form":
            A = np.asarray(self.A, dtype=float)
            if A.shape != (self.d, self.d) or not np.allclose(A, A.T):
                raise ValueError("A must be a symmetric d x d matrix")
            if np.min(np.linalg.eigvalsh(A)) <= 0:
                raise ValueError("A must be positive definite")
            object.__setattr__(self, "A", A)
        elif self.family == "radial_boltzmann":
            if self.beta < 1:
                raise ValueError("beta must be at least 1")
        elif self.family != "ou":
            raise ValueError(f"unknown diffusion family {self.family!r}")

    def potential(self, x):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        if self.family == "radial_boltzmann":
            return r**self.beta
        return 0.5 * r * r

    def grad_potential(self, x):
        x = np.asarray(x, dtype=float)
        if self.family != "radial_boltzmann":
            return x
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, self.beta * r ** (self.beta - 2) * x, 0.0)

    def laplacian_potential(self, x):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        if self.family != "radial_boltzmann":
            return np.full(np.shape(r), float(self.d))
        b = self.beta
        with np.errstate(divide="ignore"):
            return b * (b + self.d - 2) * r ** (b - 2)

    @property
    def op_norm(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvalsh(self.A))))

    def describe(self) -> dict:
        out = {"family": self.family, "d": self.d}
        if self.family == "quadratic_form":
            out["A"] = self.A.tolist()
        if self.family == "radial_boltzmann":
            out["beta"] = self.beta
        return out


def ou(d: int) -> DiffusionModel:
    return DiffusionModel("ou", d)


def quadratic_form(A) -> DiffusionModel:
    A = np.asarray(A, dtype=float)
    return DiffusionModel("quadratic_form", A.shape[0], A)


def radial_boltzmann(beta: float, d: int) -> DiffusionModel:
    return DiffusionModel("radial_boltzmann", d, beta=beta)


# --- drift ratios --------------------------------------------------------------

def _check_integrable(chain: BirthDeathChain, kappa: float, N: int):
    if chain.size is not None:
        return
    start = int(np.floor((1 - TAIL_WINDOW) * N))
    xs = np.arange(start, N + 1)
    ratio = kappa * np.asarray(chain.birth(xs), dtype=float) / np.asarray(chain.death(xs + 1), dtype=float)
    if np.max(ratio) >= 1.0:
        raise ValueError(f"V = {kappa}^x is not integrable: kappa*birth/death reaches "
                         f"{np.max(ratio):.4g} >= 1 near x={N}")


def neg_drift_ratio(model, V: TestFunction, x, N: int | None = None):
    """``-LV(x) / V(x)`` from the closed form of the model/test-function pair.

    For birth-death chains ``N`` selects the reflected truncation.
    """
    if isinstance(model, BirthDeathChain):
        if V.kind != "exp_scaled_state":
            raise ValueError("birth-death chains take V = kappa**x")
        k = V.param
        x = np.asarray(x)
        top = int(np.max(x)) if N is None else N
        _check_integrable(model, k, max(top, model.max_state()))
        if N is None:
            lam = np.asarray(model.birth(x), dtype=float)
            nu = np.where(x > 0, np.asarray(model.death(np.maximum(x, 0)), dtype=float), 0.0)
        else:
            lam_all, nu_all = model.rates(N)
            lam, nu = lam_all[x], nu_all[x]
        out = (k - 1.0) * (nu / k - lam)
        return float(out) if np.ndim(out) == 0 else out
    if isinstance(model, DiffusionModel):
        c = V.param
        if V.kind == "exp_potential":
            grad = model.grad_potential(x)
            out = -c * model.laplacian_potential(x) + c * (1 - c) * np.sum(grad * grad, axis=-1)
        elif V.kind == "exp_quadratic":
            if model.family != "quadratic_form":
                raise ValueError("exp_quadratic needs a quadratic_form model")
            x = np.asarray(x, dtype=float)
            A = model.A
            Ax = x @ A.T
            lf = 2.0 * np.trace(A) - 2.0 * np.sum(Ax * x, axis=-1)
            out = -c * lf - 4.0 * c * c * np.sum(Ax * Ax, axis=-1)
        else:
            raise ValueError(f"test function {V.kind!r} not supported for diffusions")
        return float(out) if np.ndim(out) == 0 else out
    if isinstance(model, GlauberSystem):
        if V.kind != "exp_total_particles":
            raise ValueError("Glauber dynamics take V = kappa**(total particles)")
        k = V.param
        eta = np.asarray(x, dtype=float)
        births = glauber_birth_rates(model, eta)
        out = (k - 1.0) / k * np.sum(eta - k * births, axis=-1)
        return float(out) if np.ndim(out) == 0 else out
    raise TypeError(f"unsupported model {type(model).__name__}")


def diffusion_carre_du_champ(model: DiffusionModel, f: Observable, x):
    """``|grad f|^2`` for the closed-form diffusion observables."""
    x = np.asarray(x, dtype=float)
    if f.kind == "constant":
        return np.zeros(np.shape(x)[:-1])
    if f.kind == "radial_power":
        b = f.param
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, b * b * r ** (2 * b - 2), 0.0 if b > 1 else np.inf)
    if f.kind == "quadratic_form":
        Ax = x @ (np.asarray(f.param, dtype=float) + np.asarray(f.param, dtype=float).T).T
        return np.sum(Ax * Ax, axis=-1)
    raise ValueError(f"observable {f.kind!r} has no closed-form gradient")


def glauber_carre_du_champ(system: GlauberSystem, f: Observable, eta):
    """``1/2 sum_x (eta_x |D-_x f|^2 + c+(eta,x) |D+_x f|^2)``."""
    eta = np.asarray(eta, dtype=float)
    if f.kind == "constant":
        return np.zeros(eta.shape[:-1])
    if f.kind != "particle_count":
        raise ValueError(f"observable {f.kind!r} not supported for Glauber dynamics")
    return 0.5 * np.sum(eta + glauber_birth_rates(system, eta), axis=-1)


# --- certificates --------------------------------------------------------------

@dataclass
class LyapunovCertificate:
    """``Gamma(f,f) <= -a LV/V + b`` verified on the states up to ``verified_up_to``.

    ``tail_witness`` is ``monotone_residual`` or ``closed_form`` when the
    inequality is expected to persist beyond the range, ``none`` when the
    certificate is only valid on its range.
    """

    a: float
    b: float
    V: TestFunction
    verified_up_to: Any
    tail_witness: str
    argmax_state: Any = None
    argmax_value: float = 0.0
    floor: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def range_limited(self) -> bool:
        return self.tail_witness == "none"

    def to_json(self) -> dict:
        state = self.argmax_state
        if isinstance(state, np.ndarray):
            state = state.tolist()
        elif isinstance(state, (np.integer, np.floating)):
            state = state.item()
        return {
            "a": float(self.a), "b": float(self.b), "V": self.V.describe(),
            "verified_up_to": self.verified_up_to, "tail_witness": self.tail_witness,
            "range_limited": self.range_limited,
            "residual_argmax_state": state, "residual_argmax_value": float(self.argmax_value),
            "floor": float(self.floor), **self.details,
        }


def _last_argmax(values) -> int:
    values = np.asarray(values)
    return len(values) - 1 - int(np.argmax(values[::-1]))


def _growth_exponent(xs, vals):
    # local log-log slope over the outer tenth of the range; offsets fade there
    xs = np.asarray(xs, dtype=float)
    vals = np.abs(np.asarray(vals, dtype=float))
    hi = len(xs) - 1
    lo = int(np.floor(0.9 * hi))
    if hi < 1 or xs[lo] <= 0 or vals[lo] == 0 or vals[hi] == 0:
        return 0.0 if hi >= 1 and vals[hi] == vals[lo] else -math.inf
    if xs[hi] <= xs[lo]:
        return 0.0
    return float(math.log(vals[hi] / vals[lo]) / math.log(xs[hi] / xs[lo]))


def _tail_analysis(xs, gamma, drift, a, resid0):
    """``(monotone, favourable, rising, start)`` for the outer window of a 1-d grid."""
    n = len(xs)
    start = int(np.floor((1 - TAIL_WINDOW) * (n - 1)))
    tail = resid0[start:]
    scale = max(1.0, float(np.max(np.abs(tail))))
    steps = np.diff(tail)
    monotone = bool(np.all(steps <= 1e-12 * scale))
    rising = bool(len(steps) and steps[-1] > 1e-12 * scale and tail[-1] > tail[0] + 1e-9 * scale)
    if np.all(gamma[start:] == 0):
        return monotone, True, rising, start
    ge = _growth_exponent(xs[start:], gamma[start:])
    de = _growth_exponent(xs[start:], a * drift[start:])
    favourable = bool(drift[-1] > 0 and de >= ge - 0.05)
    return monotone, favourable, rising, start


def residual(model, f: Observable, V: TestFunction, a: float, x):
    """``Gamma(f,f)(x) + a LV/V(x)`` on a birth-death chain (untruncated rates)."""
    if not isinstance(model, BirthDeathChain):
        raise TypeError("pointwise residuals are provided for birth-death chains")
    x = np.asarray(x)
    return np.asarray(carre_du_champ(model, f, x), dtype=float) \
        - a * np.asarray(neg_drift_ratio(model, V, x), dtype=float)


def certify(model, f: Observable, V: TestFunction, a: float, N=None, floor: float = 0.0,
            points=None) -> LyapunovCertificate:
    """Smallest ``b >= floor`` with ``Gamma(f,f) + a LV/V <= b`` on the verified range.

    ``N`` is the largest state for chains, the largest radius for diffusions
    and the per-site occupancy bound for Glauber systems.  ``floor`` is the
    Poincare floor ``3 a lambda_1`` when the certificate feeds the
    Beckner-type envelope with ``p = 2``.

    Raises
    ------
    CertificationError
        If the residual grows without bound over the tail of the range.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    if isinstance(model, BirthDeathChain):
        N = model.max_state(N)
        xs = np.arange(N + 1)
        gamma = np.asarray(carre_du_champ(model, f, xs), dtype=float)
        drift = np.asarray(neg_drift_ratio(model, V, xs), dtype=float)
        return _certify_grid(xs, gamma, drift, a, V, floor, N, {"model": model.describe()})
    if isinstance(model, DiffusionModel):
        return _certify_diffusion(model, f, V, a, N, floor, points)
    if isinstance(model, GlauberSystem):
        return _certify_glauber(model, f, V, a, N, floor)
    raise TypeError(f"unsupported model {type(model).__name__}")


def _certify_grid(xs, gamma, drift, a, V, floor, verified, details):
    resid0 = gamma - a * drift
    idx = _last_argmax(resid0)
    b = max(float(resid0[idx]), float(floor))
    if not b > 0:
        b = float(floor) if floor > 0 else 0.0
    monotone, favourable, rising, start = _tail_analysis(xs, gamma, drift, a, resid0)
    if monotone and favourable:
        witness = "monotone_residual"
    elif rising:
        # first tail state whose residual exceeds everything seen before the tail
        head = float(np.max(resid0[:start])) if start > 0 else float(resid0[0])
        first = int(xs[start + int(np.argmax(resid0[start:] > head))])
        raise CertificationError(
            f"residual grows without bound: Gamma(f,f) + a LV/V rises from "
            f"{resid0[start]:.6g} at x={int(xs[start])} to {resid0[-1]:.6g} at x={int(xs[-1])}; "
            f"first violating state x={first}", state=first, value=float(resid0[-1]))
    else:
        witness = "none"
    return LyapunovCertificate(a, b, V, int(verified), witness, int(xs[idx]), float(resid0[idx]),
                               float(floor), details)


def _certify_diffusion(model, f, V, a, N, floor, points):
    radius = float(N) if N is not None else 10.0 * math.sqrt(model.d)
    radii = np.linspace(0.0, radius, 2001)
    if points is None:
        if model.family == "quadratic_form":
            _, vecs = np.linalg.eigh(model.A)
            dirs = [vecs[:, i] for i in range(model.d)]
            rng = np.random.Generator(np.random.Philox(0))
            extra = rng.standard_normal((16, model.d))
            dirs += list(extra / np.linalg.norm(extra, axis=1, keepdims=True))
        else:
            e1 = np.zeros(model.d)
            e1[0] = 1.0
            dirs = [e1]
        points = np.concatenate([np.outer(radii, d) for d in dirs])
    points = np.asarray(points, dtype=float)
    gamma = np.asarray(diffusion_carre_du_champ(model, f, points), dtype=float)
    drift = np.asarray(neg_drift_ratio(model, V, points), dtype=float)
    resid0 = gamma - a * drift
    if not np.all(np.isfinite(resid0)):
        bad = points[np.argmax(~np.isfinite(resid0))]
        raise CertificationError("residual is infinite (observable or potential not C^2 there)",
                                 state=bad.tolist())
    idx = _last_argmax(resid0)
    b = max(float(resid0[idx]), float(floor))
    details = {"model": model.describe()}
    witness = _diffusion_witness(model, f, V, a)
    if witness is None:
        # radial profile along the first direction
        rs = np.linalg.norm(points[: len(radii)], axis=1)
        monotone, favourable, rising, start = _tail_analysis(
            rs, gamma[: len(radii)], drift[: len(radii)], a, resid0[: len(radii)])
        if rising and not monotone:
            state = points[start + int(np.argmax(np.diff(resid0[start: len(radii)]) > 0))]
            raise CertificationError("residual grows without bound along the radial ray",
                                     state=state.tolist(), value=float(resid0[len(radii) - 1]))
        witness = "monotone_residual" if monotone and favourable else "none"
    return LyapunovCertificate(a, b, V, radius, witness, points[idx].tolist(),
                               float(resid0[idx]), float(floor), details)


def _diffusion_witness(model, f, V, a):
    # exact identities for the Gaussian quadratic pairs
    if model.family == "ou" and f.kind == "radial_power" and f.param == 2 \
            and V.kind == "exp_potential" and V.param == 0.5 and a >= 16:
        return "closed_form"
    if model.family == "quadratic_form" and f.kind == "quadratic_form" \
            and V.kind == "exp_quadratic" and np.allclose(np.asarray(f.param), model.A):
        nA = model.op_norm
        if abs(V.param - 1.0 / (4 * nA)) < 1e-12 and a >= 16 * nA * nA * (1 - 1e-12):
            return "closed_form"
    if f.kind == "constant":
        return "closed_form"
    return None


def _certify_glauber(system, f, V, a, K, floor):
    import itertools

    K = system.cutoff if K is None else int(K)
    if (K + 1) ** system.size > 10**6:
        raise ValueError("configuration grid too large for certification")
    grid = np.array(list(itertools.product(range(K + 1), repeat=system.size)), dtype=float)
    gamma = np.asarray(glauber_carre_du_champ(system, f, grid), dtype=float)
    drift = np.asarray(neg_drift_ratio(system, V, grid), dtype=float)
    resid0 = gamma - a * drift
    idx = _last_argmax(resid0)
    b = max(float(resid0[idx]), float(floor))
    outer = grid.max(axis=1) >= int(np.floor((1 - TAIL_WINDOW) * K))
    witness = "monotone_residual" if np.max(resid0[outer]) <= np.max(resid0[~outer]) + 1e-12 else "none"
    return LyapunovCertificate(a, b, V, K, witness, grid[idx].astype(int).tolist(),
                               float(resid0[idx]), float(floor), {"model": system.describe()})


# --- recipes -------------------------------------------------------------------

class Recipe(NamedTuple):
    a: float
    b: float
    V: TestFunction
    info: dict


def _geometric_threshold(p: float, n: int) -> int:
    """Smallest x0 >= 1 from which ``4 p (x+1)^n <= (1+p)^2 x^n``."""
    if n == 0:
        return 1
    q = ((1 + p) ** 2 / (4 * p)) ** (1.0 / n)
    x0 = max(1, math.ceil(1.0 / (q - 1.0)))
    while 4 * p * (x0 + 1) ** n > (1 + p) ** 2 * x0**n:
        x0 += 1
    return x0


def recipe_birth_death(chain: BirthDeathChain, case: str, *, kappa: float | None = None,
                       c: float | None = None, x0: int | None = None, x1: int | None = None,
                       p: float | None = None, n: int | None = None,
                       spectral_gap: float | None = None, poincare_floor: bool = True,
                       variant: str = "standard", N: int | None = None) -> Recipe:
    """Parameters ``(a, b, V = kappa**x)`` for Lipschitz observables of a birth-death chain.

    ``case`` is ``bounded_birth`` (needs ``kappa``), ``comparable_rates``
    (needs ``c`` and ``x0``) or ``geometric_n`` (``p``, ``n`` default to the
    chain's own).  ``variant="standard"`` gives the closed forms
    ``a = (1+sqrt c) / (2 (1-sqrt c))`` and ``a = (3+p) / (2 (1-p))``.
    These undershoot the drift when the rates grow: the leading-order
    balance needs ``a >= (1+c) / (2 (1-sqrt c)^2)``, which is what
    ``variant="drift_exact"`` returns.
    """
    if variant not in ("standard", "drift_exact"):
        raise ValueError("variant must be 'standard' or 'drift_exact'")
    N = chain.max_state(N)
    xs = np.arange(N + 1)
    lam, nu = chain.rates(N, reflect=False)
    info: dict = {"case": case, "variant": variant}

    if case == "bounded_birth":
        if kappa is None or not kappa > 1:
            raise ValueError("bounded_birth needs kappa > 1")
        start = int(np.floor((1 - TAIL_WINDOW) * N))
        if np.max(lam[start:]) > np.max(lam[:start]) * (1 + 1e-12) and start > 0:
            x = int(xs[start + int(np.argmax(lam[start:] > np.max(lam[:start])))])
            raise ValueError(f"birth rate is not bounded: it still grows at x={x}")
        sup = float(np.max(lam))
        a = kappa / (2.0 * (kappa - 1.0))
        b = (1.0 + kappa) * sup / 2.0
        V = TestFunction("exp_scaled_state", kappa)
        info["birth_sup"] = sup
        return Recipe(a, b, V, info)

    if case == "comparable_rates":
        if c is None or not 0 < c < 1 or x0 is None:
            raise ValueError("comparable_rates needs c in (0, 1) and x0")
        bad = np.flatnonzero(lam[x0:] > c * nu[x0:] * (1 + 1e-12))
        if len(bad):
            x = int(x0 + bad[0])
            raise ValueError(f"hypothesis birth <= c*death fails at x={x}: "
                             f"{lam[x]:.6g} > {c * nu[x]:.6g}")
        sc = math.sqrt(c)
        kappa = 1.0 / sc
        a = (1 + c) / (2 * (1 - sc) ** 2) if variant == "drift_exact" else (1 + sc) / (2 * (1 - sc))
        coef = (1 + sc) / (2 * sc * (1 - sc))
        b = coef * float(np.max(np.abs(lam[: x0 + 1] - c * nu[: x0 + 1])))
        info.update(c=c, x0=x0, kappa=kappa)
        return Recipe(a, b, TestFunction("exp_scaled_state", kappa), info)

    if case == "geometric_n":
        p = chain.params.get("p") if p is None else p
        n = chain.params.get("n") if n is None else n
        if p is None or n is None or not 0 < p < 1:
            raise ValueError("geometric_n needs p in (0, 1) and n")
        if chain.family == "geometric_n" and (chain.params["p"] != p or chain.params["n"] != n):
            raise ValueError("recipe parameters do not match the chain")
        c = (1 + p) ** 2 / 4
        kappa = 2.0 / (1 + p)
        x0 = _geometric_threshold(p, n) if x0 is None else x0
        if x0 > N:
            raise ValueError(f"truncation N={N} is below the comparison threshold x0={x0}")
        g = np.abs(4 * p * (xs + 1.0) ** n - (1 + p) ** 2 * xs.astype(float) ** n)
        if n == 0:
            g = np.abs(4 * p - (1 + p) ** 2 * (xs > 0))
        tail_g = 4 * p * (xs[x0:] + 1.0) ** n - (1 + p) ** 2 * xs[x0:].astype(float) ** n
        if np.any(tail_g > 0):
            raise ValueError(f"hypothesis birth <= c*death fails beyond x0={x0}")
        if variant == "drift_exact":
            a = (4 + (1 + p) ** 2) / (2 * (1 - p) ** 2)
            x1 = _last_argmax(g[: x0 + 1]) if x1 is None else x1
            lip_b = (3 + p) / (4 * (1 + p) * (1 - p)) * float(np.max(g[: x0 + 1]))
        else:
            a = (3 + p) / (2 * (1 - p))
            x1 = _last_argmax(g[: x0 + 1]) if x1 is None else x1
            lip_b = (3 + p) / (4 * (1 - p) ** 2) * float(g[x1])
        floor = 0.0
        if poincare_floor:
            gap = spectral_gap_exact(chain, N) if spectral_gap is None else spectral_gap
            floor = 3 * a * gap
            info["spectral_gap"] = gap
        b = max(lip_b, floor)
        info.update(p=p, n=n, c=c, kappa=kappa, x0=x0, x1=int(x1), lipschitz_b=lip_b, floor=floor)
        return Recipe(a, b, TestFunction("exp_scaled_state", kappa), info)

    raise ValueError(f"unknown birth-death case {case!r}")


def recipe_diffusion(model: DiffusionModel, spectral_gap: float | None = None,
                     grid: int = 4001) -> Recipe:
    """``(a, b, V)`` for the potential-type observable of a diffusion model.

    ``ou``: ``f = |x|^2``, ``V = exp(U/2)``, ``a = 16``, ``b = 8 d``.
    ``quadratic_form``: ``V = exp(<Ax,x> / (4 |A|))``, ``a = 16 |A|^2``,
    ``b = 8 tr(A) |A|``.  ``radial_boltzmann``: ``f = U = |x|^beta``,
    ``V = exp(U/2)``, ``a = 8`` and ``b`` the larger of ``3 a lambda_1`` and
    the residual supremum over the ball of radius
    ``(4 (d+beta-2) / beta)^(1/beta)``.
    """
    if model.family == "ou":
        return Recipe(16, 8 * model.d, TestFunction("exp_potential", 0.5),
                      {"observable": "radial_power(2)"})
    if model.family == "quadratic_form":
        nA = model.op_norm
        tr = float(np.trace(model.A))
        return Recipe(16 * nA * nA, 8 * tr * nA, TestFunction("exp_quadratic", 1.0 / (4 * nA)),
                      {"observable": "quadratic_form", "op_norm": nA, "trace": tr})
    beta, d = model.beta, model.d
    if d + beta - 2 <= 0:
        raise ValueError("radial recipe needs d + beta - 2 > 0")
    if beta < 2:
        raise ValueError("|x|^beta is not C^2 at the origin for beta < 2; "
                         "the ball supremum is infinite without smoothing the potential")
    radius = (4.0 ** (1.0 / beta)) * ((d + beta - 2) / beta) ** (1.0 / beta)
    a = 8.0
    s = np.linspace(0.0, radius, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        resid = -beta**2 * s ** (2 * beta - 2) + 4 * beta * (beta + d - 2) * s ** (beta - 2)
    ball_sup = float(np.max(resid))
    floor = 3 * a * spectral_gap if spectral_gap is not None else 0.0
    return Recipe(a, max(floor, ball_sup), TestFunction("exp_potential", 0.5),
                  {"observable": f"radial_power({beta})", "radius": radius, "ball_sup": ball_sup,
                   "floor": floor})


def recipe_glauber(system: GlauberSystem, kappa: float) -> Recipe:
    """``a = kappa / (2 (kappa-1))``, ``b = (1+kappa)/2 sum lambda`` with ``V = kappa**sum(eta)``."""
    if not kappa > 1:
        raise ValueError("kappa must exceed 1")
    total = float(sum(system.intensity))
    return Recipe(kappa / (2.0 * (kappa - 1.0)), (1.0 + kappa) / 2.0 * total,
                  TestFunction("exp_total_particles", kappa), {"intensity_total": total})
