import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from concmark.chain_core import Observable, geometric_n, stationary_measure
from concmark.lyapunov import TestFunction
from concmark.oracles import (
    TailCurve,
    chi_square_tail,
    exact_dv_information,
    exact_tail_discrete,
    exact_tail_interval,
    fisher_variational_check,
    regularized_gamma_q,
)

IDENTITY = Observable("identity")

# P(chi2_d > d + r), 20-digit mpmath evaluations
CHI2 = {
    (1, 0.5): 0.2206713619198467926,
    (1, 3.0): 0.045500263896358414401,
    (1, 10.0): 0.00091111887715371288704,
    (1, 40.0): 1.522292196256310052e-10,
    (5, 0.5): 0.35794588085095846052,
    (5, 3.0): 0.15623562757772232746,
    (5, 10.0): 0.010362337915786436585,
    (5, 40.0): 1.4508771696582658341e-8,
    (20, 0.5): 0.4270683373755832645,
    (20, 3.0): 0.28879453954867126361,
    (20, 10.0): 0.069853660699409767692,
    (20, 40.0): 7.1217508628155770916e-6,
}


@pytest.mark.parametrize("key", sorted(CHI2))
def test_chi_square_tail_frozen(key):
    d, r = key
    assert chi_square_tail(d, r) == pytest.approx(CHI2[key], rel=1e-12)


def test_chi_square_examples():
    assert chi_square_tail(2, 2.0) == pytest.approx(math.exp(-2), rel=1e-14)
    assert chi_square_tail(3, -3.0) == 1.0
    assert chi_square_tail(1, 3.0) == pytest.approx(math.erfc(2 / math.sqrt(2)), rel=1e-12)
    with pytest.raises(ValueError):
        chi_square_tail(0, 1.0)
    with pytest.raises(ValueError):
        regularized_gamma_q(0.0, 1.0)


@pytest.mark.parametrize("d", [1, 2, 5, 20])
def test_chi_square_tail_differentiates_to_density(d):
    h = 1e-5
    for t in (0.7 * d, d + 1.0, 2.0 * d + 3):
        r = t - d
        dq = -(chi_square_tail(d, r + h) - chi_square_tail(d, r - h)) / (2 * h)
        dens = math.exp((d / 2 - 1) * math.log(t) - t / 2 - (d / 2) * math.log(2) - math.lgamma(d / 2))
        assert dq == pytest.approx(dens, abs=1e-6)


def test_exact_tail_geometric():
    mu = stationary_measure(geometric_n(0.5, 0), 200)
    assert exact_tail_discrete(mu, IDENTITY, 1.0, widen=False) == pytest.approx(0.125, rel=1e-12)
    lo, hi = exact_tail_interval(mu, IDENTITY, 1.0)
    assert hi - lo == pytest.approx(mu.tail_mass_bound)
    # boundary atom at f = 2 is excluded: same as r = 1
    assert exact_tail_discrete(mu, IDENTITY, 1.0 - 1e-14, widen=False) == pytest.approx(0.125)
    with pytest.raises(ValueError):
        exact_tail_discrete(mu, IDENTITY, -1.0)


def test_exact_tail_edges():
    mu = stationary_measure(geometric_n(0.5, 0), 60)
    assert exact_tail_discrete(mu, IDENTITY, 0.0, widen=False) < 1
    shift = Observable("table", list(np.arange(61) * 0.0 - 1.0))
    assert exact_tail_discrete(mu, shift, 0.0, widen=False) == 0.0
    assert exact_tail_discrete(mu, IDENTITY, 1e3, widen=False) == 0.0
    assert exact_tail_discrete(mu, IDENTITY, 1e3) <= mu.tail_mass_bound


def test_exact_tail_refuses_unknown_tail():
    from concmark.chain_core import potential_chain
    U = lambda x: 0.5 * np.sin(np.asarray(x, dtype=float))
    mu = stationary_measure(potential_chain(U), 100)
    with pytest.raises(ValueError, match="refusing"):
        exact_tail_discrete(mu, IDENTITY, 1.0)


@pytest.mark.parametrize("p", [0.3, 0.5, 0.7])
@pytest.mark.parametrize("lam", [0.1, 0.3, 0.5])
def test_dv_information_closed_form(p, lam):
    ch = geometric_n(p, 0)
    mu = stationary_measure(ch, 400)
    if p * math.exp(lam) >= 1:
        # the tilted measure is not normalisable
        with pytest.raises(ValueError, match="divergent"):
            exact_dv_information(ch, mu, IDENTITY, lam)
        return
    assert exact_dv_information(ch, mu, IDENTITY, lam) == pytest.approx(
        p * math.expm1(lam / 2) ** 2, abs=1e-10)


def test_dv_spec_value():
    ch = geometric_n(0.5, 0)
    mu = stationary_measure(ch, 400)
    assert exact_dv_information(ch, mu, IDENTITY, 0.5) == pytest.approx(0.0403352186623226, rel=1e-10)
    assert exact_dv_information(ch, mu, IDENTITY, 0.0) == 0.0
    assert exact_dv_information(ch, mu, IDENTITY, 1e-6) < 1e-12


def test_fisher_variational_example():
    ch = geometric_n(0.5, 0)
    mu = stationary_measure(ch, 400)
    res = fisher_variational_check(ch, mu, IDENTITY, 0.3, TestFunction("exp_scaled_state", 1.5))
    assert res.lhs == pytest.approx(-0.025023532070666149336, abs=1e-10)
    assert res.rhs == pytest.approx(0.013095161059718429375, abs=1e-10)
    assert res.ok


def test_fisher_variational_trivial_cases():
    ch = geometric_n(0.5, 0)
    mu = stationary_measure(ch, 200)
    # kappa > 1 is required; V is constant in the limit kappa -> 1
    res = fisher_variational_check(ch, mu, IDENTITY, 0.3, TestFunction("exp_scaled_state", 1 + 1e-9))
    assert abs(res.lhs) < 1e-9 and res.ok
    res = fisher_variational_check(ch, mu, IDENTITY, 1e-7, TestFunction("exp_scaled_state", 1.5))
    assert abs(res.rhs) < 1e-12 and res.ok


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 0.8), st.integers(0, 2), st.floats(0.05, 0.9), st.floats(0.05, 0.95))
def test_variational_inequality_holds(p, n, frac, kfrac):
    kappa = 1 + kfrac * (1 / p - 1)
    ch = geometric_n(p, n)
    mu = stationary_measure(ch, 300)
    lam = frac * math.log(1 / p)
    res = fisher_variational_check(ch, mu, IDENTITY, lam, TestFunction("exp_scaled_state", kappa))
    assert res.ok


def test_tail_curve_csv_round_trip(tmp_path):
    with pytest.raises(ValueError, match="increasing"):
        TailCurve([0.0, 0.5, 1.0 / 3.0], [1, 1, 1], [1, 1, 1], [1, 1, 1], ["g"] * 3)
    curve = TailCurve([0.0, 1.0 / 3.0, 0.5], [1.0, 0.3, 0.1], [1.0, 0.31, 0.2],
                      [1.0, 0.3, 0.15], ["gaussian"] * 3)
    path = tmp_path / "tails.csv"
    curve.to_csv(path)
    back = TailCurve.from_csv(path)
    assert np.array_equal(back.r, curve.r) and np.array_equal(back.truth_hi, curve.truth_hi)
    assert path.read_text().splitlines()[0] == "r,truth_lo,truth_hi,bound,regime"
    assert list(curve.violations()) == [1, 2]
    assert curve.first_violation()["index"] == 1
    curve.comparison = "lo"
    assert list(curve.violations()) == []
    assert curve.dominated()
