import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from concmark.chain_core import Observable, carre_du_champ, geometric_n, mm_infinity
from concmark.constants import spectral_gap_exact
from concmark.lyapunov import (
    CertificationError,
    TestFunction,
    certify,
    diffusion_carre_du_champ,
    glauber_carre_du_champ,
    neg_drift_ratio,
    ou,
    quadratic_form,
    radial_boltzmann,
    recipe_birth_death,
    recipe_diffusion,
    recipe_glauber,
    residual,
)
from concmark.simulators import GlauberSystem, nearest_neighbor_potential

IDENTITY = Observable("identity")
GEOMETRIC = [(p, n) for p in (0.3, 0.5, 0.7) for n in (0, 1, 2)]


def pair(beta=0.5):
    return GlauberSystem(((0,), (1,)), (1.0, 1.0), nearest_neighbor_potential(1), beta, cutoff=15)


# --- -LV/V -------------------------------------------------------------------

def test_neg_drift_birth_death():
    ch = geometric_n(0.25, 0)
    V = TestFunction("exp_scaled_state", 2.0)
    assert neg_drift_ratio(ch, V, 1) == pytest.approx(0.25)
    assert neg_drift_ratio(ch, V, 0) == pytest.approx(-0.25)


def test_neg_drift_ou():
    x = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, -2.0]])
    got = neg_drift_ratio(ou(3), TestFunction("exp_potential", 0.5), x)
    np.testing.assert_allclose(got, -1.5 + np.sum(x * x, axis=1) / 4, rtol=1e-14)


def test_neg_drift_glauber():
    sys_ = pair(0.5)
    eta = np.array([2.0, 1.0])
    V = TestFunction("exp_total_particles", 2.0)
    births = np.exp(-0.5 * np.array([1.0, 2.0]))
    expected = 0.5 * np.sum(eta - 2 * births)
    assert neg_drift_ratio(sys_, V, eta) == pytest.approx(expected, rel=1e-14)


def test_neg_drift_rejects_bad_pairs():
    with pytest.raises(ValueError, match="not integrable"):
        neg_drift_ratio(geometric_n(0.5, 0), TestFunction("exp_scaled_state", 2.5), np.arange(10), N=100)
    with pytest.raises(ValueError):
        neg_drift_ratio(geometric_n(0.5, 0), TestFunction("power", 2.0), 1)
    with pytest.raises(ValueError):
        TestFunction("exp_scaled_state", 1.0)
    with pytest.raises(ValueError):
        TestFunction("exp_potential", 1.0)


# --- recipes -------------------------------------------------------------------

def test_recipe_bounded_birth():
    r = recipe_birth_death(mm_infinity(0.5), "bounded_birth", kappa=2.0)
    assert (r.a, r.b) == (1.0, 0.75)
    assert r.V == TestFunction("exp_scaled_state", 2.0)
    with pytest.raises(ValueError, match="not bounded"):
        recipe_birth_death(geometric_n(0.5, 1), "bounded_birth", kappa=2.0)


def test_recipe_comparable_rates():
    r = recipe_birth_death(mm_infinity(1.0), "comparable_rates", c=0.25, x0=4)
    assert r.a == pytest.approx(1.5)
    assert r.V.param == pytest.approx(2.0)
    with pytest.raises(ValueError, match="x=3"):
        recipe_birth_death(mm_infinity(1.0), "comparable_rates", c=0.25, x0=3)


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_recipe_geometric_a(n):
    r = recipe_birth_death(geometric_n(0.5, n), "geometric_n")
    assert r.a == pytest.approx(3.5)
    assert r.V.param == pytest.approx(2 / 1.5)
    assert r.b >= 3 * r.a * r.info["spectral_gap"] - 1e-12


def test_recipe_geometric_floor_switch():
    ch = geometric_n(0.5, 0)
    with_floor = recipe_birth_death(ch, "geometric_n")
    without = recipe_birth_death(ch, "geometric_n", poincare_floor=False)
    assert without.b == without.info["lipschitz_b"]
    assert with_floor.b == max(without.b, 3 * 3.5 * spectral_gap_exact(ch, 400))


def test_recipe_glauber():
    r = recipe_glauber(GlauberSystem(((0,), (1,), (2,)), (0.5, 0.5, 0.5), {}, 0.0), 2.0)
    assert (r.a, r.b) == (1.0, 2.25)
    r = recipe_glauber(GlauberSystem(((0,), (1,)), (0.5, 0.5), {}, 0.0), 3.0)
    assert (r.a, r.b) == (0.75, 2.0)
    big = recipe_glauber(pair(), 1e9)
    assert big.a == pytest.approx(0.5, rel=1e-8)
    with pytest.raises(ValueError):
        recipe_glauber(pair(), 1.0)


@pytest.mark.parametrize("d", [1, 3, 7])
def test_recipe_diffusion_ou_and_identity_form(d):
    r = recipe_diffusion(ou(d))
    assert (r.a, r.b) == (16, 8 * d)
    assert r.V == TestFunction("exp_potential", 0.5)
    q = recipe_diffusion(quadratic_form(np.eye(d)))
    assert (q.a, q.b) == pytest.approx((16, 8 * d))


def test_recipe_radial():
    r = recipe_diffusion(radial_boltzmann(4.0, 3))
    assert r.info["radius"] == pytest.approx(5 ** 0.25, rel=1e-15)
    assert r.info["radius"] == pytest.approx(1.4953487812212205, rel=1e-15)
    assert r.a == 8.0
    floored = recipe_diffusion(radial_boltzmann(4.0, 3), spectral_gap=10.0)
    assert floored.b == 240.0
    with pytest.raises(ValueError):
        recipe_diffusion(radial_boltzmann(1.5, 3))


# --- certify -------------------------------------------------------------------

def test_certify_ou_closed_form():
    cert = certify(ou(3), Observable("radial_power", 2.0), TestFunction("exp_potential", 0.5), 16)
    assert cert.b == pytest.approx(24.0, rel=1e-12)
    assert cert.tail_witness == "closed_form" and not cert.range_limited
    # the residual is the constant 8d everywhere
    x = np.random.default_rng(1).normal(size=(50, 3)) * 5
    g = diffusion_carre_du_champ(ou(3), Observable("radial_power", 2.0), x)
    drift = neg_drift_ratio(ou(3), TestFunction("exp_potential", 0.5), x)
    np.testing.assert_allclose(g - 16 * drift, 24.0, rtol=1e-12)


def test_certify_constant_observable():
    cert = certify(geometric_n(0.5, 0), Observable("constant", 1.0),
                   TestFunction("exp_scaled_state", 1.5), 2.0, N=200)
    # Gamma vanishes; b is a * sup LV/V, which is positive at x = 0
    assert cert.b == pytest.approx(2.0 * 0.5 * 0.5, rel=1e-12)
    assert cert.argmax_state == 0


def test_certify_json_round_trip():
    r = recipe_birth_death(geometric_n(0.5, 0), "geometric_n")
    cert = certify(geometric_n(0.5, 0), IDENTITY, r.V, r.a, N=500, floor=r.info["floor"])
    out = json.loads(json.dumps(cert.to_json()))
    assert out["tail_witness"] == "monotone_residual"
    assert out["b"] == cert.b and out["verified_up_to"] == 500


def test_certify_rejects_wild_observable():
    ch = geometric_n(0.5, 0)
    with pytest.raises(CertificationError) as err:
        certify(ch, Observable("power", 2.0), TestFunction("exp_scaled_state", 1.5), 1.0, N=400)
    assert err.value.state is not None


def test_certify_glauber_pair():
    sys_ = pair(0.5)
    r = recipe_glauber(sys_, 2.0)
    cert = certify(sys_, Observable("particle_count"), r.V, r.a)
    assert cert.b <= r.b + 1e-12
    assert cert.tail_witness != "none"


def test_glauber_gamma_is_half_rate_sum():
    sys_ = pair(0.0)
    eta = np.array([[0.0, 0.0], [3.0, 1.0]])
    np.testing.assert_allclose(glauber_carre_du_champ(sys_, Observable("particle_count"), eta),
                               [1.0, 3.0])


# --- invariants ------------------------------------------------------------------

@pytest.mark.parametrize("p,n", GEOMETRIC)
def test_standard_recipe_passes_certify(p, n):
    ch = geometric_n(p, n)
    r = recipe_birth_death(ch, "geometric_n", N=400)
    cert = certify(ch, IDENTITY, r.V, r.a, N=2000, floor=r.info["floor"])
    assert cert.tail_witness != "none"
    assert cert.b <= r.b * (1 + 1e-12)


@pytest.mark.parametrize("p,n", GEOMETRIC)
def test_drift_exact_recipe_passes_certify(p, n):
    ch = geometric_n(p, n)
    r = recipe_birth_death(ch, "geometric_n", N=400, variant="drift_exact")
    cert = certify(ch, IDENTITY, r.V, r.a, N=2000, floor=r.info["floor"])
    assert cert.tail_witness == "monotone_residual"
    assert cert.b <= r.b * (1 + 1e-12)


@pytest.mark.parametrize("model", [ou(2), quadratic_form(np.diag([1.0, 2.0, 0.5]))])
def test_diffusion_recipes_pass_certify(model):
    r = recipe_diffusion(model)
    f = Observable("radial_power", 2.0) if model.family == "ou" else Observable("quadratic_form", model.A)
    cert = certify(model, f, r.V, r.a)
    assert cert.tail_witness == "closed_form"
    assert cert.b <= r.b * (1 + 1e-12)


def test_radial_recipe_passes_certify():
    model = radial_boltzmann(4.0, 3)
    r = recipe_diffusion(model)
    cert = certify(model, Observable("radial_power", 4.0), r.V, r.a, N=20)
    assert cert.tail_witness != "none"
    assert cert.b <= r.b * (1 + 1e-9)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(GEOMETRIC), st.floats(0.0, 100.0))
def test_certificate_monotone_in_b(pn, extra):
    p, n = pn
    ch = geometric_n(p, n)
    r = recipe_birth_death(ch, "geometric_n", N=400, variant="drift_exact")
    cert = certify(ch, IDENTITY, r.V, r.a, N=600)
    xs = np.arange(601)
    assert np.all(residual(ch, IDENTITY, r.V, r.a, xs) <= cert.b + extra + 1e-9)


@pytest.mark.parametrize("p", [0.3, 0.7])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_gamma_grows_like_x_to_the_n(p, n):
    ch = geometric_n(p, n)
    x = np.array([1e3, 1e4, 1e5])
    ratio = carre_du_champ(ch, IDENTITY, x.astype(int)) / x**n
    np.testing.assert_allclose(ratio, (1 + p) / 2, rtol=n * 2e-3 / 1)
    kappa = 2 / (1 + p)
    drift = neg_drift_ratio(ch, TestFunction("exp_scaled_state", kappa), x.astype(int))
    assert np.all(drift / x**n > 0)
    assert math.isclose(drift[-1] / x[-1] ** n, (kappa - 1) * (1 / kappa - p), rel_tol=1e-3)
