import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from gmwbhit.errors import CaseError, DomainError
from gmwbhit.hitting import (
    DiffusionParams,
    YorParams,
    _checked_probability,
    _mp_laplace_tau,
    cdf_A,
    cdf_tau,
    density_H_first,
    density_H_second,
    density_tau,
    laplace_H,
    laplace_H_increment,
    laplace_rho,
    laplace_tau,
    laplace_tau_general,
    laplace_tau_numeric,
    laplace_tau_to_zero,
    prob_finite_tau,
    residue_terms,
    small_time_bound,
    talbot_invert,
)
from gmwbhit.specfun import kummer_u

nus = st.floats(-4.0, 4.0)
levels = st.floats(0.1, 3.0)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# --- parameter types --------------------------------------------------------

def test_params_validation():
    with pytest.raises(DomainError):
        YorParams(1.0, 0.0)
    with pytest.raises(DomainError):
        YorParams(math.nan, 1.0)
    with pytest.raises(DomainError):
        DiffusionParams(0.1, 0.0, 1.0)


def test_diffusion_index():
    # sigma = 2 and mu = 2(1 - nu) give back index nu
    for nu in (-1.5, 0.0, 0.7, 3.0):
        assert abs(DiffusionParams(2 * (1 - nu), 2.0, 0.5).nu - nu) < 1e-15


# --- Laplace transforms -----------------------------------------------------

@pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 2.0, 3.7])
@pytest.mark.parametrize("a", [0.1, 0.5, 2.0])
def test_laplace_H_at_zero(nu, a):
    assert abs(laplace_H(YorParams(nu, a), 0.0) - 1.0) < 1e-13


def test_laplace_H_domain():
    with pytest.raises(DomainError):
        laplace_H(YorParams(-0.1, 1.0), 1.0)
    with pytest.raises(DomainError):
        laplace_H(YorParams(1.0, 1.0), -0.5)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 4.0), levels, st.floats(0.0, 10.0))
def test_laplace_H_matches_tau_forms(nu, a, s):
    v = laplace_H(YorParams(nu, a), s)
    assert 0.0 < v <= 1.0 + 1e-13
    assert rel(laplace_tau(-nu, a, s), v) < 1e-10
    d = DiffusionParams(2 * (1 - nu), 2.0, a)
    assert rel(laplace_tau_to_zero(d, s), v) < 1e-10


@settings(max_examples=60, deadline=None)
@given(nus, levels)
def test_laplace_tau_mpmath(nu, y):
    for s in (0.0, 0.3, 2.0, 7.5):
        with mp.workdps(30):
            ref = float(_mp_laplace_tau(mp.mpf(s), mp.mpf(nu), mp.mpf(y)))
        assert rel(laplace_tau(nu, y, s), ref) < 1e-11


@settings(max_examples=60, deadline=None)
@given(nus, levels)
def test_laplace_tau_at_zero_is_passage_probability(nu, y):
    assert rel(laplace_tau(nu, y, 0.0), prob_finite_tau(nu, y)) < 1e-11


@settings(max_examples=40, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(0.2, 4.0), st.floats(0.05, 3.0))
def test_laplace_tau_to_zero_at_zero(mu_scale, sigma, y):
    d = DiffusionParams(mu_scale * sigma ** 2, sigma, y)
    v = laplace_tau_to_zero(d, 0.0)
    assert rel(v, prob_finite_tau(-d.nu, sigma ** 2 * y / 4)) < 1e-10
    if d.nu >= 0:
        assert abs(v - 1.0) < 1e-10


def test_laplace_tau_to_zero_domain():
    with pytest.raises(DomainError):
        laplace_tau_to_zero(DiffusionParams(0.1, 0.3, 0.0), 1.0)
    with pytest.raises(DomainError):
        laplace_tau_to_zero(DiffusionParams(0.1, 0.3, 1.0), -1.0)


@settings(max_examples=60, deadline=None)
@given(nus, levels)
def test_completely_monotone(nu, y):
    s = np.linspace(0.0, 6.0, 25)
    v = np.array([laplace_tau(nu, y, x) for x in s])
    assert np.all(np.diff(v) < 0)
    lv = np.log(v)
    assert np.all(lv[:-2] + lv[2:] - 2 * lv[1:-1] > -1e-10)


def test_continuation_below_zero():
    with pytest.raises(DomainError):
        laplace_tau(1.0, 0.5, -0.6)
    # at s = -nu^2/2 the transform is still finite and exceeds the s = 0 value
    assert laplace_tau(-2.0, 0.5, -2.0) > laplace_tau(-2.0, 0.5, 0.0)


@pytest.mark.slow
def test_continuation_against_density():
    # s = 2(nu+1) < 0 for nu < -1 still lies inside the convergence region
    nu, y = -2.5, 0.5
    s = 2 * (nu + 1)
    assert rel(laplace_tau_numeric(nu, y, s), laplace_tau(nu, y, s)) < 1e-6


@pytest.mark.parametrize("nu,y", [(-1.0, 0.5), (0.5, 0.5), (3.0, 0.4)])
def test_laplace_density_consistency(nu, y):
    for s in (0.5, 2.0):
        assert rel(laplace_tau_numeric(nu, y, s), laplace_tau(nu, y, s)) < 1e-6


# --- passage probability ----------------------------------------------------

def test_prob_finite_values():
    assert prob_finite_tau(-0.5, 0.3) == 1.0
    assert prob_finite_tau(0.0, 7.0) == 1.0
    assert abs(prob_finite_tau(1.0, 0.5) - (1 - math.exp(-1))) < 1e-15
    ref = integrate.quad(lambda v: v ** 1.7 * math.exp(-v), 0, 0.5 / 0.3, epsabs=0, epsrel=1e-13)[0]
    assert rel(prob_finite_tau(2.7, 0.3), ref / math.gamma(2.7)) < 1e-12


@pytest.mark.parametrize("nu", [5e-324, 2.2e-309, 1e-300, 1e-8, 9e-4])
def test_prob_finite_tiny_index(nu):
    # continuous at nu = 0 and never outside [0, 1]
    p = prob_finite_tau(nu, 1.0)
    assert 0.0 <= p <= 1.0
    assert abs(p - float(mp.gammainc(nu, 0, 0.5, regularized=True))) < 1e-14


def test_total_mass_with_residues():
    nu, y = 3.0, 0.4
    assert len(residue_terms(nu, y)) == 1
    assert residue_terms(nu, y)[0][2] != 0.0
    target = special.gammainc(3, 1 / 0.8)
    assert abs(prob_finite_tau(nu, y) - target) < 1e-15
    assert abs(laplace_tau_numeric(nu, y, 0.0) - target) < 1e-6
    assert abs(cdf_tau(nu, y, 200.0) - target) < 1e-10


def test_total_mass_recurrent():
    # nu = 0: the passage is certain but the tail is heavy
    assert abs(cdf_tau(0.0, 1.0, 1e4) - 1.0) < 2e-2
    assert cdf_tau(0.0, 1.0, 1e4) < 1.0


# --- densities --------------------------------------------------------------

@pytest.mark.parametrize("u", [0.25, 0.5, 1.0, 2.0])
def test_density_representations_agree(u):
    p = YorParams(1.0, 0.5)
    assert abs(density_H_first(p, u) - density_H_second(p, u)) < 1e-10


def _log_gauss(f, edges, n=10):
    x, w = np.polynomial.legendre.leggauss(n)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        la, lb = math.log(a), math.log(b)
        for xi, wi in zip(x, w):
            u = math.exp(0.5 * (lb - la) * xi + 0.5 * (lb + la))
            total += 0.5 * (lb - la) * wi * f(u) * u
    return total


def test_density_first_total_mass():
    # nu = 0 passes a.s.; both ends of the range come from the distribution function
    p = YorParams(0.0, 0.5)
    body = _log_gauss(lambda u: density_H_first(p, u, digits=8), [0.05, 0.2, 0.8, 3.0, 10.0])
    ends = cdf_tau(0.0, 0.5, 0.05) + 1.0 - cdf_tau(0.0, 0.5, 10.0)
    assert abs(body + ends - 1.0) < 1e-6


def test_density_non_negative():
    for nu in (-3.0, -1.0, 0.0, 1.5, 3.0, 4.5):
        for t in (0.05, 0.3, 1.0, 5.0, 30.0):
            assert density_tau(nu, 0.5, t) > -1e-12


def test_density_second_tail_envelope():
    nu = 0.5
    p = YorParams(nu, 0.5)
    scaled = [density_H_second(p, u) * u ** 1.5 * math.exp(nu * nu * u / 2) for u in (5, 10, 20, 40, 80)]
    assert max(scaled) / min(scaled) < 3.0


def test_density_domain():
    with pytest.raises(DomainError):
        density_tau(1.0, 0.5, 0.0)
    with pytest.raises(DomainError):
        density_H_second(YorParams(-1.0, 0.5), 1.0)


def test_density_small_time():
    assert density_tau(1.0, 2.0, 1e-3) == 0.0
    assert small_time_bound(0.0, 2.0, 1e-3) < 1e-100
    assert small_time_bound(0.0, 1.0, 2.0) == 1.0


@pytest.mark.parametrize("nu,y,t", [(3.0, 0.4, 0.02), (-1.0, 0.3, 0.01), (0.5, 0.2, 0.005)])
def test_small_time_fallback(nu, y, t):
    # spectral route is refused here; the Laplace inversion stands in
    with mp.workdps(40):
        ref = float(mp.invertlaplace(lambda s: _mp_laplace_tau(s, mp.mpf(nu), mp.mpf(y)),
                                     mp.mpf(t), method="talbot"))
    assert abs(density_tau(nu, y, t) - ref) < 1e-10 * max(1.0, ref)


@pytest.mark.parametrize("nu,y,t", [(3.0, 0.4, 0.5), (-2.5, 0.7, 1.0), (0.0, 0.5, 2.0)])
def test_spectral_against_talbot(nu, y, t):
    ref = talbot_invert(lambda s: _mp_laplace_tau(s, mp.mpf(nu), mp.mpf(y)), t)
    assert abs(density_tau(nu, y, t) - ref) < 1e-12


def test_even_index_residue_limit():
    # at nu = 4 the k = 2 residue vanishes through 1/Gamma(0) = 0
    terms = residue_terms(4.0, 0.5)
    assert [k for k, _, _ in terms] == [1, 2]
    assert terms[1][2] == 0.0
    mid = density_tau(4.0, 0.5, 0.7)
    for e in (1e-7, -1e-7):
        assert abs(density_tau(4.0 + e, 0.5, 0.7) - mid) < 1e-6


def test_residues_absent_below_two():
    assert residue_terms(2.0, 0.5) == []
    assert residue_terms(-3.0, 0.5) == []


# --- distribution functions -------------------------------------------------

@pytest.mark.parametrize("nu,y,t", [(1.0, 0.2, 0.2), (-0.5, 0.5, 1.0), (2.5, 0.4, 0.8), (-3.0, 1.0, 0.6)])
def test_cdf_A_against_density(nu, y, t):
    mass = integrate.quad(lambda u: density_tau(-nu, y, u), 0.0, t, epsabs=1e-12, limit=200)[0]
    assert abs(cdf_A(nu, t, y) - (1.0 - mass)) < 1e-6


def test_cdf_A_small_t():
    assert cdf_A(1.0, 1e-4, 0.5) == 1.0


@settings(max_examples=25, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.2, 2.0))
def test_cdf_A_monotone_in_t(nu, y):
    v = [cdf_A(nu, t, y) for t in (0.1, 0.3, 1.0, 3.0)]
    assert all(0.0 <= x <= 1.0 for x in v)
    assert all(b <= a + 1e-9 for a, b in zip(v, v[1:]))


def test_probability_range_guard():
    assert _checked_probability(1.0 + 5e-7, "x") == 1.0
    assert _checked_probability(-5e-7, "x") == 0.0
    with pytest.raises(ArithmeticError):
        _checked_probability(1.0 + 1e-5, "x")


# --- Bessel-mixture increment transform ------------------------------------

def test_increment_at_zero_rate():
    assert abs(laplace_H_increment(YorParams(1.0, 1.0), 0.3, 0.8, 0.0) - 1.0) < 1e-9


@pytest.mark.parametrize("nu", [0.0, 1.0, 2.5])
def test_increment_small_start(nu):
    p = YorParams(nu, 1.0)
    ref = laplace_H(YorParams(nu, 0.8), 1.0)
    assert abs(laplace_H_increment(p, 1e-7, 0.8, 1.0) - ref) < 1e-6
    # the gap closes linearly in the start level
    g1 = laplace_H_increment(p, 1e-3, 0.8, 1.0) - ref
    g2 = laplace_H_increment(p, 1e-4, 0.8, 1.0) - ref
    assert 8.0 < g1 / g2 < 12.0


def test_increment_domain():
    with pytest.raises(DomainError):
        laplace_H_increment(YorParams(1.0, 1.0), 0.8, 0.3, 1.0)


# --- general passage levels -------------------------------------------------

def test_general_trivial_and_cases():
    d = DiffusionParams(0.05, 0.3, 1.0)
    assert laplace_tau_general(d, 1.0, 0.8) == 1.0
    for target in (-0.5, 0.0):
        with pytest.raises(CaseError):
            laplace_tau_general(d, target, 0.8)
    with pytest.raises(CaseError):
        laplace_tau_general(DiffusionParams(0.05, 0.3, 0.0), 1.0, 0.8)


def test_general_descending_limit():
    d = DiffusionParams(0.05, 0.3, 1.0)
    v = laplace_tau_general(d, 1e-9, 0.8)
    assert rel(v, laplace_tau_to_zero(d, 0.8)) < 1e-6


@st.composite
def chains(draw, sign):
    a, b, c = sorted(draw(st.lists(st.floats(0.05, 4.0), min_size=3, max_size=3, unique=True)))
    assume(b - a > 1e-3 and c - b > 1e-3)
    return tuple(sign * v for v in (a, b, c))


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(0.1, 1.0), st.floats(0.1, 3.0), st.data())
def test_general_strong_markov(mu, sigma, s, data):
    # passing through the middle level on the way: L(x->z) = L(x->y) L(y->z)
    for sign, order in ((1, "down"), (1, "up"), (-1, "down"), (-1, "up")):
        a, b, c = data.draw(chains(sign))
        x, y, z = (c, b, a) if order == "down" else (a, b, c)
        if sign < 0:
            x, y, z = (a, b, c) if order == "down" else (c, b, a)
        whole = laplace_tau_general(DiffusionParams(mu, sigma, x), z, s)
        first = laplace_tau_general(DiffusionParams(mu, sigma, x), y, s)
        second = laplace_tau_general(DiffusionParams(mu, sigma, y), z, s)
        assert 0.0 <= whole <= 1.0
        if whole < 1e-280:
            # a climb against strong drift: the transform underflows
            assert first * second < 1e-270
            continue
        assert rel(whole, first * second) < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(0.1, 1.0), st.floats(0.05, 3.0), st.floats(0.05, 3.0),
       st.floats(0.1, 3.0), st.booleans())
def test_rho_is_mirrored_tau(mu, sigma, x, y, s, neg):
    assume(abs(x - y) > 1e-3)
    if neg:
        x, y = -x, -y
    d = DiffusionParams(mu, sigma, x)
    mirrored = laplace_tau_general(DiffusionParams(mu, sigma, -x), -y, s)
    assert abs(laplace_rho(d, y, s) - mirrored) < 1e-12


def test_rho_from_zero():
    d = DiffusionParams(0.05, 0.3, 0.0)
    y, s = 0.7, 0.8
    k, b = d.kb(s)
    Z = 2 / (0.09 * y)
    closed = Z ** (-k) / kummer_u(k, b, Z)
    assert rel(laplace_rho(d, y, s), closed) < 1e-14
    near = laplace_rho(DiffusionParams(0.05, 0.3, 1e-8), y, s)
    assert rel(near, closed) < 1e-6
    assert laplace_rho(DiffusionParams(0.05, 0.3, 0.4), 0.4, s) == 1.0


def test_general_monotone_in_rate():
    d = DiffusionParams(0.05, 0.3, 1.0)
    for target in (0.5, 1.5):
        v = [laplace_tau_general(d, target, s) for s in (0.1, 0.5, 1.0, 2.0)]
        assert all(b < a for a, b in zip(v, v[1:]))
