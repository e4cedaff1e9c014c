import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import spherical_jn

from mlsl.errors import InvalidParameterError
from mlsl.profile import (FOURIER_NORM, ChargeProfile, fourier_radial, fourier_radial_derivative,
                          make_bump_profile)


def _bump(amplitude, radius=1.0):
    return lambda s: amplitude * np.exp(-1.0 / (1.0 - (s / radius) ** 2)) if s < radius else 0.0


def test_unit_charge_normalization(profile):
    assert profile.total_charge == pytest.approx(1.0, rel=1e-13)
    assert fourier_radial(profile, 0.0) == pytest.approx(FOURIER_NORM, rel=1e-13)


@pytest.mark.parametrize("kw", [{"radius": 1.0, "amplitude": 0.0}, {"radius": 0.0, "amplitude": 1.0},
                                {"radius": -1.0, "amplitude": 1.0}])
def test_degenerate_profiles_rejected(kw):
    with pytest.raises(InvalidParameterError):
        make_bump_profile(**kw)


def test_total_charge_against_adaptive_quadrature():
    p = make_bump_profile(1.0, 1.0)
    oracle = 4 * np.pi * quad(lambda s: s**2 * _bump(1.0)(s), 0, 1, epsabs=0, epsrel=1e-13, limit=200)[0]
    assert p.total_charge == pytest.approx(oracle, rel=1e-10)


def test_density_support_and_nonzero(profile):
    r = np.linspace(0, 2, 401)
    rho = profile.density(r)
    assert np.all(rho[r >= profile.radius] == 0)
    assert np.max(np.abs(rho)) > 0


def test_density_is_even_at_origin(profile):
    # odd derivatives of the even extension vanish: centred differences of rho1(|r|)
    h = 1e-3
    f = lambda r: profile.density(np.abs(np.asarray(r)))
    d1 = (f(h) - f(-h)) / (2 * h)
    d3 = (f(2 * h) - 2 * f(h) + 2 * f(-h) - f(-2 * h)) / (2 * h**3)
    assert abs(d1) < 1e-12 and abs(d3) < 1e-6


def test_fourier_against_3d_quadrature(profile):
    n = 64
    x = -1 + 2 * (np.arange(n) + 0.5) / n
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"))
    rho = profile.density(np.sqrt(np.sum(X**2, axis=0)))
    h3 = (2.0 / n) ** 3
    for k in (np.array([3.0, 0, 0]), np.array([1.0, 2.0, 2.0])):
        brute = FOURIER_NORM * h3 * np.sum(rho * np.cos(np.tensordot(k, X, axes=1)))
        assert fourier_radial(profile, np.linalg.norm(k)) == pytest.approx(brute, abs=1e-6)


def test_fourier_decays_faster_than_powers():
    p = make_bump_profile(n_radial=2000)
    for power in (2, 4, 6):
        env = []
        for R in (100.0, 200.0, 400.0):
            r = np.linspace(R, 2 * R, 400)
            env.append(np.max(np.abs(p.fourier(r)) * r**power))
        assert env[0] > env[1] > env[2]


def test_derivative_at_origin_and_finite_difference(profile):
    assert fourier_radial_derivative(profile, 0.0) == 0.0
    h = 1e-4
    fd = (fourier_radial(profile, 1 + h) - fourier_radial(profile, 1 - h)) / (2 * h)
    assert fourier_radial_derivative(profile, 1.0) == pytest.approx(fd, abs=1e-6)


def test_negative_wavenumber_rejected(profile):
    with pytest.raises(InvalidParameterError):
        fourier_radial(profile, -1.0)
    with pytest.raises(InvalidParameterError):
        fourier_radial_derivative(profile, -0.5)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_rest_inertia_shift_against_independent_quadrature(profile):
    amp = profile.amplitude

    def g(r):
        f = lambda s: s**3 * _bump(amp)(s) * -spherical_jn(1, r * s)
        return 4 * np.pi * FOURIER_NORM * quad(f, 0, 1, epsabs=0, epsrel=1e-12, limit=200)[0]

    # angular factor: integral of sin^2 over the sphere = 8 pi / 3, done by quadrature too
    ang = quad(lambda t: 2 * np.pi * np.sin(t) ** 3, 0, np.pi)[0]
    oracle = ang * quad(lambda r: g(r) ** 2, 0, 200, epsabs=0, epsrel=1e-10, limit=400)[0]
    assert profile.inertia_shift == pytest.approx(oracle, rel=1e-6)


def test_transform_is_real_at_nodes(profile):
    assert np.isrealobj(profile.fourier(profile.k_nodes))
    assert np.isrealobj(profile.fourier_derivative(profile.k_nodes))
    assert np.all(np.isfinite(profile.fourier(profile.k_nodes)))


@settings(max_examples=30, deadline=None)
@given(amp=st.floats(0.1, 10.0), r=st.floats(0.0, 30.0))
def test_transform_linear_in_amplitude(amp, r):
    p1 = ChargeProfile(1.0, amp, n_radial=64)
    p2 = ChargeProfile(1.0, 2 * amp, n_radial=64)
    assert p2.fourier(r) == pytest.approx(2 * p1.fourier(r), rel=1e-12, abs=1e-300)
    assert p2.fourier_derivative(r) == pytest.approx(2 * p1.fourier_derivative(r), rel=1e-12, abs=1e-300)


@settings(max_examples=20, deadline=None)
@given(radius=st.floats(0.2, 3.0), charge=st.floats(-5.0, 5.0).filter(lambda c: abs(c) > 1e-3))
def test_zero_frequency_is_normalized_charge(radius, charge):
    p = make_bump_profile(radius, charge=charge, n_radial=64)
    assert p.fourier(0.0) == pytest.approx(FOURIER_NORM * p.total_charge, rel=1e-12)
    assert p.total_charge == pytest.approx(charge, rel=1e-12)


def test_record_round_trip(profile):
    rec = profile.to_record()
    q = ChargeProfile.from_record(rec)
    assert q.amplitude == profile.amplitude and q.radius == profile.radius
    assert q.total_charge == profile.total_charge
    assert rec["e"] == pytest.approx(1.0)
