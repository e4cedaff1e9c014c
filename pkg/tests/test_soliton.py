import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.integrate import quad

from mlsl.errors import InvalidParameterError, NotInSigmaError, SuperluminalError
from mlsl.soliton import (PARALLEL, PERPENDICULAR, ZERO_SPIN, alpha_difference_series, build_soliton,
                          closed_form_alphas, effective_inertia, effective_mass, invert_momentum, pi_mismatch,
                          stationarity_residual, total_momentum, validate_sigma)
from mlsl.spectral import SpectralGrid, norm_l2

E1, E2, E3 = np.eye(3)


def test_sigma_classification():
    assert validate_sigma(0.3 * E1, 0.7 * E1) == PARALLEL
    assert validate_sigma(0.3 * E1, 0.7 * E2) == PERPENDICULAR
    assert validate_sigma(0.3 * E1, np.zeros(3)) == ZERO_SPIN
    assert validate_sigma(np.zeros(3), [0.3, -2.0, 1.0]) == PARALLEL


def test_sigma_rejects_generic_spin():
    with pytest.raises(NotInSigmaError) as info:
        validate_sigma(0.3 * E1, [0.5, 0.4, 0.0])
    q = info.value.mismatch
    assert np.linalg.norm(q) == pytest.approx(1.0)
    assert abs(q @ np.array([0.5, 0.4, 0.0])) < 1e-12


@pytest.mark.parametrize("v", [1.0, 1.2])
def test_superluminal_rejected(v):
    with pytest.raises(SuperluminalError):
        validate_sigma(v * E1, np.zeros(3))
    with pytest.raises(SuperluminalError):
        effective_inertia(None, v)


def test_rest_soliton_is_zero(grid16, profile):
    S = build_soliton(np.zeros(3), np.zeros(3), profile, grid16)
    assert norm_l2(S.A) == norm_l2(S.Pi) == 0
    assert np.all(S.pi == 0) and np.all(S.P == 0)
    assert stationarity_residual(S) == 0.0


def test_rotating_soliton_has_no_momentum(grid32, profile):
    S = build_soliton(np.zeros(3), E1, profile, grid32)
    assert norm_l2(S.Pi) == 0
    assert np.max(np.abs(S.P)) < 1e-18
    assert norm_l2(S.A) > 0


def test_moving_soliton_stationary_at_default_resolution(profile):
    S = build_soliton(0.3 * E1, np.zeros(3), profile, SpectralGrid(16.0, 64))
    assert np.all(S.pi == 0)
    assert stationarity_residual(S) <= 1e-6


@settings(max_examples=20, deadline=None)
# spins below ~1e-150 push moment products into subnormals
@given(s=st.floats(0.0, 0.9), w=st.one_of(st.just(0.0), st.floats(1e-6, 2.0)), perp=st.booleans(),
       ax=st.sampled_from([0, 1, 2]))
def test_soliton_invariants(grid16, profile, s, w, perp, ax):
    vhat = np.eye(3)[ax]
    ohat = np.eye(3)[(ax + 1) % 3] if perp else vhat
    S = build_soliton(s * vhat, w * ohat, profile, grid16)
    g = grid16
    vk = np.tensordot(S.v, g.k, axes=1)
    assert np.array_equal(S.Pi.coeffs, -1j * vk * S.A.coeffs)
    scale = np.max(np.abs(S.A.coeffs)) * np.max(g.kmag) + 1e-300
    assert S.A.max_divergence() <= 1e-13 * scale
    assert np.linalg.norm(np.cross(S.pi, S.omega)) <= 1e-12 * (np.linalg.norm(S.pi) * w + 1e-300)
    if w > 0:
        assert S.pi @ (S.omega / w) / w == pytest.approx(S.inertia_box, rel=1e-12)
        assert S.inertia_box > S.I
    assert stationarity_residual(S) < 1e-12


def test_spin_tracks_continuum_inertia(profile):
    S = build_soliton(np.zeros(3), E3, profile, SpectralGrid(16.0, 64))
    # box value converges to the continuum one as the grid resolves rho_hat
    assert S.inertia_box == pytest.approx(S.inertia, rel=1e-4)
    assert S.inertia > S.I


def test_rest_inertia_shift(profile):
    expected = 8 * np.pi / 3 * profile.g_moment
    assert effective_inertia(profile, 0.0, PARALLEL, I=0.0) == pytest.approx(expected, rel=1e-14)
    assert effective_inertia(profile, 0.0, PERPENDICULAR, I=0.0) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(InvalidParameterError):
        effective_inertia(profile, 0.5, "sideways")


@pytest.mark.parametrize("v", np.round(np.arange(1, 10) * 0.1, 2))
def test_inertia_matches_closed_forms(profile, v):
    a1, a2 = closed_form_alphas(profile.g_moment, v)
    par = effective_inertia(profile, v, PARALLEL, I=0.0)
    perp = effective_inertia(profile, v, PERPENDICULAR, I=0.0)
    assert par == pytest.approx(2 * a2, rel=1e-6)
    assert perp == pytest.approx(a1 + a2, rel=1e-6)
    assert perp > par > 0


def test_inertia_increasing_in_speed(profile):
    s = np.linspace(0, 0.95, 20)
    for cls in (PARALLEL, PERPENDICULAR):
        vals = [effective_inertia(profile, x, cls) for x in s]
        assert np.all(np.diff(vals) > 0)


def test_alphas_against_angular_quadrature(profile):
    C, v = profile.g_moment, 0.5
    a1, a2 = closed_form_alphas(C, v)
    o1 = C * 2 * np.pi * quad(lambda m: m**2 / (1 - v**2 * m**2), -1, 1, epsabs=0, epsrel=1e-13)[0]
    o2 = C * np.pi * quad(lambda m: (1 - m**2) / (1 - v**2 * m**2), -1, 1, epsabs=0, epsrel=1e-13)[0]
    assert a1 == pytest.approx(o1, rel=1e-6) and a2 == pytest.approx(o2, rel=1e-6)
    assert a1 > a2


def test_alphas_small_speed_limit():
    for v in (1e-2, 1e-4, 1e-6):
        a1, a2 = closed_form_alphas(1.0, v)
        assert a1 / a2 == pytest.approx(1.0, abs=2 * v**2)
        assert a1 == pytest.approx(4 * np.pi / 3, rel=2 * v**2)
    with pytest.raises(InvalidParameterError):
        closed_form_alphas(1.0, 0.0)
    with pytest.raises(SuperluminalError):
        closed_form_alphas(1.0, 1.0)


def test_series_continuity_at_cutoff():
    lo, hi = closed_form_alphas(1.0, 0.05 - 1e-12), closed_form_alphas(1.0, 0.05 + 1e-12)
    assert lo == pytest.approx(hi, rel=1e-9)


def test_alpha_difference_series(profile):
    C = profile.g_moment
    a1, a2 = closed_form_alphas(C, 0.5)
    assert alpha_difference_series(C, 0.5) == pytest.approx(a1 - a2, rel=1e-10)
    # the printed exponent 2(k-2) would give a value four times larger at v = 1/2
    literal = np.pi * C * sum(8 * (k - 1) / ((2 * k + 1) * (2 * k - 1)) * 0.5 ** (2 * (k - 2)) for k in range(2, 200))
    assert literal == pytest.approx(4 * (a1 - a2), rel=1e-10)


def test_mismatch_parallel_classes(profile):
    for v, w, cls in ((0.5 * E1, 0.8 * E1, PARALLEL), (0.5 * E2, 0.8 * E1, PERPENDICULAR)):
        pm = pi_mismatch(profile, v, w, I=1.0)
        assert pm.parallel
        assert pm.pi == pytest.approx(effective_inertia(profile, 0.5, cls) * w, rel=1e-10)


def test_mismatch_components(profile):
    C = profile.g_moment
    a1, a2 = closed_form_alphas(C, 0.5)
    w = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
    pm = pi_mismatch(profile, 0.5 * E1, w)
    assert not pm.parallel
    assert pm.q == pytest.approx([w[0] * a1, w[1] * a2, 0.0], rel=1e-10, abs=1e-18)
    # with v along e2 the enhanced component is the second one
    pi2, q2, par2 = pi_mismatch(profile, 0.5 * E2, w)
    assert not par2
    assert q2 == pytest.approx([w[0] * a2, w[1] * a1, 0.0], rel=1e-10, abs=1e-18)


@settings(max_examples=20, deadline=None)
@given(s=st.floats(0.05, 0.95), th=st.floats(0.05, np.pi / 2 - 0.05), phi=st.floats(0, 2 * np.pi))
def test_mismatch_outside_sigma(profile, s, th, phi):
    v = s * np.array([np.cos(phi), np.sin(phi), 0.0])
    w = np.cos(th) * v / s + np.sin(th) * np.array([0.0, 0.0, 1.0])
    pi, q, par = pi_mismatch(profile, v, w)
    assert not par
    assert np.linalg.norm(np.cross(pi, w)) > 0


def test_momentum_of_rest_solitons(grid16, profile):
    S = build_soliton(np.zeros(3), 0.7 * E2, profile, grid16)
    assert np.max(np.abs(total_momentum(S))) < 1e-18
    assert np.all(invert_momentum(profile, np.zeros(3)) == 0)


def test_total_momentum_matches_build(grid32, profile):
    S = build_soliton(0.4 * E2, 0.3 * E2, profile, grid32)
    assert np.array_equal(total_momentum(S), S.P)


def test_effective_mass_increasing(profile, grid32):
    assert effective_mass(profile, 0.6) > effective_mass(profile, 0.3) > effective_mass(profile, 0.0) > 1.0
    s = np.linspace(0, 0.9, 10)
    for grid in (None, grid32):
        vals = [effective_mass(profile, x, grid=grid) for x in s]
        assert np.all(np.diff(vals) > 0)
    w = [effective_mass(profile, 0.4, omega_norm=x) for x in (0.0, 0.5, 1.0)]
    assert np.all(np.diff(w) > 0)


@pytest.mark.parametrize("s", [0.1, 0.3, 0.6])
def test_invert_momentum_round_trip(profile, grid32, s):
    S = build_soliton(s * E1, np.zeros(3), profile, grid32)
    v = invert_momentum(profile, total_momentum(S), grid=grid32)
    assert v == pytest.approx(s * E1, abs=1e-8)
    P = effective_mass(profile, s) * s * E2
    assert invert_momentum(profile, P) == pytest.approx(s * E2, abs=1e-8)


def test_stationarity_improves_nothing_beyond_roundoff(profile):
    # the sampled soliton is an exact discrete equilibrium at every resolution
    for N in (16, 32):
        S = build_soliton(0.6 * E1, 0.5 * E1, profile, SpectralGrid(16.0, N))
        assert stationarity_residual(S) < 1e-14
