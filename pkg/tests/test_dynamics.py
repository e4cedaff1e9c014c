import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_state, random_tangent
from mlsl.dynamics import (casimir, cfl_limit, closure_velocities, delta_H_check, distance_to_soliton,
                           hamiltonian, hamiltonian_gradient, integrate, angular_momentum, pairing,
                           random_perturbation, rhs, rhs_hamiltonian_form, step)
from mlsl.errors import DivergenceError, NotAFunctionalError, StepSizeError
from mlsl.soliton import build_soliton
from mlsl.spectral import SpectralGrid, charge_coupling, momentum_coupling
from mlsl.state import ModelParams, ReducedState

E3 = np.array([0.0, 0.0, 1.0])


def _params(profile, rng, P=True):
    return ModelParams(profile, 1.0 + rng.random(), 0.5 + rng.random(),
                       rng.standard_normal(3) * 0.3 if P else np.zeros(3))


def test_closure_at_soliton(grid16, profile):
    S = build_soliton([0.3, 0.0, 0.0], [0.7, 0.0, 0.0], profile, grid16)
    v, w = closure_velocities(S.state(), S.model())
    assert np.allclose(v, S.v, atol=1e-13)
    assert np.allclose(w, S.omega, atol=1e-13)


def test_zero_state(grid16, profile):
    P = np.array([0.2, -0.1, 0.4])
    params = ModelParams(profile, 2.0, 1.0, P)
    Z = ReducedState.zeros(grid16)
    v, w = closure_velocities(Z, params)
    assert np.array_equal(v, P / 2.0) and np.array_equal(w, np.zeros(3))
    assert hamiltonian(Z, params) == pytest.approx(P @ P / 4.0, rel=1e-15)
    assert rhs(ReducedState.zeros(grid16), ModelParams(profile)).norm_z() == 0.0


@pytest.mark.parametrize("seed", range(20))
def test_rhs_matches_hamiltonian_form(grid16, profile, seed):
    rng = np.random.default_rng(seed)
    Z = random_state(grid16, rng, scale=0.3)
    params = _params(profile, rng)
    a, b = rhs(Z, params), rhs_hamiltonian_form(Z, params)
    assert (a - b).norm_z() <= 1e-10 * max(a.norm_z(), 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(grid16, profile, seed):
    rng = np.random.default_rng(100 + seed)
    Z = random_state(grid16, rng, scale=0.3)
    W = random_state(grid16, rng, scale=0.3)
    params = _params(profile, rng)
    h = 1e-3
    H = [hamiltonian(Z + W * (j * h), params) for j in (-2, -1, 1, 2)]
    fd = (H[0] - 8 * H[1] + 8 * H[2] - H[3]) / (12 * h)
    g = hamiltonian_gradient(Z, params)
    assert pairing(g, W) == pytest.approx(fd, rel=1e-7, abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_energy_and_casimir_stationary_along_flow(grid16, profile, seed):
    rng = np.random.default_rng(seed)
    Z = random_state(grid16, rng, scale=0.3)
    params = _params(profile, rng)
    F = rhs(Z, params)
    g = hamiltonian_gradient(Z, params)
    scale = np.sqrt(pairing(g, g) * pairing(F, F)) + 1e-300
    assert abs(pairing(g, F)) <= 1e-11 * scale
    assert abs(Z.pi @ F.pi) <= 1e-14 * np.linalg.norm(Z.pi) * np.linalg.norm(F.pi) + 1e-300


def test_angular_momentum_requires_zero_P(grid16, profile):
    Z = ReducedState.zeros(grid16)
    with pytest.raises(NotAFunctionalError):
        angular_momentum(Z, ModelParams(profile, P=[0.1, 0.0, 0.0]))
    assert np.array_equal(angular_momentum(Z, ModelParams(profile)), np.zeros(3))


@pytest.mark.parametrize("eps", [1e-2, 1e-3, 1e-4])
def test_distance_scales_linearly(grid16, profile, eps):
    S = build_soliton([0.2, 0.0, 0.0], np.zeros(3), profile, grid16)
    xi = random_tangent(grid16, np.random.default_rng(5), eps=1.0)
    d1 = distance_to_soliton(S.state() + xi * eps, S.model(), S)
    d2 = distance_to_soliton(S.state() + xi * (2 * eps), S.model(), S)
    assert d2 / d1 == pytest.approx(2.0, rel=0.05)
    assert distance_to_soliton(S.state(), S.model(), S) <= 1e-13


def test_delta_H_zero_perturbation(grid16, profile):
    S = build_soliton([0.3, 0.0, 0.0], [0.5, 0.0, 0.0], profile, grid16)
    dh = delta_H_check(S, random_tangent(grid16, np.random.default_rng(0), eps=0.0))
    assert dh.direct == 0.0 and dh.formula == 0.0


@pytest.mark.parametrize("seed", range(50))
def test_delta_H_expansion_exact(grid16, profile, seed):
    rng = np.random.default_rng(1000 + seed)
    s = rng.uniform(0, 0.8)
    axis = np.eye(3)[seed % 3]
    omega = axis * rng.uniform(0, 1.5) if seed % 2 else np.zeros(3)
    S = build_soliton(s * axis, omega, profile, grid16)
    xi = random_tangent(grid16, rng, eps=10 ** rng.uniform(-3, 0))
    dh = delta_H_check(S, xi)
    assert dh.direct == pytest.approx(dh.formula, rel=1e-10, abs=1e-13)
    assert dh.J1 >= dh.J1_bound - 1e-15


def test_cfl_violation(grid16, profile):
    Z = ReducedState.zeros(grid16)
    params = ModelParams(profile)
    with pytest.raises(StepSizeError):
        integrate(Z, params, 1.0, 1.01 * cfl_limit(grid16, 0.0))
    with pytest.raises(StepSizeError):
        integrate(Z, params, 1.0, cfl_limit(grid16, 0.0), cfl_speed=0.5)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reported(grid16, profile):
    rng = np.random.default_rng(3)
    Z = random_state(grid16, rng)
    Z = ReducedState(Z.A * 1e200, Z.Pi * 1e200, Z.pi)
    with pytest.raises(DivergenceError) as exc:
        integrate(Z, ModelParams(profile), 1.0, 0.1, check_cfl=False)
    assert exc.value.last_state is not None and exc.value.time is not None


def test_zero_state_stays_zero(grid16, profile):
    rec = integrate(ReducedState.zeros(grid16), ModelParams(profile), 1.0, 0.1)
    assert rec.final.norm_z() == 0.0


@pytest.mark.parametrize("scheme", ["rkmk4", "rk4"])
def test_soliton_is_fixed_point(grid16, profile, scheme):
    S = build_soliton([0.0, 0.4, 0.0], [0.0, 0.8, 0.0], profile, grid16)
    rec = integrate(S.state(), S.model(), 2.0, 0.1, scheme=scheme, reference=S, record_J=False)
    assert (rec.final - S.state()).norm_z() <= 1e-12 * S.state().norm_z()
    assert np.max(rec.d) <= 1e-11


def test_rkmk4_keeps_casimir(grid16, profile):
    rng = np.random.default_rng(8)
    Z = random_state(grid16, rng, scale=0.03)
    rec = integrate(Z, _params(profile, rng, P=False), 2.0, 0.1, record_J=False)
    assert rec.drift("C") <= 1e-13


def test_step_fourth_order(grid16, profile):
    rng = np.random.default_rng(9)
    Z = random_state(grid16, rng, scale=0.03)
    params = _params(profile, rng, P=False)
    ref = integrate(Z, params, 0.4, 0.0125, record_J=False).final
    errs = [(integrate(Z, params, 0.4, dt, record_J=False).final - ref).norm_z() for dt in (0.1, 0.05)]
    assert np.log2(errs[0] / errs[1]) == pytest.approx(4.0, abs=0.5)


def test_single_step_rk4_equals_rkmk4_without_spin(grid16, profile):
    rng = np.random.default_rng(10)
    Z = random_state(grid16, rng, scale=0.3)
    Z = ReducedState(Z.A, Z.Pi, np.zeros(3))
    params = ModelParams(profile)
    a, b = step(Z, params, 0.05, "rkmk4"), step(Z, params, 0.05, "rk4")
    assert (a - b).norm_z() <= 1e-14 * a.norm_z()


def test_energy_spread_shrinks_with_dt(profile):
    grid = SpectralGrid(16.0, 16)
    S = build_soliton([0.3, 0.0, 0.0], np.zeros(3), profile, grid)
    xi = random_perturbation(grid, 1e-2, np.random.default_rng(4))
    Z0 = S.state() + xi
    P = S.m * S.v + charge_coupling(Z0.A, profile) - momentum_coupling(Z0.Pi, Z0.A)
    params = ModelParams(profile, S.m, S.I, P)
    spreads = []
    for dt in (0.2, 0.1):
        rec = integrate(Z0, params, 4.0, dt, record_J=False, cfl_speed=0.3)
        spreads.append(np.ptp(rec.H))
    assert spreads[1] < spreads[0]


def test_random_perturbation_norm_and_determinism(grid16):
    a = random_perturbation(grid16, 1e-3, np.random.default_rng(1))
    b = random_perturbation(grid16, 1e-3, np.random.default_rng(1))
    assert a.norm_z() == pytest.approx(1e-3, rel=1e-12)
    assert np.array_equal(a.alpha.coeffs, b.alpha.coeffs)
    assert a.alpha.max_divergence() <= 1e-14 and a.beta.max_divergence() <= 1e-14
