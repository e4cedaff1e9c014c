"""Solitons S_{v,omega}: closed-form fields, effective inertia and mass.

Box fields are sampled from the Fourier formula

    A_hat(k) = [ (v - k (v.k)/k^2) rho_hat(k) + omega ^ (i grad rho_hat)(k) ] / (k^2 - (v.k)^2),
    Pi_hat(k) = -i (v.k) A_hat(k),

written in the e^{-ikx} convention of ``spectral`` (i grad rho_hat is the
transform of y rho).  Because the reduced dynamics samples the same rho_hat
tables, the sampled soliton is an exact stationary point of the discrete
system and its spin and momentum are computed on the grid.

Continuum quantities (effective inertia, mass, spin mismatch) factor into a
radial moment of the profile times an angular integral over the unit sphere;
the angular part uses Gauss-Legendre nodes in mu = khat.vhat.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import roots_legendre

from .errors import InvalidParameterError, NotInSigmaError, ResolutionError, SuperluminalError
from .spectral import (BoxSpectralField, charge_coupling, moment_coupling, momentum_coupling,
                       norm_h1dot, norm_l2, source_tables)

ZERO_SPIN = "zero-spin"
PARALLEL = "parallel"
PERPENDICULAR = "perpendicular"

_SIGMA_TOL = 1e-12
_SERIES_CUTOFF = 0.05


def _vec(x):
    x = np.asarray(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("vector must be finite")
    return x


def _unit(x):
    """x/|x| without squaring tiny components into the subnormal range."""
    x = x / np.max(np.abs(x))
    return x / np.linalg.norm(x)


def _check_speed(s):
    if not np.isfinite(s) or s >= 1.0:
        raise SuperluminalError(f"|v| = {s} >= 1: no soliton exists")
    if s < 0:
        raise InvalidParameterError("speed must be nonnegative")


def _mu_rule(n):
    return roots_legendre(n)


def _angular_tensor(s, n_mu=256):
    """(t_par, t_perp) = integrals over the sphere of mu^2/(1 - s^2 mu^2) and
    (1 - mu^2)/2/(1 - s^2 mu^2), mu measured along v."""
    mu, w = _mu_rule(n_mu)
    den = 1.0 - (s * mu) ** 2
    t_par = 2.0 * np.pi * np.sum(w * mu**2 / den)
    t_perp = np.pi * np.sum(w * (1.0 - mu**2) / den)
    return t_par, t_perp


def _mismatch_direction(v, omega):
    s = np.linalg.norm(v)
    vh = v / s
    t_par, t_perp = _angular_tensor(s)
    w_par = (omega @ vh) * vh
    q = t_par * w_par + t_perp * (omega - w_par)
    wn = omega / np.linalg.norm(omega)
    q_perp = q - (q @ wn) * wn
    n = np.linalg.norm(q_perp)
    return q_perp / n if n > 0 else q_perp


def validate_sigma(v, omega, tol=_SIGMA_TOL):
    """Classify (v, omega) as zero-spin, parallel or perpendicular.

    v = 0 is accepted for every omega and classed as parallel.
    """
    v, omega = _vec(v), _vec(omega)
    s = np.linalg.norm(v)
    _check_speed(s)
    wn = np.linalg.norm(omega)
    if s == 0:
        return PARALLEL
    if wn == 0:
        return ZERO_SPIN
    if np.linalg.norm(np.cross(v, omega)) <= tol * s * wn:
        return PARALLEL
    if abs(v @ omega) <= tol * s * wn:
        return PERPENDICULAR
    raise NotInSigmaError(
        "omega is neither parallel nor perpendicular to v; the spin would not stay aligned",
        mismatch=_mismatch_direction(v, omega))


@dataclass(frozen=True)
class SolitonParams:
    v: np.ndarray
    omega: np.ndarray
    cls: str

    @classmethod
    def create(cls, v, omega=(0.0, 0.0, 0.0)):
        v, omega = _vec(v), _vec(omega)
        return cls(v, omega, validate_sigma(v, omega))


def soliton_fields(grid, profile, v, omega):
    """Sampled (A, Pi) of the soliton with velocity v and angular velocity omega."""
    v, omega = _vec(v), _vec(omega)
    _check_speed(np.linalg.norm(v))
    t = source_tables(grid, profile)
    vk = np.tensordot(v, grid.k, axes=1)
    den = grid.k2 - vk**2
    inv = np.zeros(grid.shape)
    inv[grid.active] = 1.0 / den[grid.active]
    A = t.current(v, omega) * inv
    return BoxSpectralField(grid, A), BoxSpectralField(grid, -1j * vk * A)


def field_momentum(A, Pi, profile):
    """<A, rho> - <Pi, grad_* A>: field part of the total momentum."""
    return charge_coupling(A, profile) - momentum_coupling(Pi, A)


@dataclass
class Soliton:
    params: SolitonParams
    grid: object
    profile: object
    m: float
    I: float
    A: BoxSpectralField
    Pi: BoxSpectralField
    pi: np.ndarray
    P: np.ndarray
    inertia: float
    inertia_box: float
    energy: float

    @property
    def v(self):
        return self.params.v

    @property
    def omega(self):
        return self.params.omega

    def state(self):
        from .state import ReducedState
        return ReducedState(self.A.copy(), self.Pi.copy(), self.pi.copy())

    def model(self):
        from .state import ModelParams
        return ModelParams(self.profile, self.m, self.I, self.P)


def box_inertia_shift(grid, profile, v, direction):
    """Grid value of M(A_{v,e})·e for the unit vector e: the discrete delta I."""
    e = _unit(_vec(direction))
    A, _ = soliton_fields(grid, profile, np.zeros(3) if v is None else v, e)
    return float(moment_coupling(A, profile) @ e)


def build_soliton(v, omega, profile, grid, m=1.0, I=1.0):
    """Sample S_{v,omega} on the grid; (v, omega) must lie in Sigma."""
    if isinstance(v, SolitonParams):
        params = v
    else:
        params = SolitonParams.create(v, omega)
    if not (m > 0 and I > 0):
        raise InvalidParameterError("m and I must be positive")
    v, omega = params.v, params.omega
    A, Pi = soliton_fields(grid, profile, v, omega)
    pi = I * omega + moment_coupling(A, profile)
    P = m * v + field_momentum(A, Pi, profile)
    s = float(np.linalg.norm(v))
    wn = float(np.linalg.norm(omega))
    cls = PARALLEL if params.cls == ZERO_SPIN else params.cls
    inertia = effective_inertia(profile, s, cls, I=I)
    if wn > 0:
        axis = omega
    else:
        axis = v if s > 0 else np.array([0.0, 0.0, 1.0])
    inertia_box = I + box_inertia_shift(grid, profile, v, axis)
    energy = 0.5 * (norm_l2(Pi)**2 + norm_h1dot(A)**2) + 0.5 * m * s**2 + 0.5 * I * wn**2
    return Soliton(params, grid, profile, float(m), float(I), A, Pi, pi, P,
                   inertia, inertia_box, float(energy))


def closed_form_alphas(C, v):
    """(alpha1, alpha2) for the radial factor C and speed v in (0, 1).

    alpha1 = (2 pi C/v^3)(log((1+v)/(1-v)) - 2v)
    alpha2 = (pi C/v^3)((v^2 - 1) log((1+v)/(1-v)) + 2v)
    Below v = 0.05 the power series (exact to roundoff there) replaces the
    closed forms, which lose digits to cancellation.
    """
    v = abs(float(v))
    if v == 0:
        raise InvalidParameterError("v = 0: use the rest value (4 pi/3) C for both")
    _check_speed(v)
    if v < _SERIES_CUTOFF:
        j = np.arange(1, 40)
        p = v ** (2 * j - 2)
        a1 = 4.0 * np.pi * C * np.sum(p / (2 * j + 1))
        a2 = 4.0 * np.pi * C * np.sum(p / ((2 * j - 1) * (2 * j + 1)))
        return a1, a2
    lg = np.log1p(v) - np.log1p(-v)
    a1 = 2.0 * np.pi * C / v**3 * (lg - 2.0 * v)
    a2 = np.pi * C / v**3 * ((v * v - 1.0) * lg + 2.0 * v)
    return a1, a2


def alpha_difference_series(C, v, tol=1e-16):
    """alpha1 - alpha2 = pi C sum_{k>=2} 8(k-1)/((2k+1)(2k-1)) v^(2(k-1)).

    Summed until the terms fall below tol relative to the partial sum; every
    term is positive, so alpha1 > alpha2 for v > 0.
    """
    v = abs(float(v))
    _check_speed(v)
    total, k = 0.0, 2
    while True:
        term = 8.0 * (k - 1) / ((2 * k + 1) * (2 * k - 1)) * v ** (2 * (k - 1))
        total += term
        if term <= tol * total or k > 100000:
            break
        k += 1
    return np.pi * C * total


def effective_inertia(profile, v, cls=PARALLEL, I=1.0, n_mu=256):
    """I + delta I for spin parallel or perpendicular to the velocity.

    delta I = C * integral over the sphere of (1 - (khat.omegahat)^2)/(1 - v^2 (khat.vhat)^2),
    with C = integral_0^inf g^2 dr from the profile's radial quadrature and
    the azimuthal average done analytically.
    """
    s = abs(float(v))
    _check_speed(s)
    if cls not in (PARALLEL, PERPENDICULAR):
        raise InvalidParameterError(f"class must be parallel or perpendicular, got {cls!r}")
    mu, w = _mu_rule(n_mu)
    den = 1.0 - (s * mu) ** 2
    if cls == PARALLEL:
        ang = 2.0 * np.pi * np.sum(w * (1.0 - mu**2) / den)
    else:
        ang = np.pi * np.sum(w * (1.0 + mu**2) / den)
    return I + profile.g_moment * ang


def _sphere_rule(vhat, n_mu=128, n_phi=128):
    """Nodes khat and weights on the unit sphere, polar axis along vhat."""
    mu, wm = _mu_rule(n_mu)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    a = np.array([1.0, 0.0, 0.0]) if abs(vhat[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - (a @ vhat) * vhat
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(vhat, e1)
    st = np.sqrt(1.0 - mu**2)
    kh = (mu[:, None, None] * vhat
          + (st[:, None] * np.cos(phi))[..., None] * e1
          + (st[:, None] * np.sin(phi))[..., None] * e2)
    w = np.outer(wm, np.full(n_phi, 2.0 * np.pi / n_phi))
    return kh.reshape(-1, 3), w.reshape(-1), np.repeat(mu, n_phi)


@dataclass
class PiMismatch:
    pi: np.ndarray
    q: np.ndarray
    parallel: bool

    def __iter__(self):
        return iter((self.pi, self.q, self.parallel))


def pi_mismatch(profile, v, omega, I=1.0, n_mu=128, n_phi=128, tol=1e-8):
    """Continuum spin pi = omega (I + C S) - q with q = C T omega.

    S and T are the sphere integrals of 1/(1 - (v.khat)^2) and of
    khat khat^T/(1 - (v.khat)^2).  ``parallel`` tests |pi ^ omega| <= tol |pi||omega|.
    """
    v, omega = _vec(v), _vec(omega)
    s = float(np.linalg.norm(v))
    _check_speed(s)
    vhat = v / s if s > 0 else np.array([0.0, 0.0, 1.0])
    kh, w, mu = _sphere_rule(vhat, n_mu, n_phi)
    wd = w / (1.0 - (s * mu) ** 2)
    C = profile.g_moment
    S = np.sum(wd)
    T = np.einsum("n,ni,nj->ij", wd, kh, kh)
    q = C * (T @ omega)
    pi = omega * (I + C * S) - q
    pn, wn = np.linalg.norm(pi), np.linalg.norm(omega)
    parallel = bool(np.linalg.norm(np.cross(pi, omega)) <= tol * pn * wn) if wn > 0 else True
    return PiMismatch(pi, q, parallel)


def total_momentum(soliton):
    """P = m v + <A, rho> - <Pi, grad_* A> on the grid."""
    return soliton.m * soliton.v + field_momentum(soliton.A, soliton.Pi, soliton.profile)


def _spin_direction(vhat, orientation):
    if orientation == PARALLEL:
        return vhat
    a = np.array([0.0, 0.0, 1.0]) if abs(vhat[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e = a - (a @ vhat) * vhat
    return e / np.linalg.norm(e)


def _continuum_mass(profile, s, omega_norm, orientation, m, n_mu=256):
    mu, w = _mu_rule(n_mu)
    den = 1.0 - (s * mu) ** 2
    one = 1.0 - mu**2
    charge = 2.0 * np.pi * np.sum(w * (one / den + s**2 * mu**2 * one / den**2))
    out = m + profile.fourier_moment * charge
    if omega_norm:
        spin = one if orientation == PARALLEL else 0.5 * (1.0 + mu**2)
        ang = 2.0 * np.pi * np.sum(w * mu**2 * spin / den**2)
        out += profile.g_moment * omega_norm**2 * ang
    return out


def _box_mass(profile, grid, s, omega_norm, orientation, m, axis):
    s_eval = max(s, 1e-7)
    v = s_eval * axis
    omega = omega_norm * _spin_direction(axis, orientation)
    A, Pi = soliton_fields(grid, profile, v, omega)
    P = m * v + field_momentum(A, Pi, profile)
    return float(P @ axis) / s_eval


def effective_mass(profile, speed, omega_norm=0.0, m=1.0, grid=None,
                   orientation=PARALLEL, axis=(1.0, 0.0, 0.0)):
    """m_eff(|v|, |omega|) with P_{v,omega} = m_eff v.

    Without ``grid`` the continuum quadrature is used.  With a grid the
    momentum of the sampled soliton (velocity along ``axis``) is used, which
    is the value consistent with the discrete dynamics on that grid.
    """
    s = abs(float(speed))
    _check_speed(s)
    if grid is None:
        return _continuum_mass(profile, s, float(omega_norm), orientation, m)
    axis = _vec(axis)
    return _box_mass(profile, grid, s, float(omega_norm), orientation, m, axis / np.linalg.norm(axis))


def invert_momentum(profile, P, m=1.0, omega_norm=0.0, grid=None, orientation=PARALLEL,
                    s_max=0.999, xtol=1e-14):
    """Velocity v_* with P_{v_*, omega} = P (speed found by a bracketing root solve)."""
    P = _vec(P)
    pn = float(np.linalg.norm(P))
    if pn == 0:
        return np.zeros(3)
    axis = P / pn

    def f(s):
        return effective_mass(profile, s, omega_norm, m, grid, orientation, axis) * s - pn

    if f(s_max) < 0:
        raise ResolutionError(f"|P| = {pn} exceeds the momentum of any soliton with |v| <= {s_max}")
    s = brentq(f, 0.0, s_max, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
    return s * axis


def stationarity_residual(soliton, grid=None):
    """||rhs(S)||_V / ||S||_Y with the reduced parameter P set to P_{v,omega}."""
    from .dynamics import rhs
    state = soliton.state()
    scale = state.norm_z()
    if scale == 0:
        return 0.0
    return rhs(state, soliton.model()).norm_v() / scale
