"""Reduced Maxwell-Lorentz dynamics in the comoving frame.

Phase point Z = (A, Pi, pi) with conserved parameter P.  The Hamiltonian is

    H_P = 1/2 ||Pi||^2 + 1/2 ||grad A||^2 + |p|^2/(2m) + |pi - M(A)|^2/(2I),
    p = P + <Pi, grad_* A> - <A, rho>,   M(A) = <y ^ A, rho>,

and the closures are v = p/m, omega = (pi - M(A))/I.  The flow is

    dA/dt  = Pi + (v.grad) A
    dPi/dt = Laplace A + (v.grad) Pi + P[(v + omega ^ y) rho]
    dpi/dt = -pi ^ omega.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, NotAFunctionalError, StepSizeError
from .spectral import (BoxSpectralField, angular_coupling, charge_coupling, inner, moment_coupling,
                       momentum_coupling, norm_h1dot, norm_l2, source_tables)
from .state import ModelParams, ReducedState, TangentVector

CFL = 0.5


def closure_velocities(state, params):
    """(v, omega) read off the state through the momentum and spin balances."""
    A, Pi = state.A, state.Pi
    p = params.P + momentum_coupling(Pi, A) - charge_coupling(A, params.profile)
    M = moment_coupling(A, params.profile)
    return p / params.m, (state.pi - M) / params.I


def _field_rhs(A, Pi, v, omega, tables):
    g = tables.grid
    ivk = 1j * np.tensordot(v, g.k, axes=1)
    dA = Pi + ivk * A
    dPi = -g.k2 * A + ivk * Pi + tables.current(v, omega)
    return dA, dPi


def rhs(state, params):
    """Time derivative of the reduced system at ``state``."""
    v, omega = closure_velocities(state, params)
    t = source_tables(state.grid, params.profile)
    dA, dPi = _field_rhs(state.A.coeffs, state.Pi.coeffs, v, omega, t)
    g = state.grid
    return ReducedState(BoxSpectralField(g, dA), BoxSpectralField(g, dPi), -np.cross(state.pi, omega))


def hamiltonian(state, params):
    A, Pi = state.A, state.Pi
    p = params.P + momentum_coupling(Pi, A) - charge_coupling(A, params.profile)
    s = state.pi - moment_coupling(A, params.profile)
    return float(0.5 * (norm_l2(Pi)**2 + norm_h1dot(A)**2) + p @ p / (2 * params.m)
                 + s @ s / (2 * params.I))


def casimir(state):
    return float(state.pi @ state.pi)


def hamiltonian_gradient(state, params):
    """Variational derivatives (D_A H, D_Pi H, D_pi H) as a ReducedState.

    Built from the Riesz representers of the scalar functionals entering H:
    d<Pi, d_n A>/dA = -d_n Pi, d<Pi, d_n A>/dPi = d_n A,
    d<A, rho>_n/dA = P[rho e_n], dM_n/dA = e_n ^ (y rho).
    """
    g = state.grid
    t = source_tables(g, params.profile)
    A, Pi = state.A.coeffs, state.Pi.coeffs
    p = params.P + momentum_coupling(state.Pi, state.A) - charge_coupling(state.A, params.profile)
    s = state.pi - moment_coupling(state.A, params.profile)
    v, omega = p / params.m, s / params.I
    DA = g.k2 * A
    DPi = Pi.copy()
    eye = np.eye(3)
    for n in range(3):
        dn = 1j * g.k[n]
        charge_rep = t.current(eye[n], np.zeros(3))
        moment_rep = t.current(np.zeros(3), eye[n])
        DA = DA + v[n] * (-dn * Pi - charge_rep) - omega[n] * moment_rep
        DPi = DPi + v[n] * dn * A
    return ReducedState(BoxSpectralField(g, DA), BoxSpectralField(g, DPi), omega)


def apply_structure(state, grad):
    """Poisson operator J(Z) = [[0, 1, 0], [-1, 0, 0], [0, 0, -pi ^]] applied to grad."""
    return ReducedState(grad.Pi, -grad.A, -np.cross(state.pi, grad.pi))


def rhs_hamiltonian_form(state, params):
    return apply_structure(state, hamiltonian_gradient(state, params))


def pairing(a, b):
    """L2 (+) L2 (+) R^3 pairing of two triples."""
    return a.inner_z0(b)


def angular_momentum(state, params, diagnostics=False):
    """J = integral A ^ Pi - <(y ^ grad)_* A, Pi> + pi; defined only for P = 0."""
    if np.any(params.P != 0):
        raise NotAFunctionalError("angular momentum is a phase-space functional only for P = 0")
    ac = angular_coupling(state.A, state.Pi)
    J = ac.spin - ac.orbital + state.pi
    return (J, ac) if diagnostics else J


def distance_to_soliton(state, params, soliton):
    """||Z - S||_z + |v(Z) - v_S| + |omega(Z) - omega_S|."""
    v, omega = closure_velocities(state, params)
    diff = state - soliton.state()
    return float(diff.norm_z() + np.linalg.norm(v - soliton.v) + np.linalg.norm(omega - soliton.omega))


def lyapunov_nonlinear(state, params, soliton):
    """Lambda = H_P(Z) - pi^2/(2 I_eff), I_eff taken on the soliton's grid."""
    return hamiltonian(state, params) - casimir(state) / (2.0 * soliton.inertia_box)


@dataclass
class DeltaH:
    direct: float
    formula: float
    J1: float
    J1_bound: float

    def __iter__(self):
        return iter((self.direct, self.formula))


def delta_H_check(soliton, xi):
    """H(S + xi) - H(S) directly and through the exact expansion

        J1 + dp^2/(2m) + dM^2/(2I) + omega.gamma,
        J1 = 1/2 (||beta||^2 + ||grad alpha||^2) + <beta, (v.grad) alpha>,
        dp = <beta, grad_* A> + <Pi, grad_* alpha> + <beta, grad_* alpha> - <alpha, rho>,
        dM = gamma - M(alpha),

    at parameter P = P_S.  Also returns the lower bound (1-|v|)/2 (...) for J1.
    """
    params = soliton.model()
    S = soliton.state()
    Z = ReducedState(S.A + xi.alpha, S.Pi + xi.beta, S.pi + xi.gamma)
    direct = hamiltonian(Z, params) - hamiltonian(S, params)
    a, b, c = xi.alpha, xi.beta, xi.gamma
    prof = soliton.profile
    energy = norm_l2(b)**2 + norm_h1dot(a)**2
    J1 = 0.5 * energy + float(soliton.v @ momentum_coupling(b, a))
    dp = (momentum_coupling(b, soliton.A) + momentum_coupling(soliton.Pi, a)
          + momentum_coupling(b, a) - charge_coupling(a, prof))
    dM = c - moment_coupling(a, prof)
    formula = J1 + dp @ dp / (2 * soliton.m) + dM @ dM / (2 * soliton.I) + float(soliton.omega @ c)
    bound = 0.5 * (1.0 - np.linalg.norm(soliton.v)) * energy
    return DeltaH(float(direct), float(formula), float(J1), float(bound))


def random_perturbation(grid, eps, rng, k0=2.0, window=None, gamma=True):
    """Smooth localized divergence-free perturbation with ||xi||_z = eps.

    White noise is filtered by exp(-k^2/k0^2), multiplied by a Gaussian window
    of width ``window`` (default L/4) centred on the particle, and projected.
    """
    if window is None:
        window = grid.L / 4.0
    env = np.exp(-grid.k2 / k0**2)
    r2 = np.sum(grid.y**2, axis=0)
    win = np.exp(-r2 / (2.0 * window**2))

    def draw():
        noise = rng.standard_normal((3,) + grid.shape)
        smooth = grid.to_physical(grid.to_spectral(noise) * env)
        return BoxSpectralField.from_physical(grid, smooth * win)

    alpha, beta = draw(), draw()
    g = rng.standard_normal(3) if gamma else np.zeros(3)
    xi = TangentVector(alpha, beta, g)
    n = xi.norm_z()
    return xi * (eps / n) if n > 0 else xi


def cfl_limit(grid, speed):
    return CFL * grid.h / (1.0 + speed)


def _rodrigues(theta, x):
    a = float(np.sqrt(theta @ theta))
    if a < 1e-8:
        c1, c2 = 1.0 - a * a / 6.0, 0.5 - a * a / 24.0
    else:
        c1, c2 = np.sin(a) / a, (1.0 - np.cos(a)) / (a * a)
    tx = np.cross(theta, x)
    return x + c1 * tx + c2 * np.cross(theta, tx)


def _dexpinv(theta, w):
    tw = np.cross(theta, w)
    return w - 0.5 * tw + np.cross(theta, tw) / 12.0


_RK_A = ((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0))
_RK_B = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)


def _closure_raw(A, Pi, pi, params, grid, tables):
    w = grid.weight
    cross = np.sum((Pi * np.conj(A)).imag, axis=0)
    mom = np.array([np.sum(grid.k[n] * cross) for n in range(3)]) * w
    chg = (A * tables.rho).real.reshape(3, -1).sum(axis=1) * w
    a = np.conj(A)
    y = tables.yrho
    M = np.array([
        np.sum((y[1] * a[2] - y[2] * a[1]).real),
        np.sum((y[2] * a[0] - y[0] * a[2]).real),
        np.sum((y[0] * a[1] - y[1] * a[0]).real),
    ]) * w
    return (params.P + mom - chg) / params.m, (pi - M) / params.I


def step(state, params, dt, scheme="rkmk4"):
    """One explicit fourth-order step.

    Fields always use the classical RK4 tableau.  With scheme="rkmk4" the
    spin is advanced by the Munthe-Kaas Lie-group variant of the same tableau
    (pi moves by exact rotations), which keeps |pi| constant to roundoff;
    scheme="rk4" treats pi like the fields.
    """
    grid = state.grid
    t = source_tables(grid, params.profile)
    A0, Pi0, pi0 = state.A.coeffs, state.Pi.coeffs, state.pi
    kA, kPi, kpi = [], [], []
    for i in range(4):
        A, Pi = A0, Pi0
        for j, a in enumerate(_RK_A[i]):
            if a:
                A = A + (dt * a) * kA[j]
                Pi = Pi + (dt * a) * kPi[j]
        if scheme == "rkmk4":
            theta = sum((dt * a) * kpi[j] for j, a in enumerate(_RK_A[i]) if a) if i else np.zeros(3)
            pi = _rodrigues(theta, pi0) if i else pi0
        else:
            pi = pi0 + sum((dt * a) * kpi[j] for j, a in enumerate(_RK_A[i]) if a) if i else pi0
        v, omega = _closure_raw(A, Pi, pi, params, grid, t)
        dA, dPi = _field_rhs(A, Pi, v, omega, t)
        kA.append(dA)
        kPi.append(dPi)
        if scheme == "rkmk4":
            kpi.append(_dexpinv(theta, omega) if i else omega)
        else:
            kpi.append(-np.cross(pi, omega))
    A1 = A0 + dt * sum(b * k for b, k in zip(_RK_B, kA))
    Pi1 = Pi0 + dt * sum(b * k for b, k in zip(_RK_B, kPi))
    incr = dt * sum(b * k for b, k in zip(_RK_B, kpi))
    pi1 = _rodrigues(incr, pi0) if scheme == "rkmk4" else pi0 + incr
    return ReducedState(BoxSpectralField(grid, A1), BoxSpectralField(grid, Pi1), pi1)


@dataclass
class TrajectoryRecord:
    t: np.ndarray
    H: np.ndarray
    C: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    J: np.ndarray = None
    d: np.ndarray = None
    final: ReducedState = None
    dt: float = None
    scheme: str = ""
    extra: dict = field(default_factory=dict)

    @staticmethod
    def _rel(x):
        x = np.asarray(x)
        if x.ndim == 1:
            ref = abs(x[0])
            dev = np.max(np.abs(x - x[0]))
        else:
            ref = np.linalg.norm(x[0])
            dev = np.max(np.linalg.norm(x - x[0], axis=1))
        return float(dev / ref) if ref > 0 else float(dev)

    def drift(self, name):
        """max_t |X(t) - X(0)| / |X(0)| for X in {H, C, J}."""
        return self._rel(getattr(self, name))

    def rows(self):
        """Time-series rows with columns t, H, C, J1..3, v1..3, omega1..3, d."""
        n = len(self.t)
        J = self.J if self.J is not None else np.full((n, 3), np.nan)
        d = self.d if self.d is not None else np.full(n, np.nan)
        for i in range(n):
            yield [self.t[i], self.H[i], self.C[i], *J[i], *self.v[i], *self.omega[i], d[i]]

    columns = ["t", "H", "C", "J1", "J2", "J3", "v1", "v2", "v3", "omega1", "omega2", "omega3", "d"]


def integrate(state0, params, T, dt, record_every=1, scheme="rkmk4", reference=None,
              record_J=None, check_cfl=True, cfl_speed=None):
    """Integrate the reduced system on [0, T] with fixed step <= dt.

    The number of steps is ceil(T/dt); the step is shrunk to land on T.
    ``reference`` (a Soliton) enables the distance record d(t).  J is
    recorded when P = 0 unless ``record_J`` says otherwise.  The CFL bound
    uses ``cfl_speed`` (the nominal speed of the run) or, if omitted, the
    closure speed of the initial state.
    """
    if T <= 0 or dt <= 0:
        raise StepSizeError("T and dt must be positive")
    if cfl_speed is None:
        v0, _ = closure_velocities(state0, params)
        cfl_speed = float(np.linalg.norm(v0))
    limit = cfl_limit(state0.grid, cfl_speed)
    if check_cfl and dt > limit * (1 + 1e-12):
        raise StepSizeError(f"dt = {dt} exceeds the CFL bound {limit:.6g}")
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    h = T / n
    if record_J is None:
        record_J = not np.any(params.P != 0)
    ts, Hs, Cs, vs, ws, Js, ds = [], [], [], [], [], [], []

    def record(t, Z):
        v, w = closure_velocities(Z, params)
        ts.append(t)
        Hs.append(hamiltonian(Z, params))
        Cs.append(casimir(Z))
        vs.append(v)
        ws.append(w)
        if record_J:
            Js.append(angular_momentum(Z, params))
        if reference is not None:
            ds.append(distance_to_soliton(Z, params, reference))

    Z = state0
    record(0.0, Z)
    for i in range(1, n + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            Z_new = step(Z, params, h, scheme)
        if not Z_new.is_finite():
            raise DivergenceError(f"non-finite state at t = {i * h:.6g}", last_state=Z, time=(i - 1) * h)
        Z = Z_new
        if i % record_every == 0 or i == n:
            record(i * h, Z)
    return TrajectoryRecord(
        t=np.array(ts), H=np.array(Hs), C=np.array(Cs), v=np.array(vs), omega=np.array(ws),
        J=np.array(Js) if record_J else None, d=np.array(ds) if reference is not None else None,
        final=Z, dt=h, scheme=scheme)


@dataclass
class OrbitalReport:
    v: np.ndarray
    eps: float
    seed: int
    P: np.ndarray
    v_star: np.ndarray
    sup_d: float
    ratio: float
    d0: float
    energy_excess: np.ndarray
    H_drift: float
    trajectory: TrajectoryRecord

    def summary(self):
        return {
            "v": self.v.tolist(), "eps": self.eps, "seed": self.seed, "P": self.P.tolist(),
            "v_star": self.v_star.tolist(), "sup_d": self.sup_d, "ratio": self.ratio, "d0": self.d0,
            "energy_excess_min": float(np.min(self.energy_excess)),
            "energy_excess_max": float(np.max(self.energy_excess)),
            "H_drift": self.H_drift, "C_drift": self.trajectory.drift("C"),
        }


def orbital_stability_experiment(v, eps, T, seed, profile, grid, m=1.0, I=1.0, dt=None,
                                 record_every=1, scheme="rkmk4", k0=2.0, window=None):
    """Perturb S_{v,0}, re-match the comparison soliton through P, integrate.

    The perturbed state keeps the particle momentum m v, so its total
    momentum P is recomputed from the perturbed fields; v_* solves
    P_{v_*,0} = P on the same grid and d(t) is measured against S_{v_*,0}.
    """
    from .soliton import build_soliton, invert_momentum

    v = np.asarray(v, dtype=float)
    S = build_soliton(v, np.zeros(3), profile, grid, m, I)
    rng = np.random.default_rng(seed)
    xi = random_perturbation(grid, eps, rng, k0=k0, window=window) if eps > 0 else TangentVector.zeros(grid)
    Z0 = ReducedState(S.A + xi.alpha, S.Pi + xi.beta, S.pi + xi.gamma)
    P = m * v + charge_coupling(Z0.A, profile) - momentum_coupling(Z0.Pi, Z0.A)
    v_star = invert_momentum(profile, P, m=m, grid=grid)
    ref = build_soliton(v_star, np.zeros(3), profile, grid, m, I)
    params = ModelParams(profile, m, I, P)
    speed = float(np.linalg.norm(v))
    if dt is None:
        dt = cfl_limit(grid, speed)
    rec = integrate(Z0, params, T, dt, record_every=record_every, scheme=scheme, reference=ref,
                    record_J=False, cfl_speed=speed)
    H_ref = hamiltonian(ref.state(), params)
    excess = rec.H - H_ref
    sup_d = float(np.max(rec.d))
    return OrbitalReport(v, float(eps), int(seed), P, v_star, sup_d,
                         sup_d / eps if eps > 0 else float("nan"), float(rec.d[0]), excess,
                         rec.drift("H"), rec)
