"""Linearization at a rotating soliton S_omega = (A_omega, 0, pi_omega), v = 0.

Perturbations xi = (alpha, beta, gamma) evolve by

    d alpha/dt = beta + (dv.grad) A_omega
    d beta/dt  = Laplace alpha + P[(dv + domega ^ y) rho]
    d gamma/dt = -pi_omega ^ domega - gamma ^ omega

with the linearized closures dv = (<beta, grad_* A_omega> - <alpha, rho>)/m,
dM = gamma - M(alpha), domega = dM/I.

The angular-momentum constraint vectors are E_n = (0, b_n, e_n) with
b_n = e_n ^ A_omega - (y ^ grad)_n A_omega.  Rotating the soliton shows
b_n = A_{0, e_n ^ omega}, which is how they are sampled here; the
physical-space pairing is kept as an independent evaluation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrameError, DivergenceError, StepSizeError, WrongRegimeError
from .spectral import (BoxSpectralField, angular_coupling, charge_coupling, inner, moment_coupling,
                       momentum_coupling, norm_h1dot, norm_l2, source_tables)
from .soliton import soliton_fields
from .state import TangentVector
from .dynamics import cfl_limit


def _require_rest(soliton):
    if np.any(soliton.v != 0):
        raise WrongRegimeError("the tangent frame is defined at solitons with v = 0")


def constraint_vectors(soliton):
    """[E_1, E_2, E_3] as TangentVectors."""
    _require_rest(soliton)
    g = soliton.grid
    out = []
    for n in range(3):
        e = np.eye(3)[n]
        b, _ = soliton_fields(g, soliton.profile, np.zeros(3), np.cross(e, soliton.omega))
        out.append(TangentVector(BoxSpectralField.zeros(g), b, e))
    return out


def constraint_pairing_physical(soliton, xi):
    """(dJ_n(S_omega), xi) = integral (A_omega ^ beta)_n - <(y ^ grad)_n A_omega, beta> + gamma_n,
    evaluated in physical space."""
    _require_rest(soliton)
    ac = angular_coupling(soliton.A, xi.beta)
    return ac.spin - ac.orbital + xi.gamma


@dataclass
class TangentFrame:
    soliton: object
    vectors: list
    gram: np.ndarray
    gram_inv: np.ndarray

    def pairings(self, xi):
        return np.array([E.inner_z0(xi) for E in self.vectors])

    def project(self, xi):
        c = self.gram_inv @ self.pairings(xi)
        out = xi
        for cn, E in zip(c, self.vectors):
            out = out - E * cn
        return out


def tangent_frame(soliton, cond_max=1e12):
    vecs = constraint_vectors(soliton)
    G = np.array([[a.inner_z0(b) for b in vecs] for a in vecs])
    if not np.all(np.isfinite(G)) or np.linalg.cond(G) > cond_max:
        raise DegenerateFrameError("constraint Gram matrix is singular")
    return TangentFrame(soliton, vecs, G, np.linalg.inv(G))


def project_tangent(frame, xi):
    """Orthogonal projection onto {xi : (E_n, xi) = 0}, Gram-inverse form."""
    return frame.project(xi)


def linear_closures(xi, soliton):
    """(dp, dM): first-order changes of the particle momentum and spin balance."""
    prof = soliton.profile
    dp = momentum_coupling(xi.beta, soliton.A) - charge_coupling(xi.alpha, prof)
    dM = xi.gamma - moment_coupling(xi.alpha, prof)
    return dp, dM


def linear_rhs(xi, soliton, params=None):
    """Linearized vector field at S_omega (``params`` may override m and I)."""
    _require_rest(soliton)
    m = soliton.m if params is None else params.m
    I = soliton.I if params is None else params.I
    g = soliton.grid
    t = source_tables(g, soliton.profile)
    dp, dM = linear_closures(xi, soliton)
    dv, domega = dp / m, dM / I
    ivk = 1j * np.tensordot(dv, g.k, axes=1)
    da = xi.beta.coeffs + ivk * soliton.A.coeffs
    db = -g.k2 * xi.alpha.coeffs + t.current(dv, domega)
    dc = -np.cross(soliton.pi, domega) - np.cross(xi.gamma, soliton.omega)
    return TangentVector(BoxSpectralField(g, da), BoxSpectralField(g, db), dc)


def quadratic_hamiltonian(xi, soliton, params=None):
    """1/2 (||beta||^2 + ||grad alpha||^2) + |dp|^2/(2m) + (nu/2)|dM|^2 + omega.gamma."""
    m = soliton.m if params is None else params.m
    I = soliton.I if params is None else params.I
    dp, dM = linear_closures(xi, soliton)
    return float(0.5 * (norm_l2(xi.beta)**2 + norm_h1dot(xi.alpha)**2) + dp @ dp / (2 * m)
                 + dM @ dM / (2 * I) + soliton.omega @ xi.gamma)


def linear_lyapunov(xi, soliton, params=None):
    """L = quadratic Hamiltonian - (nu_eff/2)|gamma|^2 with nu_eff = 1/I_eff on the grid."""
    nu_eff = 1.0 / soliton.inertia_box
    return quadratic_hamiltonian(xi, soliton, params) - 0.5 * nu_eff * float(xi.gamma @ xi.gamma)


def rk4_step(xi, soliton, dt, params=None):
    k1 = linear_rhs(xi, soliton, params)
    k2 = linear_rhs(xi + k1 * (0.5 * dt), soliton, params)
    k3 = linear_rhs(xi + k2 * (0.5 * dt), soliton, params)
    k4 = linear_rhs(xi + k3 * dt, soliton, params)
    return xi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)


@dataclass
class LinearTrajectoryRecord:
    t: np.ndarray
    L: np.ndarray
    H: np.ndarray
    gamma2: np.ndarray
    norm: np.ndarray
    defects: np.ndarray
    final: TangentVector
    dt: float

    columns = ["t", "L", "H", "gamma2", "norm", "defect1", "defect2", "defect3"]

    def rows(self):
        for i in range(len(self.t)):
            yield [self.t[i], self.L[i], self.H[i], self.gamma2[i], self.norm[i], *self.defects[i]]

    @staticmethod
    def _drift(x):
        return float(np.max(np.abs(x - x[0])) / abs(x[0])) if x[0] != 0 else float(np.max(np.abs(x)))

    @property
    def L_drift(self):
        return self._drift(self.L)

    @property
    def H_drift(self):
        return self._drift(self.H)

    @property
    def gamma2_drift(self):
        return self._drift(self.gamma2)

    @property
    def growth(self):
        """sup_t ||xi(t)||_z / ||xi(0)||_z."""
        return float(np.max(self.norm) / self.norm[0]) if self.norm[0] > 0 else 0.0

    @property
    def max_defect(self):
        return float(np.max(np.abs(self.defects)))


def integrate_linear(xi0, soliton, T, dt, record_every=1, params=None, frame=None, check_cfl=True):
    """RK4 on the linearized flow; tangency is monitored, never re-imposed.

    Defects are (E_n, xi(t)) divided by ||xi(0)||_z.
    """
    if T <= 0 or dt <= 0:
        raise StepSizeError("T and dt must be positive")
    limit = cfl_limit(soliton.grid, 0.0)
    if check_cfl and dt > limit * (1 + 1e-12):
        raise StepSizeError(f"dt = {dt} exceeds the CFL bound {limit:.6g}")
    frame = frame or tangent_frame(soliton)
    n = max(1, int(np.ceil(T / dt - 1e-9)))
    h = T / n
    n0 = xi0.norm_z()
    scale = n0 if n0 > 0 else 1.0
    rec = {k: [] for k in ("t", "L", "H", "g2", "norm", "def")}

    def record(t, xi):
        rec["t"].append(t)
        rec["L"].append(linear_lyapunov(xi, soliton, params))
        rec["H"].append(quadratic_hamiltonian(xi, soliton, params))
        rec["g2"].append(float(xi.gamma @ xi.gamma))
        rec["norm"].append(xi.norm_z())
        rec["def"].append(frame.pairings(xi) / scale)

    xi = xi0
    record(0.0, xi)
    for i in range(1, n + 1):
        new = rk4_step(xi, soliton, h, params)
        if not new.is_finite():
            raise DivergenceError(f"non-finite perturbation at t = {i * h:.6g}", last_state=xi,
                                  time=(i - 1) * h)
        xi = new
        if i % record_every == 0 or i == n:
            record(i * h, xi)
    return LinearTrajectoryRecord(np.array(rec["t"]), np.array(rec["L"]), np.array(rec["H"]),
                                  np.array(rec["g2"]), np.array(rec["norm"]), np.array(rec["def"]),
                                  xi, h)
