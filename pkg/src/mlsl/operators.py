"""Stability operators Q_rho, Q_0 and B on a discrete divergence-free basis.

Basis
-----
Half-space Fourier modes 0 < |k| <= K of a SpectralGrid (one of each pair
+-k), two real unit polarizations e_a(k) orthogonal to k, and real/imaginary
parts.  Real coordinates x are L2-orthonormal:

    f_hat(k) = sum_a (x_{a,re} + i x_{a,im}) e_a(k) / sqrt(2 (pi/L)^3),

so that ||f||^2 = |x|^2 for f in the span.  The moment functional
M(alpha) = <y ^ alpha, rho> is C x with C the coordinates of e_n ^ (y rho).

Operators (alpha, beta, gamma blocks)
-------------------------------------
    Q_rho = [[-Laplace + nu C^T C, 0, -nu C^T], [0, 1, 0], [-nu C, 0, delta]]
    Q_0   = diag(-Laplace, 1, delta),        B = (alpha, gamma) block of Q_rho.

In "weighted" coordinates u_alpha = |k| x_alpha, u_beta = x_beta,
u_gamma = sqrt(delta) gamma the reference form Q_0 is the identity and
Q_rho = 1 + W with W of rank <= 6, supported on span{(chat_j, 0, 0), (0, 0, e_j)},
chat = C |k|^-1.  Every generalized eigenvalue different from 1, with or
without the angular-momentum constraints, is then an eigenvalue of a small
matrix on the span of those vectors and the constraint vectors, which is
how large bases are handled.  A dense generalized eigensolve in the
unweighted coordinates is available for small bases.

Consistency of delta
--------------------
The kernel of Q_rho is exactly three-dimensional only if
delta = nu - nu_eff with nu_eff = 1/(I + dI) and dI = |chat_j|^2, the value
of the field inertia on the same basis.  The basis value is used; the
continuum value is kept in the metadata.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import BasisError, InvalidParameterError
from .soliton import build_soliton, soliton_fields
from .spectral import BoxSpectralField, SpectralGrid, source_tables

DENSE_LIMIT = 6000


@dataclass
class OperatorBasis:
    grid: SpectralGrid
    K: float
    index: tuple
    neg_index: tuple
    kvec: np.ndarray
    kmag: np.ndarray
    pol: np.ndarray

    @classmethod
    def create(cls, grid, K):
        if K <= 0:
            raise InvalidParameterError("K must be positive")
        N = grid.N
        m = np.rint(grid.k / grid.dk).astype(int)  # integer multi-indices
        sel = grid.active & (grid.kmag <= K * (1 + 1e-12))
        half = (m[0] > 0) | ((m[0] == 0) & (m[1] > 0)) | ((m[0] == 0) & (m[1] == 0) & (m[2] > 0))
        sel &= half
        idx = np.nonzero(sel)
        mm = m[:, sel].T
        neg = tuple(((-mm) % N).T)
        kvec = grid.k[:, sel].T
        kmag = np.linalg.norm(kvec, axis=1)
        kh = kvec / kmag[:, None]
        ref = np.where(np.abs(kh[:, 2:3]) < 0.9, np.array([[0.0, 0.0, 1.0]]), np.array([[1.0, 0.0, 0.0]]))
        e1 = np.cross(kh, ref)
        e1 /= np.linalg.norm(e1, axis=1)[:, None]
        e2 = np.cross(kh, e1)
        return cls(grid, float(K), idx, neg, kvec, kmag, np.stack([e1, e2], axis=1))

    @property
    def n_modes(self):
        return len(self.kmag)

    @property
    def n_alpha(self):
        return 4 * self.n_modes

    @property
    def k_weight(self):
        """|k| for every real coordinate."""
        return np.repeat(self.kmag, 4)

    def _scale(self):
        return np.sqrt(2.0 * self.grid.weight)

    def coords(self, f):
        """L2-orthonormal coordinates of the projection of f onto the basis."""
        c = f.coeffs[(slice(None),) + self.index]  # (3, n)
        proj = np.einsum("nai,in->na", self.pol, c) * self._scale()
        return np.stack([proj.real, proj.imag], axis=-1).reshape(-1)

    def field(self, x):
        x = np.asarray(x, dtype=float).reshape(self.n_modes, 2, 2)
        c = (x[..., 0] + 1j * x[..., 1]) / self._scale()
        vec = np.einsum("na,nai->in", c, self.pol)
        out = np.zeros((3,) + self.grid.shape, dtype=complex)
        out[(slice(None),) + self.index] = vec
        out[(slice(None),) + self.neg_index] = np.conj(vec)
        return BoxSpectralField(self.grid, out)


def moment_matrix(basis, profile):
    """C with M(alpha) = C x for alpha in the basis span (3 x n_alpha)."""
    t = source_tables(basis.grid, profile)
    y = t.yrho
    rows = []
    for n in range(3):
        e = np.eye(3)[n]
        rep = np.stack([e[1] * y[2] - e[2] * y[1], e[2] * y[0] - e[0] * y[2], e[0] * y[1] - e[1] * y[0]])
        rows.append(basis.coords(BoxSpectralField(basis.grid, rep)))
    return np.array(rows)


def basis_inertia_shift(basis, profile):
    """dI on the basis: <m_n, (-Laplace)^-1 m_n> (the same for n = 1, 2, 3)."""
    chat = moment_matrix(basis, profile) / basis.k_weight
    return float(np.trace(chat @ chat.T) / 3.0)


@dataclass
class OperatorMatrix:
    """Q_rho, Q_0 or B on an OperatorBasis.

    ``weighted`` selects the coordinates (see module docstring).  The matrix
    is stored in structured form; ``dense()`` materializes it.
    """

    kind: str
    basis: OperatorBasis
    nu: float
    delta: float
    C: np.ndarray
    weighted: bool
    meta: dict = field(default_factory=dict)

    @property
    def has_beta(self):
        return self.kind in ("Q", "Q0")

    @property
    def size(self):
        n = self.basis.n_alpha
        return (2 * n if self.has_beta else n) + 3

    def _blocks(self):
        kw = self.basis.k_weight
        if self.weighted:
            C = self.C / kw
            diag_a = np.ones_like(kw)
            g_scale = 1.0 / np.sqrt(self.delta)
            dgg = 1.0
        else:
            C = self.C
            diag_a = kw**2
            g_scale = 1.0
            dgg = self.delta
        return C, diag_a, g_scale, dgg

    def dense(self, limit=DENSE_LIMIT):
        if self.size > limit:
            raise BasisError(f"dense operator of size {self.size} exceeds the limit {limit}")
        C, diag_a, gs, dgg = self._blocks()
        na = self.basis.n_alpha
        M = np.zeros((self.size, self.size))
        a = slice(0, na)
        gam = slice(self.size - 3, self.size)
        M[a, a] = np.diag(diag_a)
        if self.kind != "Q0":
            M[a, a] += self.nu * C.T @ C
            M[a, gam] = -self.nu * gs * C.T
            M[gam, a] = -self.nu * gs * C
        M[gam, gam] = dgg * np.eye(3)
        if self.has_beta:
            b = slice(na, 2 * na)
            M[b, b] = np.eye(na)
        return M

    def matvec(self, y):
        C, diag_a, gs, dgg = self._blocks()
        na = self.basis.n_alpha
        y = np.asarray(y, dtype=float)
        ya, yg = y[:na], y[-3:]
        out = np.empty_like(y)
        out[:na] = diag_a * ya
        out[-3:] = dgg * yg
        if self.kind != "Q0":
            s = C @ ya
            out[:na] += self.nu * C.T @ s - self.nu * gs * C.T @ yg
            out[-3:] += -self.nu * gs * s
        if self.has_beta:
            out[na:2 * na] = y[na:2 * na]
        return out

    def vector(self, alpha=None, beta=None, gamma=None):
        """Stack basis coordinates of (alpha, beta, gamma) in this operator's variables."""
        na = self.basis.n_alpha
        parts = []
        xa = self.basis.coords(alpha) if alpha is not None else np.zeros(na)
        parts.append(xa * self.basis.k_weight if self.weighted else xa)
        if self.has_beta:
            parts.append(self.basis.coords(beta) if beta is not None else np.zeros(na))
        g = np.zeros(3) if gamma is None else np.asarray(gamma, dtype=float)
        parts.append(g * np.sqrt(self.delta) if self.weighted else g)
        return np.concatenate(parts)


def spectral_tail(profile, K):
    """Fraction of ||rho||^2 carried by |k| > K."""
    f = lambda k: float(profile.fourier(k) ** 2 * k**2)
    kmax = max(profile.k_max, 2 * K)
    total = scipy.integrate.quad(f, 0.0, kmax, limit=400)[0]
    return scipy.integrate.quad(f, K, kmax, limit=400)[0] / total if K < kmax else 0.0


def _consistent_parameters(basis, profile, I, nu_eff=None):
    nu = 1.0 / I
    dI_b = basis_inertia_shift(basis, profile)
    nu_eff_b = 1.0 / (I + dI_b)
    meta = {"nu": nu, "nu_eff": nu_eff_b, "delta": nu - nu_eff_b, "dI_basis": dI_b,
            "dI_continuum": profile.inertia_shift, "K": basis.K, "N": basis.grid.N,
            "L": basis.grid.L, "n_modes": basis.n_modes,
            "rho_tail_above_K": spectral_tail(profile, basis.K)}
    if nu_eff is not None:
        meta["nu_eff_supplied"] = nu_eff
    return nu, nu - nu_eff_b, meta


def _assemble(kind, profile, nu, delta, basis, weighted):
    if delta is None or not delta > 0:
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    C = moment_matrix(basis, profile)
    return OperatorMatrix(kind, basis, float(nu), float(delta), C, weighted,
                          {"nu": nu, "delta": delta, "nu_eff": nu - delta, "K": basis.K,
                           "N": basis.grid.N, "L": basis.grid.L})


def assemble_B(profile, nu, delta, basis, weighted=False):
    """B on the (alpha, gamma) coordinates of ``basis``."""
    return _assemble("B", profile, nu, delta, basis, weighted)


def assemble_Q(profile, nu, delta, basis, weighted=False):
    """Q_rho on the (alpha, beta, gamma) coordinates of ``basis``."""
    return _assemble("Q", profile, nu, delta, basis, weighted)


def assemble_Q0(profile, nu, delta, basis, weighted=False):
    return _assemble("Q0", profile, nu, delta, basis, weighted)


def consistent_delta(basis, profile, I=1.0):
    """(nu, delta) with delta from the field inertia summed over ``basis``."""
    nu, delta, _ = _consistent_parameters(basis, profile, I)
    return nu, delta


def kernel_field_hat(profile, nu_eff, gamma, k):
    """nu_eff |k|^-2 gamma ^ (i grad rho_hat)(k) at wavevectors k (n, 3)."""
    k = np.atleast_2d(np.asarray(k, dtype=float))
    r = np.linalg.norm(k, axis=1)
    if np.any(r == 0):
        raise InvalidParameterError("the kernel field is defined for k != 0")
    g = profile.fourier_derivative(r)
    yr = 1j * k / r[:, None] * g[:, None]
    return nu_eff * np.cross(np.asarray(gamma, dtype=float), yr) / (r**2)[:, None]


def kernel_basis(profile, nu_eff, grid):
    """Sampled alpha_gamma for gamma = e_1, e_2, e_3 (zero mode excluded)."""
    out = []
    for j in range(3):
        A, _ = soliton_fields(grid, profile, np.zeros(3), np.eye(3)[j])
        out.append(A * nu_eff)
    return out


def _check_lambda(lam):
    lam = float(lam)
    if lam > 0:
        raise InvalidParameterError("lambda > 0 lies in the continuous spectrum")
    return lam


def _continuum_nu(profile, I):
    nu = 1.0 / I
    return nu, 1.0 / (I + profile.inertia_shift)


def a_minus(lam, profile, I=1.0):
    """nu (nu_eff + lam) (8 pi/3) integral g^2 r^2/(r^2 - lam) dr."""
    lam = _check_lambda(lam)
    nu, nu_eff = _continuum_nu(profile, I)
    integral = profile.radial_integral(lambda r: r**2 / (r**2 - lam)) if lam else profile.g_moment
    return nu * (nu_eff + lam) * 8.0 * np.pi / 3.0 * integral


def a_plus(lam, profile, I=1.0):
    """delta - lam with delta = nu - nu_eff."""
    lam = _check_lambda(lam)
    nu, nu_eff = _continuum_nu(profile, I)
    return (nu - nu_eff) - lam


def matrix_A_lambda(lam, profile, I=1.0):
    """Reduced 1x1 matrix a_plus(lam) - a_minus(lam)."""
    return a_plus(lam, profile, I) - a_minus(lam, profile, I)


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    kernel_dim: int
    gap: float
    kappa: float
    resolutions: list = field(default_factory=list)
    kappas: list = field(default_factory=list)
    drift: float = float("nan")
    kernel_vectors: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def summary(self):
        return {"eigenvalues": [float(e) for e in self.eigenvalues[:10]], "kernel_dim": self.kernel_dim,
                "gap": self.gap, "kappa": self.kappa, "resolutions": list(self.resolutions),
                "kappas": [float(k) for k in self.kappas], "drift": self.drift,
                "meta": {k: (float(v) if isinstance(v, (np.floating, float)) else v)
                         for k, v in self.meta.items()}}


def _kernel_count(eigs):
    gap = float(eigs[3]) if len(eigs) > 3 else float("nan")
    dim = int(np.sum(eigs < gap / 100.0)) if np.isfinite(gap) else 0
    return dim, gap


class _ReducedProblem:
    """Exact restriction of the weighted generalized problem to the span of
    the low-rank directions and the constraint vectors."""

    def __init__(self, op, b_coords=None):
        if not op.weighted or op.kind != "Q":
            raise InvalidParameterError("reduction needs the weighted Q_rho")
        na = op.basis.n_alpha
        chat = op.C / op.basis.k_weight
        Bb = np.zeros((3, na)) if b_coords is None else np.asarray(b_coords)
        gram = scipy.linalg.block_diag(chat @ chat.T, Bb @ Bb.T, np.eye(3))
        sel = [0, 1, 2, 6, 7, 8]
        nu, sd = op.nu, np.sqrt(op.delta)
        S6 = np.block([[nu * np.eye(3), -nu / sd * np.eye(3)], [-nu / sd * np.eye(3), np.zeros((3, 3))]])
        Gs = gram[sel]
        self.A = gram + Gs.T @ S6 @ Gs
        self.gram = gram
        lam, V = np.linalg.eigh(gram)
        keep = lam > 1e-13 * lam.max()
        self.T = V[:, keep] / np.sqrt(lam[keep])  # c = T z, z orthonormal
        self.Az = self.T.T @ self.A @ self.T
        self.Az = 0.5 * (self.Az + self.Az.T)
        phi = np.zeros((3, 9))
        phi[:, 3:6] = np.eye(3)
        phi[:, 6:9] = np.eye(3) / sd
        self.Fz = phi @ gram @ self.T
        self.chat, self.Bb, self.na = chat, Bb, na

    def eigen(self):
        return np.linalg.eigh(self.Az)

    def constrained_eigenvalues(self):
        Z = scipy.linalg.null_space(self.Fz, rcond=1e-12)
        if Z.size == 0:
            return np.array([])
        return np.linalg.eigvalsh(Z.T @ self.Az @ Z)

    def to_full(self, z):
        """Weighted coordinates (alpha block, gamma block) of z."""
        c = self.T @ z
        ua = self.chat.T @ c[0:3]
        ub = self.Bb.T @ c[3:6]
        return ua, ub, c[6:9]


def spectrum(op, count=10, dense=None):
    """Lowest generalized eigenvalues of (op, Q_0) and the corresponding vectors.

    Structured evaluation for weighted Q_rho; dense scipy.linalg.eigh on the
    unweighted pair otherwise (or when dense=True).
    """
    if dense is None:
        dense = not (op.weighted and op.kind == "Q")
    if dense:
        if op.weighted:
            M = op.dense()
            w, V = np.linalg.eigh(M)
        else:
            M = op.dense()
            Q0 = np.diag(np.concatenate([op.basis.k_weight**2] + ([np.ones(op.basis.n_alpha)] if op.has_beta else [])
                                        + [np.full(3, op.delta)]))
            w, V = scipy.linalg.eigh(M, Q0)
        return w[:count], V[:, :count]
    red = _ReducedProblem(op)
    w, Z = red.eigen()
    n_unit = op.size - len(w)
    allw = np.concatenate([w, np.ones(min(n_unit, count))])
    order = np.argsort(allw)[:count]
    return allw[order], None


def _kernel_alignment(op, red, profile, nu_eff):
    """Cosine of the largest principal angle (H1 metric) between the discrete
    kernel and the closed-form kernel fields on the same basis."""
    w, Z = red.eigen()
    ker = Z[:, :3]
    kvecs = np.array([red.to_full(ker[:, j])[0] for j in range(3)]).T
    ref = np.array([op.basis.coords(f) * op.basis.k_weight
                    for f in kernel_basis(profile, nu_eff, op.basis.grid)]).T
    q1, _ = np.linalg.qr(kvecs)
    q2, _ = np.linalg.qr(ref)
    s = np.linalg.svd(q1.T @ q2, compute_uv=False)
    return float(np.min(s))


def operator_for_soliton(soliton, K, weighted=True):
    """Weighted Q_rho for the soliton's profile on the basis |k| <= K of its grid,
    with delta consistent with that basis."""
    basis = OperatorBasis.create(soliton.grid, K)
    nu, delta, meta = _consistent_parameters(basis, soliton.profile, soliton.I)
    op = assemble_Q(soliton.profile, nu, delta, basis, weighted=weighted)
    op.meta.update(meta)
    return op


def _constraint_coords(frame, basis):
    return np.array([basis.coords(E.beta) for E in frame.vectors])


def _kappa(frame, K):
    S = frame.soliton
    op = operator_for_soliton(S, K)
    red = _ReducedProblem(op, _constraint_coords(frame, op.basis))
    w = red.constrained_eigenvalues()
    kappa = float(min(1.0, w.min())) if w.size else 1.0
    return kappa, op, red


def coercivity_constant(frame, basis=4.0, resolutions=(24, 32)):
    """kappa = smallest generalized eigenvalue of (Q_rho, Q_0) on the tangent space.

    ``basis`` is a cutoff K or an OperatorBasis (its K is used).  The frame's
    soliton fixes omega, profile, m, I and L; ``resolutions`` lists grid
    sizes N at which kappa is recomputed for the drift estimate.
    """
    from .linearized import tangent_frame

    K = basis.K if isinstance(basis, OperatorBasis) else float(basis)
    S = frame.soliton
    kappa, op, red = _kappa(frame, K)
    w, _ = red.eigen()
    eigs = np.sort(np.concatenate([w, np.ones(10)]))[:10]
    dim, gap = _kernel_count(eigs)
    nu_eff = op.meta["nu_eff"]
    align = _kernel_alignment(op, red, S.profile, nu_eff)
    kappas, res = [], []
    for N in resolutions or ():
        if N == S.grid.N:
            kappas.append(kappa)
        else:
            g = SpectralGrid(S.grid.L, N)
            S2 = build_soliton(np.zeros(3), S.omega, S.profile, g, S.m, S.I)
            kappas.append(_kappa(tangent_frame(S2), K)[0])
        res.append(int(N))
    drift = float(abs(kappas[0] - kappas[-1]) / abs(kappas[-1])) if len(kappas) > 1 else float("nan")
    meta = dict(op.meta)
    meta["kernel_alignment"] = align
    meta["omega"] = [float(x) for x in S.omega]
    return SpectralReport(eigs, dim, gap, kappa, res, kappas, drift, meta=meta)


def dense_coercivity(frame, K):
    """kappa from a dense generalized eigensolve in unweighted coordinates."""
    S = frame.soliton
    op = operator_for_soliton(S, K, weighted=False)
    na = op.basis.n_alpha
    Q = op.dense()
    Q0 = np.diag(np.concatenate([op.basis.k_weight**2, np.ones(na), np.full(3, op.delta)]))
    F = np.zeros((3, op.size))
    F[:, na:2 * na] = _constraint_coords(frame, op.basis)
    F[:, -3:] = np.eye(3)
    Z = scipy.linalg.null_space(F)
    a = Z.T @ Q @ Z
    b = Z.T @ Q0 @ Z
    a, b = 0.5 * (a + a.T), 0.5 * (b + b.T)
    if np.linalg.eigvalsh(b).min() <= 0:
        raise BasisError("Q_0 is not positive on the projected subspace")
    w = scipy.linalg.eigh(a, b, eigvals_only=True)
    return float(min(1.0, w.min())), w
