"""Pseudospectral representation of real vector fields on a periodic box.

Storage convention
------------------
The box is [-L, L)^3 sampled at y_j = -L + j h, h = 2L/N.  Coefficients are
samples of the continuum transform

    c(k) = (2 pi)^(-3/2) h^3 sum_j f(y_j) exp(-i k.y_j),

so that c approximates (2 pi)^(-3/2) * integral f(y) exp(-i k.y) dy and the
L2 inner product is (pi/L)^3 * sum Re(c_f conj(c_g)).  Coefficient arrays
are indexed in numpy FFT order along each axis.

Discrete field space
--------------------
Dynamical fields (A, Pi, alpha, beta) live on the "active" modes: k != 0 and
no component at the Nyquist index N/2.  The zero mode is outside the
homogeneous H1 completion; the Nyquist planes have no consistent real
derivative.  All operators below preserve this space.
"""

import functools
import json
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainTruncationWarning, GridMismatchError, InvalidParameterError
from .profile import FOURIER_NORM

SNAPSHOT_MAGIC = b"MLSF"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class SpectralGrid:
    L: float
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4 or self.N % 2:
            raise InvalidParameterError(f"N must be an even integer >= 4, got {self.N}")
        if not np.isfinite(self.L) or self.L <= 0:
            raise InvalidParameterError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self):
        return 2.0 * self.L / self.N

    @property
    def dk(self):
        return np.pi / self.L

    @property
    def weight(self):
        """Parseval weight (pi/L)^3."""
        return self.dk**3

    @property
    def shape(self):
        return (self.N, self.N, self.N)

    @functools.cached_property
    def k1d(self):
        k = 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        k[self.N // 2] = abs(k[self.N // 2])
        return k

    @functools.cached_property
    def k(self):
        return np.stack(np.meshgrid(self.k1d, self.k1d, self.k1d, indexing="ij"))

    @functools.cached_property
    def k2(self):
        return np.sum(self.k**2, axis=0)

    @functools.cached_property
    def kmag(self):
        return np.sqrt(self.k2)

    @functools.cached_property
    def active(self):
        idx = np.arange(self.N) != self.N // 2
        m = idx[:, None, None] & idx[None, :, None] & idx[None, None, :]
        m[0, 0, 0] = False
        return m

    @functools.cached_property
    def inv_k2(self):
        out = np.zeros(self.shape)
        out[self.active] = 1.0 / self.k2[self.active]
        return out

    @functools.cached_property
    def khat(self):
        out = np.zeros((3,) + self.shape)
        km = self.kmag
        nz = km > 0
        out[:, nz] = self.k[:, nz] / km[nz]
        return out

    @functools.cached_property
    def y1d(self):
        return -self.L + self.h * np.arange(self.N)

    @functools.cached_property
    def y(self):
        return np.stack(np.meshgrid(self.y1d, self.y1d, self.y1d, indexing="ij"))

    def to_spectral(self, f):
        """Physical samples (..., N, N, N) in centered order -> coefficients."""
        axes = (-3, -2, -1)
        c = np.fft.fftn(np.fft.ifftshift(f, axes=axes), axes=axes)
        return c * (FOURIER_NORM * self.h**3)

    def to_physical(self, c):
        """Inverse of ``to_spectral``; returns the real part."""
        axes = (-3, -2, -1)
        f = np.fft.ifftn(c, axes=axes) / (FOURIER_NORM * self.h**3)
        return np.fft.fftshift(f.real, axes=axes)

    def phase(self, q):
        """exp(-i k.q): coefficient factor translating a field by +q."""
        q = np.asarray(q, dtype=float)
        return np.exp(-1j * np.tensordot(q, self.k, axes=1))


class BoxSpectralField:
    """Real vector field stored as Fourier coefficients, shape (3, N, N, N)."""

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (3,) + grid.shape:
            raise InvalidParameterError(f"coefficient shape {coeffs.shape} does not match grid")
        self.grid = grid
        self.coeffs = coeffs

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((3,) + grid.shape, dtype=complex))

    @classmethod
    def from_physical(cls, grid, values, project=True):
        c = grid.to_spectral(np.asarray(values, dtype=float))
        field = cls(grid, c)
        return leray_project(field) if project else field.restrict()

    def to_physical(self):
        return self.grid.to_physical(self.coeffs)

    def restrict(self):
        """Zero the inactive modes (k = 0 and Nyquist planes)."""
        return BoxSpectralField(self.grid, self.coeffs * self.grid.active)

    def divergence(self):
        return 1j * np.sum(self.grid.k * self.coeffs, axis=0)

    def max_divergence(self):
        return float(np.max(np.abs(self.divergence())))

    def reality_defect(self):
        """max |c(k) - conj(c(-k))| over active modes."""
        c = self.coeffs * self.grid.active
        flipped = np.conj(np.roll(c[:, ::-1, ::-1, ::-1], 1, axis=(1, 2, 3)))
        return float(np.max(np.abs(c - flipped)))

    def copy(self):
        return BoxSpectralField(self.grid, self.coeffs.copy())

    def _check(self, other):
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return BoxSpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return BoxSpectralField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self):
        return BoxSpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        return BoxSpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return BoxSpectralField(self.grid, self.coeffs / scalar)

    def __repr__(self):
        return f"BoxSpectralField(N={self.grid.N}, L={self.grid.L}, l2={norm_l2(self):.3e})"


def _same_grid(f, g):
    if f.grid != g.grid:
        raise GridMismatchError("fields live on different grids")


def leray_project(f, grid=None):
    """Divergence-free part of f, restricted to the active modes.

    ``f`` is a BoxSpectralField or a real physical array (3, N, N, N), in
    which case ``grid`` is required.
    """
    if not isinstance(f, BoxSpectralField):
        if grid is None:
            raise InvalidParameterError("grid is required for physical-space input")
        f = BoxSpectralField(grid, grid.to_spectral(np.asarray(f, dtype=float)))
    g = f.grid
    c = f.coeffs
    kc = np.sum(g.k * c, axis=0)
    out = (c - g.k * (kc * g.inv_k2)) * g.active
    return BoxSpectralField(g, out)


def curl(f):
    k = f.grid.k
    c = f.coeffs
    return BoxSpectralField(f.grid, 1j * np.stack([
        k[1] * c[2] - k[2] * c[1],
        k[2] * c[0] - k[0] * c[2],
        k[0] * c[1] - k[1] * c[0],
    ]))


def laplacian(f):
    return BoxSpectralField(f.grid, -f.grid.k2 * f.coeffs)


def advect(v, f):
    """(v . grad) f for a constant vector v."""
    vk = np.tensordot(np.asarray(v, dtype=float), f.grid.k, axes=1)
    return BoxSpectralField(f.grid, 1j * vk * f.coeffs)


def gradient(grid, phi):
    """Gradient of a scalar given by coefficients phi (N, N, N)."""
    return BoxSpectralField(grid, 1j * grid.k * phi)


def _weighted_inner(f, g, weight=None):
    _same_grid(f, g)
    a, b = f.coeffs, g.coeffs
    if weight is None:
        s = np.vdot(a.ravel(), b.ravel()).real
    else:
        s = np.sum(weight * (a.real * b.real + a.imag * b.imag))
    return float(s * f.grid.weight)


def inner(f, g):
    """L2 inner product."""
    return _weighted_inner(f, g)


def norm_l2(f):
    return float(np.sqrt(max(inner(f, f), 0.0)))


def norm_h1dot(f):
    return float(np.sqrt(max(_weighted_inner(f, f, f.grid.k2), 0.0)))


def norm_hminus1(f):
    return float(np.sqrt(max(_weighted_inner(f, f, 1.0 / (1.0 + f.grid.k2)), 0.0)))


def momentum_coupling(Pi, A):
    """Vector with components <Pi, d_n A>."""
    _same_grid(Pi, A)
    g = A.grid
    # <Pi, i k_n A> = sum Re(Pi conj(i k_n A)) = sum k_n Im(Pi conj(A)) summed over components
    cross = np.sum((Pi.coeffs * np.conj(A.coeffs)).imag, axis=0)
    return np.array([np.sum(g.k[n] * cross) for n in range(3)]) * g.weight


class SourceTables:
    """Grid samples of rho_hat and of the transform of y rho(y).

    ``rho`` and ``yrho`` are restricted to the active modes; ``rho_full``
    keeps every mode (used for the Gauss constraint).
    """

    def __init__(self, grid, profile):
        self.grid = grid
        self.profile = profile
        self.rho_full = profile.fourier(grid.kmag)
        self.rho = self.rho_full * grid.active
        g = profile.fourier_derivative(grid.kmag)
        # FT[y rho](k) = i grad_k rho_hat(k) = i khat g(|k|)
        self.yrho = 1j * grid.khat * g * grid.active

    def current(self, v, omega):
        """Coefficients of the projected current P[(v + omega ^ y) rho]."""
        g = self.grid
        v = np.asarray(v, dtype=float)
        omega = np.asarray(omega, dtype=float)
        vk = np.tensordot(v, g.k, axes=1)
        out = (v[:, None, None, None] - g.k * (vk * g.inv_k2)) * self.rho
        if np.any(omega):
            y = self.yrho
            out = out + np.stack([
                omega[1] * y[2] - omega[2] * y[1],
                omega[2] * y[0] - omega[0] * y[2],
                omega[0] * y[1] - omega[1] * y[0],
            ])
        return out


@functools.lru_cache(maxsize=16)
def source_tables(grid, profile):
    return SourceTables(grid, profile)


def _check_support(grid, profile, q):
    q = np.asarray(q, dtype=float)
    if q.shape != (3,) or np.max(np.abs(q)) + profile.radius >= grid.L:
        raise InvalidParameterError("charge support escapes the box")
    return q


def charge_coupling(A, profile, q=(0.0, 0.0, 0.0)):
    """Vector <A(q + y), rho(y)> (one component per field component)."""
    q = _check_support(A.grid, profile, q)
    t = source_tables(A.grid, profile)
    src = t.rho if not np.any(q) else t.rho * A.grid.phase(q)
    prod = A.coeffs * np.conj(src)
    return prod.real.reshape(3, -1).sum(axis=1) * A.grid.weight


def moment_coupling(alpha, profile):
    """<y ^ alpha(y), rho(y)> = integral (y rho) ^ alpha, evaluated spectrally."""
    _check_support(alpha.grid, profile, (0.0, 0.0, 0.0))
    t = source_tables(alpha.grid, profile)
    a = np.conj(alpha.coeffs)
    y = t.yrho
    w = alpha.grid.weight
    return np.array([
        np.sum((y[1] * a[2] - y[2] * a[1]).real),
        np.sum((y[2] * a[0] - y[0] * a[2]).real),
        np.sum((y[0] * a[1] - y[1] * a[0]).real),
    ]) * w


@dataclass
class AngularCoupling:
    """Physical-space angular pairings of two fields.

    ``orbital[n]`` = <(y ^ grad)_n A, Pi>, ``spin[n]`` = integral (A ^ Pi)_n.
    ``tail_fraction`` is the share of the integrand magnitude in the outer 10%
    shell of the box; ``truncated`` flags it above the threshold.
    """

    orbital: np.ndarray
    spin: np.ndarray
    tail_fraction: float
    truncated: bool

    def __getitem__(self, n):
        return self.orbital[n]


def _shell_mask(grid, width=0.1):
    y = np.abs(grid.y)
    return np.max(y, axis=0) > (1.0 - width) * grid.L


def angular_coupling(A, Pi, n=None, tail_threshold=1e-3):
    """<(y ^ grad)_n A, Pi> with y the centered sawtooth coordinate.

    Returns an AngularCoupling holding all three components; when ``n`` is an
    axis index the scalar for that axis is returned instead.  Fields that
    carry noticeable weight in the outer shell trigger a warning.
    """
    _same_grid(A, Pi)
    g = A.grid
    dA = g.to_physical(1j * g.k[:, None] * A.coeffs[None])  # dA[j, c] = d_j A_c
    P = Pi.to_physical()
    Ap = A.to_physical()
    d = np.sum(dA * P[None], axis=1)  # d_j = sum_c (d_j A_c) Pi_c
    y = g.y
    h3 = g.h**3
    orbital = np.array([
        np.sum(y[1] * d[2] - y[2] * d[1]),
        np.sum(y[2] * d[0] - y[0] * d[2]),
        np.sum(y[0] * d[1] - y[1] * d[0]),
    ]) * h3
    spin = np.array([
        np.sum(Ap[1] * P[2] - Ap[2] * P[1]),
        np.sum(Ap[2] * P[0] - Ap[0] * P[2]),
        np.sum(Ap[0] * P[1] - Ap[1] * P[0]),
    ]) * h3
    mag = np.linalg.norm(P, axis=0) * (np.linalg.norm(Ap, axis=0)
                                       + np.linalg.norm(y, axis=0) * np.linalg.norm(dA, axis=(0, 1)))
    total = float(np.sum(mag))
    tail = float(np.sum(mag[_shell_mask(g)]) / total) if total > 0 else 0.0
    truncated = tail > tail_threshold
    if truncated:
        warnings.warn(f"angular coupling: {tail:.2e} of the integrand lies in the outer shell",
                      DomainTruncationWarning, stacklevel=2)
    res = AngularCoupling(orbital, spin, tail, truncated)
    return res if n is None else float(res.orbital[n])


@dataclass
class ReconstructedFields:
    """Lab-frame E, B (spectral) and Coulomb potential coefficients Phi."""

    E: BoxSpectralField
    B: BoxSpectralField
    Phi: np.ndarray
    q: np.ndarray
    profile: object

    def div_B_residual(self):
        return self.B.max_divergence()

    def gauss_residual(self):
        """Relative L2 residual of div E - rho(. - q) over the active modes.

        The zero mode is excluded: on a periodic box the net charge is
        compensated by a uniform background.
        """
        g = self.E.grid
        t = source_tables(g, self.profile)
        res = (self.E.divergence() - t.rho_full * g.phase(self.q)) * g.active
        ref = np.sqrt(np.sum(np.abs(t.rho)**2))
        return float(np.sqrt(np.sum(np.abs(res)**2)) / ref)


def reconstruct_EB(A, Pi, q, profile):
    """E = -Pi - grad Phi and B = curl A in the lab frame at particle position q.

    Phi solves -Laplace Phi = rho(. - q), i.e. Phi_hat = rho_hat exp(-i k.q)/k^2,
    so that div E = rho(. - q).
    """
    _same_grid(A, Pi)
    g = A.grid
    q = _check_support(g, profile, q)
    t = source_tables(g, profile)
    ph = g.phase(q)
    A_lab = BoxSpectralField(g, A.coeffs * ph)
    Pi_lab = BoxSpectralField(g, Pi.coeffs * ph)
    Phi = t.rho_full * ph * g.inv_k2
    E = BoxSpectralField(g, -Pi_lab.coeffs - 1j * g.k * Phi * g.active)
    B = curl(A_lab)
    return ReconstructedFields(E, B, Phi, q, profile)


def _atomic_write(path, data, mode="wb"):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_fields(path, fields, meta=None):
    """Write fields to a flat binary snapshot plus a JSON sidecar.

    Layout (little endian): magic b"MLSF", uint32 version, uint32 N,
    float64 L, uint32 field count, then complex128 coefficients of each field
    in C order over (component, kx, ky, kz) with FFT index order per axis.
    Returns the sidecar path.
    """
    fields = list(fields)
    if not fields:
        raise InvalidParameterError("no fields to save")
    grid = fields[0].grid
    for f in fields:
        _same_grid(fields[0], f)
    header = SNAPSHOT_MAGIC + struct.pack("<IIdI", SNAPSHOT_VERSION, grid.N, grid.L, len(fields))
    body = b"".join(np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes() for f in fields)
    _atomic_write(path, header + body)
    sidecar = {
        "format": "MLSF",
        "version": SNAPSHOT_VERSION,
        "N": grid.N,
        "L": grid.L,
        "field_count": len(fields),
        "dtype": "complex128-le",
        "index_order": ["field", "component", "kx", "ky", "kz"],
        "k_order": "numpy fftfreq",
        "meta": meta or {},
    }
    side = str(path) + ".json"
    _atomic_write(side, json.dumps(sidecar, indent=2, sort_keys=True).encode())
    return side


def load_fields(path):
    """Inverse of ``save_fields``: returns (grid, [fields])."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != SNAPSHOT_MAGIC:
        raise InvalidParameterError("not a field snapshot")
    version, N, L, count = struct.unpack("<IIdI", raw[4:24])
    if version != SNAPSHOT_VERSION:
        raise InvalidParameterError(f"unsupported snapshot version {version}")
    grid = SpectralGrid(L, N)
    data = np.frombuffer(raw[24:], dtype="<c16")
    size = 3 * N**3
    if data.size != count * size:
        raise InvalidParameterError("snapshot size does not match header")
    fields = [BoxSpectralField(grid, data[i * size:(i + 1) * size].reshape((3,) + grid.shape).copy())
              for i in range(count)]
    return grid, fields
