"""Radial charge densities and their radial Fourier transforms.

Transforms use the unitary convention

    rho_hat(k) = (2 pi)^(-3/2) * integral exp(-i k.x) rho(x) dx,

which for a radial density is real and even, rho_hat(k) = rho_hat_1(|k|).
The radial derivative g(r) = d rho_hat_1 / dr gives the gradient
grad rho_hat(k) = khat * g(|k|).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre, spherical_jn

from .errors import InvalidParameterError

FOURIER_NORM = (2.0 * np.pi) ** -1.5


def _gauss_legendre(a, b, n):
    x, w = roots_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@dataclass(frozen=True, eq=False)
class ChargeProfile:
    """Compactly supported radial density rho(x) = rho1(|x|).

    Only the bump family is constructed by this package, but every consumer
    uses the profile through ``density``, ``fourier`` and ``fourier_derivative``
    together with the quadrature tables.
    """

    radius: float
    amplitude: float
    n_radial: int = 200
    n_k: int = 400
    k_max: float = 40.0
    r_nodes: np.ndarray = field(init=False, repr=False)
    r_weights: np.ndarray = field(init=False, repr=False)
    k_nodes: np.ndarray = field(init=False, repr=False)
    k_weights: np.ndarray = field(init=False, repr=False)
    total_charge: float = field(init=False)

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius <= 0:
            raise InvalidParameterError(f"radius must be positive, got {self.radius}")
        if not np.isfinite(self.amplitude) or self.amplitude == 0:
            raise InvalidParameterError("amplitude must be finite and nonzero")
        if self.n_radial < 8 or self.n_k < 8 or self.k_max <= 0:
            raise InvalidParameterError("quadrature tables too small")
        s, ws = _gauss_legendre(0.0, self.radius, self.n_radial)
        k, wk = _gauss_legendre(0.0, self.k_max, self.n_k)
        set_ = object.__setattr__
        set_(self, "r_nodes", s)
        set_(self, "r_weights", ws)
        set_(self, "k_nodes", k)
        set_(self, "k_weights", wk)
        set_(self, "_rho_nodes", self.density(s))
        set_(self, "total_charge", float(4.0 * np.pi * np.sum(ws * s**2 * self._rho_nodes)))
        set_(self, "_fourier_k", self._transform(k, 0))
        set_(self, "_g_k", self._transform(k, 1))

    def density(self, r):
        """rho1(r); zero for r >= radius."""
        r = np.asarray(r, dtype=float)
        x = (r / self.radius) ** 2
        out = np.zeros_like(r)
        inside = x < 1.0
        out[inside] = self.amplitude * np.exp(-1.0 / (1.0 - x[inside]))
        return out

    def _transform(self, r, order):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise InvalidParameterError("wavenumber must be finite and nonnegative")
        flat = r.reshape(-1)
        # Evaluate on unique radii only: lattice |k| tables repeat heavily.
        uniq, inverse = np.unique(flat, return_inverse=True)
        s = self.r_nodes
        w = self.r_weights * self._rho_nodes
        vals = np.empty(uniq.shape)
        for start in range(0, uniq.size, 4096):
            chunk = uniq[start:start + 4096]
            arg = np.outer(chunk, s)
            if order == 0:
                vals[start:start + 4096] = spherical_jn(0, arg) @ (w * s**2)
            else:
                # scipy returns nan for j1 at subnormal arguments; j1(x) = x/3 there
                j1 = np.where(arg < 1e-8, arg / 3.0, spherical_jn(1, arg))
                vals[start:start + 4096] = -(j1 @ (w * s**3))
        vals *= 4.0 * np.pi * FOURIER_NORM
        return vals[inverse].reshape(r.shape)

    def fourier(self, r):
        """rho_hat_1(r) via the spherical Bessel form of the sine integral.

        j0(x) = sin(x)/x is evaluated by scipy, which switches to its series
        for small x, so r = 0 needs no special casing.
        """
        return self._transform(r, 0)

    def fourier_derivative(self, r):
        """g(r) = d rho_hat_1/dr, differentiated under the integral sign."""
        return self._transform(r, 1)

    def radial_integral(self, weight, which="g2"):
        """Integral over r in [0, k_max] of weight(r) times g^2 or rho_hat_1^2."""
        base = self._g_k**2 if which == "g2" else self._fourier_k**2
        return float(np.sum(self.k_weights * base * weight(self.k_nodes)))

    @property
    def g_moment(self):
        """C = integral_0^inf g(r)^2 dr."""
        return self.radial_integral(np.ones_like)

    @property
    def fourier_moment(self):
        """integral_0^inf rho_hat_1(r)^2 dr."""
        return self.radial_integral(np.ones_like, which="rho2")

    @property
    def inertia_shift(self):
        """Field contribution to the moment of inertia at rest, (8 pi/3) C."""
        return 8.0 * np.pi / 3.0 * self.g_moment

    def to_record(self):
        return {
            "radius": self.radius,
            "amplitude": self.amplitude,
            "e": self.total_charge,
            "node_counts": {"radial": self.n_radial, "k": self.n_k},
            "k_max": self.k_max,
        }

    @classmethod
    def from_record(cls, rec):
        counts = rec.get("node_counts", {})
        return cls(
            radius=float(rec["radius"]),
            amplitude=float(rec["amplitude"]),
            n_radial=int(counts.get("radial", 200)),
            n_k=int(counts.get("k", 400)),
            k_max=float(rec.get("k_max", 40.0)),
        )


def make_bump_profile(radius=1.0, amplitude=None, *, charge=None, **quadrature):
    """Mollifier profile amplitude * exp(-1/(1 - r^2/radius^2)).

    Give either ``amplitude`` or ``charge``; with ``charge`` the amplitude is
    chosen so that the total charge equals it.  With neither, charge = 1.
    """
    if amplitude is not None and charge is not None:
        raise InvalidParameterError("give amplitude or charge, not both")
    if amplitude is None:
        charge = 1.0 if charge is None else float(charge)
        if charge == 0:
            raise InvalidParameterError("charge must be nonzero")
        unit = ChargeProfile(radius, 1.0, **quadrature)
        amplitude = charge / unit.total_charge
    return ChargeProfile(float(radius), float(amplitude), **quadrature)


def fourier_radial(profile, r):
    return profile.fourier(r)


def fourier_radial_derivative(profile, r):
    return profile.fourier_derivative(r)
