"""Phase-space containers shared by the dynamics and stability modules."""

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError, InvalidParameterError
from .spectral import BoxSpectralField, inner, norm_h1dot, norm_hminus1, norm_l2


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Mass m, moment of inertia I, conserved total momentum P and profile."""

    profile: object
    m: float = 1.0
    I: float = 1.0
    P: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (self.m > 0 and np.isfinite(self.m)):
            raise InvalidParameterError(f"mass must be positive, got {self.m}")
        if not (self.I > 0 and np.isfinite(self.I)):
            raise InvalidParameterError(f"moment of inertia must be positive, got {self.I}")
        P = np.asarray(self.P, dtype=float).reshape(3)
        if not np.all(np.isfinite(P)):
            raise InvalidParameterError("P must be finite")
        object.__setattr__(self, "P", P)

    def with_momentum(self, P):
        return ModelParams(self.profile, self.m, self.I, np.asarray(P, dtype=float))

    @property
    def nu(self):
        return 1.0 / self.I


class _Triple:
    """Two fields on one grid plus a 3-vector, with vector-space arithmetic."""

    __slots__ = ("f", "g", "x")

    def __init__(self, f, g, x):
        if f.grid != g.grid:
            raise GridMismatchError("fields live on different grids")
        self.f = f
        self.g = g
        self.x = np.asarray(x, dtype=float).reshape(3)

    @property
    def grid(self):
        return self.f.grid

    @classmethod
    def zeros(cls, grid):
        return cls(BoxSpectralField.zeros(grid), BoxSpectralField.zeros(grid), np.zeros(3))

    def _new(self, f, g, x):
        return type(self)(f, g, x)

    def __add__(self, o):
        return self._new(self.f + o.f, self.g + o.g, self.x + o.x)

    def __sub__(self, o):
        return self._new(self.f - o.f, self.g - o.g, self.x - o.x)

    def __mul__(self, s):
        return self._new(self.f * s, self.g * s, self.x * s)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __truediv__(self, s):
        return self * (1.0 / s)

    def copy(self):
        return self._new(self.f.copy(), self.g.copy(), self.x.copy())

    def is_finite(self):
        return bool(np.all(np.isfinite(self.f.coeffs)) and np.all(np.isfinite(self.g.coeffs))
                    and np.all(np.isfinite(self.x)))

    def norm_z(self):
        """(||grad f||^2 + ||g||^2 + |x|^2)^(1/2): energy norm of the phase space."""
        return float(np.sqrt(norm_h1dot(self.f)**2 + norm_l2(self.g)**2 + self.x @ self.x))

    def norm_v(self):
        """(||f||^2 + ||g||_{H^-1}^2 + |x|^2)^(1/2): norm for time derivatives."""
        return float(np.sqrt(norm_l2(self.f)**2 + norm_hminus1(self.g)**2 + self.x @ self.x))

    def inner_z0(self, o):
        """L2 (+) L2 (+) R^3 inner product."""
        return inner(self.f, o.f) + inner(self.g, o.g) + float(self.x @ o.x)


class ReducedState(_Triple):
    """Comoving-frame phase point Z = (A, Pi, pi)."""

    __slots__ = ()

    @property
    def A(self):
        return self.f

    @property
    def Pi(self):
        return self.g

    @property
    def pi(self):
        return self.x

    def __repr__(self):
        return f"ReducedState(N={self.grid.N}, |Z|={self.norm_z():.4e}, pi={self.pi})"


class TangentVector(_Triple):
    """Perturbation xi = (alpha, beta, gamma)."""

    __slots__ = ()

    @property
    def alpha(self):
        return self.f

    @property
    def beta(self):
        return self.g

    @property
    def gamma(self):
        return self.x

    def __repr__(self):
        return f"TangentVector(N={self.grid.N}, |xi|={self.norm_z():.4e}, gamma={self.gamma})"
