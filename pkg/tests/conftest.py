import numpy as np
import pytest

from mlsl.profile import make_bump_profile
from mlsl.spectral import BoxSpectralField, SpectralGrid
from mlsl.state import ReducedState, TangentVector


@pytest.fixture(scope="session")
def profile():
    return make_bump_profile()


@pytest.fixture(scope="session")
def grid16():
    return SpectralGrid(16.0, 16)


@pytest.fixture(scope="session")
def grid32():
    return SpectralGrid(16.0, 32)


@pytest.fixture(scope="session")
def small_grid():
    return SpectralGrid(4.0, 16)


def smooth_field(grid, rng, k0=2.0, window=None, project=True):
    """Random smooth real field, localized when ``window`` is given."""
    noise = rng.standard_normal((3,) + grid.shape)
    c = grid.to_spectral(noise) * np.exp(-grid.k2 / k0**2)
    f = grid.to_physical(c)
    if window is not None:
        f = f * np.exp(-np.sum(grid.y**2, axis=0) / (2 * window**2))
    return BoxSpectralField.from_physical(grid, f, project=project)


def random_state(grid, rng, scale=1.0, **kw):
    return ReducedState(smooth_field(grid, rng, **kw) * scale, smooth_field(grid, rng, **kw) * scale,
                        rng.standard_normal(3))


def random_tangent(grid, rng, eps=1.0, **kw):
    xi = TangentVector(smooth_field(grid, rng, **kw), smooth_field(grid, rng, **kw), rng.standard_normal(3))
    return xi * (eps / xi.norm_z())


def field_at(F, pts):
    """Evaluate a box field at arbitrary points through its Fourier sum."""
    g = F.grid
    kk = g.k.reshape(3, -1)
    c = F.coeffs.reshape(3, -1)
    sel = np.any(c != 0, axis=0)
    kk, c = kk[:, sel], c[:, sel]
    out = np.empty((3, len(pts)))
    for s in range(0, len(pts), 2000):
        ph = np.exp(1j * pts[s:s + 2000] @ kk)
        out[:, s:s + 2000] = (ph @ c.T).real.T
    return out * (2 * np.pi) ** 1.5 / (2 * g.L) ** 3


def ball_rule(R, n_r=40, n_mu=16, n_phi=32):
    """Product cubature on the ball |y| <= R: Gauss-Legendre in r and cos(theta), trapezoid in phi."""
    from scipy.special import roots_legendre

    r, wr = roots_legendre(n_r)
    r, wr = R * (r + 1) / 2, wr * R / 2
    mu, wm = roots_legendre(n_mu)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    Rr, Mu, Ph = np.meshgrid(r, mu, phi, indexing="ij")
    s = np.sqrt(1 - Mu**2)
    pts = np.stack([Rr * s * np.cos(Ph), Rr * s * np.sin(Ph), Rr * Mu], -1).reshape(-1, 3)
    W = (wr[:, None, None] * r[:, None, None] ** 2 * wm[None, :, None]
         * np.full(n_phi, 2 * np.pi / n_phi)[None, None, :]).reshape(-1)
    return pts, W


ACCEPTANCE = {}


def report(n, ok, detail):
    """Record and print the PASS/FAIL line of acceptance criterion n."""
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
