"""Periodic Coulomb solver.

``apply_Q`` inverts ``-Laplacian`` on mean-zero spectral data. The lattice
Green function

    G(x) = (1/|T^3|) sum_{k != 0} exp(-i k.x) / k^2,

i.e. the potential of a unit point charge sitting in a uniform neutralizing
background (-Lap G = delta - 1/|T^3|, mean zero), is evaluated by Ewald
splitting:

    G(x) = sum_n erfc(sqrt(eta) r_n) / (4 pi r_n)            r_n = |x + n A|
         + (1/|T^3|) sum_{k != 0} exp(-k^2 / 4 eta) cos(k.x) / k^2
         - 1 / (4 eta |T^3|).

The constant removes the mean of the screened real-space part, so the result
does not depend on eta. ``regularized_D`` returns G(x) - 1/(4 pi |x|) with the
nearest image's ``erfc`` term replaced analytically by ``-erf``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import erf, erfc

from . import _fft
from .errors import InvalidInput, NonNeutralSource, SingularPoint
from .lattice import DualLattice, KGrid, Lattice

NEUTRALITY_TOL = 1e-10
SINGULAR_TOL = 1e-10
FOUR_PI = 4.0 * np.pi
# cap on points x (images + k-vectors) per vectorized batch, bounds peak memory
BATCH_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class EwaldParams:
    eta: float
    rcut: float
    kcut: float

    def __post_init__(self):
        if not (self.eta > 0 and self.rcut > 0 and self.kcut > 0):
            raise InvalidInput(f"Ewald parameters must be positive: {self}")


def ewald_cutoffs(eta, tail=1e-16):
    """Cutoffs with erfc(sqrt(eta) rcut) and exp(-kcut^2/4eta) both below ``tail``."""
    s = brentq(lambda z: erfc(z) - tail, 0.1, 30.0)
    rcut = s / np.sqrt(eta)
    kcut = 2.0 * np.sqrt(eta * np.log(1.0 / tail))
    return rcut, kcut


def auto_ewald(lat: Lattice, eta=None, tail=1e-16) -> EwaldParams:
    """Pick eta = pi / |T^3|^(2/3) (balanced real/reciprocal work) unless given."""
    if eta is None:
        eta = np.pi / lat.volume ** (2.0 / 3.0)
    rcut, kcut = ewald_cutoffs(eta, tail)
    return EwaldParams(float(eta), float(rcut), float(kcut))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients ``coeffs`` (FFT storage order) on ``grid``."""

    coeffs: np.ndarray
    grid: KGrid

    @property
    def mean(self):
        return self.coeffs.flat[0]

    def is_mean_zero(self):
        return self.coeffs.flat[0] == 0

    def is_real(self, tol=1e-12):
        """Check c(-k) = conj(c(k)) on every pair representable on the grid."""
        c = self.coeffs
        flipped = c
        paired = np.ones(c.shape, dtype=bool)
        for ax, n in enumerate(c.shape):
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
            if n % 2 == 0:
                # the -n/2 plane has no +n/2 partner
                sl = [slice(None)] * 3
                sl[ax] = n // 2
                paired[tuple(sl)] = False
        scale = max(np.abs(c).max(initial=0.0), 1e-300)
        return bool(np.all(np.abs(c - np.conj(flipped))[paired] <= tol * scale))

    def samples(self):
        return _fft.to_samples(self.coeffs)

    def laplacian(self):
        return SpectralField(-self.grid.k2 * self.coeffs, self.grid)

    def evaluate(self, frac):
        return eval_potential_at(self, frac)

    def gradient_at(self, frac):
        return eval_gradient_at(self, frac)


def apply_Q(rho: SpectralField) -> SpectralField:
    """phi(k) = rho(k) / k^2 for k != 0 and phi(0) = 0."""
    c = rho.coeffs
    big = np.abs(c).max(initial=0.0)
    if abs(c.flat[0]) > NEUTRALITY_TOL * big:
        raise NonNeutralSource(
            f"source has nonzero mean coefficient {c.flat[0]:.3e}; total charge must vanish"
        )
    return SpectralField(c * rho.grid.inv_k2, rho.grid)


def _phases(grid, frac):
    frac = np.atleast_2d(np.asarray(frac, dtype=float))
    # exp(-i k.x) with k.x = 2 pi m.f
    mf = np.tensordot(frac, grid.m, axes=([1], [3]))
    return np.exp(-2j * np.pi * mf)


def eval_potential_at(phi: SpectralField, frac):
    """Exact trigonometric evaluation sum_k c(k) exp(-i k.x) at fractional points."""
    frac = np.asarray(frac, dtype=float)
    vals = np.einsum("pabc,abc->p", _phases(phi.grid, frac), phi.coeffs)
    return vals[0] if frac.ndim == 1 else vals


def eval_gradient_at(phi: SpectralField, frac):
    """Cartesian gradient sum_k (-i k) c(k) exp(-i k.x) at fractional points."""
    frac = np.asarray(frac, dtype=float)
    ph = _phases(phi.grid, frac) * phi.coeffs
    vals = -1j * np.einsum("pabc,abci->pi", ph, phi.grid.k)
    return vals[0] if frac.ndim == 1 else vals


class _EwaldTables:
    """Image shifts and half-space reciprocal vectors for one (lattice, params)."""

    def __init__(self, lat, dual, ew):
        self.lat = lat
        self.ew = ew
        self.sqrt_eta = np.sqrt(ew.eta)
        A, B = lat.vectors, dual.vectors
        bnorm = np.linalg.norm(B, axis=1)
        anorm = np.linalg.norm(A, axis=1)
        half_diag = 0.5 * anorm.sum()
        reach = np.ceil((ew.rcut + half_diag) * bnorm / (2 * np.pi)).astype(int)
        n = np.stack(
            np.meshgrid(*[np.arange(-r, r + 1) for r in reach], indexing="ij"), axis=-1
        ).reshape(-1, 3)
        self.images = n @ A

        kreach = np.ceil(ew.kcut * anorm / (2 * np.pi)).astype(int)
        m = np.stack(
            np.meshgrid(*[np.arange(-r, r + 1) for r in kreach], indexing="ij"), axis=-1
        ).reshape(-1, 3)
        # keep one of each +-k pair; cos() makes the pair sum real
        first = np.array([next((v for v in row if v != 0), 0) for row in m])
        m = m[first > 0]
        k = m @ B
        k2 = np.einsum("ij,ij->i", k, k)
        keep = k2 <= ew.kcut**2
        self.k = k[keep]
        self.kweight = 2.0 * np.exp(-k2[keep] / (4 * ew.eta)) / k2[keep] / lat.volume
        self.const = -1.0 / (4 * ew.eta * lat.volume)

    def _rel(self, x):
        frac = np.atleast_2d(self.lat.to_fractional(x))
        frac = frac - np.rint(frac)
        r = frac @ self.lat.vectors
        return r[:, None, :] + self.images[None, :, :]

    def value(self, x, regularize=False):
        rv = self._rel(x)
        r = np.linalg.norm(rv, axis=-1)
        nearest = np.argmin(r, axis=1)
        rows = np.arange(len(r))
        rn = r[rows, nearest].copy()
        if not regularize and np.any(rn < SINGULAR_TOL * self.lat.scale):
            raise SingularPoint("G is singular at lattice points")
        r[rows, nearest] = np.inf
        real = (erfc(self.sqrt_eta * r) / r).sum(axis=1) / FOUR_PI
        if regularize:
            with np.errstate(invalid="ignore", divide="ignore"):
                near = -erf(self.sqrt_eta * rn) / rn / FOUR_PI
            near = np.where(rn > 0, near, -self.sqrt_eta / (2 * np.pi**1.5))
        else:
            near = erfc(self.sqrt_eta * rn) / rn / FOUR_PI
        x2 = np.atleast_2d(x)
        recip = np.cos(x2 @ self.k.T) @ self.kweight
        return real + near + recip + self.const

    def gradient(self, x):
        rv = self._rel(x)
        r = np.linalg.norm(rv, axis=-1)
        if np.any(r.min(axis=1) < SINGULAR_TOL * self.lat.scale):
            raise SingularPoint("grad G is singular at lattice points")
        a = self.sqrt_eta
        # d/dr [erfc(a r)/(4 pi r)] divided by r
        radial = -(erfc(a * r) / r**2 + 2 * a / np.sqrt(np.pi) * np.exp(-(a * r) ** 2) / r)
        real = np.einsum("pi,pij->pj", radial / r, rv) / FOUR_PI
        x2 = np.atleast_2d(x)
        recip = -(np.sin(x2 @ self.k.T) * self.kweight) @ self.k
        return real + recip


@lru_cache(maxsize=32)
def _tables(lat, dual, ew):
    return _EwaldTables(lat, dual, ew)


def _call(lat, dual, ew, x, fn, **kw):
    if dual is None:
        dual = lat.dual
    if ew is None:
        ew = auto_ewald(lat)
    x = np.asarray(x, dtype=float)
    tab = _tables(lat, dual, ew)
    pts = np.atleast_2d(x)
    step = max(1, BATCH_ELEMENTS // (len(tab.images) + len(tab.k)))
    f = getattr(tab, fn)
    out = np.concatenate([f(pts[i:i + step], **kw) for i in range(0, len(pts), step)])
    return out[0] if x.ndim == 1 else out


def green_G(lat: Lattice, dual: DualLattice, ew: EwaldParams, x):
    """G at Cartesian point(s) ``x`` (shape (3,) or (P, 3))."""
    return _call(lat, dual, ew, x, "value")


def regularized_D(lat: Lattice, dual: DualLattice, ew: EwaldParams, x):
    """D(x) = G(x) - 1/(4 pi |x|), |x| measured to the nearest lattice point.

    At x = 0 this is the finite self-potential constant of the lattice.
    """
    return _call(lat, dual, ew, x, "value", regularize=True)


def grad_G(lat: Lattice, dual: DualLattice, ew: EwaldParams, x):
    return _call(lat, dual, ew, x, "gradient")
