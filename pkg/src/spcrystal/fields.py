"""Wave function, ion configuration and charge densities."""

from dataclasses import dataclass

import numpy as np

from . import _fft
from .errors import InvalidInput, IonsCoincide, ZeroField
from .lattice import KGrid, Lattice, min_pair_distance, wrap_fractional

ZERO_FIELD_TOL = 1e-14
COINCIDE_TOL = 1e-8

# CODATA 2018, SI.
CODATA = {"hbar": 1.054571817e-34, "m": 9.1093837015e-31, "e": -1.602176634e-19}


@dataclass(frozen=True)
class PhysParams:
    hbar: float = 1.0
    m: float = 1.0
    e: float = -1.0

    def __post_init__(self):
        if not self.hbar > 0:
            raise InvalidInput(f"hbar must be positive, got {self.hbar}")
        if not self.m > 0:
            raise InvalidInput(f"electron mass must be positive, got {self.m}")
        if not self.e < 0:
            raise InvalidInput(f"electron charge must be negative, got {self.e}")

    @classmethod
    def codata(cls):
        return cls(**CODATA)

    @property
    def kinetic(self):
        """hbar^2 / 2m."""
        return self.hbar**2 / (2.0 * self.m)


@dataclass(frozen=True, eq=False)
class IonSet:
    """Point ions: fractional positions (N, 3) and charge numbers Z_j > 0."""

    lattice: Lattice
    positions: np.ndarray
    charges: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        q = np.array(self.charges, dtype=float).reshape(-1)
        if len(pos) != len(q):
            raise InvalidInput(f"{len(pos)} positions but {len(q)} charges")
        if len(q) == 0:
            raise InvalidInput("at least one ion is required")
        bad = np.flatnonzero(~(q > 0))
        if bad.size:
            raise InvalidInput(
                f"positivity condition violated: ion {int(bad[0])} has Z = {q[bad[0]]}"
                " (every ion charge must satisfy Z_j > 0)"
            )
        pos = wrap_fractional(pos)
        d = min_pair_distance(self.lattice, pos)
        if d < COINCIDE_TOL * self.lattice.scale:
            raise IonsCoincide(f"two ions coincide on the torus (d = {d:.3e})")
        pos.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "charges", q)

    def __len__(self):
        return len(self.charges)

    @property
    def Z(self):
        return float(self.charges.sum())

    @property
    def cartesian(self):
        return self.lattice.to_cartesian(self.positions)

    @property
    def min_distance(self):
        return min_pair_distance(self.lattice, self.positions)

    def moved(self, frac_positions):
        return IonSet(self.lattice, frac_positions, self.charges)

    def displaced(self, dx):
        """Ions shifted by Cartesian displacements ``dx`` (shape (N, 3) or (3,))."""
        df = self.lattice.to_fractional(np.broadcast_to(dx, self.positions.shape))
        return self.moved(self.positions + df)


@dataclass(frozen=True, eq=False)
class WaveField:
    """Samples of psi on the real-space nodes of ``grid``; target norm^2 is ``Z``.

    The field is the band-limited interpolant of its samples, so the
    quadrature norm ``(|T^3|/N) sum |psi_i|^2`` is the exact L^2 norm.
    """

    values: np.ndarray
    grid: KGrid
    Z: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.dims:
            raise InvalidInput(f"psi has shape {v.shape}, grid has {self.grid.dims}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_coeffs(cls, coeffs, grid, Z):
        return cls(_fft.to_samples(coeffs), grid, Z)

    @property
    def coeffs(self):
        return _fft.to_coeffs(self.values)

    def norm2(self):
        return float(self.grid.cell_volume * np.vdot(self.values, self.values).real)

    def with_values(self, values):
        return WaveField(values, self.grid, self.Z)


def inner(f, g, grid):
    """<f, g> = integral f conj(g) for sample arrays on ``grid``."""
    return grid.cell_volume * np.vdot(g, f)


@dataclass(frozen=True, eq=False)
class DensitySet:
    """nu on the density grid plus spectral sigma and rho = sigma + nu."""

    nu: np.ndarray
    nu_hat: np.ndarray
    sigma_hat: np.ndarray
    grid: KGrid

    @property
    def rho_hat(self):
        return self.sigma_hat + self.nu_hat


def constant_psi(grid, Z):
    return WaveField(np.full(grid.dims, np.sqrt(Z / grid.lattice.volume), dtype=complex), grid, Z)


def electron_density(psi: WaveField, p: PhysParams, grid: KGrid = None):
    """nu = e |psi|^2 sampled on ``grid`` (default: the psi grid itself).

    Pass the doubled grid for an alias-free spectrum of nu.
    """
    if grid is None or grid.dims == psi.grid.dims:
        vals = psi.values
    else:
        vals = _fft.to_samples(_fft.pad(psi.coeffs, grid.dims))
    return p.e * (vals.real**2 + vals.imag**2)


def ion_sigma_hat(ions: IonSet, p: PhysParams, grid: KGrid):
    """sigma(k) = (|e|/|T^3|) sum_j Z_j exp(i k.x_j) in FFT storage order."""
    phase = np.exp(2j * np.pi * np.tensordot(grid.m, ions.positions, axes=([3], [1])))
    return abs(p.e) / grid.lattice.volume * (phase @ ions.charges)


def densities(psi: WaveField, ions: IonSet, p: PhysParams) -> DensitySet:
    dgrid = psi.grid.doubled
    nu = electron_density(psi, p, dgrid)
    return DensitySet(nu, _fft.to_coeffs(nu), ion_sigma_hat(ions, p, dgrid), dgrid)


def neutrality_defect(ions, psi: WaveField, p: PhysParams):
    """Total charge per cell, |e| Z + e ||psi||^2."""
    Z = 0.0 if ions is None else ions.Z
    return abs(p.e) * Z + p.e * psi.norm2()


def normalize(psi: WaveField) -> WaveField:
    n2 = psi.norm2()
    if np.sqrt(n2) < ZERO_FIELD_TOL:
        raise ZeroField("cannot normalize a vanishing wave function")
    return psi.with_values(psi.values * np.sqrt(psi.Z / n2))
