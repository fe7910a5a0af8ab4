"""Renormalized energy per cell and its gradients.

For a band-limited psi on grid ``g`` and ions with charges Z_j at x_j,

    E1 = (hbar^2/2m) |T^3| sum_k k^2 |psi(k)|^2
    E2 = (e^2/2) sum_{j != k} Z_j Z_k G(x_j - x_k)
    E3 = <Q sigma, nu> = |T^3| sum_{k != 0} sigma(k) conj(nu(k)) / k^2
    E4 = (1/2) <Q nu, nu> = (|T^3|/2) sum_{k != 0} |nu(k)|^2 / k^2

with nu = e|psi|^2 evaluated on the doubled grid, where its spectrum is
exact. The j = k ion self-terms are left out: they are infinite for point
charges and do not depend on (psi, x).

All inner products are <f, g> = integral f conj(g); the psi gradient is the
real-linear one, so dE(psi)[tau] = Re <grad, tau>.
"""

from dataclasses import dataclass

import numpy as np

from . import _fft
from .coulomb import SpectralField, auto_ewald, grad_G, green_G
from .errors import IonsCoincide
from .fields import COINCIDE_TOL, IonSet, PhysParams, WaveField, ion_sigma_hat
from .lattice import minimum_image


@dataclass(frozen=True)
class EnergyBreakdown:
    e1: float
    e2: float
    e3: float
    e4: float

    @property
    def total(self):
        return self.e1 + self.e2 + self.e3 + self.e4

    def as_dict(self):
        return {"e1": self.e1, "e2": self.e2, "e3": self.e3, "e4": self.e4, "total": self.total}


@dataclass(frozen=True, eq=False)
class PsiGradient:
    grad: np.ndarray
    tangential: np.ndarray
    lam: float
    lam_imag: float


class EnergyModel:
    """E_r and its derivatives for a fixed ion configuration.

    Ion-only quantities (sigma on the density grid, E2 and its gradient) are
    computed once at construction.
    """

    def __init__(self, grid, ions: IonSet, p: PhysParams, ew=None):
        self.grid = grid
        self.dgrid = grid.doubled
        self.ions = ions
        self.p = p
        self.lat = grid.lattice
        self.ew = ew if ew is not None else auto_ewald(self.lat)
        if ions.min_distance < COINCIDE_TOL * self.lat.scale:
            raise IonsCoincide("ions coincide; E2 is singular")
        self.sigma_hat = ion_sigma_hat(ions, p, self.dgrid)
        self.e2, self.e2_grad = self._pair_terms()

    def _pair_terms(self):
        n = len(self.ions)
        grad = np.zeros((n, 3))
        if n < 2:
            return 0.0, grad
        j, k = np.triu_indices(n, 1)
        r = np.atleast_2d(minimum_image(self.lat, self.ions.positions[j] - self.ions.positions[k]))
        zz = self.ions.charges[j] * self.ions.charges[k] * self.p.e**2
        e2 = float(zz @ green_G(self.lat, self.lat.dual, self.ew, r))
        g = zz[:, None] * grad_G(self.lat, self.lat.dual, self.ew, r)
        np.add.at(grad, j, g)
        np.add.at(grad, k, -g)
        return e2, grad

    # -- densities and potentials ------------------------------------------

    def nu_hat(self, psi):
        vals = _fft.to_samples(_fft.pad(psi.coeffs, self.dgrid.dims))
        return _fft.to_coeffs(self.p.e * (vals.real**2 + vals.imag**2))

    def potential(self, psi, nu_hat=None):
        """phi = Q(sigma + nu) on the density grid (k = 0 mode dropped)."""
        if nu_hat is None:
            nu_hat = self.nu_hat(psi)
        return SpectralField((self.sigma_hat + nu_hat) * self.dgrid.inv_k2, self.dgrid)

    # -- energy ------------------------------------------------------------

    def energy(self, psi) -> EnergyBreakdown:
        V = self.lat.volume
        c = psi.coeffs
        e1 = self.p.kinetic * V * float(np.sum(self.grid.k2 * (c.real**2 + c.imag**2)))
        nu = self.nu_hat(psi)
        w = self.dgrid.inv_k2
        e3 = V * float(np.sum(w * (self.sigma_hat * np.conj(nu)).real))
        e4 = 0.5 * V * float(np.sum(w * (nu.real**2 + nu.imag**2)))
        return EnergyBreakdown(e1, self.e2, e3, e4)

    def e3_point(self, psi):
        """E3 as sum_j |e| Z_j (Q nu)(x_j)."""
        qnu = SpectralField(self.nu_hat(psi) * self.dgrid.inv_k2, self.dgrid)
        vals = qnu.evaluate(self.ions.positions).real
        return float(abs(self.p.e) * (self.ions.charges @ vals))

    # -- psi derivatives ---------------------------------------------------

    def apply_H(self, psi, phi: SpectralField = None):
        if phi is None:
            phi = self.potential(psi)
        return apply_hamiltonian(psi, phi, self.p)

    def psi_gradient(self, psi, phi=None) -> PsiGradient:
        hpsi = self.apply_H(psi, phi)
        dv = self.grid.cell_volume
        form = dv * np.vdot(psi.values, hpsi)
        lam = form.real / psi.Z
        grad = 2.0 * hpsi
        radial = dv * np.vdot(psi.values, grad).real / psi.norm2()
        return PsiGradient(grad, grad - radial * psi.values, float(lam), float(form.imag / psi.Z))

    # -- ion derivatives ---------------------------------------------------

    def ion_gradient(self, psi):
        """dE_r/dx_j (Cartesian), shape (N, 3)."""
        qnu = SpectralField(self.nu_hat(psi) * self.dgrid.inv_k2, self.dgrid)
        g3 = np.atleast_2d(qnu.gradient_at(self.ions.positions).real)
        return self.e2_grad + abs(self.p.e) * self.ions.charges[:, None] * g3


def apply_hamiltonian(psi: WaveField, phi: SpectralField, p: PhysParams):
    """Samples of P[(-hbar^2/2m Lap + e phi) psi], P the projection onto the psi band.

    ``phi`` may live on any grid at least twice as fine as psi's; the product
    is formed there and projected back without aliasing.
    """
    c = psi.coeffs
    big = _fft.to_samples(_fft.pad(c, phi.grid.dims))
    # imaginary parts of phi's samples come only from unpaired Nyquist modes,
    # which never couple back into the psi band
    vpsi = _fft.truncate(_fft.to_coeffs(phi.samples().real * big), psi.grid.dims)
    return _fft.to_samples(p.kinetic * psi.grid.k2 * c + p.e * vpsi)


def energy(psi: WaveField, ions: IonSet, p: PhysParams, ew=None) -> EnergyBreakdown:
    return EnergyModel(psi.grid, ions, p, ew).energy(psi)


def psi_gradient(psi: WaveField, ions: IonSet, p: PhysParams, ew=None) -> PsiGradient:
    return EnergyModel(psi.grid, ions, p, ew).psi_gradient(psi)


def ion_gradient(psi: WaveField, ions: IonSet, p: PhysParams, ew=None):
    return EnergyModel(psi.grid, ions, p, ew).ion_gradient(psi)


def e3_crosscheck(psi: WaveField, ions: IonSet, p: PhysParams, ew=None):
    """(Parseval form, point form) of <Q sigma, nu>."""
    model = EnergyModel(psi.grid, ions, p, ew)
    return model.energy(psi).e3, model.e3_point(psi)
