"""Independent checks of the stationarity system on any (psi, phi, ions) state.

Each check is a pure function returning a scalar residual. ``report``
bundles the four equations of a ground state (Schrodinger eigenproblem,
Poisson equation, ion force balance, charge neutrality) into a Report.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _fft
from .energy import EnergyModel, apply_hamiltonian
from .fields import inner, ion_sigma_hat, neutrality_defect, normalize


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.threshold)


@dataclass
class Report:
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, name, value, threshold):
        self.checks.append(Check(name, float(value), float(threshold)))

    def as_dict(self):
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "value": c.value, "threshold": c.threshold, "passed": c.passed}
                for c in self.checks
            ],
        }

    def lines(self):
        for c in self.checks:
            yield f"{'PASS' if c.passed else 'FAIL'}\t{c.name}\t{c.value:.6e}\t<= {c.threshold:.1e}"


def check_schrodinger(state, p):
    """||(-hbar^2/2m Lap + e phi) psi - hbar omega psi|| / sqrt(Z), projected on the psi band."""
    psi = state.psi
    r = apply_hamiltonian(psi, state.phi, p) - p.hbar * state.omega0 * psi.values
    return float(np.sqrt(inner(r, r, psi.grid).real / psi.Z))


def check_poisson(state, p):
    """Relative spectral mismatch of -Lap phi = rho over k != 0, plus |phi(0)|."""
    phi = state.phi
    g = phi.grid
    vals = _fft.to_samples(_fft.pad(state.psi.coeffs, g.dims))
    rho = ion_sigma_hat(state.ions, p, g) + _fft.to_coeffs(p.e * np.abs(vals) ** 2)
    nz = g.k2 > 0
    diff = np.linalg.norm((g.k2 * phi.coeffs - rho)[nz])
    scale = np.linalg.norm(rho[nz])
    rel = diff / scale if scale > 0 else diff
    return float(rel + abs(phi.coeffs.flat[0]))


def check_force(state, p, ew=None):
    """max_j |dE_r/dx_j| = max_j |e| Z_j |grad of the regularized potential at x_j|.

    The self-field of ion j drops out exactly because its smooth remainder D
    has zero gradient at the origin, so only pair Green gradients and the
    electron potential enter.
    """
    grad = EnergyModel(state.psi.grid, state.ions, p, ew).ion_gradient(state.psi)
    return float(np.linalg.norm(grad, axis=1).max())


def ion_forces(state, p, ew=None):
    """Regularized Lorentz forces -|e| Z_j grad(phi - phi_j)(x_j), shape (N, 3)."""
    return -EnergyModel(state.psi.grid, state.ions, p, ew).ion_gradient(state.psi)


def check_neutrality(state, p):
    return float(abs(neutrality_defect(state.ions, state.psi, p)))


def check_norm_target(state):
    """|Z_psi - sum_j Z_j|: the wave function must carry the ions' total charge."""
    return float(abs(state.psi.Z - state.ions.Z))


def residuals(state, p, ew=None):
    return {
        "schrodinger": check_schrodinger(state, p),
        "force": check_force(state, p, ew),
        "poisson": check_poisson(state, p),
        "neutrality": check_neutrality(state, p),
    }


def report(state, p, ew=None, tol_psi=1e-6, tol_force=1e-6, tol_poisson=1e-12,
           tol_neutrality=1e-10, include_force=True):
    rep = Report()
    scale = abs(p.e) * max(state.ions.Z, 1.0)
    rep.add("schrodinger", check_schrodinger(state, p), tol_psi)
    rep.add("poisson", check_poisson(state, p), tol_poisson)
    if include_force:
        rep.add("force", check_force(state, p, ew), tol_force)
    rep.add("neutrality", check_neutrality(state, p) / scale, tol_neutrality)
    rep.add("norm_target", check_norm_target(state) / max(state.ions.Z, 1.0), 1e-12)
    rep.add("lambda_imag", abs(state.lam_imag), 1e-12)
    return rep


# -- derivative checks ------------------------------------------------------


def central_difference(f, h):
    return (f(h) - f(-h)) / (2.0 * h)


def richardson(f, h, levels=1):
    """Extrapolate central differences over the ladder h, h/2, ..., h/2^levels.

    Each level removes the next even power of h: levels=1 is fourth order,
    levels=2 sixth order.
    """
    row = [central_difference(f, h / 2**i) for i in range(levels + 1)]
    for j in range(1, levels + 1):
        w = 4.0**j
        row = [(w * row[i + 1] - row[i]) / (w - 1.0) for i in range(len(row) - 1)]
    return row[0]


def smooth_tangent(psi, rng, kmax=2):
    """Random smooth tau with <tau, psi> = 0 (complex orthogonality)."""
    g = psi.grid
    c = np.zeros(g.dims, dtype=complex)
    low = np.all(np.abs(g.m) <= kmax, axis=-1)
    c[low] = rng.standard_normal(low.sum()) + 1j * rng.standard_normal(low.sum())
    tau = _fft.to_samples(c)
    tau -= inner(tau, psi.values, g) / psi.norm2() * psi.values
    return tau


def check_gradients(psi, ions, p, ew=None, eps=1e-3, n_dirs=3, seed=0, levels=2):
    """Worst relative mismatch between analytic and Richardson-extrapolated
    finite-difference directional derivatives, over psi tangents and ion moves.

    ``eps`` is the largest step of the ladder eps, eps/2, ..., eps/2^levels;
    ion steps are scaled by the cell size.
    """
    rng = np.random.default_rng(seed)
    psi = normalize(psi)
    model = EnergyModel(psi.grid, ions, p, ew)
    grad = model.psi_gradient(psi).grad
    worst = 0.0
    for _ in range(n_dirs):
        tau = smooth_tangent(psi, rng)

        def along(t, tau=tau):
            return model.energy(normalize(psi.with_values(psi.values + t * tau))).total

        fd = richardson(along, eps, levels)
        an = inner(grad, tau, psi.grid).real
        worst = max(worst, abs(fd - an) / abs(an))

    igrad = model.ion_gradient(psi)
    for _ in range(n_dirs):
        dx = rng.standard_normal(igrad.shape)

        def shifted(t, dx=dx):
            return EnergyModel(psi.grid, ions.displaced(t * dx), p, model.ew).energy(psi).total

        fd = richardson(shifted, eps * ions.lattice.scale, levels)
        an = float(np.sum(igrad * dx))
        worst = max(worst, abs(fd - an) / abs(an))
    return worst


def shift_state(psi, ions, shift):
    """Translate (psi, ions) by ``shift``.

    Integer triples are grid steps (exact cyclic roll of samples); real
    triples are fractional offsets applied through the Fourier phases.
    """
    shift = np.asarray(shift)
    g = psi.grid
    if np.issubdtype(shift.dtype, np.integer):
        vals = np.roll(psi.values, tuple(int(s) for s in shift), axis=(0, 1, 2))
        frac = shift / np.array(g.dims)
    else:
        frac = shift.astype(float)
        # psi(x - a) has coefficients c(k) exp(i k.a)
        vals = _fft.to_samples(psi.coeffs * np.exp(2j * np.pi * (g.m @ frac)))
    return psi.with_values(vals), ions.moved(ions.positions + frac)


def check_translation(psi, ions, p, ew=None, shift=(1, 0, 0)):
    E0 = EnergyModel(psi.grid, ions, p, ew).energy(psi).total
    spsi, sions = shift_state(psi, ions, shift)
    E1 = EnergyModel(spsi.grid, sions, p, ew).energy(spsi).total
    return abs(E1 - E0)
