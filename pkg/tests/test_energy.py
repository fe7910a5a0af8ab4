import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_state
from spcrystal import _fft
from spcrystal.coulomb import SpectralField, auto_ewald, green_G
from spcrystal.diagnose import richardson, shift_state, smooth_tangent
from spcrystal.energy import EnergyModel, apply_hamiltonian, e3_crosscheck, energy, ion_gradient
from spcrystal.fields import IonSet, PhysParams, WaveField, constant_psi, inner, normalize
from spcrystal.lattice import Lattice, make_kgrid
from spcrystal.optimize import retract

P = PhysParams()


def plane_wave(grid, Z, m=(1, 0, 0)):
    c = np.zeros(grid.dims, complex)
    c[m] = np.sqrt(Z / grid.lattice.volume)
    return WaveField.from_coeffs(c, grid, Z)


def test_uniform_single_ion_has_zero_energy(skewed):
    g = make_kgrid(skewed.dual, (6, 6, 6))
    ions = IonSet(skewed, [[0.3, 0.1, 0.7]], [1.3])
    e = energy(constant_psi(g, 1.3), ions, P)
    assert e.e1 == 0.0 and e.e2 == 0.0
    assert abs(e.e3) < 1e-15 and abs(e.e4) < 1e-15


def test_uniform_pair_energy_is_green(cubic):
    g = make_kgrid(cubic.dual, (6, 6, 6))
    last = -np.inf
    for d in (0.4, 0.2, 0.1, 0.05):
        ions = IonSet(cubic, [[0.5, 0.5, 0.5], [0.5 + d, 0.5, 0.5]], [1.0, 1.0])
        e = energy(constant_psi(g, 2.0), ions, P)
        assert e.total == pytest.approx(P.e**2 * green_G(cubic, None, None, np.array([d, 0, 0])), abs=1e-14)
        assert e.total > last
        last = e.total


def test_total_is_sum(rng):
    psi, ions = random_state(rng)
    e = energy(psi, ions, P)
    assert e.total == e.e1 + e.e2 + e.e3 + e.e4
    assert e.e1 >= 0 and e.e4 >= 0


@given(st.integers(0, 2**31), st.integers(2, 4))
@settings(max_examples=25, deadline=None)
def test_close_pairs_repel(seed, n):
    rng = np.random.default_rng(seed)
    lat = Lattice.cubic(1.0)
    centre = rng.random(3)
    pos = centre + 0.2 * (rng.random((n, 3)) - 0.5) / np.sqrt(3)
    try:
        ions = IonSet(lat, pos, rng.uniform(0.5, 2.0, n))
    except Exception:
        return
    if ions.min_distance < 1e-3:
        return
    g = make_kgrid(lat.dual, (4, 4, 4))
    e = EnergyModel(g, ions, P).energy(constant_psi(g, ions.Z))
    assert e.e2 > 0 and e.e4 >= 0


def test_pair_energy_differences_eta_free(skewed):
    g = make_kgrid(skewed.dual, (4, 4, 4))
    a = IonSet(skewed, [[0.1, 0.1, 0.1], [0.4, 0.2, 0.1]], [1.0, 1.0])
    b = IonSet(skewed, [[0.1, 0.1, 0.1], [0.2, 0.15, 0.1]], [1.0, 1.0])
    eta = auto_ewald(skewed).eta
    diffs = []
    for f in (1.0, 4.0):
        ew = auto_ewald(skewed, f * eta)
        diffs.append(EnergyModel(g, a, P, ew).e2 - EnergyModel(g, b, P, ew).e2)
    assert abs(diffs[0] - diffs[1]) <= 1e-10


def test_phase_invariance(rng):
    psi, ions = random_state(rng)
    model = EnergyModel(psi.grid, ions, P)
    e0 = model.energy(psi).total
    for theta in (0.3, 1.7, np.pi):
        e = model.energy(psi.with_values(np.exp(1j * theta) * psi.values)).total
        assert abs(e - e0) <= 1e-13 * max(1.0, abs(e0))


def test_grid_shift_invariance(rng):
    psi, ions = random_state(rng)
    e0 = energy(psi, ions, P).total
    for shift in ((1, 0, 0), (0, 3, -2), (8, 8, 8)):
        spsi, sions = shift_state(psi, ions, np.array(shift))
        assert abs(energy(spsi, sions, P).total - e0) <= 1e-12 * max(1.0, abs(e0))


def test_fractional_shift_invariance(rng):
    psi, ions = random_state(rng)
    e0 = energy(psi, ions, P).total
    spsi, sions = shift_state(psi, ions, rng.random(3))
    assert abs(energy(spsi, sions, P).total - e0) <= 1e-9 * abs(e0)


def test_plane_wave_gradient(skewed):
    g = make_kgrid(skewed.dual, (4, 4, 4))
    psi = plane_wave(g, 1.0)
    zero = SpectralField(np.zeros(g.doubled.dims, complex), g.doubled)
    b1 = skewed.dual.b1
    hpsi = apply_hamiltonian(psi, zero, P)
    np.testing.assert_allclose(2 * hpsi, 2 * P.kinetic * (b1 @ b1) * psi.values, atol=1e-12)


def test_tangential_is_orthogonal(rng):
    psi, ions = random_state(rng)
    pg = EnergyModel(psi.grid, ions, P).psi_gradient(psi)
    t = pg.tangential
    assert abs(inner(t, psi.values, psi.grid).real) <= 1e-10 * np.sqrt(inner(t, t, psi.grid).real * psi.Z)


def test_psi_gradient_along_retraction(rng):
    psi, ions = random_state(rng)
    model = EnergyModel(psi.grid, ions, P)
    grad = model.psi_gradient(psi).grad
    tau = smooth_tangent(psi, rng)
    tau -= inner(tau, psi.values, psi.grid).real / psi.Z * psi.values
    an = inner(grad, tau, psi.grid).real
    e0 = model.energy(psi).total

    def forward(eps):
        return (model.energy(retract(psi, tau, eps)).total - e0) / eps

    errs = [abs(forward(eps) - an) / abs(an) for eps in (1e-3, 5e-4, 2.5e-4)]
    # first order in eps: halving eps halves the error
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)
    extrapolated = 2 * forward(0.5e-5) - forward(1e-5)
    assert abs(extrapolated - an) <= 1e-6 * abs(an)


def test_phase_direction_derivative_vanishes(rng):
    psi, ions = random_state(rng)
    grad = EnergyModel(psi.grid, ions, P).psi_gradient(psi).grad
    d = inner(grad, 1j * psi.values, psi.grid).real
    assert abs(d) <= 1e-10 * np.sqrt(inner(grad, grad, psi.grid).real * psi.Z)


def test_single_ion_symmetric_density_no_force(skewed):
    g = make_kgrid(skewed.dual, (6, 6, 6))
    c = np.zeros(g.dims, complex)
    c[0, 0, 0] = 1.0
    c[1, 0, 0] = c[-1, 0, 0] = 0.3
    c[0, 2, 1] = c[0, -2, -1] = 0.2j
    psi = normalize(WaveField.from_coeffs(c, g, 1.0))
    ions = IonSet(skewed, [[0, 0, 0]], [1.0])
    np.testing.assert_allclose(ion_gradient(psi, ions, P), 0.0, atol=1e-14)


def test_pair_gradient_is_repulsive(cubic):
    g = make_kgrid(cubic.dual, (4, 4, 4))
    ions = IonSet(cubic, [[0.5, 0.5, 0.5], [0.6, 0.5, 0.5]], [1.0, 1.0])
    grad = ion_gradient(constant_psi(g, 2.0), ions, P)
    # force -grad on ion 0 points away from ion 1 (along -x)
    assert -grad[0, 0] < 0 and -grad[1, 0] > 0
    np.testing.assert_allclose(grad[:, 1:], 0.0, atol=1e-12)


def test_ion_gradient_finite_difference(rng):
    psi, ions = random_state(rng, n_ions=3)
    model = EnergyModel(psi.grid, ions, P)
    grad = model.ion_gradient(psi)
    for _ in range(3):
        dx = rng.standard_normal(grad.shape)
        fd = richardson(lambda t: EnergyModel(psi.grid, ions.displaced(t * dx), P, model.ew).energy(psi).total, 1e-3)
        an = np.sum(grad * dx)
        assert abs(fd - an) <= 1e-6 * abs(an)


def test_e3_uniform_is_zero(skewed):
    g = make_kgrid(skewed.dual, (4, 4, 4))
    ions = IonSet(skewed, [[0.3, 0.3, 0.3]], [1.0])
    a, b = e3_crosscheck(constant_psi(g, 1.0), ions, P)
    assert abs(a) < 1e-15 and abs(b) < 1e-15


@pytest.mark.parametrize("n_ions", [1, 2])
def test_e3_two_forms_agree(rng, n_ions):
    psi, ions = random_state(rng, n_ions=n_ions)
    a, b = e3_crosscheck(psi, ions, P)
    assert a == pytest.approx(b, rel=1e-9)


def test_energy_in_physical_units(cubic, rng):
    """E1 scales with hbar^2/m, E2..E4 with e^2."""
    g = make_kgrid(cubic.dual, (4, 4, 4))
    ions = IonSet(cubic, [[0.1, 0.2, 0.3], [0.6, 0.5, 0.5]], [1.0, 1.0])
    psi = normalize(WaveField(rng.standard_normal(g.dims) + 1j, g, 2.0))
    base = energy(psi, ions, P)
    other = energy(psi, ions, PhysParams(hbar=2.0, m=0.5, e=-3.0))
    assert other.e1 == pytest.approx(8 * base.e1, rel=1e-13)
    for key in ("e2", "e3", "e4"):
        assert getattr(other, key) == pytest.approx(9 * getattr(base, key), rel=1e-13)


def test_hamiltonian_is_hermitian(rng):
    psi, ions = random_state(rng)
    model = EnergyModel(psi.grid, ions, P)
    phi = model.potential(psi)
    g = psi.grid
    f = WaveField(rng.standard_normal(g.dims) + 1j * rng.standard_normal(g.dims), g, 1.0)
    h = WaveField(rng.standard_normal(g.dims) + 1j * rng.standard_normal(g.dims), g, 1.0)
    a = inner(apply_hamiltonian(f, phi, P), h.values, g)
    b = inner(f.values, apply_hamiltonian(h, phi, P), g)
    assert abs(a - b) <= 1e-12 * abs(a)


def test_potential_solves_poisson(rng):
    psi, ions = random_state(rng)
    model = EnergyModel(psi.grid, ions, P)
    phi = model.potential(psi)
    rho = model.sigma_hat + model.nu_hat(psi)
    k2 = model.dgrid.k2
    assert phi.coeffs.flat[0] == 0
    np.testing.assert_allclose((k2 * phi.coeffs)[k2 > 0], rho[k2 > 0], atol=1e-14 * np.abs(rho).max())
    assert _fft.to_coeffs(phi.samples()).shape == model.dgrid.dims
