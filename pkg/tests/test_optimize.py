import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spcrystal.coulomb import SpectralField
from spcrystal.diagnose import smooth_tangent
from spcrystal.errors import InvalidInput, NotConverged
from spcrystal.fields import IonSet, PhysParams, WaveField, constant_psi, inner
from spcrystal.lattice import Lattice, make_kgrid
from spcrystal.optimize import SolverConfig, initial_psi, minimize, rayleigh_lambda, retract

P = PhysParams()
CUBE = Lattice.cubic(1.0)
G8 = make_kgrid(CUBE.dual, (8, 8, 8))


@pytest.fixture(scope="module")
def benchmark():
    grid = make_kgrid(CUBE.dual, (16, 16, 16))
    ions = IonSet(CUBE, [[0.3, 0.4, 0.55]], [1.0])
    return minimize(initial_psi(grid, 1.0, seed=0), ions, P)


@pytest.fixture(scope="module")
def pair_run():
    ions = IonSet(CUBE, [[0.4, 0.5, 0.5], [0.55, 0.5, 0.5]], [1.0, 1.0])
    return minimize(initial_psi(G8, 2.0, seed=3), ions, P, cfg=SolverConfig(tol_psi=1e-5, tol_force=1e-5))


def test_retract_zero_step(rng):
    psi = initial_psi(G8, 1.0, seed=1)
    np.testing.assert_allclose(retract(psi, rng.standard_normal(G8.dims), 0.0).values, psi.values, rtol=1e-14)


def test_retract_derivative_is_tangent(rng):
    psi = initial_psi(G8, 1.0, seed=1)
    tau = smooth_tangent(psi, rng)
    tau -= inner(tau, psi.values, G8).real / psi.Z * psi.values
    errs = []
    for eps in (1e-2, 1e-3, 1e-4):
        d = (retract(psi, tau, eps).values - psi.values) / eps - tau
        errs.append(np.sqrt(inner(d, d, G8).real))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] <= 1e-3 * np.sqrt(inner(tau, tau, G8).real)


@given(st.integers(0, 2**31), st.floats(1e-6, 10.0), st.floats(0.1, 5.0))
@settings(max_examples=30, deadline=None)
def test_retract_stays_on_sphere(seed, step, Z):
    rng = np.random.default_rng(seed)
    g = make_kgrid(CUBE.dual, (4, 4, 4))
    psi = initial_psi(g, Z, seed=seed)
    out = retract(psi, rng.standard_normal(g.dims) + 1j * rng.standard_normal(g.dims), step)
    assert out.norm2() == pytest.approx(Z, rel=1e-13)


def test_rayleigh_free_plane_wave(skewed):
    g = make_kgrid(skewed.dual, (4, 4, 4))
    c = np.zeros(g.dims, complex)
    c[1, 0, 0] = np.sqrt(1.0 / skewed.volume)
    psi = WaveField.from_coeffs(c, g, 1.0)
    zero = np.zeros(g.doubled.dims, complex)
    b1 = skewed.dual.b1
    assert rayleigh_lambda(psi, SpectralField(zero, g.doubled), P) == pytest.approx(P.kinetic * b1 @ b1, rel=1e-13)
    shifted = zero.copy()
    shifted[0, 0, 0] = 0.7
    lam = rayleigh_lambda(psi, SpectralField(shifted, g.doubled), P)
    assert lam == pytest.approx(P.kinetic * b1 @ b1 + P.e * 0.7, rel=1e-13)


def test_initial_psi_deterministic():
    a, b = initial_psi(G8, 2.0, seed=5), initial_psi(G8, 2.0, seed=5)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.norm2() == pytest.approx(2.0, rel=1e-14)
    assert not np.array_equal(a.values, initial_psi(G8, 2.0, seed=6).values)


def test_solver_config_validation():
    for bad in ({"tol_psi": 0.0}, {"backtrack": 1.0}, {"armijo_c1": 0.0}, {"max_iter": 0}, {"d_min": -1.0}):
        with pytest.raises(InvalidInput):
            SolverConfig(**bad)


def test_norm_target_must_match_charge():
    ions = IonSet(CUBE, [[0.1, 0.1, 0.1]], [1.0])
    with pytest.raises(InvalidInput):
        minimize(initial_psi(G8, 2.0), ions, P)


def test_strict_raises_not_converged():
    ions = IonSet(CUBE, [[0.1, 0.1, 0.1]], [1.0])
    with pytest.raises(NotConverged) as info:
        minimize(initial_psi(G8, 1.0), ions, P, cfg=SolverConfig(max_iter=1, strict=True))
    assert info.value.state is not None and not info.value.state.converged


def test_benchmark_converges(benchmark):
    s = benchmark
    assert s.converged and s.iterations <= 2000
    assert s.residuals["schrodinger"] <= 1e-6
    assert s.residuals["force"] <= 1e-6
    # the uniform state has energy 0 and is not optimal
    assert s.energy.total < 0


def test_benchmark_beats_uniform(benchmark):
    ions = benchmark.ions
    from spcrystal.energy import energy

    assert energy(constant_psi(benchmark.psi.grid, 1.0), ions, P).total == pytest.approx(0.0, abs=1e-15)


def test_benchmark_history(benchmark):
    h = benchmark.history
    assert np.all(np.diff(h.energy) <= 0)
    np.testing.assert_allclose(h.norm2, 1.0, atol=1e-10)


def test_lambda_consistent(benchmark):
    s = benchmark
    assert s.omega0 == s.lam / P.hbar
    assert abs(s.lam_imag) <= 1e-12
    assert rayleigh_lambda(s.psi, s.phi, P) == pytest.approx(s.lam, rel=1e-12)


def test_potential_is_mean_zero_real(benchmark):
    assert benchmark.phi.is_mean_zero()
    assert benchmark.phi.is_real(1e-12)


def test_pair_relaxation(pair_run):
    s = pair_run
    h = s.history
    assert s.converged
    assert np.all(np.diff(h.energy) <= 0)
    assert min(h.d_min) > 1e-3
    np.testing.assert_allclose(h.norm2, 2.0, atol=1e-10 * 2)
    # like charges move apart from the close start
    assert s.ions.min_distance > 0.15
    assert "ions" in h.block


def test_frozen_ions_not_moved():
    ions = IonSet(CUBE, [[0.4, 0.5, 0.5], [0.55, 0.5, 0.5]], [1.0, 1.0])
    s = minimize(initial_psi(G8, 2.0, seed=3), ions, P, cfg=SolverConfig(relax_ions=False))
    assert s.converged
    np.testing.assert_array_equal(s.ions.positions, ions.positions)
    assert "ions" not in s.history.block


def test_callback_sees_every_iteration():
    ions = IonSet(CUBE, [[0.1, 0.1, 0.1]], [1.0])
    seen = []
    s = minimize(initial_psi(G8, 1.0), ions, P, cfg=SolverConfig(max_iter=5),
                 callback=lambda it, *rest: seen.append(it))
    assert seen == list(range(s.iterations + 1))
