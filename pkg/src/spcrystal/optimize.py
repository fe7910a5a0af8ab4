"""Minimization of E_r over normalized psi and distinct ion positions.

The two variable blocks are relaxed alternately. Each iteration takes one
step on whichever block currently violates its tolerance by the larger
factor:

* psi block: Polak-Ribiere+ conjugate gradient on the sphere ||psi||^2 = Z,
  moving along the retraction sqrt(Z) (psi + t d) / ||psi + t d||;
* ion block: steepest descent on Cartesian positions, with the step capped
  so no pair distance drops below ``d_min``.

Both use Armijo backtracking, so every accepted step lowers E_r.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .coulomb import SpectralField, auto_ewald
from .energy import EnergyBreakdown, EnergyModel, apply_hamiltonian
from .errors import InvalidInput, IonsCollapsed, NotConverged
from .fields import IonSet, PhysParams, WaveField, inner, normalize

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    tol_psi: float = 1e-6
    tol_force: float = 1e-6
    max_iter: int = 2000
    psi_step: float = 0.01
    ion_step: float = 0.1
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    # minimum pair distance, in units of the cell scale |T^3|^(1/3)
    d_min: float = 1e-3
    # largest single ion displacement, in units of the cell scale
    max_ion_move: float = 0.05
    seed: int = 0
    noise: float = 0.1
    relax_ions: bool = True
    verbose: bool = False
    strict: bool = False

    def __post_init__(self):
        if not (self.tol_psi > 0 and self.tol_force > 0):
            raise InvalidInput("solver tolerances must be positive")
        if not 0 < self.backtrack < 1:
            raise InvalidInput("backtrack ratio must lie in (0, 1)")
        if not 0 < self.armijo_c1 < 1:
            raise InvalidInput("Armijo constant must lie in (0, 1)")
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be at least 1")
        if not (self.psi_step > 0 and self.ion_step > 0 and self.d_min > 0):
            raise InvalidInput("step sizes and d_min must be positive")


@dataclass
class History:
    energy: list = field(default_factory=list)
    norm2: list = field(default_factory=list)
    d_min: list = field(default_factory=list)
    block: list = field(default_factory=list)

    def record(self, E, psi, ions, block):
        self.energy.append(E)
        self.norm2.append(psi.norm2())
        self.d_min.append(ions.min_distance)
        self.block.append(block)


@dataclass(eq=False)
class GroundState:
    psi: WaveField
    phi: SpectralField
    ions: IonSet
    lam: float
    omega0: float
    energy: EnergyBreakdown
    residuals: dict
    lam_imag: float = 0.0
    iterations: int = 0
    converged: bool = False
    history: History = field(default_factory=History)


def retract(psi: WaveField, direction, step) -> WaveField:
    """sqrt(Z) (psi + step * direction) / ||psi + step * direction||."""
    return normalize(psi.with_values(psi.values + step * np.asarray(direction)))


def rayleigh_lambda(psi: WaveField, phi: SpectralField, p: PhysParams, imag_tol=1e-12):
    """lambda = <H psi, psi> / Z for H = -hbar^2/2m Lap + e phi."""
    form = inner(apply_hamiltonian(psi, phi, p), psi.values, psi.grid)
    if abs(form.imag) > imag_tol * max(1.0, abs(form.real)):
        raise ValueError(f"<H psi, psi> has imaginary part {form.imag:.3e}")
    return float(form.real / psi.Z)


def initial_psi(grid, Z, seed=0, noise=0.1) -> WaveField:
    """Normalized constant plus seeded complex noise."""
    rng = np.random.default_rng(seed)
    pert = rng.standard_normal(grid.dims) + 1j * rng.standard_normal(grid.dims)
    return normalize(WaveField(1.0 + noise * pert, grid, Z))


def _armijo(trial, E0, slope, t_guess, cfg, t_max=np.inf):
    """First step in t*, t* b, t* b^2, ... meeting the Armijo condition.

    t* minimizes the parabola through E0, the slope and one trial at
    ``t_guess``. Returns (t, E, payload) or None.
    """
    cache = {}

    def ev(t):
        if t not in cache:
            cache[t] = trial(t)
        return cache[t]

    E1 = ev(t_guess)[0]
    curv = (E1 - E0 - slope * t_guess) / t_guess**2
    t = -slope / (2 * curv) if curv > 0 and np.isfinite(E1) else t_guess
    t = min(t, 10.0 * t_guess, t_max)
    for _ in range(cfg.max_backtracks):
        E, payload = ev(t)
        if E <= E0 + cfg.armijo_c1 * t * slope:
            return t, E, payload
        t *= cfg.backtrack
    return None


def _schrodinger_residual(psi, pg):
    # tangential = 2 (H psi - lambda psi)
    return 0.5 * np.sqrt(inner(pg.tangential, pg.tangential, psi.grid).real / psi.Z)


def minimize(psi0: WaveField, ions0: IonSet, p: PhysParams, ew=None, cfg=None, callback=None):
    """Relax (psi, ions) to a critical point of E_r; returns a GroundState."""
    cfg = cfg or SolverConfig()
    grid = psi0.grid
    lat = grid.lattice
    ew = ew or auto_ewald(lat)
    d_min = cfg.d_min * lat.scale
    if abs(psi0.Z - ions0.Z) > 1e-12 * ions0.Z:
        raise InvalidInput(f"wave function norm target {psi0.Z} differs from total ion charge {ions0.Z}")
    if ions0.min_distance <= d_min:
        raise InvalidInput(f"initial ions closer than d_min = {d_min:.3e}")

    psi = normalize(psi0)
    ions = ions0
    model = EnergyModel(grid, ions, p, ew)
    E = model.energy(psi).total
    hist = History()
    hist.record(E, psi, ions, "init")

    d_prev = g_prev = None
    gg_prev = 0.0
    t_psi, t_ion = cfg.psi_step, cfg.ion_step
    converged = False
    it = 0
    if cfg.verbose:
        print("iter\tblock\tenergy\tres_psi\tres_force", flush=True)

    while True:
        pg = model.psi_gradient(psi)
        r_psi = _schrodinger_residual(psi, pg)
        fgrad = model.ion_gradient(psi)
        r_f = float(np.linalg.norm(fgrad, axis=1).max())
        if cfg.verbose:
            print(f"{it}\t{hist.block[-1]}\t{E:.17g}\t{r_psi:.6e}\t{r_f:.6e}", flush=True)
        if callback is not None:
            callback(it, psi, ions, E, r_psi, r_f)
        ion_ok = (not cfg.relax_ions) or r_f <= cfg.tol_force
        if r_psi <= cfg.tol_psi and ion_ok:
            converged = True
            break
        if it >= cfg.max_iter:
            break
        it += 1

        do_ions = cfg.relax_ions and r_f / cfg.tol_force > r_psi / cfg.tol_psi
        if do_ions:
            res = _ion_step(model, psi, ions, fgrad, E, t_ion, d_min, cfg)
            if res is None:
                # fall back to the other block before giving up
                do_ions = False
            else:
                t_ion, E, ions, model = res
                d_prev = None
                hist.record(E, psi, ions, "ions")
                continue

        g = pg.tangential
        gg = inner(g, g, grid).real
        d = -g
        if d_prev is not None and gg_prev > 0:
            beta = max(0.0, inner(g, g - g_prev, grid).real / gg_prev)
            dp = d_prev - (inner(d_prev, psi.values, grid).real / psi.Z) * psi.values
            d = -g + beta * dp
        slope = inner(pg.grad, d, grid).real
        if slope >= 0:
            d, slope = -g, -inner(pg.grad, g, grid).real

        def trial(t):
            cand = retract(psi, d, t)
            return model.energy(cand).total, cand

        found = _armijo(trial, E, slope, t_psi, cfg)
        if found is None and d_prev is not None:
            d, slope = -g, -inner(pg.grad, g, grid).real
            found = _armijo(trial, E, slope, t_psi, cfg)
        if found is None:
            log.warning("line search stalled at iteration %d (residual %.3e)", it, r_psi)
            break
        t_psi, E, psi = found
        d_prev, g_prev, gg_prev = d, g, gg
        hist.record(E, psi, ions, "psi")

    phi = model.potential(psi)
    pg = model.psi_gradient(psi, phi)
    state = GroundState(
        psi=psi,
        phi=phi,
        ions=ions,
        lam=pg.lam,
        omega0=pg.lam / p.hbar,
        energy=model.energy(psi),
        residuals={},
        lam_imag=pg.lam_imag,
        iterations=it,
        converged=converged,
        history=hist,
    )
    from .diagnose import residuals

    state.residuals = residuals(state, p, ew)
    if not converged:
        msg = f"not converged after {it} iterations: residuals {state.residuals}"
        log.warning(msg)
        if cfg.strict:
            raise NotConverged(msg, state)
    return state


def _ion_step(model, psi, ions, fgrad, E0, t_guess, d_min, cfg):
    lat = model.lat
    direction = -fgrad
    big = np.linalg.norm(direction, axis=1).max()
    if big == 0:
        return None
    t_cap = cfg.max_ion_move * lat.scale / big
    t_guess = min(t_guess, t_cap)
    slope = -float(np.sum(fgrad * fgrad))
    tried, blocked = [], []

    def trial(t):
        tried.append(t)
        moved = ions.displaced(t * direction)
        if moved.min_distance <= d_min:
            blocked.append(t)
            return np.inf, None
        m = EnergyModel(model.grid, moved, model.p, model.ew)
        return m.energy(psi).total, (moved, m)

    found = _armijo(trial, E0, slope, t_guess, cfg, t_max=t_cap)
    if found is None:
        if blocked and min(blocked) == min(tried):
            raise IonsCollapsed("no admissible ion step keeps the pair distance above d_min")
        return None
    t, E, (moved, m) = found
    return t, E, moved, m
