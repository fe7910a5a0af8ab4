"""Space-periodic ground states of the Schrodinger-Poisson model with point ions."""

__version__ = "0.1.0"

from .coulomb import (
    EwaldParams,
    SpectralField,
    apply_Q,
    auto_ewald,
    eval_potential_at,
    grad_G,
    green_G,
    regularized_D,
)
from .energy import EnergyBreakdown, EnergyModel, e3_crosscheck, energy, ion_gradient, psi_gradient
from .fields import (
    IonSet,
    PhysParams,
    WaveField,
    electron_density,
    ion_sigma_hat,
    neutrality_defect,
    normalize,
)
from .lattice import Lattice, dual_basis, make_kgrid, torus_distance, wrap_to_cell
from .optimize import GroundState, SolverConfig, initial_psi, minimize, rayleigh_lambda, retract

__all__ = [
    "__version__",
    "EwaldParams",
    "SpectralField",
    "apply_Q",
    "auto_ewald",
    "eval_potential_at",
    "grad_G",
    "green_G",
    "regularized_D",
    "EnergyBreakdown",
    "EnergyModel",
    "e3_crosscheck",
    "energy",
    "ion_gradient",
    "psi_gradient",
    "IonSet",
    "PhysParams",
    "WaveField",
    "electron_density",
    "ion_sigma_hat",
    "neutrality_defect",
    "normalize",
    "Lattice",
    "dual_basis",
    "make_kgrid",
    "torus_distance",
    "wrap_to_cell",
    "GroundState",
    "SolverConfig",
    "initial_psi",
    "minimize",
    "rayleigh_lambda",
    "retract",
]
