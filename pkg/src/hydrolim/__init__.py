"""Numerical toolkit for conservative lattice dynamics on the torus and
their nonlinear diffusion limit.

Modules: single-site potentials, lattice operators, coarse-graining spaces,
block free energies (local limit assembly), log-Sobolev budgets, stochastic
dynamics, the limit equation, and a config-driven experiment harness.
"""

from .potential import (
    SingleSitePotential,
    Zero,
    Cosine,
    BoundedBump,
    perturbation_from_dict,
)
from .lattice import (
    SpinConfiguration,
    apply_A,
    sqrt_2A_apply,
    hamiltonian,
    grad_hamiltonian,
    h_minus_one_norm_sq_step,
)
from .coarse_grain import DGSpace, SplineSpace, ProjectionBundle
from .clt import clt_density, density_from_means, omega_scan, jacobian_jq
from .free_energy import (
    bar_psi,
    bar_psi_star,
    psi_J,
    PsiJTable,
    bar_H_dg,
    bar_H_spline,
    macro_energy,
    meso_and_macro_energies,
)
from .lsi import two_scale_combine, conditional_lsi_pipeline
from .dynamics import SdeConfig, kawasaki_step, run_ensemble, stability_dt
from .pde import PdeConfig, cfl_dt, solve
from .experiments import run as run_experiment

__version__ = "0.1.0"

__all__ = [
    "SingleSitePotential",
    "Zero",
    "Cosine",
    "BoundedBump",
    "perturbation_from_dict",
    "SpinConfiguration",
    "apply_A",
    "sqrt_2A_apply",
    "hamiltonian",
    "grad_hamiltonian",
    "h_minus_one_norm_sq_step",
    "DGSpace",
    "SplineSpace",
    "ProjectionBundle",
    "clt_density",
    "density_from_means",
    "omega_scan",
    "jacobian_jq",
    "bar_psi",
    "bar_psi_star",
    "psi_J",
    "PsiJTable",
    "bar_H_dg",
    "bar_H_spline",
    "macro_energy",
    "meso_and_macro_energies",
    "two_scale_combine",
    "conditional_lsi_pipeline",
    "SdeConfig",
    "kawasaki_step",
    "run_ensemble",
    "stability_dt",
    "PdeConfig",
    "cfl_dt",
    "solve",
    "run_experiment",
]
