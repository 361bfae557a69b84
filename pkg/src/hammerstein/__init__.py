"""Monotone Picard solver for Hammerstein-Volterra equations with concave nonlinearity."""

from .certificate import (ConvergenceCertificate, certify, contraction_factor, error_bound,
                          l_function, sigma_sharp, sigma_star)
from .kernel import (Kernel, MassReport, damp, kernel_mass, matrix_semigroup_kernel,
                     neumann_box_kernel, verify_kernel_bounds)
from .oracle import ode_reference, volterra_reference
from .problem import (AssumptionReport, ExponentialRate, Nonlinearity, ProblemInstance,
                      RateFunction, SourceField, WeightField, back_shift, canonical_mixture,
                      check_assumptions, constant_source, constant_weight, mixture_weight,
                      power_nonlinearity, saturating_nonlinearity, shift_problem, solve_eta,
                      solve_xi)
from .solver import (Solution, UniquenessReport, picard_step, propagate_source, residual, solve,
                     uniqueness_probe)
from .space import (DiscreteMeasureSpace, GridFunction, TimeGrid, build_box_space,
                    build_finite_state_space, integrate)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceCertificate",
    "certify",
    "contraction_factor",
    "error_bound",
    "l_function",
    "sigma_sharp",
    "sigma_star",
    "Kernel",
    "MassReport",
    "damp",
    "kernel_mass",
    "matrix_semigroup_kernel",
    "neumann_box_kernel",
    "verify_kernel_bounds",
    "ode_reference",
    "volterra_reference",
    "AssumptionReport",
    "ExponentialRate",
    "Nonlinearity",
    "ProblemInstance",
    "RateFunction",
    "SourceField",
    "WeightField",
    "back_shift",
    "canonical_mixture",
    "check_assumptions",
    "constant_source",
    "constant_weight",
    "mixture_weight",
    "power_nonlinearity",
    "saturating_nonlinearity",
    "shift_problem",
    "solve_eta",
    "solve_xi",
    "Solution",
    "UniquenessReport",
    "picard_step",
    "propagate_source",
    "residual",
    "solve",
    "uniqueness_probe",
    "DiscreteMeasureSpace",
    "GridFunction",
    "TimeGrid",
    "build_box_space",
    "build_finite_state_space",
    "integrate",
]
