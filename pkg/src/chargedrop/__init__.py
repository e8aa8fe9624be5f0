"""Equilibrium measures, capacities and charged liquid drop functionals."""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import ConfigError, ContractError, ConvergenceError, SingularityError
from .kernel import KernelSpec, eval_kernel, interaction_energy, potential, self_energy_quadrature
from .measure import DiscreteMeasure, normalize, rescale_measure, uniform_sphere_measure
from .equilibrium import EquilibriumSolution, capacity, solve_equilibrium
from .functional import FunctionalReport, evaluate_F, evaluate_G

__all__ = [
    "__version__",
    "ConfigError",
    "ContractError",
    "ConvergenceError",
    "SingularityError",
    "KernelSpec",
    "eval_kernel",
    "interaction_energy",
    "potential",
    "self_energy_quadrature",
    "DiscreteMeasure",
    "normalize",
    "rescale_measure",
    "uniform_sphere_measure",
    "EquilibriumSolution",
    "capacity",
    "solve_equilibrium",
    "FunctionalReport",
    "evaluate_F",
    "evaluate_G",
]
