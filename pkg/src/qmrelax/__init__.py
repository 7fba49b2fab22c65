"""Lower bounds on quantum lattice ground-state energies.

A first-order solver for the semidefinite relaxation over one- and
two-cluster reduced density matrices, with a translation-invariant variant
that performs the global PSD projection block-diagonally through the FFT,
plus exact-diagonalization oracles that certify the results as lower bounds.
"""

from .lattice import ClusterDecomposition, Lattice
from .problem import ClusterProblem, OperatorBasis, complete_basis
from .spin_models import build_afh, build_tfi
from .fermion_models import build_spinless, fermionic_basis, jw_pair_observables
from .sdp_core import (DualState, MarginalSet, effective_hamiltonians,
                       energy_per_site, feasibility_error, moment_matrix,
                       primal_energy)
from .solver import SolveResult, SolverConfig, solve, solve_reference
from .solver_ti import marginal_set_from_ti, solve_ti, update_x_ti
from .oracle import (exact_marginals, free_fermion_energy, ground_energy_dense,
                     ground_energy_lanczos)

__version__ = "0.1.0"

__all__ = [
    "ClusterDecomposition", "Lattice", "ClusterProblem", "OperatorBasis",
    "complete_basis", "build_afh", "build_tfi", "build_spinless",
    "fermionic_basis", "jw_pair_observables", "DualState", "MarginalSet",
    "effective_hamiltonians", "energy_per_site", "feasibility_error",
    "moment_matrix", "primal_energy", "SolveResult", "SolverConfig", "solve",
    "solve_reference", "marginal_set_from_ti", "solve_ti", "update_x_ti",
    "exact_marginals", "free_fermion_energy", "ground_energy_dense",
    "ground_energy_lanczos", "__version__",
]
