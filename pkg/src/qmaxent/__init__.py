"""Maximum-entropy inference of density operators under trace-form entropies."""

__version__ = "0.1.0"

from .functionals import (AdditivityClass, EntropicFunctional, FieldRangeError,
                          classify_additivity, custom, exponential, gamma_coefficient,
                          inverse_fprime, make_builtin, mirror, parse_functional, shannon,
                          tsallis)
from .density import (DensityOperator, MatrixFormatError, dephase, eigh, entropy, is_density,
                      random_density, random_unitary, read_matrix, write_matrix)
from .solver import (ConstraintSet, InfeasibleError, MaxEntSolution, MaxIterationsError,
                     SolverError, SolverOptions, curvature, density_from_field,
                     dual_objective, primal_sensitivities, solve)
from .bell import (BellDiagonalState, BellReport, Regime, bell_basis, bell_observable,
                   chsh_observable, critical_b, fake_entanglement_interval,
                   min_largest_eigenvalue_state, separability, small_b_expansion, solve_bell,
                   solve_bell_alpha, solve_with_dispersion)
from .thermo import thermo_checks

__all__ = [name for name in dir() if not name.startswith("_")]
