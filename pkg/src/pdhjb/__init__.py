"""Numerical laboratory for path-dependent optimal control.

Deterministic Bolza values by direct transcription, exact stochastic
control values on non-recombining trees, path operators (pseudo-metric,
stopping, control application, concatenation with scaling, rescaling),
finite-delta path-derivative estimators, integral sub/supersolution
checkers, and a viscosity convergence harness with a CLI front end.
"""

from .bolza import (BolzaProblem, DocOptions, TerminalCost, ValueEstimate,
                    dpp_residuals, make_terminal_cost, solve_doc,
                    solve_doc_constrained)
from .config import ExperimentConfig, load_config
from .dini import (CheckReport, DeltaSchedule, DiniEstimate, PathFunctional,
                   bolza_value_functional, check_minimax_sub,
                   check_minimax_super, check_subsolution_soc, lower_dini,
                   soc_value_functional, stochastic_upper_dini, upper_dini)
from .errors import (ConfigError, DivergenceError, DomainError,
                     OptimizationFailure, PdhjbError, ResourceError,
                     UnsupportedError)
from .extreal import ExtendedReal
from .harness import (ConvergenceResult, ConvergenceRow, build_problem,
                      emit_results, make_initial_path, run_bolza,
                      run_convergence, run_legendre, run_soc, run_verify)
from .lagrangian import (Hamiltonian, Lagrangian, SampleSpec, SolverOptions,
                         check_hypotheses, eval_lagrangian, hamiltonian,
                         make_hamiltonian, make_lagrangian,
                         numeric_hamiltonian)
from .paths import (Control, DiscretePath, TimeGrid, action, apply_control,
                    concat_scaled, dinf_distance, read_path_csv, rescale_lagrangian,
                    rescale_path, stop_path, write_path_csv)
from .stochastic import (LatticeSpec, SocResult, check_rescaling_identity,
                         estimate_vn_quadratic_oracle,
                         simulate_scaled_brownian,
                         simulate_scaled_brownian_batch, solve_soc_tree,
                         solve_soc_tree_auto)

__version__ = "0.1.0"
