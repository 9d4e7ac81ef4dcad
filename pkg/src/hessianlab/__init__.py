"""Finite-difference tools for complex Hessian equations S_m(dd^c u) = f.

Modules
-------
cone        elementary symmetric functions, derivative matrices, cone tests
grid        grid fields, complex Hessian stencils, domains, torus charts, I/O
solver      Dirichlet solvers (damped Newton and nonlinear Gauss-Seidel)
validation  verifiers used as oracles against solver output
richberg    smooth approximation from above by local solves and gluing
expr        whitelisted coordinate expressions
cli         the ``hessianlab`` command
"""
__version__ = "0.1.0"

from .cone import (ConeMargin, d_matrix, elem_sym, euler_residual, gamma_m_contains,
                   garding_gap, product_hermiticity_defect, sigma_k)
from .errors import (ConeError, ConfigurationError, ConvergenceError, CoverError,
                     ExpressionError, GluingError, HessianLabError,
                     InitializationError, ModificationError, PreconditionError,
                     StencilError, ValidationError)
from .expr import parse_expression
from .grid import (ChartCover, DomainSpec, GridField, build_domain, complex_hessian,
                   density_to_rhs, load_field, sample, save_field,
                   wedge_hypothesis, wedge_normalization)
from .richberg import (GlueConfig, LocalPiece, glue, local_solution, modify_extend,
                       run_pipeline, smooth_max)
from .solver import (LinearSolverConfig, SolveDiagnostics, SolverConfig,
                     initialize, linearized_apply, residual, solve_dirichlet,
                     solve_homogeneous)
from .validation import (ViolationReport, comparison_check, sandwich_check,
                         viscosity_check)
