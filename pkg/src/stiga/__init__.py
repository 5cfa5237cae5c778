"""Space-time spline Galerkin solver for the mixed formulation of the
linear fourth-order parabolic equation dt(u) + bilap(u) - lap(u) = f.

The fourth-order problem is split through v = -lap(u) into two coupled
second-order equations, discretized with tensor-product spline spaces over
the full space-time cylinder, and solved as one Kronecker-structured
saddle-point system.
"""

from .assembly import (
    AssembledSystem,
    AssemblyError,
    KroneckerOperator,
    SparseMatrix,
    SpaceTimeSpace,
    assemble_dense_spacetime_oracle,
    assemble_load,
    assemble_spatial_matrices,
    assemble_system,
    assemble_time_matrices,
    compose_system,
)
from .bspline import (
    KnotVector,
    SplineSpace1D,
    eval_basis,
    eval_basis_derivs,
    find_span,
    greville_points,
    uniform_open_knots,
)
from .cli import StudyConfig, emit_results, parse_config, run_study
from .errors import (
    DiscreteSolution,
    ErrorReport,
    convergence_rates,
    discrete_infsup_constant,
    error_norms,
    eval_solution,
    l2_projection,
)
from .geometry import (
    GeometryMap,
    QuarterAnnulusMap,
    UnitSquareMap,
    geometry_by_name,
    pullback_gradient,
)
from .linsolve import BlockSystem, SolveReport, SolverError, block_matvec, solve, solve_dense
from .problems import (
    ManufacturedProblem,
    boundary_samples,
    example1,
    example2,
    interior_samples,
    pde_residual_oracle,
)
from .quadrature import QuadratureRule1D, gauss_legendre_reference, per_span_rule

__version__ = "0.1.0"
