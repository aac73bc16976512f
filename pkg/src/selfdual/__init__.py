"""Finite-dimensional self-dual variational calculus.

Solves stationary inclusions ``0 in grad phi(x) + Bx + Lambda x + f`` and
evolutions ``du/dt + Bu + Lambda u + grad phi(u) + f = 0`` by minimizing
functionals whose infimum is provably zero; the attained minimum value is a
computable certificate of having found a solution.
"""

from .convex import (
    ConjugateError,
    ConvexFunction,
    LinearPrecompose,
    MoreauSmoothed,
    NumericConvex,
    PowerNorm,
    ProxError,
    Quadratic,
    Restriction,
    SeparablePower,
    Sum,
    conjugate,
    eval_fn,
    fenchel_young_gap,
    moreau_envelope,
    prox,
    subgradient,
)
from .evolution import (
    DiscretePath,
    PathProblem,
    PathReport,
    energy_identity_defect,
    lambda_flow,
    path_functional,
    path_quadrature,
    solve_marching_prox,
    solve_path_minimize,
)
from .lagrangian import (
    Basic,
    Hamiltonian,
    BoundaryAugmented,
    BoundaryLagrangian,
    CustomBoundary,
    InitialValue,
    Lagrangian,
    LambdaRegularized,
    ZeroBoundary,
    asd_defect,
    augment_boundary,
    hamiltonian_eval,
    lagrangian_conjugate,
    lagrangian_eval,
    lambda_regularize,
    oplus,
    selfdual_boundary_defect,
    shift,
    star,
)
from .operators import (
    BoundaryPair,
    ConservativeMap,
    LinearMap,
    boundary_skew_defect,
    conservativity_defect,
    skew_defect,
    split_symmetric,
    vjp_fd,
)
from .problems import (
    BuildError,
    BuiltProblem,
    SpectralGrid,
    build_by_name,
    build_coupled_system_1d,
    build_heat_1d,
    build_nse2d_evolution,
    build_nse2d_stationary,
    build_transport_1d,
)
from .space import Space, inner, load_matrix, product_space
from .stationary import (
    ProblemStructureError,
    SolveReport,
    StationaryProblem,
    certificate,
    inclusion_residual,
    minmax_sup,
    minmax_value,
    solve_minimize,
    solve_newton,
    solve_picard,
)

__version__ = "0.1.0"
