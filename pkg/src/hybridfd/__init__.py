"""RBF-generated finite differences with a hybrid Gaussian-cubic kernel.

Modules
-------
kernels     radial kernels, operators on kernels, monomial basis
nodes       node layouts, boundary labels, nearest-neighbour stencils
stencil     local weight solves and global sparse assembly
linalg      sparse direct solves and spectral diagnostics
helmholtz   elliptic boundary-value problems and studies
acoustic    frequency-domain acoustic modelling and time synthesis
"""

from .kernels import DiffOperatorSpec, KernelSpec, PolyBasisSpec
from .nodes import NodeSet, Rectangle, generate_cartesian, generate_halton, generate_random, nearest_neighbors
from .stencil import ConditioningError, assemble_global, local_weights
from .linalg import SingularMatrixError, sparse_direct_solve
from .helmholtz import BoundaryCondition, BvpProblem, solve_bvp, test2_problem

__version__ = "0.1.0"

__all__ = [
    "DiffOperatorSpec",
    "KernelSpec",
    "PolyBasisSpec",
    "NodeSet",
    "Rectangle",
    "generate_cartesian",
    "generate_halton",
    "generate_random",
    "nearest_neighbors",
    "ConditioningError",
    "assemble_global",
    "local_weights",
    "SingularMatrixError",
    "sparse_direct_solve",
    "BoundaryCondition",
    "BvpProblem",
    "solve_bvp",
    "test2_problem",
]
