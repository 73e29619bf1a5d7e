"""Goal-oriented error estimation for 2D plane-strain elasticity.

Bilinear quadrilateral finite elements on quadtree meshes with hanging-node
constraints, constrained stress recovery with conjoint-polynomial blending,
dual (adjoint) problems for six quantity-of-interest families, and
recovery-based estimates of the error in the quantity of interest.
"""

from .elasticity import Material
from .mesh import GeometryMap, Mesh, build_initial_mesh, refine
from .solver import DirichletBC, LoadSet, FEField, solve, fe_stress_at_gauss
from .recovery import RecoveredField, recover
from .qoi import (
    MeanDisplacementDomain,
    MeanDisplacementBoundary,
    MeanStrainDomain,
    MeanStressDomain,
    MeanTractionDirichlet,
    GeneralizedSIF,
    dual_solve,
)
from .estimators import ErrorReport, estimate
from .adaptivity import AdaptConfig, adapt_mesh, run_adaptive
from . import benchmarks

__version__ = "0.1.0"

__all__ = [
    "Material",
    "GeometryMap",
    "Mesh",
    "build_initial_mesh",
    "refine",
    "DirichletBC",
    "LoadSet",
    "FEField",
    "solve",
    "fe_stress_at_gauss",
    "RecoveredField",
    "recover",
    "MeanDisplacementDomain",
    "MeanDisplacementBoundary",
    "MeanStrainDomain",
    "MeanStressDomain",
    "MeanTractionDirichlet",
    "GeneralizedSIF",
    "dual_solve",
    "ErrorReport",
    "estimate",
    "AdaptConfig",
    "adapt_mesh",
    "run_adaptive",
    "benchmarks",
]
