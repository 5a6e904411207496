"""Quasiconcave viscosity solutions of level-set-convex Hamilton-Jacobi equations.

A monotone scheme built on a set-valued discrete subdifferential, solved by
Jacobi iteration with per-node bisection on grids and point clouds.
"""

from .calculus import (SubdifferentialSet, directional_gradient, orthonormal_pairs_3d, perp_2d,
                       quasiconcavity_gap, second_difference, subdifferential)
from .density import (DensityModel, density_at, hyperplane_integral_analytic, hyperplane_integral_mc,
                      line_integral_grid, sample_density)
from .estimators import QuasiconcaveSolver, TukeyDepth
from .geometry import (BoundarySpec, Domain, PointCloud, Stencil, build_grid_cloud, build_knn_cloud,
                       directional_resolution, spatial_resolution)
from .oracles import (brute_tukey_depth, exact_distance_field, halfspace_mass, l1_error, linf_error,
                      radial_mcm_profile)
from .schemes import Scheme, SchemeSpec, scheme_value
from .solver import SolveReport, coarse_to_fine, node_update, residual, solve

__version__ = "0.1.0"

__all__ = [
    "BoundarySpec", "DensityModel", "Domain", "PointCloud", "QuasiconcaveSolver", "Scheme", "SchemeSpec",
    "SolveReport", "Stencil", "SubdifferentialSet", "TukeyDepth", "brute_tukey_depth", "build_grid_cloud",
    "build_knn_cloud", "coarse_to_fine", "density_at", "directional_gradient", "directional_resolution",
    "exact_distance_field", "halfspace_mass", "hyperplane_integral_analytic", "hyperplane_integral_mc",
    "l1_error", "line_integral_grid", "linf_error", "node_update", "orthonormal_pairs_3d", "perp_2d",
    "quasiconcavity_gap", "radial_mcm_profile", "residual", "sample_density", "scheme_value",
    "second_difference", "solve", "spatial_resolution", "subdifferential",
]
