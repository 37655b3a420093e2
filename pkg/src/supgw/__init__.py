"""Supervised Gromov-Wasserstein matching of metric-measure spaces."""

from .conflict import (ConflictGraph, VertexCover, build_conflict_graph, greedy_vertex_cover,
                       is_minimal_cover, score_cover_mass, select_zero_pattern, trim_cover)
from .core import (Coupling, SolverParams, Violation, ZeroPattern, transported_mass,
                   validate_coupling)
from .geometry import (DisconnectedGraphError, NeighborGraph, euclidean_distances,
                       geodesic_distance_matrix, geodesic_distances, knn_graph,
                       normalize_distances, row_distance)
from .sgw import (GwProblem, SgwResult, apply_cost_tensor, max_step_size, mirrorc_kernel,
                  solve_entropic_gw, solve_sgw, sgw_objective)
from .sketch import Sketch, grid_sketch, mapper_sketch, recover_full_coupling
from .sot import ConvergenceWarning, CostMatrix, SotResult, solve_sot, sot_objective

__version__ = "0.1.0"
