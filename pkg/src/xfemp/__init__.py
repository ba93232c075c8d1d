"""Two-phase stationary diffusion on non-conforming structured quad meshes
with step-enriched interpolation and geometric preconditioning."""

from .assembly import (BoundaryConditions, LinearSystem, MaterialSpec,
                       Nitsche, StabilizedLagrange, assemble, jacobian,
                       residual)
from .cutcell import (ElementPartition, QuadratureRule, partition_all,
                      partition_element, phase_area, segment_quadrature,
                      triangle_quadrature)
from .diagnostics import (condition_number, evaluate_solution,
                          integrate_over_sweep, l2_relative_error,
                          min_area_ratio, probe_grid)
from .enrichment import EnrichmentTable, build_enrichment
from .levelset import (Circle, LevelSetField, VerticalPlane, build_levelset,
                       edge_zero_crossing, sample_signed_distance)
from .mesh import (StructuredMesh, build_structured_mesh, shape_gradients,
                   shape_values)
from .precond import (GeometricPreconditioner, build_tb, build_tjac, build_tn,
                      identity_preconditioner, make_preconditioner,
                      mark_constrained, transform_system,
                      untransform_solution)
from .solver import (LinearProblem, SingularMatrixError, SolverConfig,
                     build_ilu0, direct_solve, gmres_solve, newton_solve)

__version__ = "0.1.0"
