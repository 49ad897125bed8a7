//! Aggregated P1 finite elements on cut background meshes.

pub mod aggregation;
pub mod assembly;
pub mod qoi;
pub mod space;
pub mod sparse;

use thiserror::Error;

pub use aggregation::{build_aggregates, AggregateMap};
pub use assembly::{
    assemble, constant, field, triangle_rule, EmbeddedCondition, LinearSystem, PenaltyScaling, ProblemSpec,
    ScalarField, SideCondition,
};
pub use qoi::{boundary_flux, subdomain_average, DiscreteSolution, QoiRegion};
pub use space::{build_constraints, AggregatedSpace, DofRole, Expansion};
pub use sparse::{cg_solve, CgOutcome, CgStatus, CsrMatrix};

use crate::geometry::CutGeometry;
use crate::mesh::MeshLevel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgfemError {
    #[error("no interior triangle in the active set")]
    NoInteriorCell,
    #[error("cut triangle {triangle} cannot reach an interior triangle")]
    Unreachable { triangle: usize },
    #[error("aggregation threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("solver tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("matrix of dimension {matrix} with right-hand side of length {rhs}")]
    DimensionMismatch { matrix: usize, rhs: usize },
    #[error("no unknowns left after constraints and Dirichlet conditions")]
    EmptySystem,
    #[error("non-finite entry in the assembled system")]
    NonFinite,
    #[error("diffusion {value} at ({}, {}) is not positive", x[0], x[1])]
    NonPositiveDiffusion { x: [f64; 2], value: f64 },
    #[error("no quadrature rule of degree {0}")]
    UnsupportedQuadrature(usize),
    #[error("box does not align with the mesh lines of level {level}")]
    MisalignedBox { level: usize },
    #[error("box covers triangle {triangle} outside the domain")]
    BoxOutsideDomain { triangle: usize },
}

impl AgfemError {
    /// Failures caused by the drawn geometry rather than by the setup; such
    /// samples are rejected and redrawn.
    pub fn is_rejection(&self) -> bool {
        matches!(
            self,
            AgfemError::NoInteriorCell
                | AgfemError::Unreachable { .. }
                | AgfemError::EmptySystem
                | AgfemError::BoxOutsideDomain { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Aggregation threshold η0.
    pub threshold: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            threshold: 1.0,
            tolerance: 1e-8,
            max_iterations: 100_000,
        }
    }
}

/// Result of one discrete solve.
#[derive(Debug, Clone)]
pub struct SampleSolve {
    pub solution: DiscreteSolution,
    pub iterations: usize,
    pub status: CgStatus,
    pub relative_residual: f64,
    pub num_free: usize,
    pub num_constrained: usize,
    pub num_aggregated: usize,
}

impl SampleSolve {
    pub fn converged(&self) -> bool {
        self.status == CgStatus::Converged
    }
}

/// Aggregates, assembles and solves on one level. Non-converged CG runs are
/// returned with their status rather than as errors.
pub fn solve(
    problem: &ProblemSpec,
    geom: &CutGeometry,
    mesh: &MeshLevel,
    settings: &SolverSettings,
) -> Result<SampleSolve, AgfemError> {
    let agg = build_aggregates(geom, mesh, settings.threshold)?;
    let space = build_constraints(&agg, geom, mesh);
    let system = assemble(problem, geom, mesh, &space)?;
    let cg = cg_solve(&system.matrix, &system.rhs, settings.tolerance, settings.max_iterations)?;
    let dof_values = space.extend(&system.free_values(&cg.solution));
    let mut values = vec![f64::NAN; mesh.num_vertices()];
    for (dof, &v) in space.layout.vertex_of_dof.iter().enumerate() {
        values[v] = dof_values[dof];
    }
    Ok(SampleSolve {
        solution: DiscreteSolution {
            level: mesh.index,
            values,
        },
        iterations: cg.iterations,
        status: cg.status,
        relative_residual: cg.relative_residual,
        num_free: space.num_free(),
        num_constrained: space.num_constrained(),
        num_aggregated: agg.num_aggregated(),
    })
}
