//! Level samplers of the three experiments: draw a domain, cut it, solve,
//! evaluate the quantities of interest.

use emlmc_core::agfem::{
    self, boundary_flux, constant, field, subdomain_average, AgfemError, CgStatus, EmbeddedCondition, ProblemSpec,
    QoiRegion, SampleSolve, SideCondition, SolverSettings,
};
use emlmc_core::geometry::{
    build_domain_sample, interpolate_levelset, marching_simplices, CutGeometry, DomainConstants, DomainKind,
    DomainShape, GeometryError, LevelSetSample,
};
use emlmc_core::mesh::{BackgroundHierarchy, BoundingBox, MeshLevel, Side};
use emlmc_core::mlmc::{Evaluation, LevelSampler, SampleFailure};
use emlmc_core::stochastics::RandomStream;

use crate::config::ExperimentConfig;

/// Expected full-domain average under the random radius.
pub const REFERENCE_Q1: f64 = 0.04531216540324139;
/// Expected box average under the random radius.
pub const REFERENCE_Q2: f64 = 0.08020766413981611;

pub fn hierarchy(config: &ExperimentConfig) -> Result<BackgroundHierarchy, String> {
    let [x0, y0, x1, y1] = config.bbox;
    let bbox = BoundingBox::new([x0, y0], [x1, y1]).map_err(|e| e.to_string())?;
    BackgroundHierarchy::build(bbox, config.n0, config.levels, config.refinement).map_err(|e| e.to_string())
}

pub fn solver_settings(config: &ExperimentConfig, threshold: f64) -> SolverSettings {
    SolverSettings {
        threshold,
        tolerance: config.cg_tol,
        max_iterations: config.cg_max_iter,
    }
}

fn cut(domain: &LevelSetSample, mesh: &MeshLevel) -> CutGeometry {
    marching_simplices(interpolate_levelset(domain, mesh), mesh)
}

fn geometry_failure(e: GeometryError) -> SampleFailure {
    SampleFailure::Rejected(e.to_string())
}

fn solve_failure(e: AgfemError) -> SampleFailure {
    if e.is_rejection() {
        SampleFailure::Rejected(e.to_string())
    } else {
        SampleFailure::Fatal(e.to_string())
    }
}

fn apply_discretization(mut problem: ProblemSpec, config: &ExperimentConfig) -> ProblemSpec {
    problem.nitsche_factor = config.nitsche_factor;
    problem.penalty_scaling = config.penalty_scaling;
    problem.quadrature_degree = config.quadrature_degree;
    problem
}

fn evaluation(out: &SampleSolve, values: Vec<f64>) -> Evaluation {
    Evaluation {
        values,
        iterations: out.iterations,
        converged: out.converged(),
    }
}

/// Random circle with `-Δu = 4` and the exact solution `R² - |x - c|²` as
/// Dirichlet data. Quantities: full-domain average and box average.
pub struct CircleSampler {
    pub hierarchy: BackgroundHierarchy,
    pub constants: DomainConstants,
    pub config: ExperimentConfig,
}

impl CircleSampler {
    pub fn new(config: &ExperimentConfig) -> Result<Self, String> {
        Ok(Self {
            hierarchy: hierarchy(config)?,
            constants: DomainConstants::default(),
            config: config.clone(),
        })
    }

    pub fn problem(&self, center: [f64; 2], radius: f64) -> ProblemSpec {
        let r2 = radius * radius;
        let exact = move |x: [f64; 2]| r2 - (x[0] - center[0]).powi(2) - (x[1] - center[1]).powi(2);
        apply_discretization(
            ProblemSpec::embedded_dirichlet(constant(4.0), field(exact)),
            &self.config,
        )
    }
}

impl LevelSampler for CircleSampler {
    fn evaluate(&self, level: usize, stream: &mut RandomStream) -> Result<Evaluation, SampleFailure> {
        let domain = build_domain_sample(DomainKind::Circle, stream, &self.constants).map_err(geometry_failure)?;
        let DomainShape::Circle { center, radius } = domain.shape else {
            unreachable!("circle sampler draws circles")
        };
        let mesh = self
            .hierarchy
            .level(level)
            .map_err(|e| SampleFailure::Fatal(e.to_string()))?;
        let geom = cut(&domain, mesh);
        let settings = solver_settings(&self.config, self.config.threshold);
        let out = agfem::solve(&self.problem(center, radius), &geom, mesh, &settings).map_err(solve_failure)?;
        let q1 = subdomain_average(&out.solution, &geom, mesh, QoiRegion::FullDomain).map_err(solve_failure)?;
        let boxed = QoiRegion::Box {
            center: self.constants.circle_center,
            half_width: self.config.box_half_width,
        };
        let q2 = subdomain_average(&out.solution, &geom, mesh, boxed).map_err(solve_failure)?;
        Ok(evaluation(&out, vec![q1, q2]))
    }
}

/// Plate with two random holes: `u = 0` on the left side, `u = 1` on the
/// right, natural conditions elsewhere. Quantity: flux through the left side.
pub struct FluxSampler {
    pub hierarchy: BackgroundHierarchy,
    pub constants: DomainConstants,
    pub config: ExperimentConfig,
}

impl FluxSampler {
    pub fn new(config: &ExperimentConfig, radius: f64) -> Result<Self, String> {
        Ok(Self {
            hierarchy: hierarchy(config)?,
            constants: DomainConstants {
                hole_radii: [radius, radius],
                ..DomainConstants::default()
            },
            config: config.clone(),
        })
    }

    pub fn problem(&self) -> ProblemSpec {
        let mut problem = ProblemSpec::embedded_dirichlet(constant(0.0), constant(0.0))
            .with_side(Side::Left, SideCondition::StrongDirichlet(constant(0.0)))
            .with_side(Side::Right, SideCondition::StrongDirichlet(constant(1.0)));
        problem.embedded = EmbeddedCondition::NaturalZero;
        apply_discretization(problem, &self.config)
    }
}

impl LevelSampler for FluxSampler {
    fn evaluate(&self, level: usize, stream: &mut RandomStream) -> Result<Evaluation, SampleFailure> {
        let domain = build_domain_sample(DomainKind::TwoHoles, stream, &self.constants).map_err(geometry_failure)?;
        let mesh = self
            .hierarchy
            .level(level)
            .map_err(|e| SampleFailure::Fatal(e.to_string()))?;
        let geom = cut(&domain, mesh);
        let settings = solver_settings(&self.config, self.config.threshold);
        let out = agfem::solve(&self.problem(), &geom, mesh, &settings).map_err(solve_failure)?;
        Ok(evaluation(&out, vec![boundary_flux(&out.solution, &geom, mesh)]))
    }
}

/// Outcome of one popcorn solve in the robustness study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iterations: usize,
    pub status: CgStatus,
}

/// Random popcorn domain with `u = sin(kappa |x - x_c|)`.
pub struct PopcornSampler {
    pub hierarchy: BackgroundHierarchy,
    pub constants: DomainConstants,
    pub config: ExperimentConfig,
}

impl PopcornSampler {
    pub fn new(config: &ExperimentConfig) -> Result<Self, String> {
        Ok(Self {
            hierarchy: hierarchy(config)?,
            constants: DomainConstants::default(),
            config: config.clone(),
        })
    }

    pub fn problem(&self) -> ProblemSpec {
        let kappa = self.config.kappa;
        let [x0, y0, x1, y1] = self.config.bbox;
        let c = [0.5 * (x0 + x1), 0.5 * (y0 + y1)];
        let exact = move |x: [f64; 2]| (kappa * (x[0] - c[0]).hypot(x[1] - c[1])).sin();
        // -Δ sin(κr) = κ² sin(κr) - κ cos(κr) / r in two dimensions.
        let source = move |x: [f64; 2]| {
            let r = (x[0] - c[0]).hypot(x[1] - c[1]);
            kappa * kappa * (kappa * r).sin() - kappa * (kappa * r).cos() / r
        };
        apply_discretization(
            ProblemSpec::embedded_dirichlet(field(source), field(exact)),
            &self.config,
        )
    }

    /// Solves one drawn domain on every level with aggregation on
    /// (`thresholds[0]`) and off (`thresholds[1]`). Any rejection rejects the
    /// whole sample so that both arms see the same domains on all levels.
    pub fn solve_all_levels(
        &self,
        stream: &mut RandomStream,
        thresholds: [f64; 2],
    ) -> Result<Vec<[IterationRecord; 2]>, SampleFailure> {
        let domain = build_domain_sample(DomainKind::Popcorn, stream, &self.constants).map_err(geometry_failure)?;
        let problem = self.problem();
        self.hierarchy
            .levels()
            .iter()
            .map(|mesh| {
                let geom = cut(&domain, mesh);
                let mut arms = [IterationRecord {
                    iterations: 0,
                    status: CgStatus::Converged,
                }; 2];
                for (arm, &threshold) in thresholds.iter().enumerate() {
                    let settings = solver_settings(&self.config, threshold);
                    let out = agfem::solve(&problem, &geom, mesh, &settings).map_err(solve_failure)?;
                    arms[arm] = IterationRecord {
                        iterations: out.iterations,
                        status: out.status,
                    };
                }
                Ok(arms)
            })
            .collect()
    }
}
