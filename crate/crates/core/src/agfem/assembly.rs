//! Cell-wise Nitsche forms on cut geometry, folded into the aggregated space.

use std::sync::Arc;

use super::space::{barycentric, AggregatedSpace, DofRole};
use super::sparse::CsrMatrix;
use super::AgfemError;
use crate::geometry::{linear_gradient, signed_area, CellKind, CutGeometry};
use crate::mesh::{MeshLevel, Side};

pub type ScalarField = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

pub fn field<F>(f: F) -> ScalarField
where
    F: Fn([f64; 2]) -> f64 + Send + Sync + 'static,
{
    Arc::new(f)
}

pub fn constant(c: f64) -> ScalarField {
    Arc::new(move |_| c)
}

/// Condition on the embedded (level-set) boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddedCondition {
    /// Weak Dirichlet `u = u0` via Nitsche's method.
    NitscheDirichlet,
    /// Homogeneous Neumann; nothing is assembled on the boundary.
    NaturalZero,
}

/// Condition on a body-fitted side of the bounding box.
#[derive(Clone)]
pub enum SideCondition {
    NaturalZero,
    StrongDirichlet(ScalarField),
}

impl std::fmt::Debug for SideCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SideCondition::NaturalZero => write!(f, "NaturalZero"),
            SideCondition::StrongDirichlet(_) => write!(f, "StrongDirichlet(..)"),
        }
    }
}

/// Mesh-size scaling of the Nitsche penalty `tau_K = beta_N * mean(k) / h^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyScaling {
    /// `p = 1`.
    InverseH,
    /// `p = 2`.
    InverseHSquared,
}

impl PenaltyScaling {
    pub fn factor(self, h: f64) -> f64 {
        match self {
            PenaltyScaling::InverseH => 1.0 / h,
            PenaltyScaling::InverseHSquared => 1.0 / (h * h),
        }
    }
}

/// Data of `-div(k grad u) = f` with its boundary conditions.
#[derive(Clone)]
pub struct ProblemSpec {
    pub diffusion: ScalarField,
    pub source: ScalarField,
    /// Dirichlet data on the embedded boundary.
    pub dirichlet: ScalarField,
    pub embedded: EmbeddedCondition,
    /// Indexed by [`Side::index`].
    pub sides: [SideCondition; 4],
    pub nitsche_factor: f64,
    pub penalty_scaling: PenaltyScaling,
    pub quadrature_degree: usize,
}

impl ProblemSpec {
    /// Unit diffusion, Nitsche Dirichlet on the embedded boundary, natural
    /// conditions on the box.
    pub fn embedded_dirichlet(source: ScalarField, dirichlet: ScalarField) -> Self {
        Self {
            diffusion: constant(1.0),
            source,
            dirichlet,
            embedded: EmbeddedCondition::NitscheDirichlet,
            sides: [
                SideCondition::NaturalZero,
                SideCondition::NaturalZero,
                SideCondition::NaturalZero,
                SideCondition::NaturalZero,
            ],
            nitsche_factor: 100.0,
            penalty_scaling: PenaltyScaling::InverseH,
            quadrature_degree: 2,
        }
    }

    pub fn with_side(mut self, side: Side, condition: SideCondition) -> Self {
        self.sides[side.index()] = condition;
        self
    }
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("embedded", &self.embedded)
            .field("sides", &self.sides)
            .field("nitsche_factor", &self.nitsche_factor)
            .field("penalty_scaling", &self.penalty_scaling)
            .field("quadrature_degree", &self.quadrature_degree)
            .finish_non_exhaustive()
    }
}

/// Symmetric triangle rule in barycentric coordinates; weights sum to one.
pub struct TriangleRule {
    pub degree: usize,
    pub points: &'static [([f64; 3], f64)],
}

const CENTROID: [([f64; 3], f64); 1] = [([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1.0)];

const THREE_POINT: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

const A4: f64 = 0.445_948_490_915_965;
const B4: f64 = 0.091_576_213_509_771;
const SIX_POINT: [([f64; 3], f64); 6] = [
    ([1.0 - 2.0 * A4, A4, A4], 0.223_381_589_678_011),
    ([A4, 1.0 - 2.0 * A4, A4], 0.223_381_589_678_011),
    ([A4, A4, 1.0 - 2.0 * A4], 0.223_381_589_678_011),
    ([1.0 - 2.0 * B4, B4, B4], 0.109_951_743_655_322),
    ([B4, 1.0 - 2.0 * B4, B4], 0.109_951_743_655_322),
    ([B4, B4, 1.0 - 2.0 * B4], 0.109_951_743_655_322),
];

const A5: f64 = 0.470_142_064_105_115;
const B5: f64 = 0.101_286_507_323_456;
const SEVEN_POINT: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([1.0 - 2.0 * A5, A5, A5], 0.132_394_152_788_506),
    ([A5, 1.0 - 2.0 * A5, A5], 0.132_394_152_788_506),
    ([A5, A5, 1.0 - 2.0 * A5], 0.132_394_152_788_506),
    ([1.0 - 2.0 * B5, B5, B5], 0.125_939_180_544_827),
    ([B5, 1.0 - 2.0 * B5, B5], 0.125_939_180_544_827),
    ([B5, B5, 1.0 - 2.0 * B5], 0.125_939_180_544_827),
];

/// The cheapest available rule exact for polynomials of `degree`.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule, AgfemError> {
    Ok(match degree {
        0 | 1 => TriangleRule {
            degree: 1,
            points: &CENTROID,
        },
        2 => TriangleRule {
            degree: 2,
            points: &THREE_POINT,
        },
        3 | 4 => TriangleRule {
            degree: 4,
            points: &SIX_POINT,
        },
        5 => TriangleRule {
            degree: 5,
            points: &SEVEN_POINT,
        },
        d => return Err(AgfemError::UnsupportedQuadrature(d)),
    })
}

/// Two-point Gauss-Legendre on [0, 1].
const GAUSS2: [(f64, f64); 2] = [(0.211_324_865_405_187_1, 0.5), (0.788_675_134_594_812_9, 0.5)];

/// The assembled system over the unknown free DOFs (free DOFs minus strong
/// Dirichlet DOFs).
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub symmetric: bool,
    /// Free index of each unknown.
    pub unknown_free: Vec<usize>,
    /// Prescribed value per free index, if it lies on a strong Dirichlet side.
    pub dirichlet: Vec<Option<f64>>,
}

impl LinearSystem {
    pub fn num_unknowns(&self) -> usize {
        self.unknown_free.len()
    }

    /// Values at all free DOFs from the unknowns.
    pub fn free_values(&self, unknowns: &[f64]) -> Vec<f64> {
        let mut values: Vec<f64> = self.dirichlet.iter().map(|d| d.unwrap_or(0.0)).collect();
        for (u, &f) in self.unknown_free.iter().enumerate() {
            values[f] = unknowns[u];
        }
        values
    }

    /// `|A x - b| / |b|`.
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; x.len()];
        self.matrix.matvec(x, &mut ax);
        let r: f64 = ax.iter().zip(&self.rhs).map(|(a, b)| (a - b).powi(2)).sum();
        let b: f64 = self.rhs.iter().map(|b| b * b).sum();
        if b == 0.0 {
            r.sqrt()
        } else {
            (r / b).sqrt()
        }
    }
}

struct LocalSystem {
    matrix: [[f64; 3]; 3],
    rhs: [f64; 3],
}

fn local_system(
    problem: &ProblemSpec,
    rule: &TriangleRule,
    coords: &[[f64; 2]; 3],
    pieces: &[[[f64; 2]; 3]],
    segment: Option<&crate::geometry::Segment>,
    h: f64,
) -> Result<LocalSystem, AgfemError> {
    let grads = [0, 1, 2].map(|i| {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        linear_gradient(coords, e)
    });
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    let mut k_integral = 0.0;
    let mut area = 0.0;
    for piece in pieces {
        let piece_area = signed_area(piece);
        for &(bary, w) in rule.points {
            let x = [
                bary[0] * piece[0][0] + bary[1] * piece[1][0] + bary[2] * piece[2][0],
                bary[0] * piece[0][1] + bary[1] * piece[1][1] + bary[2] * piece[2][1],
            ];
            let weight = w * piece_area;
            let k = (problem.diffusion)(x);
            if !(k > 0.0) {
                return Err(AgfemError::NonPositiveDiffusion { x, value: k });
            }
            let f = (problem.source)(x);
            let shape = barycentric(coords, x);
            for i in 0..3 {
                for j in i..3 {
                    a[i][j] += weight * k * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                }
                b[i] += weight * f * shape[i];
            }
            k_integral += weight * k;
        }
        area += piece_area;
    }
    if let (Some(seg), EmbeddedCondition::NitscheDirichlet) = (segment, problem.embedded) {
        let k_mean = k_integral / area;
        let tau = problem.nitsche_factor * k_mean * problem.penalty_scaling.factor(h);
        let len = seg.length();
        let n = seg.normal;
        let dn = grads.map(|g| n[0] * g[0] + n[1] * g[1]);
        for &(s, w) in &GAUSS2 {
            let x = [
                seg.a[0] + s * (seg.b[0] - seg.a[0]),
                seg.a[1] + s * (seg.b[1] - seg.a[1]),
            ];
            let weight = w * len;
            let k = (problem.diffusion)(x);
            let g = (problem.dirichlet)(x);
            let shape = barycentric(coords, x);
            for i in 0..3 {
                for j in i..3 {
                    a[i][j] += weight * (tau * shape[i] * shape[j] - k * (shape[i] * dn[j] + shape[j] * dn[i]));
                }
                b[i] += weight * (tau * g * shape[i] - k * dn[i] * g);
            }
        }
    }
    for i in 0..3 {
        for j in 0..i {
            a[i][j] = a[j][i];
        }
    }
    Ok(LocalSystem { matrix: a, rhs: b })
}

/// Assembles the aggregated Nitsche system. Constrained DOFs are eliminated
/// by congruence and strong Dirichlet DOFs by symmetric elimination.
pub fn assemble(
    problem: &ProblemSpec,
    geom: &CutGeometry,
    mesh: &MeshLevel,
    space: &AggregatedSpace,
) -> Result<LinearSystem, AgfemError> {
    let rule = triangle_rule(problem.quadrature_degree)?;
    let nfree = space.num_free();
    let mut dirichlet: Vec<Option<f64>> = vec![None; nfree];
    for (f, &dof) in space.free_dofs.iter().enumerate() {
        let v = space.layout.vertex_of_dof[dof];
        for side in Side::ALL {
            if let SideCondition::StrongDirichlet(g) = &problem.sides[side.index()] {
                if mesh.vertex_on_side(v, side) {
                    dirichlet[f] = Some(g(mesh.vertices[v]));
                    break;
                }
            }
        }
    }
    let mut unknown_of_free = vec![None; nfree];
    let mut unknown_free = Vec::with_capacity(nfree);
    for f in 0..nfree {
        if dirichlet[f].is_none() {
            unknown_of_free[f] = Some(unknown_free.len());
            unknown_free.push(f);
        }
    }
    let n = unknown_free.len();
    if n == 0 {
        return Err(AgfemError::EmptySystem);
    }

    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(12 * n);
    let mut rhs = vec![0.0; n];
    for t in geom.active_triangles() {
        let coords = mesh.triangle_coords(t);
        let (pieces, segment) = match geom.kinds[t] {
            CellKind::Interior => (std::slice::from_ref(&coords), None),
            _ => {
                let cut = geom.cut_cell(t).expect("cut triangles carry integration meshes");
                (cut.volume.as_slice(), Some(&cut.segment))
            }
        };
        let local = local_system(problem, &rule, &coords, pieces, segment, mesh.h)?;
        let dofs = mesh.triangles[t].map(|v| space.layout.dof_of_vertex[v].unwrap());
        for a in 0..3 {
            for &(fi, ca) in space.expansion(dofs[a]).terms() {
                let Some(row) = unknown_of_free[fi] else { continue };
                rhs[row] += ca * local.rhs[a];
                for b in 0..3 {
                    for &(fj, cb) in space.expansion(dofs[b]).terms() {
                        let v = (ca * cb) * local.matrix[a][b];
                        match unknown_of_free[fj] {
                            Some(col) if row <= col => triplets.push((row, col, v)),
                            Some(_) => {}
                            None => rhs[row] -= v * dirichlet[fj].unwrap(),
                        }
                    }
                }
            }
        }
    }
    let matrix = CsrMatrix::from_upper_triplets(n, triplets);
    if !matrix.all_finite() || !rhs.iter().all(|v| v.is_finite()) {
        return Err(AgfemError::NonFinite);
    }
    debug_assert!(space.roles.iter().filter(|r| matches!(r, DofRole::Free(_))).count() == nfree);
    Ok(LinearSystem {
        matrix,
        rhs,
        symmetric: true,
        unknown_free,
        dirichlet,
    })
}
