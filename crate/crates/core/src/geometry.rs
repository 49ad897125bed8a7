//! Random level-set domains and their cut geometry on a background level.
//!
//! A domain sample is described by a level-set function `phi`. Internally all
//! cut computations use the *domain value* `psi = -inside_sign * phi`, which
//! is negative exactly inside the computational domain, whatever sign
//! convention the experiment uses.

use std::f64::consts::PI;
use std::io::{self, Write};

use thiserror::Error;

use crate::mesh::MeshLevel;
use crate::stochastics::{RandomStream, SamplingError};

/// Nodal values closer to zero than `SNAP_FACTOR * h` are moved to the interior side.
pub const SNAP_FACTOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("singular stretch-rotation matrix (determinant {0})")]
    SingularMatrix(f64),
    #[error("unknown domain kind '{0}'")]
    UnknownKind(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// A signed field that is negative inside the domain.
pub trait ImplicitDomain: Sync {
    fn domain_value(&self, x: [f64; 2]) -> f64;
}

impl<F> ImplicitDomain for F
where
    F: Fn([f64; 2]) -> f64 + Sync,
{
    fn domain_value(&self, x: [f64; 2]) -> f64 {
        self(x)
    }
}

/// Which sign of the level set marks the computational domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsideSign {
    Negative,
    Positive,
}

impl InsideSign {
    pub fn factor(self) -> f64 {
        match self {
            InsideSign::Negative => -1.0,
            InsideSign::Positive => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Circle,
    Popcorn,
    TwoHoles,
}

impl std::str::FromStr for DomainKind {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "circle" => Ok(Self::Circle),
            "popcorn" => Ok(Self::Popcorn),
            "two_holes" | "two-holes" => Ok(Self::TwoHoles),
            other => Err(GeometryError::UnknownKind(other.to_string())),
        }
    }
}

/// One ellipse of the popcorn level set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub radius: f64,
    /// Raw stretch parameters `A'`.
    pub raw_stretch: [f64; 2],
    pub angle: f64,
    /// `(A R)^{-1}`, row-major.
    inverse: [[f64; 2]; 2],
}

impl Ellipse {
    pub fn new(center: [f64; 2], radius: f64, raw_stretch: [f64; 2], angle: f64) -> Result<Self, GeometryError> {
        let stretch = normalized_stretch(raw_stretch);
        let inverse = invert(&mat_mul(&diag(stretch), &rotation(angle)))?;
        Ok(Self {
            center,
            radius,
            raw_stretch,
            angle,
            inverse,
        })
    }

    pub fn stretch(&self) -> [f64; 2] {
        normalized_stretch(self.raw_stretch)
    }

    pub fn level_value(&self, x: [f64; 2]) -> f64 {
        let y = [x[0] - self.center[0], x[1] - self.center[1]];
        norm(mat_vec(&self.inverse, y)) - self.radius
    }
}

/// Parameters of a popcorn sample: body 0 is the central ellipse, bodies
/// `1..=n` the protuberances centred on its boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct PopcornParams {
    pub bodies: Vec<Ellipse>,
}

impl PopcornParams {
    pub fn protuberances(&self) -> usize {
        self.bodies.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hole {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainShape {
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    Popcorn(PopcornParams),
    /// Plate minus the union of the holes.
    Holes(Vec<Hole>),
}

/// A frozen random domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetSample {
    pub shape: DomainShape,
    pub inside_sign: InsideSign,
}

impl LevelSetSample {
    pub fn circle(center: [f64; 2], radius: f64) -> Self {
        Self {
            shape: DomainShape::Circle { center, radius },
            inside_sign: InsideSign::Negative,
        }
    }

    pub fn popcorn(params: PopcornParams) -> Self {
        Self {
            shape: DomainShape::Popcorn(params),
            inside_sign: InsideSign::Negative,
        }
    }

    pub fn holes(holes: Vec<Hole>) -> Self {
        Self {
            shape: DomainShape::Holes(holes),
            inside_sign: InsideSign::Positive,
        }
    }

    /// The level-set function `phi`.
    pub fn level_value(&self, x: [f64; 2]) -> f64 {
        match &self.shape {
            DomainShape::Circle { center, radius } => norm([x[0] - center[0], x[1] - center[1]]) - radius,
            DomainShape::Popcorn(p) => p.bodies.iter().map(|e| e.level_value(x)).fold(f64::INFINITY, f64::min),
            DomainShape::Holes(holes) => holes
                .iter()
                .map(|h| norm([x[0] - h.center[0], x[1] - h.center[1]]) - h.radius)
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        self.domain_value(x) < 0.0
    }
}

impl ImplicitDomain for LevelSetSample {
    fn domain_value(&self, x: [f64; 2]) -> f64 {
        -self.inside_sign.factor() * self.level_value(x)
    }
}

/// Deterministic constants of the domain samplers.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainConstants {
    pub circle_center: [f64; 2],
    /// `(mean, std_dev, lower, upper)` of the circle radius.
    pub circle_radius: (f64, f64, f64, f64),
    pub popcorn_rate: f64,
    pub hole_radii: [f64; 2],
}

impl Default for DomainConstants {
    fn default() -> Self {
        Self {
            circle_center: [0.5, 0.5],
            circle_radius: (0.3, 0.025, 0.2, 0.4),
            popcorn_rate: 11.0,
            hole_radii: [0.2, 0.2],
        }
    }
}

/// Draws one domain sample. The draw order is fixed:
///
/// * circle: `R`.
/// * popcorn: `n`, `x0` (x then y), `rho0`, `A'_0` (2 values), `Theta_0`, then
///   for each protuberance `j = 1..=n`: `A'_j` (2 values), `Theta_j`, `y_j`
///   (one angle), `rho_j`.
/// * two holes: upper x, lower x, upper y, lower y.
pub fn build_domain_sample(
    kind: DomainKind,
    stream: &mut RandomStream,
    constants: &DomainConstants,
) -> Result<LevelSetSample, GeometryError> {
    match kind {
        DomainKind::Circle => {
            let (mean, sd, lo, hi) = constants.circle_radius;
            let radius = stream.truncated_normal(mean, sd, lo, hi, crate::stochastics::DEFAULT_REJECTION_CAP)?;
            Ok(LevelSetSample::circle(constants.circle_center, radius))
        }
        DomainKind::Popcorn => {
            let n = stream.poisson(constants.popcorn_rate) as usize;
            let x0 = [stream.uniform(0.4, 0.6), stream.uniform(0.4, 0.6)];
            let rho0 = stream.uniform(0.1, 0.2);
            let stretch0 = [stream.uniform(0.8, 1.3), stream.uniform(0.8, 1.3)];
            let theta0 = stream.uniform(0.0, 2.0 * PI);
            let central = Ellipse::new(x0, rho0, stretch0, theta0)?;
            let boundary_map = mat_mul(&diag(central.stretch()), &rotation(theta0));
            let mut bodies = Vec::with_capacity(n + 1);
            bodies.push(central);
            for _ in 0..n {
                let stretch = [stream.uniform(0.8, 1.3), stream.uniform(0.8, 1.3)];
                let theta = stream.uniform(0.0, 2.0 * PI);
                let y = stream.unit_circle();
                let rho = stream.uniform(0.03, 0.1);
                let offset = mat_vec(&boundary_map, y);
                let center = [x0[0] + rho0 * offset[0], x0[1] + rho0 * offset[1]];
                bodies.push(Ellipse::new(center, rho, stretch, theta)?);
            }
            Ok(LevelSetSample::popcorn(PopcornParams { bodies }))
        }
        DomainKind::TwoHoles => {
            let x_upper = stream.uniform(0.23, 0.77);
            let x_lower = stream.uniform(0.23, 0.77);
            let y_upper = stream.uniform(0.70, 0.76);
            let y_lower = stream.uniform(0.24, 0.30);
            Ok(LevelSetSample::holes(vec![
                Hole {
                    center: [x_upper, y_upper],
                    radius: constants.hole_radii[0],
                },
                Hole {
                    center: [x_lower, y_lower],
                    radius: constants.hole_radii[1],
                },
            ]))
        }
    }
}

/// Diagonal entries `A'_i / |A'|`.
pub fn normalized_stretch(raw: [f64; 2]) -> [f64; 2] {
    let n = norm(raw);
    [raw[0] / n, raw[1] / n]
}

/// Counter-clockwise rotation by `angle`.
pub fn rotation(angle: f64) -> [[f64; 2]; 2] {
    let (s, c) = angle.sin_cos();
    [[c, -s], [s, c]]
}

/// `|(A R)^{-1} y|` for a diagonal stretch `A` and rotation `R`.
pub fn popcorn_norm(y: [f64; 2], stretch: [f64; 2], rotation: &[[f64; 2]; 2]) -> Result<f64, GeometryError> {
    let inv = invert(&mat_mul(&diag(stretch), rotation))?;
    Ok(norm(mat_vec(&inv, y)))
}

fn diag(d: [f64; 2]) -> [[f64; 2]; 2] {
    [[d[0], 0.0], [0.0, d[1]]]
}

fn mat_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn mat_vec(a: &[[f64; 2]; 2], y: [f64; 2]) -> [f64; 2] {
    [a[0][0] * y[0] + a[0][1] * y[1], a[1][0] * y[0] + a[1][1] * y[1]]
}

fn invert(a: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2], GeometryError> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(det.abs() > 1e-14 * scale * scale) {
        return Err(GeometryError::SingularMatrix(det));
    }
    Ok([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Domain values at every vertex of `mesh`, with near-zero values snapped to
/// `-SNAP_FACTOR * h`.
pub fn interpolate_levelset(domain: &dyn ImplicitDomain, mesh: &MeshLevel) -> Vec<f64> {
    let snap = SNAP_FACTOR * mesh.h;
    mesh.vertices
        .iter()
        .map(|&x| {
            let v = domain.domain_value(x);
            if v.abs() < snap {
                -snap
            } else {
                v
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Interior,
    Cut,
    Exterior,
}

/// A piece of the discrete boundary inside one cut triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
    /// Unit normal pointing out of the domain.
    pub normal: [f64; 2],
}

impl Segment {
    pub fn length(&self) -> f64 {
        norm([self.b[0] - self.a[0], self.b[1] - self.a[1]])
    }
}

/// Integration meshes of one cut triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct CutCell {
    pub triangle: usize,
    /// Sub-triangles covering `K ∩ D`, counter-clockwise.
    pub volume: Vec<[[f64; 2]; 3]>,
    pub segment: Segment,
}

/// Classification and cell-local integration meshes of one domain sample on one level.
#[derive(Debug, Clone)]
pub struct CutGeometry {
    pub level: usize,
    /// Snapped nodal domain values.
    pub nodal: Vec<f64>,
    pub kinds: Vec<CellKind>,
    /// `|K ∩ D| / |K|` per triangle.
    pub volume_ratio: Vec<f64>,
    pub cuts: Vec<CutCell>,
    cut_slot: Vec<u32>,
}

const NO_CUT: u32 = u32::MAX;

impl CutGeometry {
    pub fn cut_cell(&self, triangle: usize) -> Option<&CutCell> {
        match self.cut_slot[triangle] {
            NO_CUT => None,
            slot => Some(&self.cuts[slot as usize]),
        }
    }

    pub fn is_active(&self, triangle: usize) -> bool {
        self.kinds[triangle] != CellKind::Exterior
    }

    pub fn active_triangles(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.kinds.len()).filter(move |&t| self.is_active(t))
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    /// Area of the discrete domain.
    pub fn domain_area(&self, mesh: &MeshLevel) -> f64 {
        self.volume_ratio.iter().sum::<f64>() * mesh.triangle_area()
    }

    /// Length of the discrete boundary.
    pub fn boundary_length(&self) -> f64 {
        self.cuts.iter().map(|c| c.segment.length()).sum()
    }

    /// Writes one polygon per line (vertex count, then coordinate pairs):
    /// interior triangles followed by the volume pieces of cut triangles.
    pub fn write_polygons<W: Write>(&self, mesh: &MeshLevel, mut out: W) -> io::Result<()> {
        let mut emit = |tri: &[[f64; 2]; 3]| -> io::Result<()> {
            write!(out, "3")?;
            for p in tri {
                write!(out, " {} {}", p[0], p[1])?;
            }
            writeln!(out)
        };
        for (t, kind) in self.kinds.iter().enumerate() {
            if *kind == CellKind::Interior {
                emit(&mesh.triangle_coords(t))?;
            }
        }
        for cut in &self.cuts {
            for tri in &cut.volume {
                emit(tri)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn signed_area(t: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0]))
}

/// Gradient of the linear interpolant of `values` on triangle `t`.
pub(crate) fn linear_gradient(t: &[[f64; 2]; 3], values: [f64; 3]) -> [f64; 2] {
    let two_area = 2.0 * signed_area(t);
    let mut g = [0.0; 2];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[0] += values[i] * (t[j][1] - t[k][1]) / two_area;
        g[1] += values[i] * (t[k][0] - t[j][0]) / two_area;
    }
    g
}

/// Marching triangles on the nodal domain values of one level.
pub fn marching_simplices(nodal: Vec<f64>, mesh: &MeshLevel) -> CutGeometry {
    let nt = mesh.num_triangles();
    let mut kinds = Vec::with_capacity(nt);
    let mut volume_ratio = Vec::with_capacity(nt);
    let mut cut_slot = vec![NO_CUT; nt];
    let mut cuts = Vec::new();
    let cell_area = mesh.triangle_area();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let values = [nodal[tri[0]], nodal[tri[1]], nodal[tri[2]]];
        let inside = values.map(|v| v < 0.0);
        match inside.iter().filter(|&&b| b).count() {
            3 => {
                kinds.push(CellKind::Interior);
                volume_ratio.push(1.0);
            }
            0 => {
                kinds.push(CellKind::Exterior);
                volume_ratio.push(0.0);
            }
            _ => {
                let coords = mesh.triangle_coords(t);
                let cut = cut_triangle(t, &coords, values);
                let area: f64 = cut.volume.iter().map(signed_area).sum();
                kinds.push(CellKind::Cut);
                volume_ratio.push(area / cell_area);
                cut_slot[t] = cuts.len() as u32;
                cuts.push(cut);
            }
        }
    }
    CutGeometry {
        level: mesh.index,
        nodal,
        kinds,
        volume_ratio,
        cuts,
        cut_slot,
    }
}

fn cut_triangle(triangle: usize, coords: &[[f64; 2]; 3], values: [f64; 3]) -> CutCell {
    // Walk the boundary counter-clockwise collecting the inside polygon.
    let mut polygon: Vec<[f64; 2]> = Vec::with_capacity(4);
    let mut crossings: Vec<[f64; 2]> = Vec::with_capacity(2);
    for i in 0..3 {
        let j = (i + 1) % 3;
        if values[i] < 0.0 {
            polygon.push(coords[i]);
        }
        if (values[i] < 0.0) != (values[j] < 0.0) {
            let t = values[i] / (values[i] - values[j]);
            let p = [
                coords[i][0] + t * (coords[j][0] - coords[i][0]),
                coords[i][1] + t * (coords[j][1] - coords[i][1]),
            ];
            polygon.push(p);
            crossings.push(p);
        }
    }
    let volume = (1..polygon.len() - 1)
        .map(|k| [polygon[0], polygon[k], polygon[k + 1]])
        .collect();
    let g = linear_gradient(coords, values);
    let gn = norm(g);
    CutCell {
        triangle,
        volume,
        segment: Segment {
            a: crossings[0],
            b: crossings[1],
            normal: [g[0] / gn, g[1] / gn],
        },
    }
}
