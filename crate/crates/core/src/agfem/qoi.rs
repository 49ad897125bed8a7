//! Quantities of interest evaluated on a discrete solution.

use std::io::{self, Write};

use super::space::barycentric;
use super::AgfemError;
use crate::geometry::{linear_gradient, signed_area, CellKind, CutGeometry};
use crate::mesh::MeshLevel;

/// Nodal values of a P1 solution on one level; `NaN` at inactive vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    pub level: usize,
    pub values: Vec<f64>,
}

impl DiscreteSolution {
    pub fn from_fn(mesh: &MeshLevel, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self {
            level: mesh.index,
            values: mesh.vertices.iter().map(|&x| f(x)).collect(),
        }
    }

    fn triangle_values(&self, mesh: &MeshLevel, t: usize) -> [f64; 3] {
        mesh.triangles[t].map(|v| self.values[v])
    }

    /// Writes `x y value` per active vertex.
    pub fn write_points<W: Write>(&self, mesh: &MeshLevel, mut out: W) -> io::Result<()> {
        for (x, v) in mesh.vertices.iter().zip(&self.values) {
            if v.is_finite() {
                writeln!(out, "{} {} {}", x[0], x[1], v)?;
            }
        }
        Ok(())
    }
}

/// Integration region of a subdomain average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QoiRegion {
    /// The discrete domain.
    FullDomain,
    /// The square `center ± half_width`, which must align with mesh lines.
    Box { center: [f64; 2], half_width: f64 },
}

fn piece_integral(parent: &[[f64; 2]; 3], values: [f64; 3], piece: &[[f64; 2]; 3]) -> f64 {
    let mean: f64 = piece
        .iter()
        .map(|&p| {
            let l = barycentric(parent, p);
            l[0] * values[0] + l[1] * values[1] + l[2] * values[2]
        })
        .sum::<f64>()
        / 3.0;
    signed_area(piece) * mean
}

/// Mean of `u` over the region.
pub fn subdomain_average(
    u: &DiscreteSolution,
    geom: &CutGeometry,
    mesh: &MeshLevel,
    region: QoiRegion,
) -> Result<f64, AgfemError> {
    match region {
        QoiRegion::FullDomain => {
            let mut integral = 0.0;
            let mut area = 0.0;
            for t in geom.active_triangles() {
                let coords = mesh.triangle_coords(t);
                let values = u.triangle_values(mesh, t);
                match geom.kinds[t] {
                    CellKind::Interior => {
                        integral += piece_integral(&coords, values, &coords);
                        area += signed_area(&coords);
                    }
                    _ => {
                        for piece in &geom.cut_cell(t).unwrap().volume {
                            integral += piece_integral(&coords, values, piece);
                            area += signed_area(piece);
                        }
                    }
                }
            }
            Ok(integral / area)
        }
        QoiRegion::Box { center, half_width } => {
            let lo = [center[0] - half_width, center[1] - half_width];
            let hi = [center[0] + half_width, center[1] + half_width];
            let origin = mesh.vertices[0];
            for bound in [lo, hi] {
                for d in 0..2 {
                    let k = (bound[d] - origin[d]) / mesh.h;
                    if (k - k.round()).abs() > 1e-9 {
                        return Err(AgfemError::MisalignedBox { level: mesh.index });
                    }
                }
            }
            let mut integral = 0.0;
            let mut area = 0.0;
            for t in 0..mesh.num_triangles() {
                let coords = mesh.triangle_coords(t);
                let c = [
                    (coords[0][0] + coords[1][0] + coords[2][0]) / 3.0,
                    (coords[0][1] + coords[1][1] + coords[2][1]) / 3.0,
                ];
                if !(c[0] > lo[0] && c[0] < hi[0] && c[1] > lo[1] && c[1] < hi[1]) {
                    continue;
                }
                let values = u.triangle_values(mesh, t);
                if !geom.is_active(t) || values.iter().any(|v| !v.is_finite()) {
                    return Err(AgfemError::BoxOutsideDomain { triangle: t });
                }
                integral += piece_integral(&coords, values, &coords);
                area += signed_area(&coords);
            }
            Ok(integral / area)
        }
    }
}

/// `∫_{x1 = x_min} ∂u/∂x1` using the constant gradient of the triangle on
/// each left boundary edge.
pub fn boundary_flux(u: &DiscreteSolution, geom: &CutGeometry, mesh: &MeshLevel) -> f64 {
    let n = mesh.cells_per_dir;
    (0..n)
        .map(|j| 2 * (j * n) + 1)
        .filter(|&t| geom.is_active(t))
        .map(|t| {
            let values = u.triangle_values(mesh, t);
            mesh.h * linear_gradient(&mesh.triangle_coords(t), values)[0]
        })
        .sum()
}
