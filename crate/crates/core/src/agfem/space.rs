//! The aggregated P1 space: free DOFs plus cell-local extrapolation constraints.

use super::aggregation::AggregateMap;
use crate::geometry::CutGeometry;
use crate::mesh::{MeshLevel, P1SpaceLayout};

/// A DOF value as a linear combination of at most three free DOFs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expansion {
    len: u8,
    terms: [(usize, f64); 3],
}

impl Expansion {
    fn free(index: usize) -> Self {
        Self {
            len: 1,
            terms: [(index, 1.0), (0, 0.0), (0, 0.0)],
        }
    }

    pub fn terms(&self) -> &[(usize, f64)] {
        &self.terms[..self.len as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofRole {
    Free(usize),
    Constrained,
}

#[derive(Debug, Clone)]
pub struct AggregatedSpace {
    pub layout: P1SpaceLayout,
    pub roles: Vec<DofRole>,
    /// DOF of each free index.
    pub free_dofs: Vec<usize>,
    expansions: Vec<Expansion>,
}

impl AggregatedSpace {
    pub fn num_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn num_constrained(&self) -> usize {
        self.roles.len() - self.free_dofs.len()
    }

    pub fn expansion(&self, dof: usize) -> &Expansion {
        &self.expansions[dof]
    }

    /// `(dof, [(free index, coefficient)])` for every constrained DOF.
    pub fn constraints(&self) -> impl Iterator<Item = (usize, &[(usize, f64)])> + '_ {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == DofRole::Constrained)
            .map(|(d, _)| (d, self.expansions[d].terms()))
    }

    /// Values at every DOF from the values at the free DOFs.
    pub fn extend(&self, free_values: &[f64]) -> Vec<f64> {
        self.expansions
            .iter()
            .map(|e| e.terms().iter().map(|&(f, c)| c * free_values[f]).sum())
            .collect()
    }
}

/// Barycentric coordinates of `x` with respect to triangle `t`.
pub(crate) fn barycentric(t: &[[f64; 2]; 3], x: [f64; 2]) -> [f64; 3] {
    let det = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
    let l1 = ((x[0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (x[1] - t[0][1])) / det;
    let l2 = ((t[1][0] - t[0][0]) * (x[1] - t[0][1]) - (x[0] - t[0][0]) * (t[1][1] - t[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// A DOF is free iff it touches a triangle that is not aggregated; every
/// other active DOF is the P1 extrapolation of the root of its
/// lowest-indexed owning triangle.
pub fn build_constraints(agg: &AggregateMap, geom: &CutGeometry, mesh: &MeshLevel) -> AggregatedSpace {
    let layout = P1SpaceLayout::new(mesh, geom.active_triangles());
    let ndofs = layout.num_dofs();
    let mut is_free = vec![false; ndofs];
    let mut owner: Vec<Option<usize>> = vec![None; ndofs];
    for t in geom.active_triangles() {
        for &v in &mesh.triangles[t] {
            let dof = layout.dof_of_vertex[v].unwrap();
            if agg.aggregated[t] {
                owner[dof].get_or_insert(t);
            } else {
                is_free[dof] = true;
            }
        }
    }
    let mut roles = Vec::with_capacity(ndofs);
    let mut free_dofs = Vec::new();
    for (dof, &free) in is_free.iter().enumerate() {
        if free {
            roles.push(DofRole::Free(free_dofs.len()));
            free_dofs.push(dof);
        } else {
            roles.push(DofRole::Constrained);
        }
    }
    let expansions = (0..ndofs)
        .map(|dof| match roles[dof] {
            DofRole::Free(f) => Expansion::free(f),
            DofRole::Constrained => {
                let cell = owner[dof].expect("constrained DOFs belong to an aggregated triangle");
                let root = agg.root[cell].expect("aggregated triangles have a root");
                let coeffs = barycentric(&mesh.triangle_coords(root), mesh.vertices[layout.vertex_of_dof[dof]]);
                let mut terms = [(0, 0.0); 3];
                for (k, &v) in mesh.triangles[root].iter().enumerate() {
                    let root_dof = layout.dof_of_vertex[v].unwrap();
                    let DofRole::Free(f) = roles[root_dof] else {
                        unreachable!("root vertices touch an interior triangle")
                    };
                    terms[k] = (f, coeffs[k]);
                }
                Expansion { len: 3, terms }
            }
        })
        .collect();
    AggregatedSpace {
        layout,
        roles,
        free_dofs,
        expansions,
    }
}
