//! Cartesian background meshes over a bounding box.
//!
//! Level `l` has `n0 * s^l` square cells per direction. Every quad is split
//! into two counter-clockwise triangles along its lower-left to upper-right
//! diagonal:
//!
//! ```text
//!  v01 ---- v11
//!   |  T1  / |
//!   |    /   |
//!   |  /  T0 |
//!  v00 ---- v10
//! ```
//!
//! Quad `(i, j)` has index `j * n + i`; its triangles are `2q` (`T0`) and
//! `2q + 1` (`T1`). Vertex `(i, j)` has index `j * (n + 1) + i`.

use thiserror::Error;

/// Default cap on the number of quads of the finest level.
pub const DEFAULT_CELL_CAP: usize = 1 << 24;

const BOX_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("invalid hierarchy parameters: {0}")]
    InvalidParameters(String),
    #[error("level {level} would have {cells} cells, above the cap of {cap}")]
    TooManyCells { level: usize, cells: u128, cap: usize },
    #[error("level {0} is not part of the hierarchy")]
    NoSuchLevel(usize),
    #[error("point ({x}, {y}) lies outside the bounding box")]
    OutsideBox { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl BoundingBox {
    pub fn new(lower: [f64; 2], upper: [f64; 2]) -> Result<Self, MeshError> {
        if !(0..2).all(|d| lower[d].is_finite() && upper[d].is_finite() && lower[d] < upper[d]) {
            return Err(MeshError::InvalidBox(format!(
                "lower {lower:?} must be componentwise below upper {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit() -> Self {
        Self {
            lower: [0.0, 0.0],
            upper: [1.0, 1.0],
        }
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.upper[0] - self.lower[0], self.upper[1] - self.lower[1]]
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        (0..2).all(|d| p[d] >= self.lower[d] - tol && p[d] <= self.upper[d] + tol)
    }
}

/// The four sides of the bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
            Side::Bottom => 2,
            Side::Top => 3,
        }
    }
}

/// One level of the background hierarchy.
#[derive(Debug, Clone)]
pub struct MeshLevel {
    pub index: usize,
    /// Cells per direction.
    pub cells_per_dir: usize,
    /// Cell size (square cells).
    pub h: f64,
    lower: [f64; 2],
    pub vertices: Vec<[f64; 2]>,
    pub quads: Vec<[usize; 4]>,
    pub triangles: Vec<[usize; 3]>,
    /// `neighbors[t][k]` is the triangle across the edge opposite local vertex `k`.
    pub neighbors: Vec<[Option<usize>; 3]>,
}

impl MeshLevel {
    fn build(index: usize, bbox: &BoundingBox, n: usize) -> Self {
        let h = bbox.extent()[0] / n as f64;
        let np = n + 1;
        let vid = |i: usize, j: usize| j * np + i;
        let coord = |k: usize, d: usize| {
            if k == n {
                bbox.upper[d]
            } else {
                bbox.lower[d] + k as f64 * h
            }
        };
        let mut vertices = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                vertices.push([coord(i, 0), coord(j, 1)]);
            }
        }
        let mut quads = Vec::with_capacity(n * n);
        let mut triangles = Vec::with_capacity(2 * n * n);
        let mut neighbors = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v11, v01) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                quads.push([v00, v10, v11, v01]);
                let q = j * n + i;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
                let right = (i + 1 < n).then(|| 2 * (q + 1) + 1);
                let below = (j > 0).then(|| 2 * (q - n) + 1);
                let above = (j + 1 < n).then(|| 2 * (q + n));
                let left = (i > 0).then(|| 2 * (q - 1));
                neighbors.push([right, Some(2 * q + 1), below]);
                neighbors.push([above, left, Some(2 * q)]);
            }
        }
        Self {
            index,
            cells_per_dir: n,
            h,
            lower: bbox.lower,
            vertices,
            quads,
            triangles,
            neighbors,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Grid indices `(i, j)` of a vertex.
    pub fn vertex_grid_index(&self, v: usize) -> (usize, usize) {
        let np = self.cells_per_dir + 1;
        (v % np, v / np)
    }

    pub fn vertex_on_side(&self, v: usize, side: Side) -> bool {
        let (i, j) = self.vertex_grid_index(v);
        let n = self.cells_per_dir;
        match side {
            Side::Left => i == 0,
            Side::Right => i == n,
            Side::Bottom => j == 0,
            Side::Top => j == n,
        }
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self) -> f64 {
        0.5 * self.h * self.h
    }

    /// The triangle containing `p`. Points on shared edges or vertices map to
    /// the lowest-indexed triangle that contains them.
    pub fn triangle_of(&self, p: [f64; 2]) -> Result<usize, MeshError> {
        let n = self.cells_per_dir;
        let upper = [self.vertices[n][0], self.vertices[self.vertices.len() - 1][1]];
        let inside = (0..2).all(|d| p[d] >= self.lower[d] - BOX_TOLERANCE && p[d] <= upper[d] + BOX_TOLERANCE);
        if !inside {
            return Err(MeshError::OutsideBox { x: p[0], y: p[1] });
        }
        // Local coordinates in cell units; a point on a cell line belongs to
        // the lower cell, hence ceil - 1.
        let cell = |d: usize| -> (usize, f64) {
            let xi = (p[d] - self.lower[d]) / self.h;
            let k = (xi.ceil() as i64 - 1).clamp(0, n as i64 - 1) as usize;
            (k, (xi - k as f64).clamp(0.0, 1.0))
        };
        let (i, xi) = cell(0);
        let (j, eta) = cell(1);
        let q = j * n + i;
        Ok(if xi >= eta { 2 * q } else { 2 * q + 1 })
    }
}

/// Nested uniform Cartesian meshes `T_0, ..., T_L`.
#[derive(Debug, Clone)]
pub struct BackgroundHierarchy {
    pub bbox: BoundingBox,
    pub n0: usize,
    pub refinement: usize,
    levels: Vec<MeshLevel>,
}

impl BackgroundHierarchy {
    pub fn build(bbox: BoundingBox, n0: usize, finest: usize, refinement: usize) -> Result<Self, MeshError> {
        Self::build_with_cap(bbox, n0, finest, refinement, DEFAULT_CELL_CAP)
    }

    pub fn build_with_cap(
        bbox: BoundingBox,
        n0: usize,
        finest: usize,
        refinement: usize,
        cell_cap: usize,
    ) -> Result<Self, MeshError> {
        if n0 < 1 || refinement < 2 {
            return Err(MeshError::InvalidParameters(format!(
                "need n0 >= 1 and s >= 2, got n0 = {n0}, s = {refinement}"
            )));
        }
        let [wx, wy] = bbox.extent();
        if ((wx - wy) / wx).abs() > 1e-12 {
            return Err(MeshError::InvalidBox(format!(
                "square cells require a square box, got extents {wx} x {wy}"
            )));
        }
        let mut per_dir = Vec::with_capacity(finest + 1);
        let mut n = n0 as u128;
        for level in 0..=finest {
            let cells = n * n;
            if cells > cell_cap as u128 {
                return Err(MeshError::TooManyCells {
                    level,
                    cells,
                    cap: cell_cap,
                });
            }
            per_dir.push(n as usize);
            n *= refinement as u128;
        }
        let levels = per_dir
            .iter()
            .enumerate()
            .map(|(l, &n)| MeshLevel::build(l, &bbox, n))
            .collect();
        Ok(Self {
            bbox,
            n0,
            refinement,
            levels,
        })
    }

    pub fn finest_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, l: usize) -> Result<&MeshLevel, MeshError> {
        self.levels.get(l).ok_or(MeshError::NoSuchLevel(l))
    }

    pub fn levels(&self) -> &[MeshLevel] {
        &self.levels
    }

    pub fn h(&self, l: usize) -> f64 {
        self.bbox.extent()[0] / self.n0 as f64 / (self.refinement as f64).powi(l as i32)
    }

    pub fn triangle_of(&self, p: [f64; 2], level: usize) -> Result<usize, MeshError> {
        self.level(level)?.triangle_of(p)
    }
}

/// DOF numbering of the P1 space restricted to a set of active triangles.
#[derive(Debug, Clone)]
pub struct P1SpaceLayout {
    pub level: usize,
    /// `dof_of_vertex[v]` is `Some(dof)` for vertices of active triangles.
    pub dof_of_vertex: Vec<Option<usize>>,
    pub vertex_of_dof: Vec<usize>,
}

impl P1SpaceLayout {
    /// Numbers the vertices touched by `active` triangles in ascending vertex order.
    pub fn new(mesh: &MeshLevel, active: impl IntoIterator<Item = usize>) -> Self {
        let mut touched = vec![false; mesh.num_vertices()];
        for t in active {
            for &v in &mesh.triangles[t] {
                touched[v] = true;
            }
        }
        let mut dof_of_vertex = vec![None; touched.len()];
        let mut vertex_of_dof = Vec::new();
        for (v, &hit) in touched.iter().enumerate() {
            if hit {
                dof_of_vertex[v] = Some(vertex_of_dof.len());
                vertex_of_dof.push(v);
            }
        }
        Self {
            level: mesh.index,
            dof_of_vertex,
            vertex_of_dof,
        }
    }

    pub fn num_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn unit(n0: usize, levels: usize) -> BackgroundHierarchy {
        BackgroundHierarchy::build(BoundingBox::unit(), n0, levels, 2).unwrap()
    }

    #[test]
    fn counts_match_closed_forms() {
        let hier = unit(8, 5);
        let fine = hier.level(5).unwrap();
        assert_eq!(fine.quads.len(), 65536);
        assert_eq!(fine.num_triangles(), 131072);
        for (l, level) in hier.levels().iter().enumerate() {
            let n = 8 * 2usize.pow(l as u32);
            assert_eq!(level.quads.len(), n * n);
            assert_eq!(level.num_triangles(), 2 * n * n);
            assert_eq!(level.num_vertices(), (n + 1) * (n + 1));
        }
    }

    #[test]
    fn single_cell() {
        let hier = unit(1, 0);
        let l0 = hier.level(0).unwrap();
        assert_eq!((l0.quads.len(), l0.num_triangles(), l0.num_vertices()), (1, 2, 4));
    }

    #[test]
    fn cell_size() {
        let hier = unit(8, 3);
        assert_eq!(hier.h(3), 0.015625);
        assert_eq!(hier.level(3).unwrap().h, 0.015625);
    }

    #[test]
    fn cell_cap_is_enforced() {
        let err = BackgroundHierarchy::build_with_cap(BoundingBox::unit(), 8, 5, 2, 1000).unwrap_err();
        assert!(matches!(err, MeshError::TooManyCells { level: 2, .. }));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(BackgroundHierarchy::build(BoundingBox::unit(), 0, 1, 2).is_err());
        assert!(BackgroundHierarchy::build(BoundingBox::unit(), 4, 1, 1).is_err());
        assert!(BoundingBox::new([0.0, 0.0], [0.0, 1.0]).is_err());
    }

    #[test]
    fn locate_points() {
        let hier = unit(8, 0);
        let t = hier.triangle_of([0.5 + 1e-3, 0.5 + 2e-3], 0).unwrap();
        assert_eq!(t / 2, 4 * 8 + 4);
        assert_eq!(hier.triangle_of([0.0, 0.0], 0).unwrap(), 0);
        assert!(hier.triangle_of([1.5, 0.5], 0).is_err());
        assert!(hier.triangle_of([0.5, -0.1], 0).is_err());
    }

    fn contains(tri: [[f64; 2]; 3], p: [f64; 2], tol: f64) -> bool {
        let cross =
            |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        (0..3).all(|k| cross(tri[k], tri[(k + 1) % 3], p) >= -tol)
    }

    #[test]
    fn located_triangle_is_lowest_containing_one() {
        let hier = unit(4, 0);
        let level = hier.level(0).unwrap();
        let h = level.h;
        for a in 0..=8 {
            for b in 0..=8 {
                let p = [a as f64 * h / 2.0, b as f64 * h / 2.0];
                let expected = (0..level.num_triangles())
                    .find(|&t| contains(level.triangle_coords(t), p, 1e-14))
                    .unwrap();
                assert_eq!(level.triangle_of(p).unwrap(), expected, "point {p:?}");
            }
        }
    }

    #[test]
    fn triangles_are_counter_clockwise() {
        let hier = unit(3, 1);
        let level = hier.level(1).unwrap();
        for t in 0..level.num_triangles() {
            let [a, b, c] = level.triangle_coords(t);
            let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            assert!(cross > 0.0);
        }
    }

    #[test]
    fn interior_edges_shared_by_two_triangles() {
        let hier = unit(4, 1);
        let level = hier.level(1).unwrap();
        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in level.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        for (&(a, b), tris) in &edges {
            let on_boundary = Side::ALL
                .iter()
                .any(|&s| level.vertex_on_side(a, s) && level.vertex_on_side(b, s));
            assert_eq!(tris.len(), if on_boundary { 1 } else { 2 });
        }
        // The adjacency table agrees with the shared edges.
        for (t, tri) in level.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let other = edges[&(a.min(b), a.max(b))].iter().copied().find(|&o| o != t);
                assert_eq!(level.neighbors[t][k], other);
            }
        }
    }

    #[test]
    fn levels_are_nested() {
        for s in [2usize, 3] {
            let hier = BackgroundHierarchy::build(BoundingBox::unit(), 2, 2, s).unwrap();
            for l in 1..=2 {
                let (coarse, fine) = (hier.level(l - 1).unwrap(), hier.level(l).unwrap());
                for t in 0..fine.num_triangles() {
                    let tri = fine.triangle_coords(t);
                    let hosts = (0..coarse.num_triangles())
                        .filter(|&c| tri.iter().all(|&p| contains(coarse.triangle_coords(c), p, 1e-12)))
                        .count();
                    assert_eq!(hosts, 1, "s = {s}, level {l}, triangle {t}");
                }
            }
        }
    }

    #[test]
    fn refinement_is_bitwise_nested_for_dyadic_boxes() {
        let hier = unit(8, 3);
        let coarse = hier.level(0).unwrap();
        let fine = hier.level(3).unwrap();
        for (v, p) in coarse.vertices.iter().enumerate() {
            let (i, j) = coarse.vertex_grid_index(v);
            let fv = (j * 8) * (fine.cells_per_dir + 1) + i * 8;
            assert_eq!(&fine.vertices[fv], p);
        }
    }

    #[test]
    fn layout_numbers_active_vertices() {
        let hier = unit(2, 0);
        let level = hier.level(0).unwrap();
        let layout = P1SpaceLayout::new(level, [0usize, 1]);
        assert_eq!(layout.num_dofs(), 4);
        assert_eq!(layout.vertex_of_dof, vec![0, 1, 3, 4]);
        assert!(layout.num_dofs() <= level.num_vertices());
    }
}
