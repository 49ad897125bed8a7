//! Cell aggregation: every badly cut triangle is attached to the nearest
//! interior triangle (its root) through edge-adjacent active triangles.

use std::collections::BTreeMap;

use super::AgfemError;
use crate::geometry::{CellKind, CutGeometry};
use crate::mesh::MeshLevel;

#[derive(Debug, Clone)]
pub struct AggregateMap {
    /// Root triangle per triangle; `None` for exterior triangles.
    pub root: Vec<Option<usize>>,
    /// Breadth-first distance from the root (0 for roots and unaggregated cells).
    pub depth: Vec<u32>,
    /// Whether the triangle is aggregated to a root other than itself.
    pub aggregated: Vec<bool>,
}

impl AggregateMap {
    /// Members of every aggregate with at least one aggregated cell, keyed by root.
    pub fn aggregates(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (t, agg) in self.aggregated.iter().enumerate() {
            if *agg {
                let root = self.root[t].expect("aggregated cells have a root");
                map.entry(root).or_insert_with(|| vec![root]).push(t);
            }
        }
        map
    }

    pub fn num_aggregated(&self) -> usize {
        self.aggregated.iter().filter(|&&a| a).count()
    }
}

/// Aggregates every cut triangle with volume ratio below `threshold` to its
/// nearest interior root. Distance ties go to the smallest root index.
/// `threshold = 0` disables aggregation.
pub fn build_aggregates(geom: &CutGeometry, mesh: &MeshLevel, threshold: f64) -> Result<AggregateMap, AgfemError> {
    aggregate_graph(&geom.kinds, &geom.volume_ratio, &mesh.neighbors, threshold)
}

pub(crate) fn aggregate_graph(
    kinds: &[CellKind],
    ratios: &[f64],
    neighbors: &[[Option<usize>; 3]],
    threshold: f64,
) -> Result<AggregateMap, AgfemError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(AgfemError::InvalidThreshold(threshold));
    }
    let n = kinds.len();
    let mut root: Vec<Option<usize>> = vec![None; n];
    let mut depth = vec![u32::MAX; n];
    let mut layer: Vec<usize> = (0..n).filter(|&t| kinds[t] == CellKind::Interior).collect();
    if layer.is_empty() {
        return Err(AgfemError::NoInteriorCell);
    }
    for &t in &layer {
        root[t] = Some(t);
        depth[t] = 0;
    }
    let mut d = 0;
    while !layer.is_empty() {
        d += 1;
        let mut best: BTreeMap<usize, usize> = BTreeMap::new();
        for &u in &layer {
            let ru = root[u].unwrap();
            for v in neighbors[u].iter().flatten().copied() {
                if kinds[v] == CellKind::Exterior || depth[v] != u32::MAX {
                    continue;
                }
                best.entry(v).and_modify(|r| *r = (*r).min(ru)).or_insert(ru);
            }
        }
        layer = Vec::with_capacity(best.len());
        for (v, r) in best {
            root[v] = Some(r);
            depth[v] = d;
            layer.push(v);
        }
    }

    let mut aggregated = vec![false; n];
    for t in 0..n {
        match kinds[t] {
            CellKind::Exterior => {
                root[t] = None;
                depth[t] = 0;
            }
            CellKind::Interior => {}
            CellKind::Cut => {
                if ratios[t] < threshold {
                    if root[t].is_none() {
                        return Err(AgfemError::Unreachable { triangle: t });
                    }
                    aggregated[t] = true;
                } else {
                    root[t] = Some(t);
                    depth[t] = 0;
                }
            }
        }
    }
    Ok(AggregateMap {
        root,
        depth,
        aggregated,
    })
}
