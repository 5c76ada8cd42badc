//! Uniform Cartesian meshes and near-boundary node classification.

use rayon::prelude::*;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::LevelSetGeometry;

/// Uniform Cartesian mesh in 1, 2 or 3 dimensions.
///
/// Nodes are addressed by a flat lexicographic index (x fastest); every
/// axis shares the same spacing, as in all of the built-in test problems.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    counts: [usize; 3],
    origin: [f64; 3],
    spacing: f64,
}

impl Mesh {
    pub fn new(dim: usize, origin: [f64; 3], spacing: f64, counts: [usize; 3]) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Usage(format!("dimension {dim} not in 1..=3")));
        }
        if spacing <= 0.0 {
            return Err(Error::Usage("spacing must be positive".into()));
        }
        for a in 0..dim {
            if counts[a] < 3 {
                return Err(Error::Usage(format!(
                    "axis {a} needs at least 3 nodes, got {}",
                    counts[a]
                )));
            }
        }
        let mut c = counts;
        let mut o = origin;
        for a in dim..3 {
            c[a] = 1;
            o[a] = 0.0;
        }
        Ok(Mesh {
            dim,
            counts: c,
            origin: o,
            spacing,
        })
    }

    /// Mesh covering the box [min, max] with `n` nodes per axis. The box
    /// must be isotropic with respect to `n` so a single spacing fits.
    pub fn over_box(dim: usize, min: [f64; 3], max: [f64; 3], n: [usize; 3]) -> Result<Self> {
        let h = (max[0] - min[0]) / (n[0] as f64 - 1.0);
        for a in 1..dim {
            let ha = (max[a] - min[a]) / (n[a] as f64 - 1.0);
            if (ha - h).abs() > 1e-12 * h.abs() {
                return Err(Error::Usage(format!(
                    "anisotropic spacing: axis 0 gives {h}, axis {a} gives {ha}"
                )));
            }
        }
        Mesh::new(dim, min, h, n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn node_count(&self) -> usize {
        self.counts[..self.dim].iter().product()
    }

    /// Split a flat node index into per-axis indices.
    pub fn unravel(&self, node: usize) -> [usize; 3] {
        let mut rest = node;
        let mut out = [0usize; 3];
        for a in 0..self.dim {
            out[a] = rest % self.counts[a];
            rest /= self.counts[a];
        }
        out
    }

    pub fn ravel(&self, idx: [usize; 3]) -> usize {
        let mut flat = 0;
        for a in (0..self.dim).rev() {
            flat = flat * self.counts[a] + idx[a];
        }
        flat
    }

    /// Node coordinates, `origin + index·spacing` with fused multiply-add.
    pub fn node_position(&self, node: usize) -> [f64; 3] {
        let idx = self.unravel(node);
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = (idx[a] as f64).mul_add(self.spacing, self.origin[a]);
        }
        p
    }

    /// Flat index of the axial neighbor, or None at the mesh edge.
    pub fn neighbor(&self, node: usize, axis: usize, sign: i8) -> Option<usize> {
        let mut idx = self.unravel(node);
        if sign > 0 {
            if idx[axis] + 1 >= self.counts[axis] {
                return None;
            }
            idx[axis] += 1;
        } else {
            if idx[axis] == 0 {
                return None;
            }
            idx[axis] -= 1;
        }
        Some(self.ravel(idx))
    }
}

/// Cut fractions of a near-boundary node: `theta[axis][0]` for the −
/// direction, `theta[axis][1]` for +. Present iff that neighbor is exterior.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeThetas {
    pub theta: [[Option<f64>; 2]; 3],
}

impl NodeThetas {
    pub fn get(&self, axis: usize, sign: i8) -> Option<f64> {
        self.theta[axis][if sign > 0 { 1 } else { 0 }]
    }

    pub fn any(&self) -> bool {
        self.theta.iter().flatten().any(|t| t.is_some())
    }

    pub fn trapped_along(&self, axis: usize) -> bool {
        self.theta[axis][0].is_some() && self.theta[axis][1].is_some()
    }

    /// θ reported for one axis: the cut side's value, the smaller of the two
    /// if cut on both sides, or 1 if the axis is uncut.
    pub fn axis_theta(&self, axis: usize) -> f64 {
        match (self.theta[axis][0], self.theta[axis][1]) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => 1.0,
        }
    }
}

/// Per-node status with cached θ fractions for the near-boundary set and the
/// lexicographic interior-node (unknown) ordering shared by the rest of the
/// pipeline.
#[derive(Debug, Clone)]
pub struct NodeClassification {
    interior: Vec<bool>,
    /// Interior node flat indices in lexicographic order; unknown k lives at
    /// node `interior_nodes[k]`.
    interior_nodes: Vec<usize>,
    unknown_of_node: HashMap<usize, usize>,
    /// θ sets keyed by unknown index; only near-boundary unknowns appear.
    thetas: HashMap<usize, NodeThetas>,
    n_near_boundary: usize,
    /// Interior nodes whose axial neighbors were all exterior, reclassified
    /// as exterior because they would form degenerate 1-node systems.
    isolated_reclassified: usize,
}

impl NodeClassification {
    pub fn is_interior(&self, node: usize) -> bool {
        self.interior[node]
    }

    pub fn n_interior(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn n_near_boundary(&self) -> usize {
        self.n_near_boundary
    }

    pub fn isolated_reclassified(&self) -> usize {
        self.isolated_reclassified
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    pub fn unknown_of(&self, node: usize) -> Option<usize> {
        self.unknown_of_node.get(&node).copied()
    }

    pub fn thetas_of_unknown(&self, unknown: usize) -> Option<&NodeThetas> {
        self.thetas.get(&unknown)
    }

    pub fn is_near_boundary(&self, unknown: usize) -> bool {
        self.thetas.contains_key(&unknown)
    }

    /// Near-boundary unknowns in lexicographic node order.
    pub fn near_boundary_unknowns(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.thetas.keys().copied().collect();
        v.sort_unstable();
        v
    }
}

/// Label every node of `mesh` against `geometry` and cache the axial cut
/// fractions of the near-boundary set.
///
/// Interior nodes must not touch the mesh edge (the embedded interface has
/// to close inside the box); isolated interior nodes are demoted to
/// exterior with a counter.
pub fn classify(mesh: &Mesh, geometry: &LevelSetGeometry) -> Result<NodeClassification> {
    if mesh.dim() != geometry.dim() {
        return Err(Error::Usage(format!(
            "mesh dimension {} does not match geometry dimension {}",
            mesh.dim(),
            geometry.dim()
        )));
    }
    let n = mesh.node_count();
    let mut interior: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|node| geometry.inside(&mesh.node_position(node)[..mesh.dim()]))
        .collect();

    // Demote isolated nodes first so θ extraction sees the final labeling.
    let mut isolated = 0usize;
    loop {
        let mut demote = Vec::new();
        for node in 0..n {
            if !interior[node] {
                continue;
            }
            let mut has_interior_neighbor = false;
            for axis in 0..mesh.dim() {
                for sign in [-1i8, 1] {
                    if let Some(nb) = mesh.neighbor(node, axis, sign) {
                        if interior[nb] {
                            has_interior_neighbor = true;
                        }
                    }
                }
            }
            if !has_interior_neighbor {
                demote.push(node);
            }
        }
        if demote.is_empty() {
            break;
        }
        isolated += demote.len();
        for node in demote {
            interior[node] = false;
        }
    }

    let interior_nodes: Vec<usize> = (0..n).filter(|&i| interior[i]).collect();
    let unknown_of_node: HashMap<usize, usize> = interior_nodes
        .iter()
        .enumerate()
        .map(|(k, &node)| (node, k))
        .collect();

    let theta_entries: Vec<Result<Option<(usize, NodeThetas)>>> = interior_nodes
        .par_iter()
        .enumerate()
        .map(|(k, &node)| {
            let pos = mesh.node_position(node);
            let p = &pos[..mesh.dim()];
            let mut t = NodeThetas::default();
            let mut any = false;
            for axis in 0..mesh.dim() {
                for (si, sign) in [(-1i8), 1].into_iter().enumerate() {
                    match mesh.neighbor(node, axis, sign) {
                        Some(nb) if interior[nb] => {}
                        Some(_) => {
                            let th = geometry
                                .axial_crossing(p, axis, sign, mesh.spacing())?
                                .ok_or_else(|| {
                                    Error::Geometry(
                                        "neighbor labeled exterior but no crossing found".into(),
                                    )
                                })?;
                            t.theta[axis][si] = Some(th);
                            any = true;
                        }
                        // Mesh edge: no neighbor, no θ. Assembly rejects such
                        // nodes; a fully interior mesh still classifies.
                        None => {}
                    }
                }
            }
            Ok(if any { Some((k, t)) } else { None })
        })
        .collect();

    let mut thetas = HashMap::new();
    for entry in theta_entries {
        if let Some((k, t)) = entry? {
            thetas.insert(k, t);
        }
    }
    let n_near_boundary = thetas.len();

    Ok(NodeClassification {
        interior,
        interior_nodes,
        unknown_of_node,
        thetas,
        n_near_boundary,
        isolated_reclassified: isolated,
    })
}

/// One row of the near-boundary θ map: node indices, per-axis θ (1 on uncut
/// axes, the smaller value on doubly cut axes) and a trapped flag.
#[derive(Debug, Clone)]
pub struct ThetaMapRow {
    pub index: [usize; 3],
    pub theta_axis: [f64; 3],
    pub trapped: bool,
}

/// Per-axis θ of every near-boundary node, in lexicographic node order;
/// ready for scatter output.
pub fn theta_map(mesh: &Mesh, classification: &NodeClassification) -> Vec<ThetaMapRow> {
    classification
        .near_boundary_unknowns()
        .into_iter()
        .map(|k| {
            let node = classification.interior_nodes()[k];
            let t = classification.thetas_of_unknown(k).unwrap();
            let mut theta_axis = [1.0; 3];
            let mut trapped = false;
            for axis in 0..mesh.dim() {
                theta_axis[axis] = t.axis_theta(axis);
                trapped |= t.trapped_along(axis);
            }
            ThetaMapRow {
                index: mesh.unravel(node),
                theta_axis,
                trapped,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case1d_mesh(n: usize) -> Mesh {
        Mesh::over_box(1, [-0.5, 0.0, 0.0], [0.5, 0.0, 0.0], [n, 1, 1]).unwrap()
    }

    #[test]
    fn mesh_positions_and_indexing() {
        let m = Mesh::over_box(2, [-1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [41, 41, 1]).unwrap();
        assert_eq!(m.spacing(), 0.05);
        assert_eq!(m.node_count(), 41 * 41);
        let node = m.ravel([3, 7, 0]);
        assert_eq!(m.unravel(node), [3, 7, 0]);
        let p = m.node_position(node);
        assert_eq!(p[0], 3f64.mul_add(0.05, -1.0));
        assert_eq!(p[1], 7f64.mul_add(0.05, -1.0));
    }

    #[test]
    fn interval_1d_classification() {
        // 161 nodes on [-0.5, 0.5], boundaries at ±0.3156: the extreme
        // interior nodes sit at ±0.3125 and carry θ = 0.496 outward.
        let m = case1d_mesh(161);
        let g = LevelSetGeometry::Interval1D {
            left: -0.3156,
            right: 0.3156,
        };
        let cls = classify(&m, &g).unwrap();
        assert_eq!(cls.n_interior(), 101);
        assert_eq!(cls.n_near_boundary(), 2);
        let first = cls.thetas_of_unknown(0).unwrap();
        let th = first.get(0, -1).unwrap();
        assert!((th - 0.496).abs() < 1e-9);
        assert!(first.get(0, 1).is_none());
        let last = cls.thetas_of_unknown(cls.n_interior() - 1).unwrap();
        assert!((last.get(0, 1).unwrap() - 0.496).abs() < 1e-9);
    }

    #[test]
    fn starfish_golden_counts() {
        let c = 0.02 * 5f64.sqrt();
        let g = LevelSetGeometry::Starfish2D {
            center: [c, c],
            base_radius: 0.5,
            amplitude: 0.2,
            lobes: 5,
        };
        let m = Mesh::over_box(2, [-1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [41, 41, 1]).unwrap();
        let cls = classify(&m, &g).unwrap();
        // frozen by enumerating the inside predicate over the 41×41 grid
        assert_eq!(cls.n_interior(), 335);
        assert_eq!(cls.n_near_boundary(), 91);
        assert_eq!(cls.isolated_reclassified(), 0);
    }

    #[test]
    fn fully_interior_mesh_has_no_near_boundary() {
        let m = case1d_mesh(11);
        let g = LevelSetGeometry::Interval1D {
            left: -10.0,
            right: 10.0,
        };
        // interface far outside the box: everything interior, no θ anywhere
        let cls = classify(&m, &g).unwrap();
        assert_eq!(cls.n_interior(), 11);
        assert_eq!(cls.n_near_boundary(), 0);
        let g2 = LevelSetGeometry::Interval1D {
            left: -0.45,
            right: 0.45,
        };
        let cls = classify(&m, &g2).unwrap();
        assert_eq!(cls.n_near_boundary(), 2); // only the extreme interior nodes
        assert!(cls.thetas_of_unknown(1).is_none());
    }

    #[test]
    fn trapped_and_theta_map() {
        // sliver one node wide along x
        let m = Mesh::over_box(2, [0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [5, 5, 1]).unwrap();
        let g = LevelSetGeometry::Starfish2D {
            center: [0.5, 0.5],
            base_radius: 0.31,
            amplitude: 0.0,
            lobes: 1,
        };
        let cls = classify(&m, &g).unwrap();
        // disc of radius 0.31 on a 0.25-spacing grid: 5 interior nodes in a plus shape
        assert_eq!(cls.n_interior(), 5);
        let rows = theta_map(&m, &cls);
        let mut trapped_seen = 0;
        for row in &rows {
            if row.index == [1, 2, 0] || row.index == [3, 2, 0] {
                // arm nodes are cut on both sides of y: smaller θ reported
                // for that axis plus the trapped flag
                assert!(row.trapped);
                let expect = (0.31f64 * 0.31 - 0.25 * 0.25).sqrt() / 0.25;
                assert!((row.theta_axis[1] - expect).abs() < 1e-9);
                trapped_seen += 1;
            }
        }
        assert_eq!(trapped_seen, 2);
        let center_unknown = cls.unknown_of(m.ravel([2, 2, 0])).unwrap();
        assert!(!cls.is_near_boundary(center_unknown));
    }

    #[test]
    fn isolated_node_reclassified() {
        // disc so small only one node fits inside
        let m = Mesh::over_box(2, [0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [5, 5, 1]).unwrap();
        let g = LevelSetGeometry::Starfish2D {
            center: [0.5, 0.5],
            base_radius: 0.1,
            amplitude: 0.0,
            lobes: 1,
        };
        let cls = classify(&m, &g).unwrap();
        assert_eq!(cls.n_interior(), 0);
        assert_eq!(cls.isolated_reclassified(), 1);
    }
}
