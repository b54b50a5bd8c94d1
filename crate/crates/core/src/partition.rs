//! The tree of partitions over the unit hypercube: binary cells produced by
//! bisecting the longest side, with centers and the `(rho, v1, v2)`
//! geometry constants.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry constants of a tree of partitions: cells at depth `h` sit
/// between the balls `B(center, v2 * rho^h)` and `B(center, v1 * rho^h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionParams {
    pub rho: f64,
    pub v1: f64,
    pub v2: f64,
    pub rho_bar: f64,
}

/// Constants for longest-side bisection of `[0,1]^dim`.
///
/// `rho = 2^(-1/D)` and `v1 = 2 sqrt(D)`. The inner-ball constant is
/// `v2 = min(1/2, 2^(1/D - 2))`: at depths not divisible by `D` the
/// shortest cell half-side is a quarter of the longest side, so `1/2` (the
/// one-dimensional value) is too large for `D >= 2`; this is the largest
/// constant for which the inner-ball inclusion holds at every depth.
pub fn hypercube_params(dim: usize) -> PartitionParams {
    assert!(dim >= 1, "dimension must be at least 1");
    let d = dim as f64;
    let rho = 2f64.powf(-1.0 / d);
    PartitionParams {
        rho,
        v1: 2.0 * d.sqrt(),
        v2: 0.5_f64.min(2f64.powf(1.0 / d - 2.0)),
        rho_bar: rho.min(0.5),
    }
}

/// Tree coordinates of a cell: depth `h >= 0` and 1-based index in
/// `[1, 2^h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub depth: u32,
    pub index: u64,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { depth: 0, index: 1 };

    pub fn children(self) -> (NodeId, NodeId) {
        let d = self.depth + 1;
        (
            NodeId {
                depth: d,
                index: 2 * self.index - 1,
            },
            NodeId {
                depth: d,
                index: 2 * self.index,
            },
        )
    }

    /// `(h-1, ceil(i/2))`; equals the canonical distance-argmin parent for
    /// this construction.
    pub fn parent(self) -> Option<NodeId> {
        if self.depth == 0 {
            None
        } else {
            Some(NodeId {
                depth: self.depth - 1,
                index: self.index.div_ceil(2),
            })
        }
    }

    pub fn is_ancestor_of(self, other: NodeId) -> bool {
        other.depth > self.depth
            && ((other.index - 1) >> (other.depth - self.depth)) + 1 == self.index
    }
}

/// An axis-aligned box, half-open except at the domain's upper boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Cell {
    pub fn unit(dim: usize) -> Self {
        Cell {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// Longest side, ties broken by the lowest axis index.
    pub fn longest_axis(&self) -> usize {
        let mut best = 0;
        let mut side = self.hi[0] - self.lo[0];
        for j in 1..self.dim() {
            let s = self.hi[j] - self.lo[j];
            if s > side {
                side = s;
                best = j;
            }
        }
        best
    }

    /// Membership under the tiling convention: `[lo, hi)` per axis, closed
    /// at the domain's upper boundary (here `hi == 1`).
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| *v >= *lo && (*v < *hi || (*v == *hi && *hi == 1.0)))
    }

    /// Distance from the center to the farthest cell corner.
    pub fn circumradius(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| {
                let h = 0.5 * (b - a);
                h * h
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest ball around the center inside the box.
    pub fn inradius(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (b - a))
            .fold(f64::INFINITY, f64::min)
    }

    fn split(&self) -> (Cell, Cell) {
        let axis = self.longest_axis();
        let mid = 0.5 * (self.lo[axis] + self.hi[axis]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[axis] = mid;
        right.lo[axis] = mid;
        (left, right)
    }
}

/// A node: its id, center point and cell.
#[derive(Debug, Clone)]
pub struct PartitionNode {
    pub id: NodeId,
    pub center: Vec<f64>,
    pub cell: Cell,
}

/// Lazily materialized tree of partitions over `[0,1]^dim`.
#[derive(Debug, Clone)]
pub struct PartitionTree {
    pub params: PartitionParams,
    dim: usize,
    nodes: HashMap<NodeId, PartitionNode>,
}

impl PartitionTree {
    pub fn new_unit(dim: usize) -> Self {
        let cell = Cell::unit(dim);
        let root = PartitionNode {
            id: NodeId::ROOT,
            center: cell.center(),
            cell,
        };
        let mut nodes = HashMap::new();
        nodes.insert(NodeId::ROOT, root);
        PartitionTree {
            params: hypercube_params(dim),
            dim,
            nodes,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, id: NodeId) -> Option<&PartitionNode> {
        self.nodes.get(&id)
    }

    /// The node for `id`, materializing ancestors as needed.
    pub fn ensure(&mut self, id: NodeId) -> &PartitionNode {
        if !self.nodes.contains_key(&id) {
            let parent = id.parent().expect("root is always materialized");
            self.ensure(parent);
            self.refine(parent);
        }
        &self.nodes[&id]
    }

    /// Splits `id` along its longest side and returns the two children in
    /// ascending coordinate order along the split axis.
    pub fn refine(&mut self, id: NodeId) -> (NodeId, NodeId) {
        let (c1, c2) = id.children();
        if !self.nodes.contains_key(&c1) {
            let (left, right) = self.nodes[&id].cell.split();
            self.nodes.insert(
                c1,
                PartitionNode {
                    id: c1,
                    center: left.center(),
                    cell: left,
                },
            );
            self.nodes.insert(
                c2,
                PartitionNode {
                    id: c2,
                    center: right.center(),
                    cell: right,
                },
            );
        }
        (c1, c2)
    }

    /// The parent node of `id`. Errors at the root.
    pub fn parent(&mut self, id: NodeId) -> Result<&PartitionNode> {
        let pid = id.parent().ok_or_else(|| Error::Config {
            field: "node".into(),
            message: "root has no parent".into(),
        })?;
        Ok(self.ensure(pid))
    }

    /// Cell geometry for an id, derived from the deterministic split rule
    /// without touching the tree (useful when replaying traces).
    pub fn cell_of(dim: usize, id: NodeId) -> Cell {
        let mut cell = Cell::unit(dim);
        if id.depth == 0 {
            return cell;
        }
        // Walk down following the bit path of (index - 1).
        let path = id.index - 1;
        for level in (0..id.depth).rev() {
            let bit = (path >> level) & 1;
            let (left, right) = cell.split();
            cell = if bit == 0 { left } else { right };
        }
        cell
    }

    pub fn center_of(dim: usize, id: NodeId) -> Vec<f64> {
        Self::cell_of(dim, id).center()
    }
}

/// Outcome of the ball-sandwich check for one node.
#[derive(Debug, Clone)]
pub struct X3Entry {
    pub id: NodeId,
    pub outer_ok: bool,
    pub inner_ok: bool,
}

/// Report of [`verify_x3`] over all nodes to a depth.
#[derive(Debug, Clone)]
pub struct X3Report {
    pub entries: Vec<X3Entry>,
}

impl X3Report {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.outer_ok && e.inner_ok)
    }

    pub fn failures(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| !(e.outer_ok && e.inner_ok))
            .count()
    }
}

/// Checks, analytically from box geometry, that every cell to `max_depth`
/// satisfies `B(center, v2 rho^h) ⊆ cell ⊆ B(center, v1 rho^h)`.
pub fn verify_x3(dim: usize, params: &PartitionParams, max_depth: u32) -> X3Report {
    let mut entries = Vec::new();
    for depth in 0..=max_depth {
        let outer = params.v1 * params.rho.powi(depth as i32);
        let inner = params.v2 * params.rho.powi(depth as i32);
        for index in 1..=(1u64 << depth) {
            let id = NodeId { depth, index };
            let cell = PartitionTree::cell_of(dim, id);
            entries.push(X3Entry {
                id,
                outer_ok: cell.circumradius() <= outer + 1e-12,
                inner_ok: cell.inradius() >= inner - 1e-12,
            });
        }
    }
    X3Report { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn hypercube_params_d1() {
        let p = hypercube_params(1);
        assert_relative_eq!(p.rho, 0.5);
        assert_relative_eq!(p.v1, 2.0);
        assert_relative_eq!(p.v2, 0.5);
        assert_relative_eq!(p.rho_bar, 0.5);
    }

    #[test]
    #[allow(clippy::approx_constant)] // frozen example digits
    fn hypercube_params_d2() {
        let p = hypercube_params(2);
        assert_relative_eq!(p.rho, 0.70711, epsilon = 1e-5);
        assert_relative_eq!(p.v1, 2.82843, epsilon = 1e-5);
        assert_relative_eq!(p.rho_bar, 0.5);
    }

    #[test]
    fn hypercube_params_d4() {
        let p = hypercube_params(4);
        assert_relative_eq!(p.rho, 0.84090, epsilon = 1e-5);
    }

    #[test]
    fn refine_d2_root() {
        let mut tree = PartitionTree::new_unit(2);
        let (a, b) = tree.refine(NodeId::ROOT);
        let na = tree.get(a).unwrap();
        let nb = tree.get(b).unwrap();
        assert_eq!(na.cell.lo, vec![0.0, 0.0]);
        assert_eq!(na.cell.hi, vec![0.5, 1.0]);
        assert_eq!(nb.cell.lo, vec![0.5, 0.0]);
        assert_eq!(nb.cell.hi, vec![1.0, 1.0]);
        assert_eq!(na.center, vec![0.25, 0.5]);
        assert_eq!(nb.center, vec![0.75, 0.5]);
    }

    #[test]
    fn refine_d1_interval() {
        let mut tree = PartitionTree::new_unit(1);
        let (a, _) = tree.refine(NodeId::ROOT);
        let (aa, ab) = tree.refine(a);
        assert_eq!(tree.get(aa).unwrap().cell.hi, vec![0.25]);
        assert_eq!(tree.get(ab).unwrap().cell.lo, vec![0.25]);
        assert_eq!(tree.get(ab).unwrap().cell.hi, vec![0.5]);
    }

    #[test]
    fn depth_2d_cells_have_quarter_sides() {
        // After 2D alternating splits every side has been halved twice.
        for dim in [1usize, 2, 3] {
            let depth = (2 * dim) as u32;
            for index in 1..=(1u64 << depth) {
                let cell = PartitionTree::cell_of(dim, NodeId { depth, index });
                for j in 0..dim {
                    assert_relative_eq!(cell.hi[j] - cell.lo[j], 0.25, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn parent_index_arithmetic() {
        assert_eq!(
            NodeId { depth: 1, index: 1 }.parent().unwrap(),
            NodeId { depth: 0, index: 1 }
        );
        assert_eq!(
            NodeId { depth: 3, index: 5 }.parent().unwrap(),
            NodeId { depth: 2, index: 3 }
        );
        assert_eq!(
            NodeId { depth: 3, index: 6 }.parent().unwrap(),
            NodeId { depth: 2, index: 3 }
        );
        assert!(NodeId::ROOT.parent().is_none());
    }

    #[test]
    fn parent_is_distance_argmin() {
        // The index parent must coincide with the nearest depth-(h-1) center.
        let dim = 2;
        for depth in 1..=6u32 {
            for index in 1..=(1u64 << depth) {
                let id = NodeId { depth, index };
                let center = PartitionTree::center_of(dim, id);
                let mut best = None;
                for pi in 1..=(1u64 << (depth - 1)) {
                    let pid = NodeId {
                        depth: depth - 1,
                        index: pi,
                    };
                    let pc = PartitionTree::center_of(dim, pid);
                    let d = crate::kernel::euclidean(&center, &pc);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, pid));
                    }
                }
                assert_eq!(best.unwrap().1, id.parent().unwrap());
            }
        }
    }

    #[test]
    fn x3_passes_d1_to_d3_depth8() {
        for dim in [1usize, 2, 3] {
            let report = verify_x3(dim, &hypercube_params(dim), 8);
            assert!(report.all_pass(), "X3 failed for D={dim}");
        }
    }

    #[test]
    fn x3_catches_corrupted_v2() {
        let mut params = hypercube_params(2);
        params.v2 = 1.0;
        let report = verify_x3(2, &params, 8);
        assert!(report.failures() > 0);
    }

    #[test]
    fn tiling_exactly_one_cell_owns_each_point() {
        let mut rng = crate::rng::stream(23, crate::rng::Purpose::Net);
        for dim in [1usize, 2] {
            for depth in 0..=10u32 {
                for _ in 0..100 {
                    let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
                    let owners = (1..=(1u64 << depth))
                        .filter(|&index| {
                            PartitionTree::cell_of(dim, NodeId { depth, index }).contains(&x)
                        })
                        .count();
                    assert_eq!(owners, 1, "point {x:?} at depth {depth}");
                }
            }
        }
    }

    #[test]
    fn boundary_points_owned_once() {
        // Interior boundaries belong to the upper cell; the domain's upper
        // boundary stays owned.
        for x in [[0.5], [1.0], [0.0], [0.25]] {
            let owners = (1..=4u64)
                .filter(|&index| PartitionTree::cell_of(1, NodeId { depth: 2, index }).contains(&x))
                .count();
            assert_eq!(owners, 1);
        }
    }

    #[test]
    fn centers_are_separated() {
        // Distinct depth-h centers are at least 2 v2 rho^h apart.
        for dim in [1usize, 2, 3] {
            let params = hypercube_params(dim);
            for depth in 0..=6u32 {
                let centers: Vec<Vec<f64>> = (1..=(1u64 << depth))
                    .map(|index| PartitionTree::center_of(dim, NodeId { depth, index }))
                    .collect();
                let min_sep = 2.0 * params.v2 * params.rho.powi(depth as i32);
                for i in 0..centers.len() {
                    for j in (i + 1)..centers.len() {
                        let d = crate::kernel::euclidean(&centers[i], &centers[j]);
                        assert!(
                            d >= min_sep - 1e-12,
                            "D={dim} h={depth}: centers {i},{j} at {d} < {min_sep}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn cell_of_matches_tree_refinement() {
        let mut tree = PartitionTree::new_unit(3);
        let mut frontier = vec![NodeId::ROOT];
        for _ in 0..5 {
            let mut next = Vec::new();
            for id in frontier {
                let (a, b) = tree.refine(id);
                next.push(a);
                next.push(b);
            }
            frontier = next;
        }
        for id in frontier {
            let from_tree = tree.get(id).unwrap().cell.clone();
            let derived = PartitionTree::cell_of(3, id);
            assert_eq!(from_tree, derived);
        }
    }

    #[test]
    fn children_tile_parent() {
        let mut tree = PartitionTree::new_unit(2);
        let (a, b) = tree.refine(NodeId::ROOT);
        let pa = tree.get(a).unwrap().cell.clone();
        let pb = tree.get(b).unwrap().cell.clone();
        let parent = Cell::unit(2);
        let mut rng = crate::rng::stream(29, crate::rng::Purpose::Net);
        for _ in 0..500 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            assert_eq!(parent.contains(&x), pa.contains(&x) ^ pb.contains(&x));
        }
    }

    #[test]
    fn ancestor_relation() {
        let root = NodeId::ROOT;
        let (a, b) = root.children();
        let (aa, _) = a.children();
        assert!(root.is_ancestor_of(a));
        assert!(root.is_ancestor_of(aa));
        assert!(a.is_ancestor_of(aa));
        assert!(!b.is_ancestor_of(aa));
        assert!(!a.is_ancestor_of(a));
    }
}
