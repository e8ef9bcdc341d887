//! The undirected capacitated tree over the dyadic decomposition, and its
//! directed augmentation with cache super-nodes.

use crate::error::{Error, Result};
use crate::placement::{dyadic_cell, dyadic_depth, NodePlacement};
use crate::traffic::CacheSet;
use std::collections::BTreeMap;

/// Vertex id. Leaves are `0..n` in placement order; internal vertices
/// follow, level by level from the root.
pub type VertexId = usize;

/// Edges are identified by their child endpoint (every non-root vertex has
/// exactly one parent edge).
pub type EdgeId = usize;

/// Identifier of a cache super-node in the directed augmentation.
pub type CacheId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Child to parent (towards the root).
    Up,
    /// Parent to child (away from the root).
    Down,
}

/// One step of a leaf-to-leaf path: the undirected edge plus the direction
/// it is traversed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    pub edge: EdgeId,
    pub dir: Direction,
}

/// Capacitated tree with the wireless nodes as leaves. Levels run from 0
/// (root) to `depth + 1` (leaves); internal vertices at level `l` stand for
/// the `4^l` dyadic cells.
#[derive(Debug, Clone)]
pub struct TreeGraph {
    pub n: usize,
    pub depth: u32,
    pub alpha: f64,
    level: Vec<u32>,
    cell: Vec<u64>,
    parent: Vec<Option<VertexId>>,
    children: Vec<Vec<VertexId>>,
    capacity: Vec<f64>,
}

fn internal_offset(level: u32) -> usize {
    // 1 + 4 + ... + 4^(level-1)
    ((1usize << (2 * level)) - 1) / 3
}

impl TreeGraph {
    pub fn vertex_count(&self) -> usize {
        self.level.len()
    }

    pub fn edge_count(&self) -> usize {
        self.vertex_count() - 1
    }

    pub fn root(&self) -> VertexId {
        self.n
    }

    pub fn is_leaf(&self, v: VertexId) -> bool {
        v < self.n
    }

    /// Internal vertex id for a dyadic cell (1-based, row-major).
    pub fn internal_vertex(&self, level: u32, cell: u64) -> Result<VertexId> {
        if level > self.depth || cell == 0 || cell > 1 << (2 * level) {
            return Err(Error::InvalidArgument(format!(
                "no internal vertex for level {level}, cell {cell}"
            )));
        }
        Ok(self.n + internal_offset(level) + (cell - 1) as usize)
    }

    pub fn level(&self, v: VertexId) -> u32 {
        self.level[v]
    }

    /// Dyadic cell index of a vertex (for a leaf, the cell of its parent
    /// times nothing: leaves report their own 1-based position).
    pub fn cell(&self, v: VertexId) -> u64 {
        self.cell[v]
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        self.parent[v]
    }

    pub fn children(&self, v: VertexId) -> &[VertexId] {
        &self.children[v]
    }

    /// Capacity of the parent edge of `child`.
    pub fn capacity(&self, child: EdgeId) -> f64 {
        debug_assert!(child != self.root());
        self.capacity[child]
    }

    /// All edges as child ids, ascending.
    pub fn edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.vertex_count()).filter(move |&v| v != self.root())
    }

    /// Leaves of the subtree rooted at `v`, ascending.
    pub fn leaves_under(&self, v: VertexId) -> Vec<usize> {
        if self.is_leaf(v) {
            return vec![v];
        }
        let mut acc = Vec::new();
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            if self.is_leaf(x) {
                acc.push(x);
            } else {
                stack.extend_from_slice(&self.children[x]);
            }
        }
        acc.sort_unstable();
        acc
    }

    fn check_leaf(&self, v: VertexId) -> Result<()> {
        if self.is_leaf(v) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "vertex {v} is not a leaf (leaves are 0..{})",
                self.n
            )))
        }
    }

    /// Reassembles a tree from parts (used by the JSON loader); verifies the
    /// structural invariants.
    pub fn from_parts(
        n: usize,
        depth: u32,
        alpha: f64,
        level: Vec<u32>,
        cell: Vec<u64>,
        parent: Vec<Option<VertexId>>,
        capacity: Vec<f64>,
    ) -> Result<TreeGraph> {
        let nv = n + internal_offset(depth + 1);
        if level.len() != nv || cell.len() != nv || parent.len() != nv || capacity.len() != nv {
            return Err(Error::InvalidArgument("inconsistent tree arrays".into()));
        }
        let mut children = vec![Vec::new(); nv];
        for v in 0..nv {
            match parent[v] {
                Some(p) => children[p].push(v),
                None if v == n => {}
                None => return Err(Error::InvalidArgument(format!("vertex {v} has no parent"))),
            }
        }
        for ch in children.iter_mut() {
            ch.sort_unstable();
        }
        let tree = TreeGraph {
            n,
            depth,
            alpha,
            level,
            cell,
            parent,
            children,
            capacity,
        };
        for v in tree.edges() {
            if tree.capacity[v] < 1.0 - 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "edge {v} has capacity {} below 1",
                    tree.capacity[v]
                )));
            }
        }
        Ok(tree)
    }
}

/// Capacity of an edge at the given level of a size-`n` tree:
/// `(4^-level * n)^(2 - min(3, alpha)/2)` for internal levels, 1 for the
/// leaf level.
pub fn edge_capacity(level: u32, n: usize, alpha: f64) -> Result<f64> {
    if alpha <= 2.0 {
        return Err(Error::BadPathLoss(alpha));
    }
    let depth = dyadic_depth(n);
    if level < 1 || level > depth + 1 {
        return Err(Error::InvalidArgument(format!(
            "edge level {level} out of range 1..={}",
            depth + 1
        )));
    }
    if level == depth + 1 {
        return Ok(1.0);
    }
    let exponent = 2.0 - alpha.min(3.0) / 2.0;
    // 4^-level * n is a power of two for power-of-four n; going through
    // exp2 keeps these capacities exact.
    let lg = if n.is_power_of_two() {
        n.trailing_zeros() as f64 - 2.0 * level as f64
    } else {
        (n as f64).log2() - 2.0 * level as f64
    };
    Ok((lg * exponent).exp2())
}

/// Builds the capacitated tree for a placement. Leaf order matches node
/// order; internal vertices are laid out level by level, row-major.
pub fn build_tree(placement: &NodePlacement, alpha: f64) -> Result<TreeGraph> {
    if alpha <= 2.0 {
        return Err(Error::BadPathLoss(alpha));
    }
    let n = placement.n;
    let depth = dyadic_depth(n);
    let nv = n + internal_offset(depth + 1);

    let mut level = vec![0u32; nv];
    let mut cell = vec![0u64; nv];
    let mut parent: Vec<Option<VertexId>> = vec![None; nv];
    let mut capacity = vec![0.0f64; nv];

    for leaf in 0..n {
        level[leaf] = depth + 1;
        cell[leaf] = leaf as u64 + 1;
    }
    for l in 0..=depth {
        for c in 1..=(1u64 << (2 * l)) {
            let v = n + internal_offset(l) + (c - 1) as usize;
            level[v] = l;
            cell[v] = c;
            if l > 0 {
                let k = 1u64 << l;
                let (row, col) = ((c - 1) / k, (c - 1) % k);
                let parent_cell = (row / 2) * (k / 2) + col / 2 + 1;
                parent[v] = Some(n + internal_offset(l - 1) + (parent_cell - 1) as usize);
                capacity[v] = edge_capacity(l, n, alpha)?;
            }
        }
    }
    for leaf in 0..n {
        let idx = dyadic_cell(placement, leaf, depth)?;
        parent[leaf] = Some(n + internal_offset(depth) + (idx.cell - 1) as usize);
        capacity[leaf] = 1.0;
    }

    let mut children = vec![Vec::new(); nv];
    for v in 0..nv {
        if let Some(p) = parent[v] {
            children[p].push(v);
        }
    }
    for ch in children.iter_mut() {
        ch.sort_unstable();
    }

    Ok(TreeGraph {
        n,
        depth,
        alpha,
        level,
        cell,
        parent,
        children,
        capacity,
    })
}

/// The unique simple path between two leaves, as parent-edge steps. Equal
/// endpoints give the empty path.
pub fn unique_path(tree: &TreeGraph, u: usize, w: usize) -> Result<Vec<PathStep>> {
    tree.check_leaf(u)?;
    tree.check_leaf(w)?;
    if u == w {
        return Ok(Vec::new());
    }
    let mut up = Vec::new();
    let mut down = Vec::new();
    let (mut a, mut b) = (u, w);
    // Leaves share the level, so we can ascend in lockstep until the walks
    // meet at the lowest common ancestor.
    while a != b {
        up.push(PathStep {
            edge: a,
            dir: Direction::Up,
        });
        down.push(PathStep {
            edge: b,
            dir: Direction::Down,
        });
        a = tree.parent[a].expect("non-root vertices have parents");
        b = tree.parent[b].expect("non-root vertices have parents");
    }
    down.reverse();
    up.extend(down);
    Ok(up)
}

/// Directed augmentation: two antiparallel copies of every tree edge plus
/// one super-node per distinct cache set, wired to its members by
/// uncapacitated edges.
#[derive(Debug, Clone)]
pub struct DirectedCacheGraph<'a> {
    pub tree: &'a TreeGraph,
    cache_sets: Vec<CacheSet>,
    index: BTreeMap<CacheSet, CacheId>,
}

impl<'a> DirectedCacheGraph<'a> {
    pub fn cache_sets(&self) -> &[CacheSet] {
        &self.cache_sets
    }

    pub fn cache_id(&self, set: &CacheSet) -> Option<CacheId> {
        self.index.get(set).copied()
    }

    pub fn cache_set(&self, id: CacheId) -> &CacheSet {
        &self.cache_sets[id]
    }

    /// Number of capacitated directed edges (two per tree edge).
    pub fn core_edge_count(&self) -> usize {
        2 * self.tree.edge_count()
    }

    /// Dense index of a directed core edge, usable as an LP row key.
    pub fn directed_edge_index(&self, edge: EdgeId, dir: Direction) -> usize {
        2 * edge
            + match dir {
                Direction::Up => 0,
                Direction::Down => 1,
            }
    }
}

/// Builds the directed cache graph for a collection of cache sets
/// (deduplicated; every set must be nonempty and contain valid leaves).
pub fn build_directed_augmented<'a>(
    tree: &'a TreeGraph,
    cache_sets: impl IntoIterator<Item = CacheSet>,
) -> Result<DirectedCacheGraph<'a>> {
    let mut sets = Vec::new();
    let mut index = BTreeMap::new();
    for set in cache_sets {
        if set.is_empty() {
            return Err(Error::EmptyCacheSet);
        }
        for &u in set.members() {
            tree.check_leaf(u as usize)?;
        }
        if !index.contains_key(&set) {
            index.insert(set.clone(), sets.len());
            sets.push(set);
        }
    }
    Ok(DirectedCacheGraph {
        tree,
        cache_sets: sets,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::generate_placement;

    #[test]
    fn vertex_count_formula() {
        for n in [4usize, 16, 64, 256, 1024, 4096] {
            let p = generate_placement(n, 1).unwrap();
            let t = build_tree(&p, 4.0).unwrap();
            let expected = n + ((1usize << (2 * (t.depth + 1))) - 1) / 3;
            assert_eq!(t.vertex_count(), expected);
            assert!(t.vertex_count() <= 2 * n);
        }
    }

    #[test]
    fn star_for_n4() {
        let p = generate_placement(4, 2).unwrap();
        let t = build_tree(&p, 4.0).unwrap();
        assert_eq!(t.depth, 0);
        assert_eq!(t.vertex_count(), 5);
        assert_eq!(t.children(t.root()).len(), 4);
        for leaf in 0..4 {
            assert_eq!(t.parent(leaf), Some(t.root()));
            assert_eq!(t.capacity(leaf), 1.0);
        }
    }

    #[test]
    fn capacity_formula() {
        // Leaf level is always unit.
        assert_eq!(edge_capacity(2, 64, 4.0).unwrap(), 1.0);
        // (4^-1 * 64)^(2 - 3/2) = 16^(1/2) = 4.
        assert!((edge_capacity(1, 64, 4.0).unwrap() - 4.0).abs() < 1e-12);
        // alpha = 2.5: 16^(2 - 1.25) = 16^(3/4) = 8.
        assert!((edge_capacity(1, 64, 2.5).unwrap() - 8.0).abs() < 1e-12);
        // min{3, alpha} saturates for large alpha.
        assert!((edge_capacity(1, 64, 10.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(edge_capacity(3, 64, 4.0).is_err());
        assert!(edge_capacity(0, 64, 4.0).is_err());
        assert!(edge_capacity(1, 64, 2.0).is_err());
    }

    #[test]
    fn capacities_grow_towards_root() {
        let p = generate_placement(1024, 3).unwrap();
        let t = build_tree(&p, 2.7).unwrap();
        for l in 1..=t.depth {
            assert!(edge_capacity(l, 1024, 2.7).unwrap() >= edge_capacity(l + 1, 1024, 2.7).unwrap());
        }
        for e in t.edges() {
            assert!(t.capacity(e) >= 1.0);
        }
    }

    #[test]
    fn internal_edge_capacity_in_built_tree() {
        let p = generate_placement(64, 9).unwrap();
        let t = build_tree(&p, 4.0).unwrap();
        let v = t.internal_vertex(1, 3).unwrap();
        assert!((t.capacity(v) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn path_examples() {
        let p = generate_placement(64, 4).unwrap();
        let t = build_tree(&p, 4.0).unwrap();
        assert!(unique_path(&t, 5, 5).unwrap().is_empty());

        // Siblings connect through their shared level-depth parent.
        let mut sibling = None;
        'search: for u in 0..t.n {
            for w in (u + 1)..t.n {
                if t.parent(u) == t.parent(w) {
                    sibling = Some((u, w));
                    break 'search;
                }
            }
        }
        let (u, w) = sibling.expect("some cell holds two nodes");
        let path = unique_path(&t, u, w).unwrap();
        assert_eq!(path.len(), 2);

        // Leaves in different level-1 cells route through the root.
        let mut far = None;
        'far: for u in 0..t.n {
            for w in 0..t.n {
                let cu = dyadic_cell(&p, u, 1).unwrap().cell;
                let cw = dyadic_cell(&p, w, 1).unwrap().cell;
                if cu != cw {
                    far = Some((u, w));
                    break 'far;
                }
            }
        }
        let (u, w) = far.unwrap();
        assert_eq!(unique_path(&t, u, w).unwrap().len(), 2 * (t.depth as usize + 1));

        assert!(unique_path(&t, 0, t.root()).is_err());
    }

    #[test]
    fn path_reversal_matches() {
        let p = generate_placement(256, 8).unwrap();
        let t = build_tree(&p, 3.0).unwrap();
        for (u, w) in [(0usize, 17usize), (3, 200), (40, 41)] {
            let forward = unique_path(&t, u, w).unwrap();
            let mut back = unique_path(&t, w, u).unwrap();
            back.reverse();
            let edges: Vec<_> = forward.iter().map(|s| s.edge).collect();
            let back_edges: Vec<_> = back.iter().map(|s| s.edge).collect();
            assert_eq!(edges, back_edges);
            // A simple path never repeats an edge.
            let mut dedup = edges.clone();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(dedup.len(), edges.len());
        }
    }

    #[test]
    fn directed_augmentation_counts() {
        let p = generate_placement(4, 6).unwrap();
        let t = build_tree(&p, 4.0).unwrap();
        let g = build_directed_augmented(&t, [CacheSet::new(vec![0, 1])]).unwrap();
        assert_eq!(g.core_edge_count(), 8);
        assert_eq!(g.cache_sets().len(), 1);
        assert_eq!(g.cache_set(0).len(), 2);

        // Duplicates collapse to a single super-node.
        let g2 = build_directed_augmented(
            &t,
            [CacheSet::new(vec![2]), CacheSet::new(vec![2]), CacheSet::new(vec![2, 2])],
        )
        .unwrap();
        assert_eq!(g2.cache_sets().len(), 1);

        assert!(build_directed_augmented(&t, [CacheSet::new(vec![])]).is_err());
        assert!(build_directed_augmented(&t, [CacheSet::new(vec![9])]).is_err());
    }
}
