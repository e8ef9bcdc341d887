//! Random node placements on the area-`n` square and their dyadic
//! decomposition.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Planar point; serializes as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point(pub f64, pub f64);

impl Point {
    pub fn x(&self) -> f64 {
        self.0
    }

    pub fn y(&self) -> f64 {
        self.1
    }

    pub fn dist(&self, other: &Point) -> f64 {
        let dx = self.0 - other.0;
        let dy = self.1 - other.1;
        (dx * dx + dy * dy).sqrt()
    }
}

/// `n` wireless nodes on `[0, sqrt(n)]^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodePlacement {
    pub n: usize,
    pub seed: u64,
    pub coords: Vec<Point>,
}

/// Index of one subsquare of the dyadic decomposition. Cells are numbered
/// 1..=4^level, row-major from the bottom-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicIndex {
    pub level: u32,
    pub cell: u64,
}

/// Outcome of the four placement regularity conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// Minimum pairwise distance exceeds `1/n`.
    pub min_distance_ok: bool,
    /// Every area-1 cell holds at most `log2(n)` nodes.
    pub unit_cell_max_ok: bool,
    /// Every area-`2 log2(n)` cell holds at least one node.
    pub logn_cell_min_ok: bool,
    /// Cell populations stay within a factor 4 of their expectation at all
    /// levels up to `log2(n)/2 * (1 - log2(n)^(-5/6))`.
    pub proportional_ok: bool,
    pub overall: bool,
}

impl NodePlacement {
    /// Side length of the deployment square.
    pub fn side(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    pub fn point(&self, node: usize) -> Result<Point> {
        self.coords.get(node).copied().ok_or(Error::InvalidNode(node))
    }

    pub fn dist(&self, u: usize, v: usize) -> Result<f64> {
        Ok(self.point(u)?.dist(&self.point(v)?))
    }

    /// Checks the structural invariants of a placement loaded from a file.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("placement with n = 0".into()));
        }
        if self.coords.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "placement claims n = {} but has {} coordinates",
                self.n,
                self.coords.len()
            )));
        }
        let side = self.side();
        for (i, p) in self.coords.iter().enumerate() {
            if !(p.x() >= 0.0 && p.x() <= side && p.y() >= 0.0 && p.y() <= side) {
                return Err(Error::InvalidArgument(format!(
                    "node {i} at ({}, {}) outside [0, {side}]^2",
                    p.x(),
                    p.y()
                )));
            }
        }
        for u in 0..self.n {
            for v in (u + 1)..self.n {
                if self.coords[u] == self.coords[v] {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate coordinates for nodes {u} and {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Node ids inside a dyadic cell, ascending.
    pub fn nodes_in_cell(&self, index: DyadicIndex) -> Vec<usize> {
        (0..self.n)
            .filter(|&v| dyadic_cell(self, v, index.level).map(|d| d.cell) == Ok(index.cell))
            .collect()
    }
}

/// Samples `n` points independently and uniformly on the square.
/// Deterministic for a given `(n, seed)`.
pub fn generate_placement(n: usize, seed: u64) -> Result<NodePlacement> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let side = (n as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n)
        .map(|_| Point(rng.gen::<f64>() * side, rng.gen::<f64>() * side))
        .collect();
    Ok(NodePlacement { n, seed, coords })
}

fn log2_exact(n: usize) -> f64 {
    if n.is_power_of_two() {
        n.trailing_zeros() as f64
    } else {
        (n as f64).log2()
    }
}

/// Depth of the dyadic hierarchy: `floor(log2(n)/2 * (1 - log2(n)^(-1/2)))`,
/// clamped at zero so tiny instances still yield a two-level tree.
pub fn dyadic_depth(n: usize) -> u32 {
    assert!(n >= 1, "node count must be positive");
    let lg = log2_exact(n);
    if lg <= 1.0 {
        return 0;
    }
    let raw = 0.5 * lg * (1.0 - lg.powf(-0.5));
    raw.max(0.0).floor() as u32
}

/// Cell of the side-`2^-level * sqrt(n)` subsquare containing a point.
/// Boxes are half-open with the top/right edges closed on the last
/// row/column, so the cells tile the square.
pub(crate) fn cell_of_point(p: Point, side: f64, level: u32) -> u64 {
    let k = 1u64 << level;
    let cell_side = side / k as f64;
    let clamp = |coord: f64| -> u64 {
        let idx = (coord / cell_side).floor() as i64;
        idx.clamp(0, k as i64 - 1) as u64
    };
    let col = clamp(p.x());
    let row = clamp(p.y());
    row * k + col + 1
}

/// Dyadic cell of a node at the given level.
pub fn dyadic_cell(placement: &NodePlacement, node: usize, level: u32) -> Result<DyadicIndex> {
    let p = placement.point(node)?;
    Ok(DyadicIndex {
        level,
        cell: cell_of_point(p, placement.side(), level),
    })
}

fn counts_at_level(placement: &NodePlacement, level: u32) -> Vec<usize> {
    let cells = 1usize << (2 * level);
    let mut counts = vec![0usize; cells];
    let side = placement.side();
    for p in &placement.coords {
        counts[(cell_of_point(*p, side, level) - 1) as usize] += 1;
    }
    counts
}

/// Evaluates the four regularity conditions. Levels given by real-valued
/// formulas are rounded down; conditions whose level range is empty hold
/// vacuously.
pub fn check_regularity(placement: &NodePlacement) -> RegularityReport {
    let n = placement.n;
    let lg = log2_exact(n);
    let inv_n = 1.0 / n as f64;

    let mut min_distance_ok = true;
    'outer: for u in 0..n {
        for v in (u + 1)..n {
            if placement.coords[u].dist(&placement.coords[v]) <= inv_n {
                min_distance_ok = false;
                break 'outer;
            }
        }
    }

    // Unit cells: level log2(n)/2, population at most log2(n).
    let unit_level = (0.5 * lg).floor().max(0.0) as u32;
    let unit_cell_max_ok = counts_at_level(placement, unit_level)
        .iter()
        .all(|&c| (c as f64) <= lg + 1e-9);

    // Area-2log(n) cells: level log2(n / (2 log2 n))/2, at least one node.
    let logn_cell_min_ok = if n >= 2 {
        let inner = n as f64 / (2.0 * lg);
        let level = (0.5 * inner.log2()).floor().max(0.0) as u32;
        counts_at_level(placement, level).iter().all(|&c| c >= 1)
    } else {
        true
    };

    // Proportional population for levels 1..=log2(n)/2*(1-log2(n)^(-5/6)).
    let mut proportional_ok = true;
    if lg > 1.0 {
        let top = (0.5 * lg * (1.0 - lg.powf(-5.0 / 6.0))).floor().max(0.0) as u32;
        for level in 1..=top {
            let quarter = 4f64.powi(-(level as i32)) * n as f64;
            let (lo, hi) = (quarter / 4.0, quarter * 4.0);
            if counts_at_level(placement, level)
                .iter()
                .any(|&c| (c as f64) < lo - 1e-9 || (c as f64) > hi + 1e-9)
            {
                proportional_ok = false;
                break;
            }
        }
    }

    let overall = min_distance_ok && unit_cell_max_ok && logn_cell_min_ok && proportional_ok;
    RegularityReport {
        min_distance_ok,
        unit_cell_max_ok,
        logn_cell_min_ok,
        proportional_ok,
        overall,
    }
}
