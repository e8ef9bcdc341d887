//! Cut-based outer bound, bottleneck-pair extraction from LP duals, the
//! primal-dual tree multicut, and the sandwich report tying the flow value
//! to the best cut within an explicit factor.

use crate::error::{Error, Result};
use crate::lpcore::{
    concurrent_flow_directed, max_sum_rate, max_sum_rate_undirected, phi, DualSolution,
};
use crate::maxflow::concurrent_tree_flow;
use crate::traffic::{normalize, CacheSet, CacheUnicast, CachingTraffic};
use crate::tree::{build_directed_augmented, EdgeId, TreeGraph, VertexId};
use serde::Serialize;
use std::collections::BTreeSet;

/// Subsets of more vertices than this are not enumerated exhaustively.
pub const BRUTEFORCE_VERTEX_LIMIT: usize = 26;

/// Pattern search handles at most this many positive entries.
pub const PATTERN_ENTRY_LIMIT: usize = 20;

/// One vertex cut with its capacity and the demand that must cross it.
#[derive(Debug, Clone, Serialize)]
pub struct CutSpec {
    pub vertices: Vec<VertexId>,
    pub capacity_across: f64,
    pub demand_across: f64,
}

/// Cut value and witness; the value is infinite when no cut carries
/// positive demand.
#[derive(Debug, Clone)]
pub struct RhohatOutcome {
    pub value: f64,
    pub witness: Option<CutSpec>,
}

/// Capacity of the edges leaving `side` and the demand forced across it.
pub fn evaluate_cut(tree: &TreeGraph, traffic: &CachingTraffic, side: &[bool]) -> CutSpec {
    let mut capacity = 0.0;
    for e in tree.edges() {
        let p = tree.parent(e).unwrap();
        if side[e] != side[p] {
            capacity += tree.capacity(e);
        }
    }
    let mut demand = 0.0;
    for (set, dest, rate) in traffic.iter() {
        if !side[dest as usize] && set.members().iter().all(|&u| side[u as usize]) {
            demand += rate;
        }
    }
    CutSpec {
        vertices: (0..tree.vertex_count()).filter(|&v| side[v]).collect(),
        capacity_across: capacity,
        demand_across: demand,
    }
}

/// Exact minimum of capacity/demand over all vertex subsets, by
/// enumeration. Guarded to small trees.
pub fn rhohat_bruteforce(tree: &TreeGraph, traffic: &CachingTraffic) -> Result<RhohatOutcome> {
    let nv = tree.vertex_count();
    if nv > BRUTEFORCE_VERTEX_LIMIT {
        return Err(Error::TooLarge(format!(
            "{nv} vertices exceed the enumeration guard; use the tree search"
        )));
    }
    if traffic.is_empty() {
        return Ok(RhohatOutcome {
            value: f64::INFINITY,
            witness: None,
        });
    }
    let entries: Vec<(u64, u64, f64)> = traffic
        .iter()
        .map(|(set, dest, rate)| {
            let mask = set
                .members()
                .iter()
                .fold(0u64, |acc, &u| acc | (1u64 << u));
            (mask, 1u64 << dest, rate)
        })
        .collect();
    let edges: Vec<(usize, usize, f64)> = tree
        .edges()
        .map(|e| (e, tree.parent(e).unwrap(), tree.capacity(e)))
        .collect();

    let mut best: Option<(f64, u64)> = None;
    for subset in 0u64..(1u64 << nv) {
        let mut demand = 0.0;
        for &(umask, wbit, rate) in &entries {
            if subset & umask == umask && subset & wbit == 0 {
                demand += rate;
            }
        }
        if demand <= 0.0 {
            continue;
        }
        let mut capacity = 0.0;
        for &(child, parent, cap) in &edges {
            if ((subset >> child) ^ (subset >> parent)) & 1 == 1 {
                capacity += cap;
            }
        }
        let ratio = capacity / demand;
        if best.map_or(true, |(b, _)| ratio < b) {
            best = Some((ratio, subset));
        }
    }
    match best {
        None => Ok(RhohatOutcome {
            value: f64::INFINITY,
            witness: None,
        }),
        Some((value, subset)) => {
            let side: Vec<bool> = (0..nv).map(|v| (subset >> v) & 1 == 1).collect();
            Ok(RhohatOutcome {
                value,
                witness: Some(evaluate_cut(tree, traffic, &side)),
            })
        }
    }
}

/// Minimum-capacity vertex cut with the given leaves pinned to each side;
/// internal vertices and free leaves fall where cheapest. Returns the cost
/// and the chosen side assignment.
fn tree_mincut(tree: &TreeGraph, forced_in: &BTreeSet<u32>, forced_out: &BTreeSet<u32>) -> (f64, Vec<bool>) {
    let nv = tree.vertex_count();
    let mut dp = vec![[0.0f64; 2]; nv];
    for leaf in 0..tree.n {
        if forced_in.contains(&(leaf as u32)) {
            dp[leaf][0] = f64::INFINITY;
        } else if forced_out.contains(&(leaf as u32)) {
            dp[leaf][1] = f64::INFINITY;
        }
    }
    // Children before parents: leaves first, then internals in reverse id
    // order (deeper levels have larger ids).
    let order: Vec<usize> = (0..tree.n).chain((tree.n..nv).rev()).collect();
    for &v in &order {
        if v == tree.root() {
            continue;
        }
        let p = tree.parent(v).unwrap();
        let cap = tree.capacity(v);
        for s in 0..2 {
            let keep = dp[v][s];
            let cut = dp[v][1 - s] + cap;
            dp[p][s] += keep.min(cut);
        }
    }
    let root = tree.root();
    let cost = dp[root][0].min(dp[root][1]);
    // Top-down assignment, parents before children.
    let mut side = vec![false; nv];
    side[root] = dp[root][1] <= dp[root][0];
    for &v in order.iter().rev() {
        if v == root {
            continue;
        }
        let p = tree.parent(v).unwrap();
        let ps = side[p] as usize;
        let keep = dp[v][ps];
        let cut = dp[v][1 - ps] + tree.capacity(v);
        side[v] = if keep <= cut { side[p] } else { !side[p] };
    }
    (cost, side)
}

/// Exact cut search exploiting the tree: for every subset of entries forced
/// across the cut, the cheapest separating assignment comes from a linear
/// tree DP, and minimizing cost/forced-demand over subsets equals the full
/// enumeration minimum (any richer cut is covered by the pattern it
/// crosses). Single-shared-set instances instead reuse the parametric flow,
/// whose final cut is tight.
pub fn rhohat_tree(tree: &TreeGraph, traffic: &CachingTraffic) -> Result<RhohatOutcome> {
    if traffic.is_empty() {
        return Ok(RhohatOutcome {
            value: f64::INFINITY,
            witness: None,
        });
    }
    if traffic.has_empty_set_entry() {
        // An uncacheable demand crosses even the empty cut.
        let side = vec![false; tree.vertex_count()];
        return Ok(RhohatOutcome {
            value: 0.0,
            witness: Some(evaluate_cut(tree, traffic, &side)),
        });
    }
    let entries = traffic.routable_entries();
    if entries.is_empty() {
        return Ok(RhohatOutcome {
            value: f64::INFINITY,
            witness: None,
        });
    }

    let shared = entries.windows(2).all(|w| w[0].0 == w[1].0);
    if shared {
        return rhohat_shared_set(tree, traffic, &entries);
    }
    if entries.len() > PATTERN_ENTRY_LIMIT {
        return Err(Error::TooLarge(format!(
            "{} entries exceed the pattern search guard",
            entries.len()
        )));
    }

    let mut best: Option<(f64, Vec<bool>)> = None;
    for mask in 1u32..(1u32 << entries.len()) {
        let mut forced_in = BTreeSet::new();
        let mut forced_out = BTreeSet::new();
        let mut demand = 0.0;
        let mut feasible = true;
        for (k, (set, dest, rate)) in entries.iter().enumerate() {
            if mask & (1 << k) == 0 {
                continue;
            }
            forced_in.extend(set.members().iter().copied());
            forced_out.insert(*dest);
            demand += rate;
        }
        for w in &forced_out {
            if forced_in.contains(w) {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        let (cost, side) = tree_mincut(tree, &forced_in, &forced_out);
        let ratio = cost / demand;
        if best.as_ref().map_or(true, |(b, _)| ratio < *b) {
            best = Some((ratio, side));
        }
    }
    let (value, side) = best.expect("nonempty mask range");
    let witness = evaluate_cut(tree, traffic, &side);
    debug_assert!(witness.demand_across > 0.0);
    Ok(RhohatOutcome {
        value,
        witness: Some(witness),
    })
}

fn rhohat_shared_set(
    tree: &TreeGraph,
    traffic: &CachingTraffic,
    entries: &[(CacheSet, u32, f64)],
) -> Result<RhohatOutcome> {
    let set = &entries[0].0;
    let demands: Vec<(u32, f64)> = entries.iter().map(|(_, w, r)| (*w, *r)).collect();
    let routed = concurrent_tree_flow(tree, set.members(), &demands)?;
    let mut side = routed.cut_side;
    let cut = evaluate_cut(tree, traffic, &side);
    let witness = if cut.demand_across > 0.0 {
        cut
    } else {
        // Degenerate residual cut; isolate the tightest destination
        // instead, which is also optimal here.
        let (w, rate) = demands
            .iter()
            .copied()
            .min_by(|a, b| {
                let ra = tree.capacity(a.0 as usize) / a.1;
                let rb = tree.capacity(b.0 as usize) / b.1;
                ra.partial_cmp(&rb).unwrap()
            })
            .unwrap();
        let _ = rate;
        side = vec![true; tree.vertex_count()];
        side[w as usize] = false;
        evaluate_cut(tree, traffic, &side)
    };
    let value = witness.capacity_across / witness.demand_across;
    if (value - routed.multiple).abs() > 1e-6 * (1.0 + routed.multiple) {
        return Err(Error::Internal(format!(
            "flow/cut mismatch on a shared-set instance: {} vs {}",
            routed.multiple, value
        )));
    }
    Ok(RhohatOutcome {
        value,
        witness: Some(witness),
    })
}

/// A multicut for a pair set: removing `edges` disconnects every pair. The
/// components partition the vertices of the pruned tree.
#[derive(Debug, Clone, Serialize)]
pub struct Multicut {
    pub edges: Vec<EdgeId>,
    pub cost: f64,
    pub components: Vec<Vec<VertexId>>,
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let r = self.find(self.0[x]);
            self.0[x] = r;
        }
        self.0[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

fn separates_all(tree: &TreeGraph, removed: &BTreeSet<EdgeId>, pairs: &[(u32, u32)]) -> bool {
    let mut dsu = Dsu::new(tree.vertex_count());
    for e in tree.edges() {
        if !removed.contains(&e) {
            dsu.union(e, tree.parent(e).unwrap());
        }
    }
    pairs
        .iter()
        .all(|&(u, w)| dsu.find(u as usize) != dsu.find(w as usize))
}

/// Primal-dual multicut on the tree: route each pair at its lowest common
/// ancestor in bottom-up order, saturating the scarcest edge on the path,
/// then drop saturated edges greedily in reverse order while the remainder
/// still separates every pair. The surviving cut costs at most twice the
/// maximum sum rate of the pairs.
pub fn gvy_multicut(tree: &TreeGraph, pairs: &[(u32, u32)]) -> Result<Multicut> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty pair set".into()));
    }
    for &(u, w) in pairs {
        if u == w {
            return Err(Error::InvalidArgument(format!(
                "pair ({u}, {u}) cannot be separated"
            )));
        }
        if u as usize >= tree.n || w as usize >= tree.n {
            return Err(Error::InvalidNode(u.max(w) as usize));
        }
    }

    // Group pairs by the level of their lowest common ancestor.
    let lca = |u: u32, w: u32| -> VertexId {
        let (mut a, mut b) = (u as usize, w as usize);
        while a != b {
            a = tree.parent(a).unwrap();
            b = tree.parent(b).unwrap();
        }
        a
    };
    let mut grouped: Vec<(VertexId, usize)> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(u, w))| (lca(u, w), i))
        .collect();
    // Bottom-up: deeper ancestors first; stable on input order within a
    // vertex.
    grouped.sort_by_key(|&(v, i)| (std::cmp::Reverse(tree.level(v)), tree.cell(v), i));

    let mut residual: Vec<f64> = (0..tree.vertex_count())
        .map(|v| {
            if v == tree.root() {
                0.0
            } else {
                tree.capacity(v)
            }
        })
        .collect();
    let mut saturated: Vec<EdgeId> = Vec::new();
    let mut is_saturated = vec![false; tree.vertex_count()];

    for &(_, idx) in &grouped {
        let (u, w) = pairs[idx];
        let path = crate::tree::unique_path(tree, u as usize, w as usize)?;
        if path.iter().any(|s| is_saturated[s.edge]) {
            continue; // already disconnected
        }
        let bottleneck = path
            .iter()
            .map(|s| residual[s.edge])
            .fold(f64::INFINITY, f64::min);
        if bottleneck <= 0.0 {
            continue;
        }
        for step in &path {
            residual[step.edge] -= bottleneck;
            if residual[step.edge] <= 1e-12 && !is_saturated[step.edge] {
                is_saturated[step.edge] = true;
                saturated.push(step.edge);
            }
        }
    }

    let mut kept: BTreeSet<EdgeId> = saturated.iter().copied().collect();
    if !separates_all(tree, &kept, pairs) {
        return Err(Error::Internal(
            "saturation phase failed to separate a pair".into(),
        ));
    }
    for &e in saturated.iter().rev() {
        kept.remove(&e);
        if !separates_all(tree, &kept, pairs) {
            kept.insert(e);
        }
    }

    let mut dsu = Dsu::new(tree.vertex_count());
    for e in tree.edges() {
        if !kept.contains(&e) {
            dsu.union(e, tree.parent(e).unwrap());
        }
    }
    let mut comp_ids: Vec<usize> = (0..tree.vertex_count()).map(|v| dsu.find(v)).collect();
    let mut components: Vec<Vec<VertexId>> = Vec::new();
    let mut repr: Vec<(usize, usize)> = Vec::new();
    for v in 0..tree.vertex_count() {
        let root = comp_ids[v];
        match repr.iter().find(|(r, _)| *r == root) {
            Some(&(_, c)) => components[c].push(v),
            None => {
                repr.push((root, components.len()));
                components.push(vec![v]);
            }
        }
    }
    comp_ids.clear();

    // Minimal form: every surviving cut edge must straddle two components.
    for &e in &kept {
        let p = tree.parent(e).unwrap();
        let ce = components.iter().position(|c| c.contains(&e));
        let cp = components.iter().position(|c| c.contains(&p));
        if ce == cp {
            return Err(Error::Internal("multicut kept an interior edge".into()));
        }
    }

    let cost = kept.iter().map(|&e| tree.capacity(e)).sum();
    Ok(Multicut {
        edges: kept.into_iter().collect(),
        cost,
        components,
    })
}

/// Indices of the commodities whose dual distances certify the bottleneck:
/// bucket the distances, keep buckets carrying at least `1/(2n^4)` of the
/// (normalized) rate, locate the first bucket whose distance clears
/// `1/(2 s_i (1 + ln 2n^4))`, and return every pair at or above it.
pub fn bottleneck_pairs(
    duals: &DualSolution,
    rates: &[f64],
    n: usize,
) -> Result<Vec<usize>> {
    if duals.pair_distances.len() != rates.len() {
        return Err(Error::InvalidArgument(
            "distance/rate length mismatch".into(),
        ));
    }
    let total: f64 = rates.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "rates must be normalized to total 1, got {total}"
        )));
    }
    let nf = n as f64;
    let n2 = nf * nf;
    let log_term = 1.0 + (2.0 * nf.powi(4)).ln();

    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| {
        duals.pair_distances[b]
            .partial_cmp(&duals.pair_distances[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    // Merge near-equal distances into buckets, descending.
    let mut buckets: Vec<(f64, f64)> = Vec::new(); // (distance, rate mass)
    for &k in &order {
        let d = duals.pair_distances[k];
        if d <= 1e-12 {
            continue;
        }
        match buckets.last_mut() {
            Some((bd, mass)) if (*bd - d).abs() <= 1e-10 * (1.0 + *bd) => *mass += rates[k],
            _ => buckets.push((d, rates[k])),
        }
    }
    if buckets.is_empty() {
        return Err(Error::Internal("all dual distances vanished".into()));
    }
    if buckets.len() > n * n {
        return Err(Error::Internal(format!(
            "{} distinct distances exceed the n^2 path bound",
            buckets.len()
        )));
    }
    if buckets[0].0 > n2 * (1.0 + 1e-6) {
        return Err(Error::Internal(format!(
            "dual distance {} exceeds the n^2 cap",
            buckets[0].0
        )));
    }

    let threshold_mass = 1.0 / (2.0 * nf.powi(4));
    let heavy: Vec<(f64, f64)> = buckets
        .iter()
        .copied()
        .filter(|&(_, mass)| mass >= threshold_mass)
        .collect();
    if heavy.is_empty() {
        return Err(Error::Internal(
            "no bucket carries the required rate mass".into(),
        ));
    }
    let mut cumulative = 0.0;
    let mut chosen = None;
    for &(d, mass) in &heavy {
        cumulative += mass;
        if d >= 1.0 / (2.0 * cumulative * log_term) {
            chosen = Some(d);
            break;
        }
    }
    let Some(threshold) = chosen else {
        return Err(Error::Internal(
            "no bucket satisfies the distance bound".into(),
        ));
    };

    Ok((0..rates.len())
        .filter(|&k| duals.pair_distances[k] >= threshold - 1e-10 * (1.0 + threshold))
        .collect())
}

/// One link of the sandwich chain, with the values entering it.
#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    /// Flow multiple over the tree for the normalized traffic.
    pub phi: f64,
    /// Cut bound for the normalized traffic.
    pub rhohat: f64,
    /// Concurrent-flow multiple on the directed cache graph.
    pub phi_directed: f64,
    /// Maximum sum rate across the bottleneck pairs on the directed graph.
    pub sigma_directed: f64,
    /// Total normalized demand of the bottleneck pairs.
    pub bottleneck_demand: f64,
    /// Maximum sum rate of the expanded pairs on the undirected tree.
    pub sigma_undirected: f64,
    pub multicut_cost: f64,
    /// phi >= phi_directed / 2.
    pub half_core_ok: bool,
    /// phi_directed >= sigma_directed / (2 (1+ln 2n^4) bottleneck_demand).
    pub dual_extraction_ok: bool,
    /// sigma_directed >= sigma_undirected.
    pub directed_dominates_ok: bool,
    /// sigma_undirected >= multicut_cost / 2.
    pub half_multicut_ok: bool,
    /// bottleneck_demand <= total demand crossing into the multicut
    /// components.
    pub component_demand_ok: bool,
    /// sigma_directed / bottleneck_demand >= rhohat / 4.
    pub quarter_cut_ok: bool,
    /// phi_directed <= n.
    pub directed_capped_ok: bool,
}

/// Full sandwich: `factor * rhohat <= phi <= rhohat`, every link checked.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    /// Flow multiple at the original traffic scale.
    pub phi: f64,
    /// Cut bound at the original traffic scale.
    pub rhohat: f64,
    pub witness_cut: CutSpec,
    pub bottleneck_pairs: Vec<(Vec<u32>, u32)>,
    pub multicut: Multicut,
    /// `1 / (16 (1 + ln 2n^4))`.
    pub sandwich_factor: f64,
    pub sandwich_ok: bool,
    pub chain: ChainReport,
}

/// The guaranteed cut-to-flow factor at size `n`.
pub fn sandwich_factor(n: usize) -> f64 {
    1.0 / (16.0 * (1.0 + (2.0 * (n as f64).powi(4)).ln()))
}

const LINK_TOL: f64 = 1e-6;

/// Runs the whole chain on one instance. Entries whose destination already
/// caches the message are excluded (they support any rate); traffic with an
/// empty cache set is rejected.
pub fn sandwich_report(tree: &TreeGraph, traffic: &CachingTraffic) -> Result<BoundsReport> {
    if traffic.has_empty_set_entry() {
        return Err(Error::InvalidArgument(
            "sandwich needs cacheable entries; an empty cache set only supports rate zero".into(),
        ));
    }
    let routable = traffic.routable_entries();
    if routable.is_empty() {
        return Err(Error::ZeroTraffic);
    }
    let mut working = CachingTraffic::new(traffic.n);
    for (set, dest, rate) in &routable {
        working.insert(set.clone(), *dest, *rate);
    }
    let scale = working.total_rate();
    let working = normalize(&working)?;
    let n = tree.n;

    let phi_out = phi(tree, &working)?;
    let rho_out = rhohat_tree(tree, &working)?;
    let witness = rho_out
        .witness
        .clone()
        .ok_or_else(|| Error::Internal("positive traffic must admit a witness cut".into()))?;

    // Directed graph and its concurrent flow.
    let entries = working.routable_entries();
    let graph = build_directed_augmented(tree, entries.iter().map(|(s, _, _)| s.clone()))?;
    let mut unicast = CacheUnicast::new(n);
    for (set, dest, rate) in &entries {
        unicast.insert(graph.cache_id(set).unwrap(), *dest, *rate);
    }
    let directed = concurrent_flow_directed(&graph, &unicast)?;

    // Bottleneck pairs from the duals.
    let commodities: Vec<(usize, u32, f64)> = unicast.iter().collect();
    let rates: Vec<f64> = commodities.iter().map(|&(_, _, r)| r).collect();
    let picked = bottleneck_pairs(&directed.duals, &rates, n)?;
    let pair_set: Vec<(usize, u32)> = picked
        .iter()
        .map(|&k| (commodities[k].0, commodities[k].1))
        .collect();
    let bottleneck_demand: f64 = picked.iter().map(|&k| commodities[k].2).sum();

    let (sigma_directed, _) = max_sum_rate(&graph, &pair_set)?;

    // Expand super-node pairs to leaf pairs for the undirected side.
    let mut leaf_pairs: Vec<(u32, u32)> = Vec::new();
    for &(cache, dest) in &pair_set {
        for &u in graph.cache_set(cache).members() {
            leaf_pairs.push((u, dest));
        }
    }
    leaf_pairs.sort_unstable();
    leaf_pairs.dedup();
    let sigma_undirected = max_sum_rate_undirected(tree, &leaf_pairs)?;
    let cut = gvy_multicut(tree, &leaf_pairs)?;

    // Demand crossing into each multicut component covers the bottleneck
    // demand: each picked pair is separated, so its destination's component
    // excludes the whole cache set.
    let mut component_demand = 0.0;
    for comp in &cut.components {
        let mut side = vec![true; tree.vertex_count()];
        for &v in comp {
            side[v] = false;
        }
        component_demand += evaluate_cut(tree, &working, &side).demand_across;
    }

    let nf = n as f64;
    let log_term = 1.0 + (2.0 * nf.powi(4)).ln();
    let chain = ChainReport {
        phi: phi_out.value,
        rhohat: rho_out.value,
        phi_directed: directed.value,
        sigma_directed,
        bottleneck_demand,
        sigma_undirected,
        multicut_cost: cut.cost,
        half_core_ok: phi_out.value >= 0.5 * directed.value - LINK_TOL,
        dual_extraction_ok: directed.value
            >= sigma_directed / (2.0 * log_term * bottleneck_demand) - LINK_TOL,
        directed_dominates_ok: sigma_directed >= sigma_undirected - LINK_TOL,
        half_multicut_ok: sigma_undirected >= 0.5 * cut.cost - LINK_TOL,
        component_demand_ok: bottleneck_demand <= component_demand + LINK_TOL,
        quarter_cut_ok: sigma_directed / bottleneck_demand >= 0.25 * rho_out.value - LINK_TOL,
        directed_capped_ok: directed.value <= nf * (1.0 + LINK_TOL),
    };

    let factor = sandwich_factor(n);
    let sandwich_ok = factor * rho_out.value <= phi_out.value + LINK_TOL
        && phi_out.value <= rho_out.value + LINK_TOL
        && chain.half_core_ok
        && chain.dual_extraction_ok
        && chain.directed_dominates_ok
        && chain.half_multicut_ok
        && chain.component_demand_ok
        && chain.quarter_cut_ok
        && chain.directed_capped_ok;

    Ok(BoundsReport {
        phi: phi_out.value / scale,
        rhohat: rho_out.value / scale,
        witness_cut: witness,
        bottleneck_pairs: pair_set
            .iter()
            .map(|&(cache, dest)| (graph.cache_set(cache).members().to_vec(), dest))
            .collect(),
        multicut: cut,
        sandwich_factor: factor,
        sandwich_ok,
        chain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::generate_placement;
    use crate::tree::build_tree;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn star() -> TreeGraph {
        build_tree(&generate_placement(4, 1).unwrap(), 4.0).unwrap()
    }

    fn random_traffic(n: usize, rng: &mut ChaCha8Rng, max_entries: usize) -> CachingTraffic {
        let mut t = CachingTraffic::new(n);
        for _ in 0..rng.gen_range(1..=max_entries) {
            let size = rng.gen_range(1..=3.min(n - 1));
            let set = CacheSet::new((0..size).map(|_| rng.gen_range(0..n as u32)).collect());
            let dest = rng.gen_range(0..n as u32);
            if !set.contains(dest) {
                t.insert(set, dest, rng.gen_range(0.1..2.0));
            }
        }
        if t.routable_entries().is_empty() {
            t.insert(CacheSet::new(vec![0]), (n - 1) as u32, 1.0);
        }
        t
    }

    #[test]
    fn star_cut_examples() {
        let t = star();
        let mut traffic = CachingTraffic::new(4);
        traffic.insert(CacheSet::new(vec![0, 1]), 3, 1.5);
        let out = rhohat_bruteforce(&t, &traffic).unwrap();
        assert!((out.value - 2.0 / 3.0).abs() < 1e-12);
        let witness = out.witness.unwrap();
        assert!((witness.capacity_across - 1.0).abs() < 1e-12);
        assert!((witness.demand_across - 1.5).abs() < 1e-12);
        // The witness keeps both caches and drops the destination.
        assert!(witness.vertices.contains(&0) && witness.vertices.contains(&1));
        assert!(!witness.vertices.contains(&3));

        let mut single = CachingTraffic::new(4);
        single.insert(CacheSet::new(vec![0]), 2, 1.0);
        assert!((rhohat_bruteforce(&t, &single).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_traffic_is_infinite() {
        let t = star();
        let empty = CachingTraffic::new(4);
        assert!(rhohat_bruteforce(&t, &empty).unwrap().value.is_infinite());
        assert!(rhohat_tree(&t, &empty).unwrap().value.is_infinite());
    }

    #[test]
    fn empty_cache_set_pins_cut_to_zero() {
        let t = star();
        let mut traffic = CachingTraffic::new(4);
        traffic.insert(CacheSet::new(vec![]), 1, 0.5);
        let brute = rhohat_bruteforce(&t, &traffic).unwrap();
        let tree_search = rhohat_tree(&t, &traffic).unwrap();
        assert_eq!(brute.value, 0.0);
        assert_eq!(tree_search.value, 0.0);
    }

    #[test]
    fn tree_search_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for n in [4usize, 16] {
            let p = generate_placement(n, rng.gen()).unwrap();
            let t = build_tree(&p, 4.0).unwrap();
            for _ in 0..25 {
                let traffic = random_traffic(n, &mut rng, 5);
                let brute = rhohat_bruteforce(&t, &traffic).unwrap();
                let fast = rhohat_tree(&t, &traffic).unwrap();
                assert!(
                    (brute.value - fast.value).abs() <= 1e-9 * (1.0 + brute.value),
                    "n={n}: {} vs {}",
                    brute.value,
                    fast.value
                );
            }
        }
    }

    #[test]
    fn flow_never_exceeds_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [4usize, 16] {
            let p = generate_placement(n, rng.gen()).unwrap();
            let t = build_tree(&p, 3.2).unwrap();
            for _ in 0..20 {
                let traffic = random_traffic(n, &mut rng, 4);
                let flow = phi(&t, &traffic).unwrap().value;
                let cut = rhohat_tree(&t, &traffic).unwrap().value;
                assert!(flow <= cut * (1.0 + 1e-6) + 1e-9);
            }
        }
    }

    #[test]
    fn multicut_star_examples() {
        let t = star();
        // Two pairs into one destination: cutting the destination's leaf
        // edge suffices and costs 1.
        let cut = gvy_multicut(&t, &[(0, 3), (1, 3)]).unwrap();
        assert_eq!(cut.edges, vec![3]);
        assert!((cut.cost - 1.0).abs() < 1e-12);
        let sigma = max_sum_rate_undirected(&t, &[(0, 3), (1, 3)]).unwrap();
        assert!(sigma >= 0.5 * cut.cost - 1e-9);

        // A single pair yields the cheapest edge on its path, and the sum
        // rate matches it exactly.
        let single = gvy_multicut(&t, &[(0, 2)]).unwrap();
        assert_eq!(single.edges.len(), 1);
        let sigma_single = max_sum_rate_undirected(&t, &[(0, 2)]).unwrap();
        assert!((sigma_single - single.cost).abs() < 1e-9);

        assert!(gvy_multicut(&t, &[(1, 1)]).is_err());
        assert!(gvy_multicut(&t, &[]).is_err());
    }

    #[test]
    fn multicut_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = generate_placement(16, 3).unwrap();
        let t = build_tree(&p, 4.0).unwrap();
        for _ in 0..25 {
            let mut pairs = Vec::new();
            for _ in 0..rng.gen_range(1..=6) {
                let u = rng.gen_range(0..16u32);
                let w = rng.gen_range(0..16u32);
                if u != w {
                    pairs.push((u, w));
                }
            }
            if pairs.is_empty() {
                continue;
            }
            let cut = gvy_multicut(&t, &pairs).unwrap();
            // Validity: removing the cut separates every pair.
            let removed: BTreeSet<_> = cut.edges.iter().copied().collect();
            assert!(separates_all(&t, &removed, &pairs));
            // Half-cost guarantee against the LP optimum.
            let sigma = max_sum_rate_undirected(&t, &pairs).unwrap();
            assert!(
                sigma >= 0.5 * cut.cost - 1e-6,
                "sigma {} vs cost {}",
                sigma,
                cut.cost
            );
        }
    }

    #[test]
    fn sandwich_factor_value() {
        // 1/(16 (1 + ln 512)) at n = 4.
        let f = sandwich_factor(4);
        assert!((f - 1.0 / (16.0 * (1.0 + 512f64.ln()))).abs() < 1e-15);
        assert!((f - 8.636e-3).abs() < 2e-5);
    }

    #[test]
    fn sandwich_star_instance() {
        let t = star();
        let mut traffic = CachingTraffic::new(4);
        traffic.insert(CacheSet::new(vec![0, 1]), 3, 1.5);
        let report = sandwich_report(&t, &traffic).unwrap();
        assert!(report.sandwich_ok, "chain: {:?}", report.chain);
        assert!((report.phi - 2.0 / 3.0).abs() < 1e-6);
        assert!((report.rhohat - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn sandwich_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [4usize, 16] {
            let p = generate_placement(n, rng.gen()).unwrap();
            let t = build_tree(&p, 4.0).unwrap();
            for _ in 0..25 {
                let traffic = random_traffic(n, &mut rng, 4);
                let report = sandwich_report(&t, &traffic).unwrap();
                assert!(report.sandwich_ok, "n={n} chain: {:?}", report.chain);
            }
        }
    }

    #[test]
    fn bottleneck_single_commodity() {
        let t = star();
        let g = build_directed_augmented(&t, [CacheSet::new(vec![0])]).unwrap();
        let mut unicast = CacheUnicast::new(4);
        unicast.insert(0, 2, 1.0);
        let out = concurrent_flow_directed(&g, &unicast).unwrap();
        let picked = bottleneck_pairs(&out.duals, &[1.0], 4).unwrap();
        assert_eq!(picked, vec![0]);
    }
}
