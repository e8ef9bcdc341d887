//! Dinic max-flow and the parametric search used to route single-source
//! concurrent flow on the tree exactly.

use crate::error::{Error, Result};
use crate::tree::TreeGraph;

const EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: f64,
    flow: f64,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    pub num_nodes: usize,
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(num_nodes: usize) -> Self {
        FlowNetwork {
            num_nodes,
            arcs: Vec::new(),
            adj: vec![Vec::new(); num_nodes],
        }
    }

    /// Adds a directed arc and its zero-capacity reverse; returns the arc id.
    pub fn add_arc(&mut self, from: usize, to: usize, cap: f64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap, flow: 0.0 });
        self.arcs.push(Arc {
            to: from,
            cap: 0.0,
            flow: 0.0,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    pub fn set_capacity(&mut self, arc: usize, cap: f64) {
        self.arcs[arc].cap = cap;
    }

    pub fn reset_flow(&mut self) {
        for a in self.arcs.iter_mut() {
            a.flow = 0.0;
        }
    }

    pub fn flow_on(&self, arc: usize) -> f64 {
        self.arcs[arc].flow
    }

    fn residual(&self, arc: usize) -> f64 {
        self.arcs[arc].cap - self.arcs[arc].flow
    }

    fn bfs_levels(&self, s: usize, t: usize) -> Option<Vec<i32>> {
        let mut level = vec![-1i32; self.num_nodes];
        let mut queue = std::collections::VecDeque::new();
        level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &a in &self.adj[u] {
                let v = self.arcs[a].to;
                if level[v] < 0 && self.residual(a) > EPS {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (level[t] >= 0).then_some(level)
    }

    fn dfs_push(
        &mut self,
        u: usize,
        t: usize,
        pushed: f64,
        level: &[i32],
        iter: &mut [usize],
    ) -> f64 {
        if u == t {
            return pushed;
        }
        while iter[u] < self.adj[u].len() {
            let a = self.adj[u][iter[u]];
            let v = self.arcs[a].to;
            if level[v] == level[u] + 1 && self.residual(a) > EPS {
                let d = self.dfs_push(v, t, pushed.min(self.residual(a)), level, iter);
                if d > EPS {
                    self.arcs[a].flow += d;
                    self.arcs[a ^ 1].flow -= d;
                    return d;
                }
            }
            iter[u] += 1;
        }
        0.0
    }

    /// Dinic blocking-flow max flow from `s` to `t`.
    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        while let Some(level) = self.bfs_levels(s, t) {
            let mut iter = vec![0usize; self.num_nodes];
            loop {
                let pushed = self.dfs_push(s, t, f64::INFINITY, &level, &mut iter);
                if pushed <= EPS {
                    break;
                }
                total += pushed;
            }
        }
        total
    }

    /// Source side of a minimum cut after a max-flow run.
    pub fn min_cut_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.num_nodes];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for &a in &self.adj[u] {
                let v = self.arcs[a].to;
                if !seen[v] && self.residual(a) > EPS {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }

    /// Cancels circulation on antiparallel arc pairs so at most one of the
    /// two carries positive flow.
    pub fn cancel_antiparallel(&mut self, pairs: &[(usize, usize)]) {
        for &(a, b) in pairs {
            let overlap = self.arcs[a].flow.min(self.arcs[b].flow);
            if overlap > 0.0 {
                self.arcs[a].flow -= overlap;
                self.arcs[a ^ 1].flow += overlap;
                self.arcs[b].flow -= overlap;
                self.arcs[b ^ 1].flow += overlap;
            }
        }
    }
}

/// Result of routing single-source concurrent flow over the tree.
#[derive(Debug, Clone)]
pub struct ConcurrentTreeFlow {
    /// Largest multiple of the demands that routes.
    pub multiple: f64,
    /// Flow decomposition as (source leaf, destination leaf, amount) at the
    /// optimum, amounts summing to `multiple * demand` per destination.
    pub paths: Vec<(u32, u32, f64)>,
    /// Load per tree edge (child id indexed).
    pub loads: Vec<f64>,
    /// Tree vertices on the source side of the binding cut.
    pub cut_side: Vec<bool>,
}

/// Exact maximum concurrent flow from a set of source leaves to weighted
/// destination leaves over the tree, all demands scaled together. The
/// parametric (Dinkelbach-style) iteration terminates because every round
/// pins the multiple to the ratio of a distinct cut.
pub fn concurrent_tree_flow(
    tree: &TreeGraph,
    sources: &[u32],
    demands: &[(u32, f64)],
) -> Result<ConcurrentTreeFlow> {
    if sources.is_empty() {
        return Err(Error::EmptyCacheSet);
    }
    if demands.is_empty() {
        return Err(Error::ZeroTraffic);
    }
    let nv = tree.vertex_count();
    let s = nv;
    let t = nv + 1;
    let total_demand: f64 = demands.iter().map(|(_, d)| d).sum();

    let mut net = FlowNetwork::new(nv + 2);
    let mut edge_arcs = Vec::new(); // (up arc, down arc, edge id)
    for e in tree.edges() {
        let p = tree.parent(e).expect("edge child has a parent");
        let up = net.add_arc(e, p, tree.capacity(e));
        let down = net.add_arc(p, e, tree.capacity(e));
        edge_arcs.push((up, down, e));
    }
    for &u in sources {
        net.add_arc(s, u as usize, f64::INFINITY);
    }
    let mut demand_arcs = Vec::new();
    for &(w, d) in demands {
        if d <= 0.0 {
            return Err(Error::InvalidArgument("demands must be positive".into()));
        }
        demand_arcs.push((net.add_arc(w as usize, t, 0.0), w, d));
    }

    // Upper bound: each destination's unit leaf edge caps its own demand.
    let mut multiple = demands
        .iter()
        .map(|&(w, d)| tree.capacity(w as usize) / d)
        .fold(f64::INFINITY, f64::min);

    let mut value = 0.0;
    for round in 0.. {
        if round > 64 {
            return Err(Error::Internal(
                "parametric flow search failed to settle".into(),
            ));
        }
        for &(arc, _, d) in &demand_arcs {
            net.set_capacity(arc, multiple * d);
        }
        net.reset_flow();
        value = net.max_flow(s, t);
        let want = multiple * total_demand;
        if value >= want - 1e-12 * (1.0 + want) {
            break;
        }
        // Infeasible at this multiple: tighten to the ratio of the cut the
        // run exposed. Tree capacity A and demand share B across the cut
        // satisfy A + multiple*B = maxflow < multiple*D, so the next
        // multiple A/(D - B) is strictly smaller.
        let side = net.min_cut_side(s);
        let mut tree_cap = 0.0;
        for &(up, down, e) in &edge_arcs {
            let p = tree.parent(e).unwrap();
            if side[e] != side[p] {
                let _ = (up, down);
                tree_cap += tree.capacity(e);
            }
        }
        let mut demand_in = 0.0;
        for &(_, w, d) in &demand_arcs {
            if side[w as usize] {
                demand_in += d;
            }
        }
        let remaining = total_demand - demand_in;
        if remaining <= 1e-15 {
            break;
        }
        let next = tree_cap / remaining;
        if next >= multiple - 1e-15 * (1.0 + multiple) {
            // No further progress possible within floating point.
            multiple = next.min(multiple);
            break;
        }
        multiple = next;
    }

    // Final feasibility may have been left at the break; rerun once to make
    // the stored flow consistent with the final multiple.
    for &(arc, _, d) in &demand_arcs {
        net.set_capacity(arc, multiple * d);
    }
    net.reset_flow();
    value = net.max_flow(s, t);
    let want = multiple * total_demand;
    if value < want - 1e-9 * (1.0 + want) {
        return Err(Error::Internal(format!(
            "parametric flow left a gap: {value} < {want}"
        )));
    }

    let pairs: Vec<(usize, usize)> = edge_arcs.iter().map(|&(u, d, _)| (u, d)).collect();
    net.cancel_antiparallel(&pairs);

    let mut loads = vec![0.0f64; nv];
    for &(up, down, e) in &edge_arcs {
        loads[e] = net.flow_on(up).max(0.0) + net.flow_on(down).max(0.0);
        debug_assert!(loads[e] <= tree.capacity(e) + 1e-8);
    }

    let paths = decompose(&net, tree, s, t)?;
    let cut_side = net.min_cut_side(s)[..nv].to_vec();
    Ok(ConcurrentTreeFlow {
        multiple,
        paths,
        loads,
        cut_side,
    })
}

/// Splits an s-t flow on the augmented tree into source-to-destination
/// paths. The cancelled flow is acyclic, so greedy path peeling terminates.
fn decompose(
    net: &FlowNetwork,
    tree: &TreeGraph,
    s: usize,
    t: usize,
) -> Result<Vec<(u32, u32, f64)>> {
    let mut flow: Vec<f64> = net.arcs.iter().map(|a| a.flow.max(0.0)).collect();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); net.num_nodes];
    for (id, arc) in net.arcs.iter().enumerate() {
        if id % 2 == 0 && flow[id] > EPS {
            let from = net.arcs[id ^ 1].to;
            out[from].push(id);
            let _ = arc;
        }
    }
    let mut paths = Vec::new();
    loop {
        // Walk positive-flow arcs from s to t.
        let mut route = Vec::new();
        let mut u = s;
        while u != t {
            let Some(&arc) = out[u].iter().find(|&&a| flow[a] > EPS) else {
                break;
            };
            route.push(arc);
            u = net.arcs[arc].to;
        }
        if u != t || route.is_empty() {
            break;
        }
        let amount = route
            .iter()
            .map(|&a| flow[a])
            .fold(f64::INFINITY, f64::min);
        for &a in &route {
            flow[a] -= amount;
        }
        // First hop leaves the super-source to a source leaf; last hop is
        // the destination's demand arc.
        let src = net.arcs[route[0]].to;
        let dst = net.arcs[*route.last().unwrap() ^ 1].to;
        if !tree.is_leaf(src) || !tree.is_leaf(dst) {
            return Err(Error::Internal("malformed decomposition path".into()));
        }
        paths.push((src as u32, dst as u32, amount));
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::generate_placement;
    use crate::tree::build_tree;

    #[test]
    fn simple_max_flow() {
        let mut net = FlowNetwork::new(4);
        net.add_arc(0, 1, 3.0);
        net.add_arc(0, 2, 2.0);
        net.add_arc(1, 3, 2.0);
        net.add_arc(2, 3, 3.0);
        net.add_arc(1, 2, 1.0);
        assert!((net.max_flow(0, 3) - 5.0).abs() < 1e-9);
        let side = net.min_cut_side(0);
        assert!(side[0] && !side[3]);
    }

    #[test]
    fn star_concurrent_flow() {
        // Star with a single source serving three unit demands: the source
        // leaf edge is the bottleneck, multiple = 1/3.
        let p = generate_placement(4, 1).unwrap();
        let tree = build_tree(&p, 4.0).unwrap();
        let res =
            concurrent_tree_flow(&tree, &[0], &[(1, 1.0), (2, 1.0), (3, 1.0)]).unwrap();
        assert!((res.multiple - 1.0 / 3.0).abs() < 1e-9);
        let total: f64 = res.paths.iter().map(|(_, _, a)| a).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_sources_cut_both_leaf_edges() {
        let p = generate_placement(4, 2).unwrap();
        let tree = build_tree(&p, 4.0).unwrap();
        let res = concurrent_tree_flow(&tree, &[0, 1], &[(2, 1.0), (3, 1.0)]).unwrap();
        // Each destination's own edge allows 1, and supply allows 2 total:
        // multiple = 1.
        assert!((res.multiple - 1.0).abs() < 1e-9);
        for e in tree.edges() {
            assert!(res.loads[e] <= tree.capacity(e) + 1e-9);
        }
    }
}
