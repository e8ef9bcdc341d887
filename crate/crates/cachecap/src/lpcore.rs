//! The path-flow linear programs: the largest routable multiple of a
//! caching matrix over the tree, the concurrent-flow program on the
//! directed cache graph together with its duals, and maximum sum rate.

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::maxflow::concurrent_tree_flow;
use crate::traffic::{CacheSet, CacheUnicast, CachingTraffic};
use crate::tree::{unique_path, Direction, DirectedCacheGraph, EdgeId, PathStep, TreeGraph};
use std::collections::BTreeMap;

/// Residual tolerance demanded of every optimal solve.
pub const SOLVE_TOL: f64 = 1e-8;

/// Above this many path variables, single-cache-set instances switch from
/// the simplex to the exact parametric max-flow route.
const LP_VAR_LIMIT: usize = 2048;

/// Hard cap on LP size for multi-set instances.
const LP_VAR_HARD_CAP: usize = 50_000;

/// One demand: a cache set and a destination leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Commodity {
    pub set: CacheSet,
    pub dest: u32,
    pub rate: f64,
}

/// Flow assigned to one source's path within a commodity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowTerm {
    pub commodity: usize,
    pub source: u32,
    pub rate: f64,
}

/// A routed flow: per-(commodity, source-path) rates plus the per-edge
/// loads they induce. Loads are recomputed from the terms, so
/// `loads[e] <= capacity(e) + SOLVE_TOL` is checked at construction.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub n: usize,
    commodities: Vec<Commodity>,
    terms: Vec<FlowTerm>,
    loads: Vec<f64>,
}

impl FlowSolution {
    pub fn empty(n: usize) -> Self {
        FlowSolution {
            n,
            commodities: Vec::new(),
            terms: Vec::new(),
            loads: Vec::new(),
        }
    }

    fn build(tree: &TreeGraph, commodities: Vec<Commodity>, terms: Vec<FlowTerm>) -> Result<Self> {
        let mut loads = vec![0.0f64; tree.vertex_count()];
        for term in &terms {
            let dest = commodities[term.commodity].dest;
            for step in unique_path(tree, term.source as usize, dest as usize)? {
                loads[step.edge] += term.rate;
            }
        }
        for e in tree.edges() {
            if loads[e] > tree.capacity(e) * (1.0 + SOLVE_TOL) + SOLVE_TOL {
                return Err(Error::Internal(format!(
                    "edge {e} overloaded: {} > {}",
                    loads[e],
                    tree.capacity(e)
                )));
            }
        }
        Ok(FlowSolution {
            n: tree.n,
            commodities,
            terms,
            loads,
        })
    }

    pub fn commodities(&self) -> &[Commodity] {
        &self.commodities
    }

    pub fn commodity(&self, idx: usize) -> &Commodity {
        &self.commodities[idx]
    }

    pub fn terms(&self) -> &[FlowTerm] {
        &self.terms
    }

    /// Load on a tree edge (child id).
    pub fn load(&self, edge: EdgeId) -> f64 {
        self.loads.get(edge).copied().unwrap_or(0.0)
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    /// Total flow delivered to a commodity across its paths.
    pub fn delivered(&self, commodity: usize) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.commodity == commodity)
            .map(|t| t.rate)
            .sum()
    }
}

/// Optimal duals of the concurrent-flow program: nonnegative prices on the
/// directed core edges and, for every commodity, the induced shortest-path
/// distance from its super-node to its destination.
#[derive(Debug, Clone)]
pub struct DualSolution {
    /// Price per (edge, direction), dense-indexed as `2*edge + dir`.
    pub edge_prices: Vec<f64>,
    /// Shortest path distance per commodity under the prices.
    pub pair_distances: Vec<f64>,
    /// Dual objective: total capacity-weighted price mass.
    pub price_mass: f64,
}

/// Outcome of the routable-multiple computation.
#[derive(Debug, Clone)]
pub struct PhiOutcome {
    /// Largest multiple of the traffic that routes over the tree.
    /// `f64::INFINITY` when every positive entry is trivially satisfied
    /// (destination already caches the message); `0.0` when some entry has
    /// an empty cache set.
    pub value: f64,
    pub flow: FlowSolution,
    /// Duals on the undirected capacity rows when the LP route ran.
    pub edge_duals: Option<Vec<f64>>,
}

fn check_residuals(sol: &crate::lp::LpSolution<f64>, what: &str) -> Result<()> {
    if sol.primal_residual > SOLVE_TOL || sol.dual_residual > SOLVE_TOL || sol.duality_gap > SOLVE_TOL
    {
        return Err(Error::LpNumerical(format!(
            "{what}: residuals primal={} dual={} gap={}",
            sol.primal_residual, sol.dual_residual, sol.duality_gap
        )));
    }
    Ok(())
}

/// Largest multiple `phi` such that the demands `phi * rate` are
/// simultaneously routable over the tree, together with an attaining flow.
pub fn phi(tree: &TreeGraph, traffic: &CachingTraffic) -> Result<PhiOutcome> {
    if traffic.has_empty_set_entry() {
        return Ok(PhiOutcome {
            value: 0.0,
            flow: FlowSolution::empty(tree.n),
            edge_duals: None,
        });
    }
    let entries = traffic.routable_entries();
    if entries.is_empty() {
        if traffic.is_empty() {
            return Err(Error::ZeroTraffic);
        }
        // Only trivially infinite entries remain.
        return Ok(PhiOutcome {
            value: f64::INFINITY,
            flow: FlowSolution::empty(tree.n),
            edge_duals: None,
        });
    }

    let num_path_vars: usize = entries.iter().map(|(set, _, _)| set.len()).sum();
    let single_set = entries
        .windows(2)
        .all(|w| w[0].0 == w[1].0);
    if single_set && num_path_vars > LP_VAR_LIMIT {
        return phi_via_flow(tree, traffic);
    }
    if num_path_vars > LP_VAR_HARD_CAP {
        return Err(Error::TooLarge(format!(
            "{num_path_vars} path variables exceed the LP cap"
        )));
    }
    phi_via_lp(tree, traffic)
}

/// The path-formulation LP for `phi`. Public for cross-checking against the
/// flow route.
pub fn phi_via_lp(tree: &TreeGraph, traffic: &CachingTraffic) -> Result<PhiOutcome> {
    let entries = traffic.routable_entries();
    let commodities: Vec<Commodity> = entries
        .iter()
        .map(|(set, dest, rate)| Commodity {
            set: set.clone(),
            dest: *dest,
            rate: *rate,
        })
        .collect();

    let (lp, var_keys, edge_rows) = build_phi_lp(tree, &commodities)?;
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!(
            "phi program should be bounded and feasible, got {:?}",
            sol.status
        )));
    }
    check_residuals(&sol, "phi")?;

    let terms = var_keys
        .iter()
        .zip(sol.primal.iter().skip(1))
        .filter(|(_, &v)| v > 1e-12)
        .map(|(&(commodity, source), &rate)| FlowTerm {
            commodity,
            source,
            rate,
        })
        .collect();
    let flow = FlowSolution::build(tree, commodities, terms)?;

    let mut edge_duals = vec![0.0f64; tree.vertex_count()];
    for (&edge, &row) in &edge_rows {
        edge_duals[edge] = sol.dual[row];
    }
    Ok(PhiOutcome {
        value: sol.objective_value,
        flow,
        edge_duals: Some(edge_duals),
    })
}

/// Shared LP assembly: variable 0 is the multiple, then one flow variable
/// per (commodity, source). Capacity rows exist only for edges some path
/// traverses; untouched edges cannot be loaded.
fn build_phi_lp(
    tree: &TreeGraph,
    commodities: &[Commodity],
) -> Result<(
    LinearProgram<f64>,
    Vec<(usize, u32)>,
    BTreeMap<EdgeId, usize>,
)> {
    let mut var_keys: Vec<(usize, u32)> = Vec::new();
    let mut paths: Vec<Vec<PathStep>> = Vec::new();
    for (k, com) in commodities.iter().enumerate() {
        for &u in com.set.members() {
            var_keys.push((k, u));
            paths.push(unique_path(tree, u as usize, com.dest as usize)?);
        }
    }
    let num_vars = 1 + var_keys.len();
    let mut lp = LinearProgram::new(num_vars);
    lp.set_objective(0, 1.0);

    // Demand rows: rate * phi - sum of the commodity's path flows <= 0.
    let mut demand_coeffs: Vec<Vec<(usize, f64)>> = commodities
        .iter()
        .map(|c| vec![(0, c.rate)])
        .collect();
    for (var, &(k, _)) in var_keys.iter().enumerate() {
        demand_coeffs[k].push((1 + var, -1.0));
    }
    for coeffs in demand_coeffs {
        lp.add_row(coeffs, 0.0);
    }

    // Capacity rows over the edges actually used.
    let mut edge_vars: BTreeMap<EdgeId, Vec<usize>> = BTreeMap::new();
    for (var, path) in paths.iter().enumerate() {
        for step in path {
            edge_vars.entry(step.edge).or_default().push(1 + var);
        }
    }
    let mut edge_rows = BTreeMap::new();
    for (edge, vars) in edge_vars {
        let coeffs = vars.into_iter().map(|v| (v, 1.0)).collect();
        let row = lp.add_row(coeffs, tree.capacity(edge));
        edge_rows.insert(edge, row);
    }
    Ok((lp, var_keys, edge_rows))
}

/// Exact flow route for instances whose entries share one cache set.
pub fn phi_via_flow(tree: &TreeGraph, traffic: &CachingTraffic) -> Result<PhiOutcome> {
    let entries = traffic.routable_entries();
    let set = entries[0].0.clone();
    if !entries.iter().all(|(s, _, _)| *s == set) {
        return Err(Error::InvalidArgument(
            "flow route needs a single shared cache set".into(),
        ));
    }
    let demands: Vec<(u32, f64)> = entries.iter().map(|(_, w, r)| (*w, *r)).collect();
    let routed = concurrent_tree_flow(tree, set.members(), &demands)?;

    let commodities: Vec<Commodity> = entries
        .iter()
        .map(|(s, dest, rate)| Commodity {
            set: s.clone(),
            dest: *dest,
            rate: *rate,
        })
        .collect();
    let index: BTreeMap<u32, usize> = commodities
        .iter()
        .enumerate()
        .map(|(k, c)| (c.dest, k))
        .collect();
    let mut grouped: BTreeMap<(usize, u32), f64> = BTreeMap::new();
    for (source, dest, amount) in routed.paths {
        *grouped.entry((index[&dest], source)).or_insert(0.0) += amount;
    }
    let terms: Vec<FlowTerm> = grouped
        .into_iter()
        .map(|((commodity, source), rate)| FlowTerm {
            commodity,
            source,
            rate,
        })
        .collect();
    let flow = FlowSolution::build(tree, commodities, terms)?;
    for (k, com) in flow.commodities().iter().enumerate() {
        let want = routed.multiple * com.rate;
        if flow.delivered(k) < want - 1e-7 * (1.0 + want) {
            return Err(Error::Internal(format!(
                "commodity {k} under-delivered: {} < {want}",
                flow.delivered(k)
            )));
        }
    }
    Ok(PhiOutcome {
        value: routed.multiple,
        flow,
        edge_duals: None,
    })
}

/// Concurrent-flow outcome on the directed cache graph.
#[derive(Debug, Clone)]
pub struct DirectedFlowOutcome {
    /// Largest multiple of the unicast demands routable over the directed
    /// graph.
    pub value: f64,
    pub flow: FlowSolution,
    pub duals: DualSolution,
    /// Load per directed core edge, indexed `2*edge + dir`.
    pub directed_loads: Vec<f64>,
}

fn directed_paths(
    graph: &DirectedCacheGraph,
    commodities: &[Commodity],
) -> Result<(Vec<(usize, u32)>, Vec<Vec<PathStep>>)> {
    let mut var_keys = Vec::new();
    let mut paths = Vec::new();
    for (k, com) in commodities.iter().enumerate() {
        for &u in com.set.members() {
            var_keys.push((k, u));
            paths.push(unique_path(graph.tree, u as usize, com.dest as usize)?);
        }
    }
    Ok((var_keys, paths))
}

fn directed_capacity_rows(
    graph: &DirectedCacheGraph,
    lp: &mut LinearProgram<f64>,
    var_keys: &[(usize, u32)],
    paths: &[Vec<PathStep>],
    first_var: usize,
) -> BTreeMap<usize, usize> {
    let mut edge_vars: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (var, path) in paths.iter().enumerate() {
        for step in path {
            let key = graph.directed_edge_index(step.edge, step.dir);
            edge_vars.entry(key).or_default().push(first_var + var);
        }
    }
    let _ = var_keys;
    let mut rows = BTreeMap::new();
    for (key, vars) in edge_vars {
        let coeffs = vars.into_iter().map(|v| (v, 1.0)).collect();
        let cap = graph.tree.capacity(key / 2);
        let row = lp.add_row(coeffs, cap);
        rows.insert(key, row);
    }
    rows
}

/// Maximum concurrent flow for unicast demands whose sources are cache
/// super-nodes, with the optimal duals of the program: edge prices and
/// shortest-path pair distances. Cache edges are uncapacitated and so
/// always carry zero price.
pub fn concurrent_flow_directed(
    graph: &DirectedCacheGraph,
    unicast: &CacheUnicast,
) -> Result<DirectedFlowOutcome> {
    if unicast.is_empty() {
        return Err(Error::ZeroTraffic);
    }
    let mut commodities = Vec::new();
    for (cache, dest, rate) in unicast.iter() {
        if cache >= graph.cache_sets().len() || dest as usize >= graph.tree.n {
            return Err(Error::InvalidArgument(
                "unicast references unknown cache node or destination".into(),
            ));
        }
        commodities.push(Commodity {
            set: graph.cache_set(cache).clone(),
            dest,
            rate,
        });
    }

    let (var_keys, paths) = directed_paths(graph, &commodities)?;
    let mut lp = LinearProgram::new(1 + var_keys.len());
    lp.set_objective(0, 1.0);
    let mut demand_coeffs: Vec<Vec<(usize, f64)>> = commodities
        .iter()
        .map(|c| vec![(0, c.rate)])
        .collect();
    for (var, &(k, _)) in var_keys.iter().enumerate() {
        demand_coeffs[k].push((1 + var, -1.0));
    }
    for coeffs in demand_coeffs {
        lp.add_row(coeffs, 0.0);
    }
    let edge_rows = directed_capacity_rows(graph, &mut lp, &var_keys, &paths, 1);

    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!(
            "directed concurrent flow program: {:?}",
            sol.status
        )));
    }
    check_residuals(&sol, "concurrent_flow_directed")?;

    let mut edge_prices = vec![0.0f64; 2 * graph.tree.vertex_count()];
    for (&key, &row) in &edge_rows {
        edge_prices[key] = sol.dual[row].max(0.0);
    }
    // Replace the raw demand duals by shortest-path distances under the
    // prices; this stays optimal and is the normal form downstream
    // extraction expects.
    let pair_distances: Vec<f64> = commodities
        .iter()
        .map(|com| {
            com.set
                .members()
                .iter()
                .map(|&u| {
                    unique_path(graph.tree, u as usize, com.dest as usize)
                        .expect("leaves checked")
                        .iter()
                        .map(|s| edge_prices[graph.directed_edge_index(s.edge, s.dir)])
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let price_mass: f64 = edge_rows
        .iter()
        .map(|(&key, &row)| graph.tree.capacity(key / 2) * sol.dual[row])
        .sum();
    let _ = price_mass;

    let mut directed_loads = vec![0.0f64; 2 * graph.tree.vertex_count()];
    let mut terms = Vec::new();
    for ((&(commodity, source), path), &value) in var_keys
        .iter()
        .zip(paths.iter())
        .zip(sol.primal.iter().skip(1))
    {
        if value > 1e-12 {
            terms.push(FlowTerm {
                commodity,
                source,
                rate: value,
            });
            for step in path {
                directed_loads[graph.directed_edge_index(step.edge, step.dir)] += value;
            }
        }
    }
    for e in graph.tree.edges() {
        for dir in [Direction::Up, Direction::Down] {
            let key = graph.directed_edge_index(e, dir);
            if directed_loads[key] > graph.tree.capacity(e) + SOLVE_TOL {
                return Err(Error::Internal(format!(
                    "directed edge ({e}, {dir:?}) overloaded"
                )));
            }
        }
    }

    let n = graph.tree.n;
    let flow = FlowSolution {
        n,
        commodities,
        terms,
        loads: Vec::new(),
    };
    let dual_mass: f64 = edge_rows
        .iter()
        .map(|(&key, &row)| graph.tree.capacity(key / 2) * sol.dual[row])
        .sum();
    Ok(DirectedFlowOutcome {
        value: sol.objective_value,
        flow,
        duals: DualSolution {
            edge_prices,
            pair_distances,
            price_mass: dual_mass,
        },
        directed_loads,
    })
}

/// Largest total rate routable jointly between the given
/// (cache super-node, destination) pairs over the directed graph.
pub fn max_sum_rate(
    graph: &DirectedCacheGraph,
    pairs: &[(usize, u32)],
) -> Result<(f64, FlowSolution)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty pair set".into()));
    }
    let commodities: Vec<Commodity> = pairs
        .iter()
        .map(|&(cache, dest)| {
            if cache >= graph.cache_sets().len() || dest as usize >= graph.tree.n {
                return Err(Error::InvalidArgument("pair outside the valid domain".into()));
            }
            Ok(Commodity {
                set: graph.cache_set(cache).clone(),
                dest,
                rate: 1.0,
            })
        })
        .collect::<Result<_>>()?;

    let (var_keys, paths) = directed_paths(graph, &commodities)?;
    let mut lp = LinearProgram::new(var_keys.len());
    for v in 0..var_keys.len() {
        lp.set_objective(v, 1.0);
    }
    directed_capacity_rows(graph, &mut lp, &var_keys, &paths, 0);

    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("sum-rate program: {:?}", sol.status)));
    }
    check_residuals(&sol, "max_sum_rate")?;

    let terms = var_keys
        .iter()
        .zip(sol.primal.iter())
        .filter(|(_, &v)| v > 1e-12)
        .map(|(&(commodity, source), &rate)| FlowTerm {
            commodity,
            source,
            rate,
        })
        .collect();
    let flow = FlowSolution {
        n: graph.tree.n,
        commodities,
        terms,
        loads: Vec::new(),
    };
    Ok((sol.objective_value, flow))
}

/// Maximum sum rate between leaf pairs over the undirected tree, where the
/// two directions share each edge's capacity.
pub fn max_sum_rate_undirected(tree: &TreeGraph, pairs: &[(u32, u32)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty pair set".into()));
    }
    let mut lp = LinearProgram::new(pairs.len());
    let mut edge_vars: BTreeMap<EdgeId, Vec<usize>> = BTreeMap::new();
    for (var, &(u, w)) in pairs.iter().enumerate() {
        lp.set_objective(var, 1.0);
        for step in unique_path(tree, u as usize, w as usize)? {
            edge_vars.entry(step.edge).or_default().push(var);
        }
    }
    for (edge, vars) in edge_vars {
        let coeffs = vars.into_iter().map(|v| (v, 1.0)).collect();
        lp.add_row(coeffs, tree.capacity(edge));
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!(
            "undirected sum-rate program: {:?}",
            sol.status
        )));
    }
    check_residuals(&sol, "max_sum_rate_undirected")?;
    Ok(sol.objective_value)
}
