//! Sparse caching and unicast traffic matrices, and the scenario
//! constructions used by the experiments.

use crate::error::{Error, Result};
use crate::lpcore::FlowSolution;
use crate::placement::{dyadic_cell, DyadicIndex, NodePlacement};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Canonical cache set: sorted, deduplicated leaf ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheSet(Vec<u32>);

impl CacheSet {
    pub fn new(mut ids: Vec<u32>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        CacheSet(ids)
    }

    pub fn members(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, leaf: u32) -> bool {
        self.0.binary_search(&leaf).is_ok()
    }
}

/// How an entry participates in routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryClass {
    /// Ordinary demand: nonempty cache set not containing the destination.
    Routable,
    /// Destination already holds the message; any rate is attainable.
    TriviallyInfinite,
    /// No cache holds the message; only rate zero is attainable.
    EmptySet,
}

/// Sparse caching traffic: map from (cache set, destination) to a positive
/// rate. Zero-rate entries are never stored; inserting the same key twice
/// accumulates.
#[derive(Debug, Clone, PartialEq)]
pub struct CachingTraffic {
    pub n: usize,
    entries: BTreeMap<(CacheSet, u32), f64>,
}

impl CachingTraffic {
    pub fn new(n: usize) -> Self {
        CachingTraffic {
            n,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, caches: CacheSet, dest: u32, rate: f64) {
        assert!(rate >= 0.0, "rates are nonnegative");
        assert!((dest as usize) < self.n, "destination out of range");
        if rate == 0.0 {
            return;
        }
        *self.entries.entry((caches, dest)).or_insert(0.0) += rate;
    }

    /// Number of stored (cache set, destination) pairs with positive rate.
    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_rate(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CacheSet, u32, f64)> {
        self.entries.iter().map(|((set, dest), &rate)| (set, *dest, rate))
    }

    pub fn classify(set: &CacheSet, dest: u32) -> EntryClass {
        if set.is_empty() {
            EntryClass::EmptySet
        } else if set.contains(dest) {
            EntryClass::TriviallyInfinite
        } else {
            EntryClass::Routable
        }
    }

    /// Entries that actually constrain routing, in canonical order.
    pub fn routable_entries(&self) -> Vec<(CacheSet, u32, f64)> {
        self.iter()
            .filter(|(set, dest, _)| Self::classify(set, *dest) == EntryClass::Routable)
            .map(|(set, dest, rate)| (set.clone(), dest, rate))
            .collect()
    }

    pub fn has_empty_set_entry(&self) -> bool {
        self.iter()
            .any(|(set, dest, _)| Self::classify(set, dest) == EntryClass::EmptySet)
    }

    pub fn scaled(&self, factor: f64) -> CachingTraffic {
        let entries = self
            .entries
            .iter()
            .map(|(k, &v)| (k.clone(), v * factor))
            .collect();
        CachingTraffic {
            n: self.n,
            entries,
        }
    }
}

/// Scales the rates so they sum to one. Errors on all-zero traffic, whose
/// normalization is undefined.
pub fn normalize(traffic: &CachingTraffic) -> Result<CachingTraffic> {
    let total = traffic.total_rate();
    if total <= 0.0 {
        return Err(Error::ZeroTraffic);
    }
    Ok(traffic.scaled(1.0 / total))
}

/// Unicast traffic keyed by a generic source type: leaf ids on the tree
/// itself, cache super-node ids on the directed augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct UnicastTraffic<S: Ord + Copy> {
    pub n: usize,
    entries: BTreeMap<(S, u32), f64>,
}

pub type LeafUnicast = UnicastTraffic<u32>;
pub type CacheUnicast = UnicastTraffic<usize>;

impl<S: Ord + Copy> UnicastTraffic<S> {
    pub fn new(n: usize) -> Self {
        UnicastTraffic {
            n,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, source: S, dest: u32, rate: f64) {
        assert!(rate >= 0.0);
        if rate == 0.0 {
            return;
        }
        *self.entries.entry((source, dest)).or_insert(0.0) += rate;
    }

    pub fn iter(&self) -> impl Iterator<Item = (S, u32, f64)> + '_ {
        self.entries.iter().map(|(&(s, d), &r)| (s, d, r))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_rate(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn rate(&self, source: S, dest: u32) -> f64 {
        self.entries.get(&(source, dest)).copied().unwrap_or(0.0)
    }
}

/// Collapses a routed caching flow into the unicast matrix it induces:
/// the rate from `u` to `w` is the total flow assigned to the `u -> w`
/// path across all cache sets containing `u`. Per-edge loads are preserved
/// exactly because both route over the same unique paths.
pub fn caching_to_unicast(flow: &FlowSolution) -> LeafUnicast {
    let mut unicast = LeafUnicast::new(flow.n);
    for term in flow.terms() {
        let dest = flow.commodity(term.commodity).dest;
        unicast.insert(term.source, dest, term.rate);
    }
    unicast
}

/// JSON form of one traffic entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrafficEntryJson {
    pub caches: Vec<u32>,
    pub dest: u32,
    pub rate: f64,
}

pub fn traffic_to_json(traffic: &CachingTraffic) -> Vec<TrafficEntryJson> {
    traffic
        .iter()
        .map(|(set, dest, rate)| TrafficEntryJson {
            caches: set.members().to_vec(),
            dest,
            rate,
        })
        .collect()
}

pub fn traffic_from_json(n: usize, entries: &[TrafficEntryJson]) -> CachingTraffic {
    let mut t = CachingTraffic::new(n);
    for e in entries {
        t.insert(CacheSet::new(e.caches.clone()), e.dest, e.rate);
    }
    t
}

/// The cells used by the nearest-cache scenario, at dyadic level 2:
/// destinations in the bottom-left corner cell, the shared cache in the
/// third cell of the bottom row, and the dedicated caches in the top-right
/// corner cell.
const SCENARIO_LEVEL: u32 = 2;
const DEST_CELL: u64 = 1;
const SHARED_CELL: u64 = 3;
const DEDICATED_CELL: u64 = 16;

/// Pairs every destination in the corner cell with one dedicated far cache
/// and a single shared nearby cache, at unit rate. The shared cache is the
/// member of its cell closest to the destination cell's center.
pub fn scenario_nearest(placement: &NodePlacement) -> Result<CachingTraffic> {
    if crate::placement::dyadic_depth(placement.n) < 1 {
        return Err(Error::InvalidArgument(
            "nearest-cache scenario needs a hierarchy of depth at least 1".into(),
        ));
    }
    let cell_nodes = |cell: u64| -> Vec<usize> {
        placement.nodes_in_cell(DyadicIndex {
            level: SCENARIO_LEVEL,
            cell,
        })
    };
    let dests = cell_nodes(DEST_CELL);
    let shared_pool = cell_nodes(SHARED_CELL);
    let dedicated = cell_nodes(DEDICATED_CELL);
    if dests.is_empty() || shared_pool.is_empty() || dedicated.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "scenario cells must be nonempty (got {}, {}, {} nodes)",
            dests.len(),
            shared_pool.len(),
            dedicated.len()
        )));
    }

    let cell_side = placement.side() / (1u64 << SCENARIO_LEVEL) as f64;
    let center = crate::placement::Point(cell_side / 2.0, cell_side / 2.0);
    let shared = *shared_pool
        .iter()
        .min_by(|&&a, &&b| {
            let da = placement.coords[a].dist(&center);
            let db = placement.coords[b].dist(&center);
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        })
        .unwrap();

    let mut traffic = CachingTraffic::new(placement.n);
    for (w, u) in dests.iter().zip(dedicated.iter()) {
        traffic.insert(
            CacheSet::new(vec![shared as u32, *u as u32]),
            *w as u32,
            1.0,
        );
    }
    Ok(traffic)
}

/// Picks `round(n^beta)` distinct leaves as complete caches and has every
/// node request from that common set at unit rate. Requests by the caches
/// themselves are kept; they classify as trivially infinite downstream.
pub fn scenario_complete(
    placement: &NodePlacement,
    beta: f64,
    seed: u64,
) -> Result<CachingTraffic> {
    if !(0.0 < beta && beta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "beta must lie in (0, 1), got {beta}"
        )));
    }
    let n = placement.n;
    let count = ((n as f64).powf(beta).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, n, count);
    let caches = CacheSet::new(picked.iter().map(|i| i as u32).collect());

    let mut traffic = CachingTraffic::new(n);
    for v in 0..n {
        traffic.insert(caches.clone(), v as u32, 1.0);
    }
    Ok(traffic)
}

/// The nearest cache of an entry by geographic distance (ties go to the
/// smaller id).
pub fn nearest_cache(placement: &NodePlacement, set: &CacheSet, dest: u32) -> u32 {
    *set.members()
        .iter()
        .min_by(|&&a, &&b| {
            let da = placement.coords[a as usize].dist(&placement.coords[dest as usize]);
            let db = placement.coords[b as usize].dist(&placement.coords[dest as usize]);
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        })
        .expect("cache set is nonempty")
}

/// Restricts every entry to its nearest cache, the baseline strategy the
/// scenario experiments compare against.
pub fn restrict_to_nearest(placement: &NodePlacement, traffic: &CachingTraffic) -> CachingTraffic {
    let mut restricted = CachingTraffic::new(traffic.n);
    for (set, dest, rate) in traffic.iter() {
        if CachingTraffic::classify(set, dest) == EntryClass::Routable {
            let u = nearest_cache(placement, set, dest);
            restricted.insert(CacheSet::new(vec![u]), dest, rate);
        }
    }
    restricted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::generate_placement;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let mut t = CachingTraffic::new(4);
        t.insert(CacheSet::new(vec![2]), 0, 4.0);
        let n = normalize(&t).unwrap();
        assert!((n.total_rate() - 1.0).abs() < 1e-12);

        // Three entries with rates 1, 2, 4 scale to 1/7, 2/7, 4/7.
        let mut t = CachingTraffic::new(4);
        t.insert(CacheSet::new(vec![2, 3]), 0, 1.0);
        t.insert(CacheSet::new(vec![2]), 0, 2.0);
        t.insert(CacheSet::new(vec![2, 3]), 1, 4.0);
        let n = normalize(&t).unwrap();
        let rates: Vec<f64> = n.iter().map(|(_, _, r)| r).collect();
        let mut sorted = rates.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((sorted[0] - 1.0 / 7.0).abs() < 1e-12);
        assert!((sorted[1] - 2.0 / 7.0).abs() < 1e-12);
        assert!((sorted[2] - 4.0 / 7.0).abs() < 1e-12);

        assert_eq!(normalize(&CachingTraffic::new(4)), Err(Error::ZeroTraffic));
    }

    #[test]
    fn insertion_accumulates_and_canonicalizes() {
        let mut t = CachingTraffic::new(8);
        t.insert(CacheSet::new(vec![3, 1]), 0, 0.5);
        t.insert(CacheSet::new(vec![1, 3, 3]), 0, 0.25);
        assert_eq!(t.support_size(), 1);
        let (set, _, rate) = t.iter().next().unwrap();
        assert_eq!(set.members(), &[1, 3]);
        assert!((rate - 0.75).abs() < 1e-12);
        t.insert(CacheSet::new(vec![1]), 0, 0.0);
        assert_eq!(t.support_size(), 1);
    }

    #[test]
    fn classification() {
        assert_eq!(
            CachingTraffic::classify(&CacheSet::new(vec![]), 0),
            EntryClass::EmptySet
        );
        assert_eq!(
            CachingTraffic::classify(&CacheSet::new(vec![0, 1]), 0),
            EntryClass::TriviallyInfinite
        );
        assert_eq!(
            CachingTraffic::classify(&CacheSet::new(vec![1, 2]), 0),
            EntryClass::Routable
        );
    }

    #[test]
    fn nearest_scenario_shape() {
        let p = generate_placement(256, 1).unwrap();
        let t = scenario_nearest(&p).unwrap();
        let dests = p.nodes_in_cell(DyadicIndex { level: 2, cell: 1 });
        let dedicated = p.nodes_in_cell(DyadicIndex { level: 2, cell: 16 });
        assert_eq!(t.support_size(), dests.len().min(dedicated.len()));
        for (set, dest, rate) in t.iter() {
            assert_eq!(rate, 1.0);
            assert_eq!(set.len(), 2);
            assert_eq!(CachingTraffic::classify(set, dest), EntryClass::Routable);
        }
        // All entries share one cache.
        let mut shared_candidates: Vec<Vec<u32>> = t
            .iter()
            .map(|(set, _, _)| set.members().to_vec())
            .collect();
        let first = shared_candidates.pop().unwrap();
        for other in shared_candidates {
            assert!(first.iter().any(|u| other.contains(u)));
        }
    }

    #[test]
    fn nearest_scenario_rejects_small_n() {
        let p = generate_placement(4, 1).unwrap();
        assert!(scenario_nearest(&p).is_err());
    }

    #[test]
    fn complete_scenario_counts() {
        let p = generate_placement(256, 2).unwrap();
        let t = scenario_complete(&p, 0.5, 9).unwrap();
        assert_eq!(t.support_size(), 256);
        let (set, _, _) = t.iter().next().unwrap();
        assert_eq!(set.len(), 16);
        for (s, _, _) in t.iter() {
            assert_eq!(s, set);
        }

        let p4 = generate_placement(4, 3).unwrap();
        let t4 = scenario_complete(&p4, 0.5, 1).unwrap();
        let (set4, _, _) = t4.iter().next().unwrap();
        assert_eq!(set4.len(), 2);

        assert!(scenario_complete(&p4, 0.0, 1).is_err());
        assert!(scenario_complete(&p4, 1.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_scale_equivariant(
            rates in proptest::collection::vec(0.01f64..10.0, 1..6),
            scale in 0.01f64..100.0,
        ) {
            let mut t = CachingTraffic::new(16);
            for (i, r) in rates.iter().enumerate() {
                t.insert(CacheSet::new(vec![i as u32]), 15, *r);
            }
            let n1 = normalize(&t).unwrap();
            let n2 = normalize(&n1).unwrap();
            let n3 = normalize(&t.scaled(scale)).unwrap();
            for ((k1, v1), (k2, v2)) in n1.entries.iter().zip(n2.entries.iter()) {
                prop_assert_eq!(k1, k2);
                prop_assert!((v1 - v2).abs() < 1e-12);
            }
            for ((k1, v1), (k3, v3)) in n1.entries.iter().zip(n3.entries.iter()) {
                prop_assert_eq!(k1, k3);
                prop_assert!((v1 - v3).abs() < 1e-9);
            }
        }

        #[test]
        fn cache_set_order_is_immaterial(mut ids in proptest::collection::vec(0u32..32, 1..8)) {
            let a = CacheSet::new(ids.clone());
            ids.reverse();
            let b = CacheSet::new(ids);
            prop_assert_eq!(a, b);
        }
    }
}
