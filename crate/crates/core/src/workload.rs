//! Synthetic multi-user workloads and real-trace ingestion.
//!
//! A workload is a catalog of objects placed in a planar region plus a trace
//! of users walking between the objects they interact with. Synthetic
//! sessions plant fixed itemsets at a chosen support; SPMF transaction files
//! are turned into traces by placing their items and replaying each
//! transaction as one user's visit.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::domain::{distance, AccessEvent, Catalog, ObjectId, Point, Transaction, UserId, VirtualObject};
use crate::error::{Error, Result};

pub use crate::io::load_spmf;

/// Nearest-neighbour spacing of placed objects, in unit distance.
pub const MIN_SPACING: f64 = 10.0;
pub const MAX_SPACING: f64 = 15.0;
pub const SIZE_RANGE_MB: (f64, f64) = (10.0, 15.0);
/// Dwell times are resampled until they reach this floor, in seconds.
pub const DWELL_FLOOR: f64 = 0.1;

const PLACEMENT_RETRIES: usize = 20_000;

// Independent RNG streams derived from the one configured seed.
const STREAM_ENVIRONMENT: u64 = 1;
const STREAM_TRACE: u64 = 2;
const STREAM_HISTORY: u64 = 3;
const STREAM_ARRIVALS: u64 = 4;

/// Axis-aligned obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x0: x0.min(x1),
            y0: y0.min(y1),
            x1: x0.max(x1),
            y1: y0.max(y1),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub n_objects: usize,
    pub n_users: usize,
    /// Probability that a session contains a given planted itemset.
    pub planted_support: f64,
    /// Fraction of the catalog partitioned into planted itemsets.
    pub planted_itemset_fraction: f64,
    /// Side of the square region `[0, region_size]²`.
    pub region_size: f64,
    pub obstacles: Vec<Rect>,
    /// Session arrivals per second.
    pub arrival_rate: f64,
    pub interaction_mean: f64,
    pub interaction_std: f64,
    pub walk_speed: f64,
    /// Bounds on the number of non-planted items per session.
    pub filler_min: usize,
    pub filler_max: usize,
    /// Sessions of prior history generated for offline rule mining.
    pub history_sessions: usize,
    /// Fraction of sessions after which a disjoint set of planted itemsets
    /// replaces the original one.
    pub shift_at: Option<f64>,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            n_objects: 50,
            n_users: 100,
            planted_support: 0.3,
            planted_itemset_fraction: 0.2,
            region_size: 120.0,
            obstacles: vec![Rect::new(20.0, 20.0, 35.0, 35.0), Rect::new(80.0, 70.0, 95.0, 100.0)],
            arrival_rate: 0.05,
            interaction_mean: 10.0,
            interaction_std: 3.0,
            walk_speed: 1.0,
            filler_min: 2,
            filler_max: 5,
            history_sessions: 100,
            shift_at: None,
            seed: 1,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        let param = |msg: String| Err(Error::Param(msg));
        if self.n_objects == 0 {
            return param("n_objects must be at least 1".into());
        }
        if !(self.planted_support > 0.0 && self.planted_support <= 1.0) {
            return param(format!(
                "planted_support must be in (0, 1], got {}",
                self.planted_support
            ));
        }
        if !(0.0..=1.0).contains(&self.planted_itemset_fraction) {
            return param("planted_itemset_fraction must be in [0, 1]".into());
        }
        if !(self.region_size > 0.0 && self.region_size.is_finite()) {
            return param("region_size must be positive".into());
        }
        if !(self.arrival_rate > 0.0) {
            return param("arrival_rate must be positive".into());
        }
        if !(self.interaction_mean > 0.0 && self.interaction_std >= 0.0)
            || self.interaction_std >= self.interaction_mean
        {
            return param("need 0 ≤ interaction_std < interaction_mean".into());
        }
        if !(self.walk_speed > 0.0) {
            return param("walk_speed must be positive".into());
        }
        if self.filler_min > self.filler_max {
            return param("filler_min exceeds filler_max".into());
        }
        if let Some(f) = self.shift_at {
            if !(0.0..=1.0).contains(&f) {
                return param("shift_at must be in [0, 1]".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedWorkload {
    pub catalog: Catalog,
    pub trace: Vec<AccessEvent>,
    /// Itemsets planted before any shift.
    pub planted_itemsets: Vec<Vec<ObjectId>>,
    /// Itemsets planted after the shift, when one is configured.
    pub shifted_itemsets: Vec<Vec<ObjectId>>,
    /// Prior transactions available for offline rule mining; not replayed.
    pub history: Vec<Transaction>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn in_obstacle(config: &WorkloadConfig, p: Point) -> bool {
    config.obstacles.iter().any(|r| r.contains(p))
}

fn in_region(config: &WorkloadConfig, p: Point) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= config.region_size && p.y <= config.region_size
}

fn uniform_point(rng: &mut ChaCha8Rng, size: f64) -> Point {
    Point::new(rng.random_range(0.0..=size), rng.random_range(0.0..=size))
}

/// Places one object per id by rejection sampling. The first object lands
/// uniformly in free space; every later candidate is drawn at a spacing in
/// `[MIN_SPACING, MAX_SPACING]` from a random placed object and rejected if
/// it leaves the region, falls in an obstacle or comes closer than
/// `MIN_SPACING` to any placed object.
fn place_objects(config: &WorkloadConfig, ids: &[ObjectId], rng: &mut ChaCha8Rng) -> Result<Catalog> {
    let mut placed: Vec<Point> = Vec::with_capacity(ids.len());
    for (n, _) in ids.iter().enumerate() {
        let mut accepted = None;
        for _ in 0..PLACEMENT_RETRIES {
            let cand = if placed.is_empty() {
                uniform_point(rng, config.region_size)
            } else {
                let anchor = placed[rng.random_range(0..placed.len())];
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let radius = rng.random_range(MIN_SPACING..=MAX_SPACING);
                Point::new(anchor.x + radius * angle.cos(), anchor.y + radius * angle.sin())
            };
            if !in_region(config, cand) || in_obstacle(config, cand) {
                continue;
            }
            if placed.iter().any(|&p| distance(p, cand) < MIN_SPACING) {
                continue;
            }
            accepted = Some(cand);
            break;
        }
        match accepted {
            Some(p) => placed.push(p),
            None => {
                return Err(Error::Capacity(format!(
                    "could not place object {} of {} in a {} × {} region",
                    n + 1,
                    ids.len(),
                    config.region_size,
                    config.region_size
                )))
            }
        }
    }
    let objects = ids.iter().zip(placed).map(|(&id, position)| VirtualObject {
        id,
        size_mb: rng.random_range(SIZE_RANGE_MB.0..=SIZE_RANGE_MB.1),
        position,
    });
    Catalog::new(objects.collect::<Vec<_>>())
}

/// Builds the catalog: `n_objects` objects with ids `0..n_objects`.
pub fn generate_environment(config: &WorkloadConfig) -> Result<Catalog> {
    config.validate()?;
    let ids: Vec<ObjectId> = (0..config.n_objects as u32).map(ObjectId).collect();
    place_objects(config, &ids, &mut rng_for(config.seed, STREAM_ENVIRONMENT))
}

/// Partitions `count` randomly chosen items of `pool` into disjoint itemsets
/// of 2–4 items.
fn choose_planted(pool: &[ObjectId], count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<ObjectId>> {
    let mut items: Vec<ObjectId> = pool.to_vec();
    items.shuffle(rng);
    items.truncate(count);
    let mut sets: Vec<Vec<ObjectId>> = Vec::new();
    let mut rest = &items[..];
    while rest.len() >= 2 {
        let take = rng.random_range(2..=4).min(rest.len());
        // avoid leaving a lone item behind
        let take = if rest.len() - take == 1 {
            if take < 4 {
                take + 1
            } else {
                take - 1
            }
        } else {
            take
        };
        let mut set = rest[..take].to_vec();
        set.sort_unstable();
        sets.push(set);
        rest = &rest[take..];
    }
    sets
}

fn sample_dwell(config: &WorkloadConfig, rng: &mut ChaCha8Rng) -> f64 {
    let normal = Normal::new(config.interaction_mean, config.interaction_std).expect("validated normal parameters");
    for _ in 0..64 {
        let d = normal.sample(rng);
        if d >= DWELL_FLOOR {
            return d;
        }
    }
    DWELL_FLOOR
}

/// Orders `items` as a greedy nearest-neighbour tour starting at `start`.
/// Ties go to the smaller id.
pub fn nearest_neighbor_tour(catalog: &Catalog, start: Point, items: &[ObjectId]) -> Result<Vec<ObjectId>> {
    let mut left: Vec<(ObjectId, Point)> = items
        .iter()
        .map(|&id| catalog.get(id).map(|o| (id, o.position)))
        .collect::<Result<_>>()?;
    left.sort_by_key(|(id, _)| *id);
    let mut tour = Vec::with_capacity(left.len());
    let mut here = start;
    while !left.is_empty() {
        let (idx, _) = left
            .iter()
            .enumerate()
            .map(|(i, (_, p))| (i, distance(here, *p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        let (id, p) = left.remove(idx);
        tour.push(id);
        here = p;
    }
    Ok(tour)
}

/// Emits one user's visit: walk from a random entry point through `items`
/// in tour order, interacting with each on arrival.
fn walk_session(
    config: &WorkloadConfig,
    catalog: &Catalog,
    user: UserId,
    start_time: f64,
    items: &[ObjectId],
    rng: &mut ChaCha8Rng,
    out: &mut Vec<AccessEvent>,
) -> Result<()> {
    let entry = loop {
        let p = uniform_point(rng, config.region_size);
        if !in_obstacle(config, p) {
            break p;
        }
    };
    let tour = nearest_neighbor_tour(catalog, entry, items)?;
    let mut t = start_time;
    let mut here = entry;
    for id in tour {
        let pos = catalog.get(id)?.position;
        t += distance(here, pos) / config.walk_speed;
        out.push(AccessEvent {
            time: t,
            user_id: user,
            object_id: id,
            user_position: pos,
        });
        t += sample_dwell(config, rng);
        here = pos;
    }
    Ok(())
}

fn sort_trace(trace: &mut [AccessEvent]) {
    trace.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.user_id.cmp(&b.user_id))
            .then(a.object_id.cmp(&b.object_id))
    });
}

struct Planting<'a> {
    planted: &'a [Vec<ObjectId>],
    filler: Vec<ObjectId>,
}

impl<'a> Planting<'a> {
    fn new(catalog: &Catalog, planted: &'a [Vec<ObjectId>]) -> Self {
        let used: BTreeSet<ObjectId> = planted.iter().flatten().copied().collect();
        let mut filler: Vec<ObjectId> = catalog.iter().map(|o| o.id).filter(|id| !used.contains(id)).collect();
        if filler.is_empty() {
            filler = catalog.iter().map(|o| o.id).collect();
        }
        Self { planted, filler }
    }

    /// Items of one session: each planted itemset independently with
    /// probability `support`, plus uniformly drawn filler items.
    fn session_items(&self, config: &WorkloadConfig, rng: &mut ChaCha8Rng) -> Vec<ObjectId> {
        let mut items: BTreeSet<ObjectId> = BTreeSet::new();
        for set in self.planted {
            if rng.random_bool(config.planted_support) {
                items.extend(set.iter().copied());
            }
        }
        let k = rng
            .random_range(config.filler_min..=config.filler_max)
            .min(self.filler.len());
        items.extend(self.filler.choose_multiple(rng, k).copied());
        if items.is_empty() {
            items.insert(*self.filler.choose(rng).expect("catalog is nonempty"));
        }
        items.into_iter().collect()
    }
}

/// Session start times: a Poisson process at `arrival_rate`, one start
/// per user.
pub fn session_starts(config: &WorkloadConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let arrivals = Exp::new(config.arrival_rate).expect("validated rate");
    let mut rng = rng_for(config.seed, STREAM_ARRIVALS);
    let mut t = 0.0;
    Ok((0..config.n_users)
        .map(|_| {
            t += arrivals.sample(&mut rng);
            t
        })
        .collect())
}

/// Generates the session trace and history over `catalog`.
pub fn generate_trace(config: &WorkloadConfig, catalog: &Catalog) -> Result<GeneratedWorkload> {
    config.validate()?;
    if catalog.is_empty() {
        return Err(Error::Param("catalog is empty".into()));
    }
    let mut rng = rng_for(config.seed, STREAM_TRACE);
    let ids: Vec<ObjectId> = catalog.iter().map(|o| o.id).collect();
    let n_planted = (config.planted_itemset_fraction * ids.len() as f64).round() as usize;
    let planted = choose_planted(&ids, n_planted, &mut rng);

    let shifted = if config.shift_at.is_some() {
        let used: BTreeSet<ObjectId> = planted.iter().flatten().copied().collect();
        let rest: Vec<ObjectId> = ids.iter().copied().filter(|id| !used.contains(id)).collect();
        if rest.len() < n_planted {
            return Err(Error::Param(format!(
                "a pattern shift needs {n_planted} unplanted items, only {} remain",
                rest.len()
            )));
        }
        choose_planted(&rest, n_planted, &mut rng)
    } else {
        Vec::new()
    };
    let shift_session = config
        .shift_at
        .map(|f| (f * config.n_users as f64).round() as usize)
        .unwrap_or(usize::MAX);

    let before = Planting::new(catalog, &planted);
    let after = Planting::new(catalog, &shifted);
    let starts = session_starts(config)?;

    let mut trace = Vec::new();
    for (s, &t) in starts.iter().enumerate() {
        let phase = if s >= shift_session { &after } else { &before };
        let items = phase.session_items(config, &mut rng);
        walk_session(config, catalog, UserId(s as u64), t, &items, &mut rng, &mut trace)?;
    }
    sort_trace(&mut trace);

    let mut hist_rng = rng_for(config.seed, STREAM_HISTORY);
    let history = (0..config.history_sessions)
        .map(|i| Transaction::new(i as u64, before.session_items(config, &mut hist_rng)))
        .collect::<Result<Vec<_>>>()?;

    Ok(GeneratedWorkload {
        catalog: catalog.clone(),
        trace,
        planted_itemsets: planted,
        shifted_itemsets: shifted,
        history,
    })
}

/// Environment plus trace in one call.
pub fn generate(config: &WorkloadConfig) -> Result<GeneratedWorkload> {
    let catalog = generate_environment(config)?;
    generate_trace(config, &catalog)
}

/// Turns real transactions into a replayable workload. Items are placed
/// like a synthetic catalog, the first `history_sessions` transactions
/// become mining history, and every remaining transaction is one user's
/// nearest-neighbour tour from a random entry point.
pub fn spmf_to_trace(transactions: &[Transaction], config: &WorkloadConfig) -> Result<GeneratedWorkload> {
    config.validate()?;
    let ids: Vec<ObjectId> = transactions
        .iter()
        .flat_map(|t| t.items().iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if ids.is_empty() {
        return Err(Error::Param("no transactions to replay".into()));
    }
    let catalog = place_objects(config, &ids, &mut rng_for(config.seed, STREAM_ENVIRONMENT))?;

    let split = config.history_sessions.min(transactions.len());
    let history: Vec<Transaction> = transactions[..split].to_vec();

    let mut rng = rng_for(config.seed, STREAM_TRACE);
    let arrivals = Exp::new(config.arrival_rate).expect("validated rate");
    let mut trace = Vec::new();
    let mut t = 0.0;
    for (user, tx) in transactions[split..].iter().enumerate() {
        t += arrivals.sample(&mut rng);
        walk_session(
            config,
            &catalog,
            UserId(user as u64),
            t,
            tx.items(),
            &mut rng,
            &mut trace,
        )?;
    }
    sort_trace(&mut trace);

    Ok(GeneratedWorkload {
        catalog,
        trace,
        planted_itemsets: Vec::new(),
        shifted_itemsets: Vec::new(),
        history,
    })
}

pub fn load_spmf_workload(path: &Path, config: &WorkloadConfig) -> Result<GeneratedWorkload> {
    spmf_to_trace(&load_spmf(path)?, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::sessionize;

    fn small(n_objects: usize, n_users: usize) -> WorkloadConfig {
        WorkloadConfig {
            n_objects,
            n_users,
            ..WorkloadConfig::default()
        }
    }

    fn nn_distances(catalog: &Catalog) -> Vec<f64> {
        let objs: Vec<_> = catalog.iter().collect();
        objs.iter()
            .map(|a| {
                objs.iter()
                    .filter(|b| b.id != a.id)
                    .map(|b| distance(a.position, b.position))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn single_object() {
        let cat = generate_environment(&small(1, 1)).unwrap();
        assert_eq!(cat.len(), 1);
    }

    #[test]
    fn two_objects_spaced() {
        let cat = generate_environment(&small(2, 1)).unwrap();
        let d = nn_distances(&cat);
        assert!(d[0] >= MIN_SPACING);
    }

    #[test]
    fn default_catalog_audit() {
        let config = WorkloadConfig::default();
        let cat = generate_environment(&config).unwrap();
        assert_eq!(cat.len(), 50);
        for d in nn_distances(&cat) {
            assert!((MIN_SPACING..=MAX_SPACING).contains(&d), "nn distance {d}");
        }
        for o in cat.iter() {
            assert!(!in_obstacle(&config, o.position));
            assert!(in_region(&config, o.position));
            assert!((10.0..=15.0).contains(&o.size_mb));
        }
    }

    #[test]
    fn placement_capacity_error() {
        let config = WorkloadConfig {
            n_objects: 200,
            region_size: 30.0,
            obstacles: Vec::new(),
            ..WorkloadConfig::default()
        };
        assert!(matches!(generate_environment(&config), Err(Error::Capacity(_))));
    }

    #[test]
    fn forced_planting() {
        let config = WorkloadConfig {
            planted_support: 1.0,
            n_users: 50,
            ..WorkloadConfig::default()
        };
        let w = generate(&config).unwrap();
        assert!(!w.planted_itemsets.is_empty());
        let txs = sessionize(&w.trace, f64::INFINITY);
        let by_user = {
            let mut m = std::collections::BTreeMap::<UserId, BTreeSet<ObjectId>>::new();
            for e in &w.trace {
                m.entry(e.user_id).or_default().insert(e.object_id);
            }
            m
        };
        assert_eq!(by_user.len(), 50);
        assert!(!txs.is_empty());
        for items in by_user.values() {
            for set in &w.planted_itemsets {
                assert!(set.iter().all(|i| items.contains(i)));
            }
        }
    }

    #[test]
    fn planted_itemsets_disjoint_and_sized() {
        let w = generate(&small(50, 5)).unwrap();
        let mut seen = BTreeSet::new();
        let total: usize = w.planted_itemsets.iter().map(Vec::len).sum();
        assert_eq!(total, 10);
        for set in &w.planted_itemsets {
            assert!((2..=4).contains(&set.len()));
            for i in set {
                assert!(seen.insert(*i));
            }
        }
    }

    #[test]
    fn trace_sorted_and_references_catalog() {
        let w = generate(&small(30, 40)).unwrap();
        assert!(w.trace.windows(2).all(|p| p[0].time <= p[1].time));
        assert!(w.trace.iter().all(|e| w.catalog.contains(e.object_id)));
    }

    #[test]
    fn per_user_gaps_respect_dwell_floor() {
        let w = generate(&small(30, 40)).unwrap();
        let mut last = std::collections::HashMap::new();
        for e in &w.trace {
            if let Some(prev) = last.insert(e.user_id, e.time) {
                assert!(e.time - prev >= DWELL_FLOOR);
            }
        }
    }

    #[test]
    fn reproducible() {
        let config = small(30, 20);
        assert_eq!(generate(&config).unwrap(), generate(&config).unwrap());
        let other = WorkloadConfig {
            seed: 2,
            ..config.clone()
        };
        assert_ne!(generate(&config).unwrap().trace, generate(&other).unwrap().trace);
    }

    #[test]
    fn shift_swaps_to_disjoint_itemsets() {
        let config = WorkloadConfig {
            shift_at: Some(0.5),
            ..small(50, 20)
        };
        let w = generate(&config).unwrap();
        let before: BTreeSet<_> = w.planted_itemsets.iter().flatten().collect();
        assert!(!w.shifted_itemsets.is_empty());
        assert!(w.shifted_itemsets.iter().flatten().all(|i| !before.contains(i)));
    }

    fn tx(id: u64, items: &[u32]) -> Transaction {
        Transaction::new(id, items.iter().map(|&i| ObjectId(i))).unwrap()
    }

    #[test]
    fn spmf_single_transaction() {
        let config = WorkloadConfig {
            history_sessions: 0,
            ..WorkloadConfig::default()
        };
        let w = spmf_to_trace(&[tx(0, &[4, 9])], &config).unwrap();
        assert_eq!(w.trace.len(), 2);
        assert!(w.trace.iter().all(|e| e.user_id == w.trace[0].user_id));
        assert_eq!(w.catalog.len(), 2);
    }

    #[test]
    fn spmf_users_and_history_split() {
        let txs: Vec<_> = (0..12).map(|i| tx(i, &[i as u32 % 5, 10 + i as u32 % 3])).collect();
        let config = WorkloadConfig {
            history_sessions: 2,
            ..WorkloadConfig::default()
        };
        let w = spmf_to_trace(&txs, &config).unwrap();
        assert_eq!(w.history.len(), 2);
        let users: BTreeSet<_> = w.trace.iter().map(|e| e.user_id).collect();
        assert_eq!(users.len(), 10);
        assert!(w.trace.iter().all(|e| w.catalog.contains(e.object_id)));
    }

    #[test]
    fn nn_tour_order() {
        let cat = Catalog::new([(0, 30.0), (1, 10.0), (2, 20.0)].map(|(id, x)| VirtualObject {
            id: ObjectId(id),
            size_mb: 10.0,
            position: Point::new(x, 0.0),
        }))
        .unwrap();
        let tour = nearest_neighbor_tour(&cat, Point::new(0.0, 0.0), &[ObjectId(0), ObjectId(1), ObjectId(2)]).unwrap();
        assert_eq!(tour, vec![ObjectId(1), ObjectId(2), ObjectId(0)]);
    }
}
