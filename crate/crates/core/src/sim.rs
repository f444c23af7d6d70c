//! Discrete-event replay of a trace against a cache, with optional
//! prefetching and tuning, under a simple edge/cloud latency model.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::arm::RuleSet;
use crate::cache::{Cache, CacheConfig, Lookup, Origin, Policy};
use crate::domain::{distance, sessionize, AccessEvent, Catalog, ObjectId, Point, Transaction, UserId};
use crate::error::{Error, Result};
use crate::io::{catalog_to_string, join_ids, spmf_to_string, trace_to_string};
use crate::prefetch::{Prefetcher, SpaarcParams};
use crate::tuner::{Tuner, TunerConfig, TunerEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Baseline,
    AssociationOnly,
    Spaarc,
    SpaarcTune,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::AssociationOnly, Mode::Spaarc, Mode::SpaarcTune];

    pub fn prefetches(&self) -> bool {
        *self != Mode::Baseline
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::AssociationOnly => "association-only",
            Mode::Spaarc => "spaarc",
            Mode::SpaarcTune => "spaarc-tune",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "association-only" | "association" => Ok(Mode::AssociationOnly),
            "spaarc" => Ok(Mode::Spaarc),
            "spaarc-tune" => Ok(Mode::SpaarcTune),
            other => Err(Error::Param(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModel {
    pub cloud_rtt_ms: f64,
    pub edge_hit_ms: f64,
    pub immersion_budget_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            cloud_rtt_ms: 60.0,
            edge_hit_ms: 5.0,
            immersion_budget_ms: 20.0,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.cloud_rtt_ms >= 0.0 && self.edge_hit_ms >= 0.0) {
            return Err(Error::Param("latencies must be nonnegative".into()));
        }
        Ok(())
    }

    fn rtt_seconds(&self) -> f64 {
        self.cloud_rtt_ms / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub cache: CacheConfig,
    pub spaarc: SpaarcParams,
    pub tuner: TunerConfig,
    pub latency: LatencyModel,
    /// Inactivity gap closing a user session, in seconds.
    pub session_gap: f64,
    /// Assumed walking speed between a user's recorded accesses.
    pub walk_speed: f64,
    /// Spacing of interpolated position updates along a user's walk.
    pub poll_step: f64,
    pub seed: u64,
    pub record_decisions: bool,
}

impl RunConfig {
    pub fn new(mode: Mode, cache: CacheConfig) -> Self {
        Self {
            mode,
            cache,
            spaarc: SpaarcParams::default(),
            tuner: TunerConfig::default(),
            latency: LatencyModel::default(),
            session_gap: 60.0,
            walk_speed: 1.0,
            poll_step: 1.0,
            seed: 0,
            record_decisions: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        CacheConfig::new(self.cache.capacity_mb, self.cache.policy)?;
        self.latency.validate()?;
        if self.mode.prefetches() {
            self.spaarc.validate()?;
        }
        self.tuner.validate()?;
        if !(self.session_gap > 0.0) || !(self.walk_speed > 0.0) || !(self.poll_step > 0.0) {
            return Err(Error::Param(
                "session gap, walk speed and poll step must be positive".into(),
            ));
        }
        Ok(())
    }

    fn effective_spaarc(&self) -> SpaarcParams {
        match self.mode {
            Mode::AssociationOnly => self.spaarc.association_only(),
            _ => self.spaarc,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ViewpointStats {
    pub viewpoint: usize,
    pub hits: u64,
    pub misses: u64,
    pub hit_rate: f64,
    pub on_demand: u64,
    pub prefetches: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub time: f64,
    pub user_id: UserId,
    pub missed: ObjectId,
    pub fetched: Vec<ObjectId>,
    pub deferred: Vec<ObjectId>,
}

pub fn decision_log_csv(records: &[DecisionRecord]) -> String {
    let mut out = String::from("time,user_id,missed,fetched_ids,deferred_ids\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.time,
            r.user_id,
            r.missed,
            join_ids(&r.fetched, ";"),
            join_ids(&r.deferred, ";")
        );
    }
    out
}

/// What a comparison must agree on.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFingerprint {
    pub workload: String,
    pub policy: Policy,
    pub capacity_mb: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mode: Mode,
    pub fingerprint: RunFingerprint,
    pub hits: u64,
    pub misses: u64,
    pub hit_rate: f64,
    pub viewpoints: Vec<ViewpointStats>,
    pub on_demand_fetches: u64,
    /// Misses served by joining a fetch already in flight.
    pub coalesced_misses: u64,
    pub prefetch_count: u64,
    pub insertions: u64,
    pub prefetch_insertions: u64,
    pub evictions: u64,
    pub mean_latency_ms: f64,
    pub lazy_queue_drops: u64,
    pub tuner_log: Vec<TunerEvent>,
    pub decisions: Vec<DecisionRecord>,
}

impl RunReport {
    /// Hit rate over the viewpoints from index `skip` on.
    pub fn hit_rate_after(&self, skip: usize) -> f64 {
        let (h, m) = self
            .viewpoints
            .iter()
            .skip(skip)
            .fold((0, 0), |(h, m), v| (h + v.hits, m + v.misses));
        if h + m == 0 {
            0.0
        } else {
            h as f64 / (h + m) as f64
        }
    }

    /// Per-viewpoint rows followed by a `total` summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("viewpoint,hits,misses,hit_rate,on_demand,prefetches\n");
        for v in &self.viewpoints {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                v.viewpoint, v.hits, v.misses, v.hit_rate, v.on_demand, v.prefetches
            );
        }
        let _ = writeln!(
            out,
            "total,{},{},{},{},{}",
            self.hits, self.misses, self.hit_rate, self.on_demand_fetches, self.prefetch_count
        );
        out
    }
}

/// Hash identifying a workload: catalog, trace and mining history.
pub fn workload_fingerprint(trace: &[AccessEvent], catalog: &Catalog, history: &[Transaction]) -> String {
    let mut h = Sha256::new();
    h.update(catalog_to_string(catalog).as_bytes());
    h.update(trace_to_string(trace).as_bytes());
    h.update(spmf_to_string(history).as_bytes());
    hex::encode(&h.finalize()[..16])
}

#[derive(Clone, Copy)]
struct Arrival {
    time: f64,
    seq: u64,
    object: ObjectId,
    origin: Origin,
}

impl PartialEq for Arrival {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Arrival {}

impl PartialOrd for Arrival {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Arrival {
    // reversed: BinaryHeap pops the earliest arrival first
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

/// Outstanding cloud fetches.
struct InFlight {
    heap: BinaryHeap<Arrival>,
    pending: HashMap<ObjectId, Origin>,
    seq: u64,
}

impl InFlight {
    fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            pending: HashMap::new(),
            seq: 0,
        }
    }

    fn contains(&self, id: ObjectId) -> bool {
        self.pending.contains_key(&id)
    }

    fn issue(&mut self, id: ObjectId, origin: Origin, arrival: f64) {
        self.seq += 1;
        self.pending.insert(id, origin);
        self.heap.push(Arrival {
            time: arrival,
            seq: self.seq,
            object: id,
            origin,
        });
    }

    fn deliver_until(&mut self, now: f64, cache: &mut Cache) -> Result<()> {
        while self.heap.peek().is_some_and(|a| a.time <= now) {
            let a = self.heap.pop().expect("peeked");
            self.pending.remove(&a.object);
            cache.insert(a.object, a.origin)?;
        }
        Ok(())
    }
}

struct Counters {
    on_demand: u64,
    coalesced: u64,
    prefetches: u64,
}

struct Replay<'a> {
    config: &'a RunConfig,
    catalog: &'a Catalog,
    cache: Cache,
    flight: InFlight,
    prefetcher: Option<Prefetcher>,
    counters: Counters,
    /// Time of the last processed event; nothing is scheduled before it.
    clock: f64,
    last_seen: HashMap<UserId, (f64, Point)>,
    decisions: Vec<DecisionRecord>,
}

impl Replay<'_> {
    fn fetch_time(&self, at: f64) -> f64 {
        at.max(self.clock) + self.config.latency.rtt_seconds()
    }

    fn issue_prefetches(&mut self, ids: &[ObjectId], at: f64) -> Vec<ObjectId> {
        let arrival = self.fetch_time(at);
        let mut issued = Vec::new();
        for &id in ids {
            if self.cache.contains(id) || self.flight.contains(id) {
                continue;
            }
            self.flight.issue(id, Origin::Prefetch, arrival);
            self.counters.prefetches += 1;
            issued.push(id);
        }
        issued
    }

    /// Position updates along the user's walk since their last access,
    /// ending at the access itself.
    fn movement(&self, ev: &AccessEvent) -> Vec<(f64, Point)> {
        let Some(&(t_prev, p_prev)) = self.last_seen.get(&ev.user_id) else {
            return vec![(ev.time, ev.user_position)];
        };
        let len = distance(p_prev, ev.user_position);
        if len == 0.0 {
            return vec![(ev.time, ev.user_position)];
        }
        let steps = (len / self.config.poll_step).ceil().max(1.0) as usize;
        let depart = t_prev.max(ev.time - len / self.config.walk_speed);
        (1..=steps)
            .map(|k| {
                let frac = k as f64 / steps as f64;
                (depart + (ev.time - depart) * frac, p_prev.lerp(ev.user_position, frac))
            })
            .collect()
    }

    fn poll_movement(&mut self, ev: &AccessEvent) {
        let Some(mut prefetcher) = self.prefetcher.take() else {
            return;
        };
        if !prefetcher.queue().is_empty() {
            for (t, pos) in self.movement(ev) {
                let ready = prefetcher.poll_lazy_queue(ev.user_id, pos, self.catalog, &self.cache);
                if !ready.is_empty() {
                    self.issue_prefetches(&ready, t);
                }
            }
        }
        self.prefetcher = Some(prefetcher);
    }

    fn access(&mut self, ev: &AccessEvent) -> Result<Lookup> {
        if let Some(p) = self.prefetcher.as_mut() {
            p.expire_idle(ev.time, self.config.session_gap);
        }
        self.poll_movement(ev);
        self.flight.deliver_until(ev.time, &mut self.cache)?;

        let outcome = self.cache.lookup(ev.object_id)?;
        if outcome == Lookup::Miss {
            let mut fetched = Vec::new();
            if self.flight.contains(ev.object_id) {
                self.counters.coalesced += 1;
            } else {
                let arrival = self.fetch_time(ev.time);
                self.flight.issue(ev.object_id, Origin::OnDemand, arrival);
                self.counters.on_demand += 1;
                fetched.push(ev.object_id);
            }
            if let Some(mut prefetcher) = self.prefetcher.take() {
                let decision =
                    prefetcher.on_miss(ev.object_id, ev.user_id, ev.user_position, self.catalog, &self.cache);
                self.prefetcher = Some(prefetcher);
                let decision = decision?;
                fetched.extend(self.issue_prefetches(decision.prefetches(), ev.time));
                if self.config.record_decisions {
                    self.decisions.push(DecisionRecord {
                        time: ev.time,
                        user_id: ev.user_id,
                        missed: ev.object_id,
                        fetched,
                        deferred: decision.deferred,
                    });
                }
            }
        }
        if let Some(p) = self.prefetcher.as_mut() {
            p.observe(ev);
        }
        self.last_seen.insert(ev.user_id, (ev.time, ev.user_position));
        self.clock = ev.time;
        Ok(outcome)
    }
}

/// Transactions the tuner mines: the latest `n` sessions of the replayed
/// prefix, topped up from the end of `history` when the prefix is short.
fn recent_transactions(prefix: &[AccessEvent], history: &[Transaction], n: usize, gap: f64) -> Vec<Transaction> {
    let sessions = sessionize(prefix, gap);
    let from_trace = &sessions[sessions.len().saturating_sub(n)..];
    let need = n - from_trace.len();
    let from_history = &history[history.len().saturating_sub(need)..];
    from_history
        .iter()
        .chain(from_trace)
        .enumerate()
        .map(|(i, tx)| Transaction::new(i as u64, tx.items().iter().copied()))
        .collect::<Result<_>>()
        .expect("sessions are nonempty")
}

/// Replays `trace` in time order.
///
/// `history` holds transactions known before the trace starts; rule sets
/// for the prefetching modes are mined from it.
pub fn run(trace: &[AccessEvent], catalog: &Catalog, history: &[Transaction], config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    for ev in trace {
        catalog.get(ev.object_id)?;
    }
    if trace.windows(2).any(|w| w[1].time < w[0].time) {
        return Err(Error::Param("trace is not sorted by time".into()));
    }
    let cache = Cache::new(config.cache, catalog)?;
    let spaarc = config.effective_spaarc();

    let mut tuner = None;
    let prefetcher = match config.mode {
        Mode::Baseline => None,
        Mode::AssociationOnly | Mode::Spaarc => {
            let rules = if history.is_empty() {
                RuleSet::default()
            } else {
                RuleSet::mine(
                    history,
                    spaarc.min_support,
                    spaarc.min_confidence,
                    spaarc.max_itemset_len,
                )?
            };
            Some(Prefetcher::new(spaarc, Arc::new(rules))?)
        }
        Mode::SpaarcTune => {
            let mut t = Tuner::new(config.tuner)?;
            t.bootstrap(history)?;
            let active = t.active_ruleset().cloned().unwrap_or_default();
            tuner = Some(t);
            Some(Prefetcher::new(spaarc, active)?)
        }
    };

    let mut replay = Replay {
        config,
        catalog,
        cache,
        flight: InFlight::new(),
        prefetcher,
        counters: Counters {
            on_demand: 0,
            coalesced: 0,
            prefetches: 0,
        },
        clock: 0.0,
        last_seen: HashMap::new(),
        decisions: Vec::new(),
    };

    let vp_size = config.tuner.viewpoint_size;
    let mut viewpoints = Vec::new();
    let mut tuner_log = Vec::new();
    let mut current = ViewpointStats::default();
    let (mut od_mark, mut pf_mark) = (0, 0);
    let mut latency_total = 0.0;
    let lat = config.latency;

    for (i, ev) in trace.iter().enumerate() {
        match replay.access(ev)? {
            Lookup::Hit => {
                current.hits += 1;
                latency_total += lat.edge_hit_ms;
            }
            Lookup::Miss => {
                current.misses += 1;
                latency_total += lat.edge_hit_ms + lat.cloud_rtt_ms;
            }
        }
        let last = i + 1 == trace.len();
        if (i + 1) % vp_size == 0 || last {
            current.viewpoint = viewpoints.len();
            current.hit_rate = current.hits as f64 / (current.hits + current.misses) as f64;
            current.on_demand = replay.counters.on_demand - od_mark;
            current.prefetches = replay.counters.prefetches - pf_mark;
            od_mark = replay.counters.on_demand;
            pf_mark = replay.counters.prefetches;
            let full = (i + 1) % vp_size == 0;
            if let (Some(t), true) = (tuner.as_mut(), full) {
                let prefix = &trace[..=i];
                let event = t.on_viewpoint(current.viewpoint, current.hit_rate, || {
                    recent_transactions(prefix, history, config.tuner.history, config.session_gap)
                })?;
                if let (Some(p), Some(active)) = (replay.prefetcher.as_mut(), t.active_ruleset()) {
                    if !Arc::ptr_eq(p.ruleset(), active) {
                        p.set_ruleset(Arc::clone(active));
                    }
                }
                tuner_log.push(event);
            }
            viewpoints.push(current);
            current = ViewpointStats::default();
        }
    }
    if let Some(t) = tuner.as_mut() {
        t.finish();
    }
    // land everything still in flight so insertions balance fetches
    replay.flight.deliver_until(f64::INFINITY, &mut replay.cache)?;

    let stats = *replay.cache.stats();
    let lookups = stats.hits + stats.misses;
    Ok(RunReport {
        mode: config.mode,
        fingerprint: RunFingerprint {
            workload: workload_fingerprint(trace, catalog, history),
            policy: config.cache.policy,
            capacity_mb: config.cache.capacity_mb,
            seed: config.seed,
        },
        hits: stats.hits,
        misses: stats.misses,
        hit_rate: stats.hit_rate(),
        viewpoints,
        on_demand_fetches: replay.counters.on_demand,
        coalesced_misses: replay.counters.coalesced,
        prefetch_count: replay.counters.prefetches,
        insertions: stats.insertions,
        prefetch_insertions: stats.prefetch_insertions,
        evictions: stats.evictions,
        mean_latency_ms: if lookups == 0 {
            0.0
        } else {
            latency_total / lookups as f64
        },
        lazy_queue_drops: replay.prefetcher.as_ref().map(|p| p.queue().dropped()).unwrap_or(0),
        tuner_log,
        decisions: replay.decisions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub hit_rate_gain_pct: f64,
    pub on_demand_reduction_pct: f64,
    /// Treatment prefetches per baseline on-demand fetch.
    pub prefetch_overhead: f64,
}

fn relative(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        num.signum() * f64::INFINITY
    } else {
        num / den
    }
}

/// Treatment deltas against a baseline replayed on the same workload,
/// cache and seed.
pub fn compare(baseline: &RunReport, treatment: &RunReport) -> Result<Comparison> {
    let (a, b) = (&baseline.fingerprint, &treatment.fingerprint);
    if a.workload != b.workload {
        return Err(Error::Mismatch("reports come from different workloads".into()));
    }
    if a.policy != b.policy || a.capacity_mb != b.capacity_mb {
        return Err(Error::Mismatch("reports use different cache configurations".into()));
    }
    if a.seed != b.seed {
        return Err(Error::Mismatch("reports use different seeds".into()));
    }
    Ok(compare_values(
        baseline.hit_rate,
        baseline.on_demand_fetches,
        treatment.hit_rate,
        treatment.on_demand_fetches,
        treatment.prefetch_count,
    ))
}

/// Comparison arithmetic on summary values.
pub fn compare_values(hr_b: f64, od_b: u64, hr_t: f64, od_t: u64, prefetch_t: u64) -> Comparison {
    Comparison {
        hit_rate_gain_pct: relative(hr_t - hr_b, hr_b) * 100.0,
        on_demand_reduction_pct: relative(od_b as f64 - od_t as f64, od_b as f64) * 100.0,
        prefetch_overhead: relative(prefetch_t as f64, od_b as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::VirtualObject;

    fn unit_catalog(n: u32) -> Catalog {
        Catalog::new((0..n).map(|i| VirtualObject {
            id: ObjectId(i),
            size_mb: 10.0,
            position: Point::new(i as f64, 0.0),
        }))
        .unwrap()
    }

    fn ev(time: f64, user: u64, obj: u32) -> AccessEvent {
        AccessEvent {
            time,
            user_id: UserId(user),
            object_id: ObjectId(obj),
            user_position: Point::new(obj as f64, 0.0),
        }
    }

    fn config(mode: Mode, capacity: f64) -> RunConfig {
        RunConfig::new(mode, CacheConfig::new(capacity, Policy::Lru).unwrap())
    }

    #[test]
    fn baseline_never_prefetches() {
        let trace: Vec<_> = (0..30).map(|i| ev(i as f64, i / 3, (i * 7 % 5) as u32)).collect();
        let r = run(&trace, &unit_catalog(5), &[], &config(Mode::Baseline, 20.0)).unwrap();
        assert_eq!(r.prefetch_count, 0);
        assert_eq!(r.hits + r.misses, 30);
    }

    #[test]
    fn cold_misses_only() {
        let trace: Vec<_> = (0..10).map(|i| ev(i as f64, 0, i)).collect();
        let r = run(&trace, &unit_catalog(10), &[], &config(Mode::Baseline, 100.0)).unwrap();
        assert_eq!(r.hit_rate, 0.0);
        assert_eq!(r.on_demand_fetches, 10);
    }

    #[test]
    fn in_flight_requests_coalesce() {
        let mut c = config(Mode::Baseline, 100.0);
        c.latency.cloud_rtt_ms = 1000.0;
        let trace = vec![ev(0.0, 0, 1), ev(0.5, 1, 1), ev(2.0, 2, 1)];
        let r = run(&trace, &unit_catalog(3), &[], &c).unwrap();
        assert_eq!((r.hits, r.misses), (1, 2));
        assert_eq!(r.on_demand_fetches, 1);
        assert_eq!(r.coalesced_misses, 1);
        assert_eq!(r.insertions, 1);
    }

    fn pair_history(n: usize) -> Vec<Transaction> {
        (0..n)
            .map(|i| Transaction::new(i as u64, [ObjectId(0), ObjectId(1)]).unwrap())
            .collect()
    }

    #[test]
    fn instant_prefetch_hits_next_access() {
        let mut c = config(Mode::Spaarc, 100.0);
        c.latency.cloud_rtt_ms = 0.0;
        c.spaarc.association_factor_threshold = 0.0;
        let trace = vec![ev(0.0, 0, 0), ev(0.0, 0, 1)];
        let r = run(&trace, &unit_catalog(2), &pair_history(4), &c).unwrap();
        assert_eq!(r.prefetch_count, 1);
        assert_eq!((r.hits, r.misses), (1, 1));
    }

    #[test]
    fn identical_reports_compare_to_zero() {
        let trace: Vec<_> = (0..20).map(|i| ev(i as f64, 0, (i % 4) as u32)).collect();
        let r = run(&trace, &unit_catalog(4), &[], &config(Mode::Baseline, 20.0)).unwrap();
        let c = compare(&r, &r).unwrap();
        assert_eq!(c.hit_rate_gain_pct, 0.0);
        assert_eq!(c.on_demand_reduction_pct, 0.0);
        assert_eq!(c.prefetch_overhead, 0.0);
    }

    #[test]
    fn comparison_arithmetic() {
        let c = compare_values(0.40, 100, 0.50, 80, 30);
        assert!((c.hit_rate_gain_pct - 25.0).abs() < 1e-9);
        assert!((c.on_demand_reduction_pct - 20.0).abs() < 1e-9);
        assert!((c.prefetch_overhead - 0.30).abs() < 1e-12);
    }

    #[test]
    fn mismatched_reports_refused() {
        let trace: Vec<_> = (0..5).map(|i| ev(i as f64, 0, i)).collect();
        let a = run(&trace, &unit_catalog(5), &[], &config(Mode::Baseline, 20.0)).unwrap();
        let b = run(&trace, &unit_catalog(5), &[], &config(Mode::Baseline, 30.0)).unwrap();
        let c = run(&trace[..4], &unit_catalog(5), &[], &config(Mode::Baseline, 20.0)).unwrap();
        assert!(matches!(compare(&a, &b), Err(Error::Mismatch(_))));
        assert!(matches!(compare(&a, &c), Err(Error::Mismatch(_))));
    }

    #[test]
    fn unknown_object_in_trace() {
        let trace = vec![ev(0.0, 0, 9)];
        assert!(matches!(
            run(&trace, &unit_catalog(2), &[], &config(Mode::Baseline, 20.0)),
            Err(Error::UnknownObject(_))
        ));
    }

    #[test]
    fn viewpoint_rows_and_csv() {
        let trace: Vec<_> = (0..25).map(|i| ev(i as f64, 0, (i % 3) as u32)).collect();
        let r = run(&trace, &unit_catalog(3), &[], &config(Mode::Baseline, 100.0)).unwrap();
        assert_eq!(r.viewpoints.len(), 3);
        assert_eq!(r.viewpoints[2].hits + r.viewpoints[2].misses, 5);
        let csv = r.to_csv();
        assert!(csv.starts_with("viewpoint,hits,misses,hit_rate,on_demand,prefetches\n0,"));
        assert!(csv.ends_with(&format!("total,22,3,{},3,0\n", 22.0 / 25.0)));
    }

    #[test]
    fn mode_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
    }
}
