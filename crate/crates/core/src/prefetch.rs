//! The association + proximity prefetch policy.
//!
//! On every miss the prefetcher matches the active rule set against the
//! user's recent context, keeps candidates whose association factor clears
//! the threshold, prefetches the ones near the user and parks the rest in a
//! lazy queue until the user walks within range.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use crate::arm::{match_rules, RuleSet, DEFAULT_MAX_ITEMSET_LEN};
use crate::cache::Residency;
use crate::domain::{distance, AccessEvent, Catalog, ObjectId, Point, UserId};
use crate::error::{Error, Result};

pub const DEFAULT_LAZY_QUEUE_CAPACITY: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaarcParams {
    pub min_support: f64,
    pub min_confidence: f64,
    pub association_factor_threshold: f64,
    /// Interaction window behind the association factor; α = 2 / (1 + window).
    pub window: usize,
    pub proximity_threshold: f64,
    /// Number of the user's own recent accesses used as rule-matching context.
    pub history_window: usize,
    pub max_itemset_len: usize,
    pub lazy_queue_capacity: usize,
}

impl Default for SpaarcParams {
    fn default() -> Self {
        Self {
            min_support: 0.3,
            min_confidence: 0.45,
            association_factor_threshold: 1.0,
            window: 10,
            proximity_threshold: 15.0,
            history_window: 10,
            max_itemset_len: DEFAULT_MAX_ITEMSET_LEN,
            lazy_queue_capacity: DEFAULT_LAZY_QUEUE_CAPACITY,
        }
    }
}

impl SpaarcParams {
    /// Association-only variant: every matched object is fetched at once.
    pub fn association_only(self) -> Self {
        Self {
            association_factor_threshold: 0.0,
            proximity_threshold: f64::INFINITY,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Param("association factor window must be ≥ 1".into()));
        }
        if self.history_window == 0 {
            return Err(Error::Param("history window must be ≥ 1".into()));
        }
        if !(self.association_factor_threshold >= 0.0) {
            return Err(Error::Param("association factor threshold must be nonnegative".into()));
        }
        if !(self.proximity_threshold > 0.0) {
            return Err(Error::Param("proximity threshold must be positive".into()));
        }
        if self.max_itemset_len == 0 {
            return Err(Error::Param("maximum itemset length must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        alpha(self.window)
    }
}

/// Smoothing weight for a window of `window` interactions.
pub fn alpha(window: usize) -> f64 {
    2.0 / (1.0 + window as f64)
}

/// Recency-weighted reference counts per object:
/// `A_new = F·α + A_old·(1 − α)`.
#[derive(Debug, Clone)]
pub struct AssociationFactorTable {
    alpha: f64,
    factors: HashMap<ObjectId, f64>,
    counts: HashMap<ObjectId, usize>,
}

impl AssociationFactorTable {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "window must be at least 1");
        Self {
            alpha: alpha(window),
            factors: HashMap::new(),
            counts: HashMap::new(),
        }
    }

    pub fn factor(&self, id: ObjectId) -> f64 {
        self.factors.get(&id).copied().unwrap_or(0.0)
    }

    /// Reference count seen at the last update of `id`.
    pub fn last_count(&self, id: ObjectId) -> usize {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    /// Folds a raw reference count into the factor of `id`.
    pub fn update_with_count(&mut self, id: ObjectId, count: usize) -> f64 {
        let old = self.factor(id);
        let new = count as f64 * self.alpha + old * (1.0 - self.alpha);
        self.factors.insert(id, new);
        self.counts.insert(id, count);
        new
    }

    /// Counts the references to `id` among `window_events` and updates its
    /// factor.
    pub fn update(&mut self, id: ObjectId, window_events: &[AccessEvent]) -> f64 {
        let count = window_events.iter().filter(|e| e.object_id == id).count();
        self.update_with_count(id, count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LazyEntry {
    pub user_id: UserId,
    pub object_id: ObjectId,
    pub lift: f64,
}

/// Relevant but distant objects waiting for their user to come close.
#[derive(Debug, Clone)]
pub struct LazyFetchQueue {
    entries: VecDeque<LazyEntry>,
    capacity: usize,
    dropped: u64,
}

impl LazyFetchQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::new(),
            capacity: capacity.max(1),
            dropped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries dropped because the queue overflowed.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn entries(&self) -> impl Iterator<Item = &LazyEntry> {
        self.entries.iter()
    }

    pub fn contains(&self, user: UserId, object: ObjectId) -> bool {
        self.entries.iter().any(|e| e.user_id == user && e.object_id == object)
    }

    /// Queues `entry` unless the same (user, object) pair is already waiting.
    /// On overflow the oldest entry is dropped.
    pub fn push(&mut self, entry: LazyEntry) {
        if self.contains(entry.user_id, entry.object_id) {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
            self.dropped += 1;
        }
        self.entries.push_back(entry);
    }

    pub fn remove_user(&mut self, user: UserId) {
        self.entries.retain(|e| e.user_id != user);
    }

    fn take_where(&mut self, mut pred: impl FnMut(&LazyEntry) -> bool) -> Vec<LazyEntry> {
        let mut taken = Vec::new();
        self.entries.retain(|e| {
            if pred(e) {
                taken.push(*e);
                false
            } else {
                true
            }
        });
        taken
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrefetchDecision {
    /// Fetch request: the missed object first, then nearby prefetches in
    /// descending lift order. Never contains resident objects other than
    /// the missed one.
    pub fetch_now: Vec<ObjectId>,
    pub deferred: Vec<ObjectId>,
}

impl PrefetchDecision {
    /// The prefetched part of the request.
    pub fn prefetches(&self) -> &[ObjectId] {
        self.fetch_now.get(1..).unwrap_or(&[])
    }
}

/// Per-simulation prefetcher state.
#[derive(Debug, Clone)]
pub struct Prefetcher {
    params: SpaarcParams,
    ruleset: Arc<RuleSet>,
    factors: AssociationFactorTable,
    queue: LazyFetchQueue,
    user_history: HashMap<UserId, VecDeque<ObjectId>>,
    user_last_seen: HashMap<UserId, f64>,
    recent: VecDeque<AccessEvent>,
}

impl Prefetcher {
    pub fn new(params: SpaarcParams, ruleset: Arc<RuleSet>) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            factors: AssociationFactorTable::new(params.window),
            queue: LazyFetchQueue::new(params.lazy_queue_capacity),
            params,
            ruleset,
            user_history: HashMap::new(),
            user_last_seen: HashMap::new(),
            recent: VecDeque::new(),
        })
    }

    pub fn params(&self) -> &SpaarcParams {
        &self.params
    }

    pub fn ruleset(&self) -> &Arc<RuleSet> {
        &self.ruleset
    }

    /// Swaps in a new active rule set.
    pub fn set_ruleset(&mut self, ruleset: Arc<RuleSet>) {
        self.ruleset = ruleset;
    }

    pub fn factors(&self) -> &AssociationFactorTable {
        &self.factors
    }

    pub fn queue(&self) -> &LazyFetchQueue {
        &self.queue
    }

    /// Records a completed access in the user's context and the shared
    /// interaction window.
    pub fn observe(&mut self, event: &AccessEvent) {
        let hist = self.user_history.entry(event.user_id).or_default();
        hist.push_back(event.object_id);
        while hist.len() > self.params.history_window {
            hist.pop_front();
        }
        self.recent.push_back(*event);
        while self.recent.len() > self.params.window {
            self.recent.pop_front();
        }
        self.user_last_seen.insert(event.user_id, event.time);
    }

    /// The most recent `window` accesses across all users.
    pub fn window_events(&self) -> Vec<AccessEvent> {
        self.recent.iter().copied().collect()
    }

    /// Rule-matching context: the user's recent accesses plus `missed`.
    pub fn context(&self, user: UserId, missed: ObjectId) -> BTreeSet<ObjectId> {
        let mut ctx: BTreeSet<ObjectId> = self
            .user_history
            .get(&user)
            .map(|h| h.iter().copied().collect())
            .unwrap_or_default();
        ctx.insert(missed);
        ctx
    }

    /// Drops queued entries of users idle for longer than `gap` seconds.
    pub fn expire_idle(&mut self, now: f64, gap: f64) {
        let last_seen = &self.user_last_seen;
        self.queue
            .entries
            .retain(|e| last_seen.get(&e.user_id).is_some_and(|&t| now - t <= gap));
    }

    pub fn on_miss(
        &mut self,
        missed: ObjectId,
        user: UserId,
        position: Point,
        catalog: &Catalog,
        cache: &impl Residency,
    ) -> Result<PrefetchDecision> {
        catalog.get(missed)?;
        let context = self.context(user, missed);
        let candidates = match_rules(&self.ruleset, &context);

        let window = self.window_events();
        let mut decision = PrefetchDecision {
            fetch_now: vec![missed],
            deferred: Vec::new(),
        };
        for cand in candidates {
            let factor = self.factors.update(cand.object, &window);
            if factor < self.params.association_factor_threshold {
                continue;
            }
            if cache.is_resident(cand.object) {
                continue;
            }
            let obj = catalog.get(cand.object)?;
            if distance(position, obj.position) <= self.params.proximity_threshold {
                decision.fetch_now.push(cand.object);
            } else {
                decision.deferred.push(cand.object);
                self.queue.push(LazyEntry {
                    user_id: user,
                    object_id: cand.object,
                    lift: cand.lift,
                });
            }
        }
        Ok(decision)
    }

    /// Removes and returns `user`'s queued objects that are now within the
    /// proximity threshold. Entries whose object became resident meanwhile
    /// are dropped without being returned.
    pub fn poll_lazy_queue(
        &mut self,
        user: UserId,
        position: Point,
        catalog: &Catalog,
        cache: &impl Residency,
    ) -> Vec<ObjectId> {
        let threshold = self.params.proximity_threshold;
        let taken = self.queue.take_where(|e| {
            e.user_id == user
                && (cache.is_resident(e.object_id)
                    || catalog
                        .get(e.object_id)
                        .is_ok_and(|o| distance(position, o.position) <= threshold))
        });
        taken
            .into_iter()
            .filter(|e| !cache.is_resident(e.object_id))
            .map(|e| e.object_id)
            .collect()
    }
}
