//! Byte-capacity bounded object cache with FIFO, LRU, LFU and POP eviction.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::domain::{Catalog, ObjectId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Fifo,
    Lru,
    Lfu,
    /// Lowest all-history access count is evicted first. Unlike LFU the
    /// count survives eviction.
    Pop,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Fifo, Policy::Lru, Policy::Lfu, Policy::Pop];
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Fifo => "FIFO",
            Policy::Lru => "LRU",
            Policy::Lfu => "LFU",
            Policy::Pop => "POP",
        })
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FIFO" => Ok(Policy::Fifo),
            "LRU" => Ok(Policy::Lru),
            "LFU" => Ok(Policy::Lfu),
            "POP" => Ok(Policy::Pop),
            other => Err(Error::Param(format!("unknown cache policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheConfig {
    pub capacity_mb: f64,
    pub policy: Policy,
}

impl CacheConfig {
    pub fn new(capacity_mb: f64, policy: Policy) -> Result<Self> {
        if !(capacity_mb > 0.0 && capacity_mb.is_finite()) {
            return Err(Error::Param(format!(
                "cache capacity must be positive, got {capacity_mb}"
            )));
        }
        Ok(Self { capacity_mb, policy })
    }

    /// Capacity as a fraction of the catalog's total object size.
    pub fn from_fraction(catalog: &Catalog, fraction: f64, policy: Policy) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Param(format!(
                "capacity fraction must be in (0, 1], got {fraction}"
            )));
        }
        Self::new(catalog.total_size_mb() * fraction, policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    OnDemand,
    Prefetch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub object_id: ObjectId,
    pub size_mb: f64,
    pub inserted_seq: u64,
    pub last_access_seq: u64,
    /// Accesses while resident. On-demand insertions start at 1 (the miss
    /// that caused them); prefetches start at 0.
    pub access_count: u64,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub insertions: u64,
    pub evictions: u64,
    pub prefetch_insertions: u64,
}

impl CacheStats {
    pub fn lookups(&self) -> u64 {
        self.hits + self.misses
    }

    pub fn hit_rate(&self) -> f64 {
        if self.lookups() == 0 {
            0.0
        } else {
            self.hits as f64 / self.lookups() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Miss,
}

/// Non-mutating residency probe.
pub trait Residency {
    fn is_resident(&self, id: ObjectId) -> bool;
}

#[derive(Debug, Clone)]
pub struct Cache {
    config: CacheConfig,
    sizes: HashMap<ObjectId, f64>,
    entries: HashMap<ObjectId, CacheEntry>,
    popularity: HashMap<ObjectId, u64>,
    used_mb: f64,
    seq: u64,
    stats: CacheStats,
}

impl Cache {
    pub fn new(config: CacheConfig, catalog: &Catalog) -> Result<Self> {
        let config = CacheConfig::new(config.capacity_mb, config.policy)?;
        Ok(Self {
            config,
            sizes: catalog.iter().map(|o| (o.id, o.size_mb)).collect(),
            entries: HashMap::new(),
            popularity: HashMap::new(),
            used_mb: 0.0,
            seq: 0,
            stats: CacheStats::default(),
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn used_mb(&self) -> f64 {
        self.used_mb
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: ObjectId) -> Option<&CacheEntry> {
        self.entries.get(&id)
    }

    /// All-history access count used by POP.
    pub fn popularity(&self, id: ObjectId) -> u64 {
        self.popularity.get(&id).copied().unwrap_or(0)
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.entries.contains_key(&id)
    }

    /// Resident ids in ascending order.
    pub fn resident_ids(&self) -> Vec<ObjectId> {
        let mut ids: Vec<_> = self.entries.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    pub fn lookup(&mut self, id: ObjectId) -> Result<Lookup> {
        if !self.sizes.contains_key(&id) {
            return Err(Error::UnknownObject(id));
        }
        *self.popularity.entry(id).or_insert(0) += 1;
        let seq = self.next_seq();
        match self.entries.get_mut(&id) {
            Some(entry) => {
                entry.last_access_seq = seq;
                entry.access_count += 1;
                self.stats.hits += 1;
                Ok(Lookup::Hit)
            }
            None => {
                self.stats.misses += 1;
                Ok(Lookup::Miss)
            }
        }
    }

    /// Makes `id` resident, evicting per policy until it fits. Returns the
    /// evicted ids in eviction order. Inserting a resident object is a no-op.
    pub fn insert(&mut self, id: ObjectId, origin: Origin) -> Result<Vec<ObjectId>> {
        let size_mb = *self.sizes.get(&id).ok_or(Error::UnknownObject(id))?;
        if self.entries.contains_key(&id) {
            return Ok(Vec::new());
        }
        if size_mb > self.config.capacity_mb {
            return Err(Error::ObjectTooLarge {
                id,
                size_mb,
                capacity_mb: self.config.capacity_mb,
            });
        }

        let mut evicted = Vec::new();
        while self.used_mb + size_mb > self.config.capacity_mb && !self.entries.is_empty() {
            let victim = self.victim().expect("nonempty cache has a victim");
            let entry = self.entries.remove(&victim).expect("victim is resident");
            self.used_mb -= entry.size_mb;
            self.stats.evictions += 1;
            evicted.push(victim);
        }
        if self.entries.is_empty() {
            // drop accumulated rounding error
            self.used_mb = 0.0;
        }

        let seq = self.next_seq();
        self.entries.insert(
            id,
            CacheEntry {
                object_id: id,
                size_mb,
                inserted_seq: seq,
                last_access_seq: seq,
                access_count: u64::from(origin == Origin::OnDemand),
                origin,
            },
        );
        self.used_mb += size_mb;
        self.stats.insertions += 1;
        if origin == Origin::Prefetch {
            self.stats.prefetch_insertions += 1;
        }
        Ok(evicted)
    }

    fn victim(&self) -> Option<ObjectId> {
        let key = |e: &CacheEntry| -> (u64, u64) {
            let primary = match self.config.policy {
                Policy::Fifo => e.inserted_seq,
                Policy::Lru => e.last_access_seq,
                Policy::Lfu => e.access_count,
                Policy::Pop => self.popularity(e.object_id),
            };
            (primary, e.inserted_seq)
        };
        self.entries.values().min_by_key(|e| key(e)).map(|e| e.object_id)
    }
}

impl Residency for Cache {
    fn is_resident(&self, id: ObjectId) -> bool {
        self.contains(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Point, VirtualObject};

    fn catalog(sizes: &[f64]) -> Catalog {
        Catalog::new(sizes.iter().enumerate().map(|(i, &s)| VirtualObject {
            id: ObjectId(i as u32),
            size_mb: s,
            position: Point::default(),
        }))
        .unwrap()
    }

    fn cache(policy: Policy, capacity: f64, n: usize) -> Cache {
        Cache::new(CacheConfig::new(capacity, policy).unwrap(), &catalog(&vec![10.0; n])).unwrap()
    }

    const A: ObjectId = ObjectId(0);
    const B: ObjectId = ObjectId(1);
    const C: ObjectId = ObjectId(2);

    #[test]
    fn cold_miss_then_hit() {
        let mut c = cache(Policy::Lru, 25.0, 3);
        assert_eq!(c.lookup(A).unwrap(), Lookup::Miss);
        c.insert(A, Origin::OnDemand).unwrap();
        assert_eq!(c.lookup(A).unwrap(), Lookup::Hit);
        assert_eq!(c.stats().hits, 1);
        assert_eq!(c.stats().misses, 1);
    }

    #[test]
    fn fifo_evicts_oldest() {
        let mut c = cache(Policy::Fifo, 20.0, 3);
        c.insert(A, Origin::OnDemand).unwrap();
        c.insert(B, Origin::OnDemand).unwrap();
        assert_eq!(c.insert(C, Origin::OnDemand).unwrap(), vec![A]);
        assert_eq!(c.lookup(A).unwrap(), Lookup::Miss);
        assert!(!c.contains(A));
    }

    #[test]
    fn lru_evicts_least_recent() {
        let mut c = cache(Policy::Lru, 25.0, 3);
        c.insert(A, Origin::OnDemand).unwrap();
        c.insert(B, Origin::OnDemand).unwrap();
        c.lookup(A).unwrap();
        assert_eq!(c.insert(C, Origin::OnDemand).unwrap(), vec![B]);
    }

    #[test]
    fn lfu_evicts_least_frequent() {
        let mut c = cache(Policy::Lfu, 25.0, 3);
        c.insert(A, Origin::OnDemand).unwrap();
        c.insert(B, Origin::OnDemand).unwrap();
        for _ in 0..2 {
            c.lookup(A).unwrap();
        }
        assert_eq!(c.entry(A).unwrap().access_count, 3);
        assert_eq!(c.entry(B).unwrap().access_count, 1);
        assert_eq!(c.insert(C, Origin::OnDemand).unwrap(), vec![B]);
    }

    #[test]
    fn pop_remembers_evicted_history() {
        let mut c = cache(Policy::Pop, 20.0, 3);
        // A is popular, gets evicted under capacity pressure, comes back
        for _ in 0..3 {
            c.lookup(A).unwrap();
        }
        c.insert(A, Origin::OnDemand).unwrap();
        c.lookup(B).unwrap();
        c.insert(B, Origin::OnDemand).unwrap();
        c.lookup(C).unwrap();
        assert_eq!(c.insert(C, Origin::OnDemand).unwrap(), vec![B]);
        assert_eq!(c.popularity(A), 3);
    }

    #[test]
    fn resident_insert_is_noop() {
        let mut c = cache(Policy::Fifo, 20.0, 3);
        c.insert(A, Origin::OnDemand).unwrap();
        assert!(c.insert(A, Origin::Prefetch).unwrap().is_empty());
        assert_eq!(c.stats().insertions, 1);
        assert_eq!(c.entry(A).unwrap().origin, Origin::OnDemand);
    }

    #[test]
    fn oversized_object_rejected_without_eviction() {
        let cat = catalog(&[10.0, 30.0]);
        let mut c = Cache::new(CacheConfig::new(25.0, Policy::Lru).unwrap(), &cat).unwrap();
        c.insert(A, Origin::OnDemand).unwrap();
        assert!(matches!(
            c.insert(B, Origin::OnDemand),
            Err(Error::ObjectTooLarge { .. })
        ));
        assert!(c.contains(A));
    }

    #[test]
    fn unknown_object_is_an_error() {
        let mut c = cache(Policy::Lru, 25.0, 1);
        assert!(matches!(c.lookup(ObjectId(99)), Err(Error::UnknownObject(_))));
    }

    #[test]
    fn contains_does_not_touch_metadata() {
        let mut c = cache(Policy::Lru, 25.0, 3);
        c.insert(A, Origin::OnDemand).unwrap();
        c.insert(B, Origin::OnDemand).unwrap();
        assert!(c.contains(A));
        assert!(!c.contains(C));
        // A stays least recent despite the probe
        assert_eq!(c.insert(C, Origin::OnDemand).unwrap(), vec![A]);
        assert!(!c.contains(A));
        assert_eq!(c.stats().lookups(), 0);
    }

    #[test]
    fn prefetch_starts_with_zero_count() {
        let mut c = cache(Policy::Lfu, 25.0, 3);
        c.insert(A, Origin::OnDemand).unwrap();
        c.insert(B, Origin::Prefetch).unwrap();
        assert_eq!(c.entry(B).unwrap().access_count, 0);
        assert_eq!(c.stats().prefetch_insertions, 1);
        assert_eq!(c.insert(C, Origin::OnDemand).unwrap(), vec![B]);
    }

    #[test]
    fn variable_sizes_evict_until_fit() {
        let cat = catalog(&[10.0, 10.0, 25.0]);
        let mut c = Cache::new(CacheConfig::new(30.0, Policy::Fifo).unwrap(), &cat).unwrap();
        c.insert(A, Origin::OnDemand).unwrap();
        c.insert(B, Origin::OnDemand).unwrap();
        assert_eq!(c.insert(C, Origin::OnDemand).unwrap(), vec![A, B]);
        assert!(c.used_mb() <= 30.0);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("lru".parse::<Policy>().unwrap(), Policy::Lru);
        assert_eq!(" POP ".parse::<Policy>().unwrap(), Policy::Pop);
        assert!("arc".parse::<Policy>().is_err());
        assert!(CacheConfig::new(0.0, Policy::Lru).is_err());
    }
}
