//! Adaptive minimum-support tuning driven by hit-rate degradation.
//!
//! When the hit rate drops sharply the tuner mines a fresh family of rule
//! sets from recent transactions; on milder drops it steps through the
//! family it already has.

use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crate::arm::{filter_lift, gen_frequent_itemsets, gen_rules, RuleSet, DEFAULT_MAX_ITEMSET_LEN};
use crate::domain::{ObjectId, Transaction};
use crate::error::{Error, Result};

use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunerConfig {
    /// Hit-rate degradation threshold δ.
    pub delta: f64,
    pub min_confidence: f64,
    /// Number of grid points D searched between the support bounds.
    pub grid_size: usize,
    /// Maximum tolerated rules-to-itemsets ratio η.
    pub eta: f64,
    /// Maximum tolerated change in lift kurtosis θ between grid points.
    pub theta: f64,
    /// Number of rule sets N kept after a regeneration.
    pub n_rulesets: usize,
    /// Number n of most recent transactions mined on regeneration.
    pub history: usize,
    pub viewpoint_size: usize,
    pub max_itemset_len: usize,
    /// Viewpoints between a regeneration trigger and installation.
    pub generation_latency: usize,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            min_confidence: 0.10,
            grid_size: 8,
            eta: 20.0,
            theta: 2.0,
            n_rulesets: 5,
            history: 100,
            viewpoint_size: 10,
            max_itemset_len: DEFAULT_MAX_ITEMSET_LEN,
            generation_latency: 1,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Param(format!("{name} must be positive, got {v}")))
            }
        };
        positive("delta", self.delta)?;
        if self.delta >= 1.0 {
            return Err(Error::Param("delta must be below 1".into()));
        }
        positive("min_confidence", self.min_confidence)?;
        positive("eta", self.eta)?;
        positive("theta", self.theta)?;
        if self.grid_size < 2 {
            return Err(Error::Param("grid size must be at least 2".into()));
        }
        if self.n_rulesets < 1 || self.history < 1 || self.viewpoint_size < 1 {
            return Err(Error::Param(
                "rule set count, history and viewpoint size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Relative hit-rate drop between two consecutive samples, clamped at 0.
pub fn get_degradation(prev_hr: f64, curr_hr: f64) -> f64 {
    ((prev_hr - curr_hr) / prev_hr.max(1e-9)).max(0.0)
}

/// Sample excess kurtosis `m4 / m2² − 3`. Fewer than two values or zero
/// spread yield 0.
pub fn excess_kurtosis(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        return 0.0;
    }
    m4 / (m2 * m2) - 3.0
}

/// Mean and maximum single-item support.
pub fn get_min_sup_bound(transactions: &[Transaction]) -> Result<(f64, f64)> {
    let mut counts: HashMap<ObjectId, usize> = HashMap::new();
    for tx in transactions {
        for &item in tx.items() {
            *counts.entry(item).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Param("no items to bound minimum support".into()));
    }
    let n = transactions.len() as f64;
    let total: usize = counts.values().sum();
    let low = total as f64 / counts.len() as f64 / n;
    let high = *counts.values().max().expect("nonempty") as f64 / n;
    Ok((low.min(high), high))
}

/// `count` evenly spaced values from `low` to `high` inclusive.
pub fn linspace(low: f64, high: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![low],
        _ => (0..count)
            .map(|i| {
                if i == count - 1 {
                    high
                } else {
                    low + (high - low) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// Why the support search stopped at a grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridOutcome {
    NoItemsets,
    /// Itemsets but no rule survived; skipped like an empty point.
    NoRules,
    Accepted,
    RatioExceeded,
    KurtosisJump,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridStep {
    pub min_support: f64,
    pub itemsets: usize,
    pub rules: usize,
    pub kurtosis: Option<f64>,
    pub outcome: GridOutcome,
}

#[derive(Debug, Clone)]
pub struct Generation {
    /// Strictly ascending in minimum support.
    pub rulesets: Vec<Arc<RuleSet>>,
    pub bounds: (f64, f64),
    pub steps: Vec<GridStep>,
    /// Set when no grid point passed both guards and the bounds fell back
    /// to the largest support that produced rules.
    pub fell_back: bool,
}

/// Searches the support grid from largest to smallest value, stops on the
/// rule-ratio or kurtosis guard, and mines `n_rulesets` rule sets evenly
/// spaced over the accepted range.
///
/// Returns `Ok(None)` when no grid point produced any rule.
pub fn gen_a_rules(transactions: &[Transaction], config: &TunerConfig) -> Result<Option<Generation>> {
    config.validate()?;
    let (low, high) = get_min_sup_bound(transactions)?;
    let mut grid = linspace(low, high, config.grid_size);
    grid.reverse();

    let mut kappa_prev: Option<f64> = None;
    let (mut new_low, mut new_high) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut largest_with_rules: Option<f64> = None;
    let mut steps = Vec::new();

    for &beta in &grid {
        let itemsets = gen_frequent_itemsets(transactions, beta, config.max_itemset_len)?;
        if itemsets.is_empty() {
            steps.push(GridStep {
                min_support: beta,
                itemsets: 0,
                rules: 0,
                kurtosis: None,
                outcome: GridOutcome::NoItemsets,
            });
            continue;
        }
        let rules = filter_lift(gen_rules(&itemsets, config.min_confidence)?);
        if rules.is_empty() {
            steps.push(GridStep {
                min_support: beta,
                itemsets: itemsets.len(),
                rules: 0,
                kurtosis: None,
                outcome: GridOutcome::NoRules,
            });
            continue;
        }
        if largest_with_rules.is_none() {
            largest_with_rules = Some(beta);
        }
        let mut step = GridStep {
            min_support: beta,
            itemsets: itemsets.len(),
            rules: rules.len(),
            kurtosis: None,
            outcome: GridOutcome::Accepted,
        };
        if rules.len() as f64 / itemsets.len() as f64 > config.eta {
            step.outcome = GridOutcome::RatioExceeded;
            steps.push(step);
            break;
        }
        let lifts: Vec<f64> = rules.iter().map(|r| r.lift).collect();
        let kappa = excess_kurtosis(&lifts);
        step.kurtosis = Some(kappa);
        if kappa_prev.is_some_and(|prev| (prev - kappa).abs() > config.theta) {
            step.outcome = GridOutcome::KurtosisJump;
            steps.push(step);
            break;
        }
        new_low = new_low.min(beta);
        new_high = new_high.max(beta);
        kappa_prev = Some(kappa);
        steps.push(step);
    }

    let mut fell_back = false;
    if new_low == f64::INFINITY {
        match largest_with_rules {
            Some(beta) => {
                new_low = beta;
                new_high = beta;
                fell_back = true;
            }
            None => return Ok(None),
        }
    }

    let mut supports = linspace(new_low, new_high, config.n_rulesets);
    supports.dedup();
    let rulesets = supports
        .into_iter()
        .map(|beta| RuleSet::mine(transactions, beta, config.min_confidence, config.max_itemset_len).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;

    Ok(Some(Generation {
        rulesets,
        bounds: (new_low, new_high),
        steps,
        fell_back,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneAction {
    Keep,
    StepDown,
    StepUp,
    /// A regeneration was started.
    Regenerate,
    /// Fresh rule sets were installed and the middle one activated.
    Install,
}

impl TuneAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            TuneAction::Keep => "keep",
            TuneAction::StepDown => "step-down",
            TuneAction::StepUp => "step-up",
            TuneAction::Regenerate => "regenerate",
            TuneAction::Install => "install",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunerEvent {
    pub viewpoint: usize,
    pub hit_rate: f64,
    pub hrd: f64,
    pub action: TuneAction,
    pub active_min_support: Option<f64>,
}

pub fn tuner_log_csv(events: &[TunerEvent]) -> String {
    let mut out = String::from("viewpoint,hit_rate,hrd,action,active_min_support\n");
    for e in events {
        let sup = e.active_min_support.map(|s| s.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.viewpoint,
            e.hit_rate,
            e.hrd,
            e.action.as_str(),
            sup
        ));
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct TunerState {
    pub rulesets: Vec<Arc<RuleSet>>,
    pub active_index: usize,
    pub last_hit_rate: Option<f64>,
    pub hrd: f64,
    pub generation_in_progress: bool,
}

struct PendingGeneration {
    ready_at: usize,
    handle: JoinHandle<Result<Option<Generation>>>,
}

/// Runs the tuning loop. Regeneration happens on a worker thread; its
/// result is installed at the first viewpoint at least
/// `generation_latency` viewpoints after the trigger, so the outcome does
/// not depend on thread scheduling.
pub struct Tuner {
    config: TunerConfig,
    state: TunerState,
    pending: Option<PendingGeneration>,
    fresh: bool,
}

impl Tuner {
    pub fn new(config: TunerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: TunerState::default(),
            pending: None,
            fresh: false,
        })
    }

    /// Synchronously mines the initial rule set family.
    pub fn bootstrap(&mut self, transactions: &[Transaction]) -> Result<()> {
        if transactions.is_empty() {
            return Ok(());
        }
        let tail = &transactions[transactions.len().saturating_sub(self.config.history)..];
        if let Some(generation) = gen_a_rules(tail, &self.config)? {
            self.install(generation.rulesets);
        }
        Ok(())
    }

    pub fn config(&self) -> &TunerConfig {
        &self.config
    }

    pub fn state(&self) -> &TunerState {
        &self.state
    }

    pub fn active_ruleset(&self) -> Option<&Arc<RuleSet>> {
        self.state.rulesets.get(self.state.active_index)
    }

    pub fn generation_in_progress(&self) -> bool {
        self.pending.is_some()
    }

    fn install(&mut self, rulesets: Vec<Arc<RuleSet>>) {
        if rulesets.is_empty() {
            return;
        }
        self.state.rulesets = rulesets;
        self.state.active_index = 0;
        self.fresh = true;
    }

    /// Selects the active rule set. Freshly installed families start in the
    /// middle; afterwards moderate degradation (δ < hrd ≤ 2δ) moves toward
    /// lower support and mild degradation (0 < hrd ≤ δ) toward higher.
    pub fn set_a_rules(&mut self, hrd: f64) -> usize {
        let n = self.state.rulesets.len();
        if n == 0 {
            return 0;
        }
        let delta = self.config.delta;
        let idx = &mut self.state.active_index;
        if self.fresh {
            *idx = n / 2;
            self.fresh = false;
        } else if hrd > delta && hrd <= 2.0 * delta {
            *idx = idx.saturating_sub(1);
        } else if hrd > 0.0 && hrd <= delta {
            *idx = (*idx + 1).min(n - 1);
        }
        *idx
    }

    fn start_generation(&mut self, viewpoint: usize, transactions: Vec<Transaction>) {
        let config = self.config;
        let handle = thread::spawn(move || gen_a_rules(&transactions, &config));
        self.pending = Some(PendingGeneration {
            ready_at: viewpoint + self.config.generation_latency,
            handle,
        });
    }

    fn collect_generation(&mut self, viewpoint: usize) -> Result<bool> {
        let ready = self.pending.as_ref().is_some_and(|p| p.ready_at <= viewpoint);
        if !ready {
            return Ok(false);
        }
        let pending = self.pending.take().expect("checked above");
        let result = pending
            .handle
            .join()
            .map_err(|_| Error::Param("rule generation thread panicked".into()))?;
        match result? {
            Some(generation) => {
                self.install(generation.rulesets);
                Ok(true)
            }
            None => {
                log::debug!("rule regeneration produced no rules; keeping previous rule sets");
                Ok(false)
            }
        }
    }

    /// One tuning step at the end of a viewpoint. `recent` supplies the
    /// transactions to mine if a regeneration is triggered; it is only
    /// invoked in that case.
    pub fn on_viewpoint(
        &mut self,
        viewpoint: usize,
        hit_rate: f64,
        recent: impl FnOnce() -> Vec<Transaction>,
    ) -> Result<TunerEvent> {
        let installed = self.collect_generation(viewpoint)?;
        let hrd = match self.state.last_hit_rate {
            Some(prev) => get_degradation(prev, hit_rate),
            None => 0.0,
        };
        self.state.last_hit_rate = Some(hit_rate);
        self.state.hrd = hrd;

        let mut action = if installed {
            TuneAction::Install
        } else {
            TuneAction::Keep
        };
        if hrd > 2.0 * self.config.delta && self.pending.is_none() {
            let txs = recent();
            if !txs.is_empty() {
                self.start_generation(viewpoint, txs);
                action = TuneAction::Regenerate;
                if self.config.generation_latency == 0 && self.collect_generation(viewpoint)? {
                    action = TuneAction::Install;
                }
            }
        }
        self.state.generation_in_progress = self.pending.is_some();

        let before = self.state.active_index;
        let fresh = self.fresh;
        let after = self.set_a_rules(hrd);
        if fresh && action == TuneAction::Keep {
            action = TuneAction::Install;
        } else if action == TuneAction::Keep {
            action = match after.cmp(&before) {
                std::cmp::Ordering::Less => TuneAction::StepDown,
                std::cmp::Ordering::Greater => TuneAction::StepUp,
                std::cmp::Ordering::Equal => TuneAction::Keep,
            };
        }
        Ok(TunerEvent {
            viewpoint,
            hit_rate,
            hrd,
            action,
            active_min_support: self.active_ruleset().map(|r| r.min_support),
        })
    }

    /// Waits for any in-flight generation so no worker thread outlives the
    /// tuner.
    pub fn finish(&mut self) {
        if let Some(p) = self.pending.take() {
            let _ = p.handle.join();
        }
        self.state.generation_in_progress = false;
    }
}

impl Drop for Tuner {
    fn drop(&mut self) {
        self.finish();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(id: u64, items: &[u32]) -> Transaction {
        Transaction::new(id, items.iter().map(|&i| ObjectId(i))).unwrap()
    }

    fn dummy_sets(n: usize) -> Vec<Arc<RuleSet>> {
        (0..n)
            .map(|i| Arc::new(RuleSet::new(Vec::new(), 0.1 * (i + 1) as f64, 0.1, 10, 0)))
            .collect()
    }

    #[test]
    fn degradation_examples() {
        assert_eq!(get_degradation(0.5, 0.5), 0.0);
        assert!((get_degradation(0.5, 0.4) - 0.2).abs() < 1e-12);
        assert_eq!(get_degradation(0.0, 0.1), 0.0);
        assert_eq!(get_degradation(0.0, 0.0), 0.0);
    }

    #[test]
    fn kurtosis_of_known_sample() {
        // mean 3, m2 = 12, m4 = 336 ⇒ 336/144 − 3 = −2/3
        assert!((excess_kurtosis(&[1.0, 1.0, 1.0, 9.0]) + 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(excess_kurtosis(&[2.0]), 0.0);
        assert_eq!(excess_kurtosis(&[]), 0.0);
        assert_eq!(excess_kurtosis(&[1.5, 1.5, 1.5]), 0.0);
    }

    #[test]
    fn support_bounds() {
        // S(a) = 0.8, S(b) = 0.2
        let txs = vec![tx(0, &[0]), tx(1, &[0]), tx(2, &[0]), tx(3, &[0]), tx(4, &[1])];
        let (low, high) = get_min_sup_bound(&txs).unwrap();
        assert!((low - 0.5).abs() < 1e-12);
        assert!((high - 0.8).abs() < 1e-12);

        let single = vec![tx(0, &[5]), tx(1, &[5]), tx(2, &[5]), tx(3, &[5, 6])];
        let (low, high) = get_min_sup_bound(&single[..3]).unwrap();
        assert_eq!((low, high), (1.0, 1.0));
        let (_, high) = get_min_sup_bound(&single).unwrap();
        assert_eq!(high, 1.0);
    }

    #[test]
    fn degenerate_bounds() {
        let txs = vec![tx(0, &[3]), tx(1, &[3]), tx(2, &[4]), tx(3, &[4])];
        let (low, high) = get_min_sup_bound(&txs).unwrap();
        assert_eq!((low, high), (0.5, 0.5));
        assert!(get_min_sup_bound(&[]).is_err());
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = linspace(0.2, 0.7, 6);
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], 0.2);
        assert_eq!(g[5], 0.7);
        assert_eq!(linspace(0.3, 0.9, 1), vec![0.3]);
    }

    #[test]
    fn set_a_rules_stepping() {
        let mut t = Tuner::new(TunerConfig::default()).unwrap();
        t.install(dummy_sets(5));
        assert_eq!(t.set_a_rules(0.0), 2);
        assert_eq!(t.set_a_rules(0.08), 1);
        assert_eq!(t.set_a_rules(0.08), 0);
        assert_eq!(t.set_a_rules(0.08), 0);
        assert_eq!(t.set_a_rules(0.03), 1);
        assert_eq!(t.set_a_rules(0.0), 1);
        // above 2δ the selection is left alone
        assert_eq!(t.set_a_rules(0.5), 1);
        for _ in 0..10 {
            t.set_a_rules(0.01);
        }
        assert_eq!(t.state().active_index, 4);
    }

    #[test]
    fn regeneration_triggered_above_twice_delta() {
        let txs: Vec<Transaction> = (0..20)
            .map(|i| tx(i, if i % 2 == 0 { &[0, 1] } else { &[2, 3] }))
            .collect();
        let mut t = Tuner::new(TunerConfig::default()).unwrap();
        t.on_viewpoint(0, 0.5, Vec::new).unwrap();
        // hrd = 0.12 > 2 · 0.05
        let e = t.on_viewpoint(1, 0.44, || txs.clone()).unwrap();
        assert!((e.hrd - 0.12).abs() < 1e-9);
        assert_eq!(e.action, TuneAction::Regenerate);
        assert!(t.generation_in_progress());
        // a second trigger while generating is coalesced
        let e = t.on_viewpoint(1, 0.1, || panic!("coalesced")).unwrap();
        assert_ne!(e.action, TuneAction::Regenerate);
        let e = t.on_viewpoint(2, 0.1, Vec::new).unwrap();
        assert_eq!(e.action, TuneAction::Install);
        assert!(!t.generation_in_progress());
        assert_eq!(t.state().active_index, t.state().rulesets.len() / 2);
    }

    #[test]
    fn mild_degradation_does_not_regenerate() {
        let mut t = Tuner::new(TunerConfig::default()).unwrap();
        t.install(dummy_sets(5));
        t.on_viewpoint(0, 0.5, Vec::new).unwrap();
        // hrd = 0.07 in (δ, 2δ]
        let e = t.on_viewpoint(1, 0.465, || panic!("no regeneration")).unwrap();
        assert!((e.hrd - 0.07).abs() < 1e-9);
        assert_eq!(e.action, TuneAction::StepDown);
        assert_eq!(t.state().active_index, 1);
    }
}
