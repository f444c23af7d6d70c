//! Experiment driver: config parsing, run matrices and CSV artifacts.
//!
//! # Config format
//!
//! A config is UTF-8 text, one `key = value` entry per line.
//!
//! * `#` starts a comment that runs to the end of the line.
//! * Blank lines are ignored, and so is whitespace around keys and values.
//! * Keys are lowercase dotted names (`[a-z0-9_.]+`) and may appear once.
//! * Everything after the first `=` is the value. Values never contain `#`.
//! * List values are comma separated, e.g. `spaarc.min_support = 0.3, 0.45`.
//! * Booleans are `true` or `false`. Relative input paths are resolved
//!   against the directory holding the config.
//!
//! Unknown keys are errors. Every key is optional. The defaults and the
//! full key set are what [`ExperimentSpec::to_config_string`] prints for
//! `ExperimentSpec::default()`.
//!
//! The list-valued keys are the run matrix: `seeds`, `mode`,
//! `cache.policy`, `workload.n_users`, `workload.n_objects`,
//! `spaarc.min_support`, `spaarc.min_confidence`,
//! `spaarc.association_factor` and `spaarc.proximity`. One cell runs per
//! combination.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cache::{CacheConfig, Policy};
use crate::domain::{Catalog, Transaction};
use crate::error::{Error, Result};
use crate::io::{load_spmf, read_catalog, read_trace, write_atomic};
use crate::prefetch::SpaarcParams;
use crate::sim::{self, decision_log_csv, Comparison, LatencyModel, Mode, RunConfig, RunReport};
use crate::tuner::{tuner_log_csv, TunerConfig};
use crate::workload::{self, GeneratedWorkload, Rect, WorkloadConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSource {
    Generate,
    Trace {
        trace: PathBuf,
        catalog: PathBuf,
        history: Option<PathBuf>,
    },
    Spmf {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CacheSize {
    Fraction(f64),
    Megabytes(f64),
}

impl CacheSize {
    fn resolve(self, catalog: &Catalog, policy: Policy) -> Result<CacheConfig> {
        match self {
            CacheSize::Fraction(f) => CacheConfig::from_fraction(catalog, f, policy),
            CacheSize::Megabytes(mb) => CacheConfig::new(mb, policy),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub source: WorkloadSource,
    /// Workload parameters; `n_users`, `n_objects` and `seed` come from the
    /// matrix axes below.
    pub workload: WorkloadConfig,
    pub seeds: Vec<u64>,
    pub n_users: Vec<usize>,
    pub n_objects: Vec<usize>,
    pub policies: Vec<Policy>,
    pub modes: Vec<Mode>,
    pub cache_size: CacheSize,
    pub min_support: Vec<f64>,
    pub min_confidence: Vec<f64>,
    pub association_factor: Vec<f64>,
    pub proximity: Vec<f64>,
    /// Non-swept prefetcher settings.
    pub spaarc: SpaarcParams,
    pub tuner: TunerConfig,
    pub latency: LatencyModel,
    pub session_gap: f64,
    pub poll_step: f64,
    pub decision_log: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let spaarc = SpaarcParams::default();
        let workload = WorkloadConfig::default();
        Self {
            name: "experiment".into(),
            source: WorkloadSource::Generate,
            seeds: vec![workload.seed],
            n_users: vec![workload.n_users],
            n_objects: vec![workload.n_objects],
            workload,
            policies: vec![Policy::Fifo],
            modes: vec![Mode::Baseline, Mode::Spaarc],
            cache_size: CacheSize::Fraction(0.2),
            min_support: vec![spaarc.min_support],
            min_confidence: vec![spaarc.min_confidence],
            association_factor: vec![spaarc.association_factor_threshold],
            proximity: vec![spaarc.proximity_threshold],
            spaarc,
            tuner: TunerConfig::default(),
            latency: LatencyModel::default(),
            session_gap: 60.0,
            poll_step: 1.0,
            decision_log: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Entries of a config file keyed by name, with their line numbers.
struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!("line {line_no}"), "expected `key = value`"));
            };
            let key = key.trim();
            let valid = !key.is_empty()
                && key
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.');
            if !valid {
                return Err(Error::config(format!("line {line_no}"), format!("invalid key {key:?}")));
            }
            if map
                .insert(key.to_string(), (value.trim().to_string(), line_no))
                .is_some()
            {
                return Err(Error::config(key, format!("duplicate key on line {line_no}")));
            }
        }
        Ok(Self { map })
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.map.remove(key).map(|(v, _)| v)
    }

    fn one<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::config(key, format!("cannot parse {v:?}: {e}"))),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        let Some(v) = self.raw(key) else {
            return Ok(default);
        };
        let items = v
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| Error::config(key, format!("cannot parse {s:?}: {e}")))
            })
            .collect::<Result<Vec<T>>>()?;
        if items.is_empty() {
            return Err(Error::config(key, "list must not be empty"));
        }
        Ok(items)
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().next() {
            Some((key, (_, line))) => Err(Error::config(key, format!("unknown key on line {line}"))),
            None => Ok(()),
        }
    }
}

fn parse_obstacles(key: &str, value: &str) -> Result<Vec<Rect>> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty() && *s != "none")
        .map(|r| {
            let nums = r
                .split_whitespace()
                .map(|n| n.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::config(key, format!("cannot parse {r:?}: {e}")))?;
            match nums[..] {
                [x0, y0, x1, y1] => Ok(Rect::new(x0, y0, x1, y1)),
                _ => Err(Error::config(key, format!("rectangle {r:?} needs four numbers"))),
            }
        })
        .collect()
}

fn parse_shift(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "none" || value.is_empty() {
        return Ok(None);
    }
    value
        .parse()
        .map(Some)
        .map_err(|e| Error::config(key, format!("cannot parse {value:?}: {e}")))
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl ExperimentSpec {
    /// Parses config text; relative input paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let d = Self::default();
        let path = |p: String| base_dir.join(p);

        let source = match e.one::<String>("workload.source", "generate".into())?.as_str() {
            "generate" => WorkloadSource::Generate,
            "trace" => WorkloadSource::Trace {
                trace: path(
                    e.raw("workload.trace_file")
                        .ok_or_else(|| Error::config("workload.trace_file", "required for a trace source"))?,
                ),
                catalog: path(
                    e.raw("workload.catalog_file")
                        .ok_or_else(|| Error::config("workload.catalog_file", "required for a trace source"))?,
                ),
                history: e.raw("workload.history_file").map(path),
            },
            "spmf" => WorkloadSource::Spmf {
                path: path(
                    e.raw("workload.spmf_file")
                        .ok_or_else(|| Error::config("workload.spmf_file", "required for an spmf source"))?,
                ),
            },
            other => {
                return Err(Error::config(
                    "workload.source",
                    format!("expected generate, trace or spmf, got {other:?}"),
                ))
            }
        };

        let w = &d.workload;
        let workload = WorkloadConfig {
            n_objects: w.n_objects,
            n_users: w.n_users,
            planted_support: e.one("workload.planted_support", w.planted_support)?,
            planted_itemset_fraction: e.one("workload.planted_itemset_fraction", w.planted_itemset_fraction)?,
            region_size: e.one("workload.region_size", w.region_size)?,
            obstacles: match e.raw("workload.obstacles") {
                Some(v) => parse_obstacles("workload.obstacles", &v)?,
                None => w.obstacles.clone(),
            },
            arrival_rate: e.one("workload.arrival_rate", w.arrival_rate)?,
            interaction_mean: e.one("workload.interaction_mean", w.interaction_mean)?,
            interaction_std: e.one("workload.interaction_std", w.interaction_std)?,
            walk_speed: e.one("workload.walk_speed", w.walk_speed)?,
            filler_min: e.one("workload.filler_min", w.filler_min)?,
            filler_max: e.one("workload.filler_max", w.filler_max)?,
            history_sessions: e.one("workload.history_sessions", w.history_sessions)?,
            shift_at: match e.raw("workload.shift_at") {
                Some(v) => parse_shift("workload.shift_at", &v)?,
                None => w.shift_at,
            },
            seed: w.seed,
        };

        let cache_size = match e.raw("cache.capacity_mb") {
            Some(v) => CacheSize::Megabytes(
                v.parse()
                    .map_err(|err| Error::config("cache.capacity_mb", format!("cannot parse {v:?}: {err}")))?,
            ),
            None => CacheSize::Fraction(e.one("cache.fraction", 0.2)?),
        };

        let s = &d.spaarc;
        let spaarc = SpaarcParams {
            window: e.one("spaarc.window", s.window)?,
            history_window: e.one("spaarc.history_window", s.history_window)?,
            max_itemset_len: e.one("spaarc.max_itemset_len", s.max_itemset_len)?,
            lazy_queue_capacity: e.one("spaarc.lazy_queue_capacity", s.lazy_queue_capacity)?,
            ..*s
        };
        let t = &d.tuner;
        let tuner = TunerConfig {
            delta: e.one("tuner.delta", t.delta)?,
            min_confidence: e.one("tuner.min_confidence", t.min_confidence)?,
            grid_size: e.one("tuner.grid_size", t.grid_size)?,
            eta: e.one("tuner.eta", t.eta)?,
            theta: e.one("tuner.theta", t.theta)?,
            n_rulesets: e.one("tuner.n_rulesets", t.n_rulesets)?,
            history: e.one("tuner.history", t.history)?,
            viewpoint_size: e.one("tuner.viewpoint_size", t.viewpoint_size)?,
            max_itemset_len: e.one("tuner.max_itemset_len", t.max_itemset_len)?,
            generation_latency: e.one("tuner.generation_latency", t.generation_latency)?,
        };
        let l = &d.latency;
        let latency = LatencyModel {
            cloud_rtt_ms: e.one("latency.cloud_rtt_ms", l.cloud_rtt_ms)?,
            edge_hit_ms: e.one("latency.edge_hit_ms", l.edge_hit_ms)?,
            immersion_budget_ms: e.one("latency.immersion_budget_ms", l.immersion_budget_ms)?,
        };

        let spec = Self {
            name: e.one("name", d.name.clone())?,
            source,
            workload,
            seeds: e.list("seeds", d.seeds.clone())?,
            n_users: e.list("workload.n_users", d.n_users.clone())?,
            n_objects: e.list("workload.n_objects", d.n_objects.clone())?,
            policies: e.list("cache.policy", d.policies.clone())?,
            modes: e.list("mode", d.modes.clone())?,
            cache_size,
            min_support: e.list("spaarc.min_support", d.min_support.clone())?,
            min_confidence: e.list("spaarc.min_confidence", d.min_confidence.clone())?,
            association_factor: e.list("spaarc.association_factor", d.association_factor.clone())?,
            proximity: e.list("spaarc.proximity", d.proximity.clone())?,
            spaarc,
            tuner,
            latency,
            session_gap: e.one("sim.session_gap", d.session_gap)?,
            poll_step: e.one("sim.poll_step", d.poll_step)?,
            decision_log: e.one("sim.decision_log", d.decision_log)?,
            output_dir: e.raw("output.dir").map(PathBuf::from).unwrap_or(d.output_dir),
        };
        e.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks every setting, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let in_section = |section: &str| {
            let section = section.to_string();
            move |e: Error| match e {
                Error::Param(msg) => Error::config(section.clone(), msg),
                other => other,
            }
        };
        let mut w = self.workload.clone();
        for (&u, &o) in self.n_users.iter().zip(&self.n_objects) {
            w.n_users = u;
            w.n_objects = o;
            w.validate().map_err(in_section("workload"))?;
        }
        if self.n_objects.contains(&0) {
            return Err(Error::config("workload.n_objects", "must be at least 1"));
        }
        if self.source != WorkloadSource::Generate && (self.n_users.len() > 1 || self.n_objects.len() > 1) {
            return Err(Error::config(
                "workload.n_users",
                "user and object sweeps need a generated workload",
            ));
        }
        match self.cache_size {
            CacheSize::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::config("cache.fraction", "must be in (0, 1]"))
            }
            CacheSize::Megabytes(mb) if !(mb > 0.0 && mb.is_finite()) => {
                return Err(Error::config("cache.capacity_mb", "must be positive"))
            }
            _ => {}
        }
        let fraction = |key: &str, xs: &[f64]| {
            if xs.iter().all(|x| *x > 0.0 && *x <= 1.0) {
                Ok(())
            } else {
                Err(Error::config(key, "values must be in (0, 1]"))
            }
        };
        fraction("spaarc.min_support", &self.min_support)?;
        fraction("spaarc.min_confidence", &self.min_confidence)?;
        if self.association_factor.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::config("spaarc.association_factor", "values must be nonnegative"));
        }
        if self.proximity.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::config("spaarc.proximity", "values must be positive"));
        }
        let probe = self.run_config(&self.cells()[0], CacheConfig::new(1.0, Policy::Fifo)?);
        probe.spaarc.validate().map_err(in_section("spaarc"))?;
        self.tuner.validate().map_err(in_section("tuner"))?;
        self.latency.validate().map_err(in_section("latency"))?;
        if !(self.session_gap > 0.0) {
            return Err(Error::config("sim.session_gap", "must be positive"));
        }
        if !(self.poll_step > 0.0) {
            return Err(Error::config("sim.poll_step", "must be positive"));
        }
        Ok(())
    }

    /// Canonical text of this spec; parsing it yields the same spec.
    pub fn to_config_string(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(o, "{k} = {v}");
        };
        kv("name", self.name.clone());
        kv("seeds", join(&self.seeds));
        kv("mode", join(&self.modes));
        match &self.source {
            WorkloadSource::Generate => kv("workload.source", "generate".into()),
            WorkloadSource::Trace {
                trace,
                catalog,
                history,
            } => {
                kv("workload.source", "trace".into());
                kv("workload.trace_file", trace.display().to_string());
                kv("workload.catalog_file", catalog.display().to_string());
                if let Some(h) = history {
                    kv("workload.history_file", h.display().to_string());
                }
            }
            WorkloadSource::Spmf { path } => {
                kv("workload.source", "spmf".into());
                kv("workload.spmf_file", path.display().to_string());
            }
        }
        let w = &self.workload;
        kv("workload.n_users", join(&self.n_users));
        kv("workload.n_objects", join(&self.n_objects));
        kv("workload.planted_support", w.planted_support.to_string());
        kv(
            "workload.planted_itemset_fraction",
            w.planted_itemset_fraction.to_string(),
        );
        kv("workload.region_size", w.region_size.to_string());
        let rects: Vec<String> = w
            .obstacles
            .iter()
            .map(|r| format!("{} {} {} {}", r.x0, r.y0, r.x1, r.y1))
            .collect();
        kv(
            "workload.obstacles",
            if rects.is_empty() {
                "none".into()
            } else {
                rects.join("; ")
            },
        );
        kv("workload.arrival_rate", w.arrival_rate.to_string());
        kv("workload.interaction_mean", w.interaction_mean.to_string());
        kv("workload.interaction_std", w.interaction_std.to_string());
        kv("workload.walk_speed", w.walk_speed.to_string());
        kv("workload.filler_min", w.filler_min.to_string());
        kv("workload.filler_max", w.filler_max.to_string());
        kv("workload.history_sessions", w.history_sessions.to_string());
        kv("workload.shift_at", w.shift_at.map_or("none".into(), |f| f.to_string()));
        kv("cache.policy", join(&self.policies));
        match self.cache_size {
            CacheSize::Fraction(f) => kv("cache.fraction", f.to_string()),
            CacheSize::Megabytes(mb) => kv("cache.capacity_mb", mb.to_string()),
        }
        let s = &self.spaarc;
        kv("spaarc.min_support", join(&self.min_support));
        kv("spaarc.min_confidence", join(&self.min_confidence));
        kv("spaarc.association_factor", join(&self.association_factor));
        kv("spaarc.proximity", join(&self.proximity));
        kv("spaarc.window", s.window.to_string());
        kv("spaarc.history_window", s.history_window.to_string());
        kv("spaarc.max_itemset_len", s.max_itemset_len.to_string());
        kv("spaarc.lazy_queue_capacity", s.lazy_queue_capacity.to_string());
        let t = &self.tuner;
        kv("tuner.delta", t.delta.to_string());
        kv("tuner.min_confidence", t.min_confidence.to_string());
        kv("tuner.grid_size", t.grid_size.to_string());
        kv("tuner.eta", t.eta.to_string());
        kv("tuner.theta", t.theta.to_string());
        kv("tuner.n_rulesets", t.n_rulesets.to_string());
        kv("tuner.history", t.history.to_string());
        kv("tuner.viewpoint_size", t.viewpoint_size.to_string());
        kv("tuner.max_itemset_len", t.max_itemset_len.to_string());
        kv("tuner.generation_latency", t.generation_latency.to_string());
        let l = &self.latency;
        kv("latency.cloud_rtt_ms", l.cloud_rtt_ms.to_string());
        kv("latency.edge_hit_ms", l.edge_hit_ms.to_string());
        kv("latency.immersion_budget_ms", l.immersion_budget_ms.to_string());
        kv("sim.session_gap", self.session_gap.to_string());
        kv("sim.poll_step", self.poll_step.to_string());
        kv("sim.decision_log", self.decision_log.to_string());
        kv("output.dir", self.output_dir.display().to_string());
        o
    }

    /// Whether any matrix axis other than modes and policies has several values.
    pub fn is_sweep(&self) -> bool {
        self.seeds.len() > 1
            || self.n_users.len() > 1
            || self.n_objects.len() > 1
            || self.min_support.len() > 1
            || self.min_confidence.len() > 1
            || self.association_factor.len() > 1
            || self.proximity.len() > 1
    }

    fn datasets(&self) -> Vec<DatasetKey> {
        let mut out = Vec::new();
        for &seed in &self.seeds {
            for &n_users in &self.n_users {
                for &n_objects in &self.n_objects {
                    out.push(DatasetKey {
                        seed,
                        n_users,
                        n_objects,
                    });
                }
            }
        }
        out
    }

    /// Every cell of the run matrix, in output order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for dataset in self.datasets() {
            for &policy in &self.policies {
                for &min_support in &self.min_support {
                    for &min_confidence in &self.min_confidence {
                        for &association_factor in &self.association_factor {
                            for &proximity in &self.proximity {
                                for &mode in &self.modes {
                                    out.push(Cell {
                                        dataset,
                                        policy,
                                        mode,
                                        min_support,
                                        min_confidence,
                                        association_factor,
                                        proximity,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// This spec narrowed to the single cell `cell`.
    pub fn for_cell(&self, cell: &Cell) -> Self {
        Self {
            seeds: vec![cell.dataset.seed],
            n_users: vec![cell.dataset.n_users],
            n_objects: vec![cell.dataset.n_objects],
            policies: vec![cell.policy],
            modes: vec![cell.mode],
            min_support: vec![cell.min_support],
            min_confidence: vec![cell.min_confidence],
            association_factor: vec![cell.association_factor],
            proximity: vec![cell.proximity],
            ..self.clone()
        }
    }

    /// Hash of the single-cell config, recorded in the manifest.
    pub fn cell_hash(&self, cell: &Cell) -> String {
        // the output location does not affect results
        let mut spec = self.for_cell(cell);
        spec.output_dir = PathBuf::from("out");
        let text = spec.to_config_string();
        hex::encode(&Sha256::digest(text.as_bytes())[..16])
    }

    pub fn run_config(&self, cell: &Cell, cache: CacheConfig) -> RunConfig {
        RunConfig {
            mode: cell.mode,
            cache,
            spaarc: SpaarcParams {
                min_support: cell.min_support,
                min_confidence: cell.min_confidence,
                association_factor_threshold: cell.association_factor,
                proximity_threshold: cell.proximity,
                ..self.spaarc
            },
            tuner: self.tuner,
            latency: self.latency,
            session_gap: self.session_gap,
            walk_speed: self.workload.walk_speed,
            poll_step: self.poll_step,
            seed: cell.dataset.seed,
            record_decisions: self.decision_log,
        }
    }

    /// Workload of one dataset key.
    pub fn workload_for(&self, key: DatasetKey) -> Result<GeneratedWorkload> {
        let config = WorkloadConfig {
            n_users: key.n_users,
            n_objects: key.n_objects,
            seed: key.seed,
            ..self.workload.clone()
        };
        match &self.source {
            WorkloadSource::Generate => workload::generate(&config),
            WorkloadSource::Spmf { path } => workload::load_spmf_workload(path, &config),
            WorkloadSource::Trace {
                trace,
                catalog,
                history,
            } => {
                let history = match history {
                    Some(h) => load_spmf(h)?,
                    None => Vec::new(),
                };
                Ok(GeneratedWorkload {
                    catalog: read_catalog(catalog)?,
                    trace: read_trace(trace)?,
                    planted_itemsets: Vec::new(),
                    shifted_itemsets: Vec::new(),
                    history,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DatasetKey {
    pub seed: u64,
    pub n_users: usize,
    pub n_objects: usize,
}

impl DatasetKey {
    pub fn id(&self) -> String {
        format!("s{}-u{}-o{}", self.seed, self.n_users, self.n_objects)
    }
}

/// One point of the run matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub dataset: DatasetKey,
    pub policy: Policy,
    pub mode: Mode,
    pub min_support: f64,
    pub min_confidence: f64,
    pub association_factor: f64,
    pub proximity: f64,
}

impl Cell {
    fn sweep_id(&self) -> String {
        format!(
            "ms{}-mc{}-af{}-px{}",
            self.min_support, self.min_confidence, self.association_factor, self.proximity
        )
    }

    /// File-name-safe identifier, unique within an experiment.
    pub fn id(&self) -> String {
        format!(
            "{}-{}-{}-{}",
            self.dataset.id(),
            self.policy.to_string().to_ascii_lowercase(),
            self.mode,
            self.sweep_id()
        )
    }

    /// Same dataset, policy and sweep point.
    fn same_point(&self, other: &Cell) -> bool {
        self.dataset == other.dataset && self.policy == other.policy && self.sweep_id() == other.sweep_id()
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub config_hash: String,
    pub report: RunReport,
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub baseline: String,
    pub treatment: String,
    pub baseline_hit_rate: f64,
    pub treatment_hit_rate: f64,
    pub baseline_on_demand: u64,
    pub treatment_on_demand: u64,
    pub treatment_prefetches: u64,
    pub comparison: Comparison,
}

pub const COMPARISON_HEADER: &str = "baseline,treatment,hit_rate_baseline,hit_rate_treatment,hit_rate_gain_pct,on_demand_baseline,on_demand_treatment,on_demand_reduction_pct,prefetches_treatment,prefetch_overhead";

pub fn comparisons_csv(rows: &[ComparisonRow]) -> String {
    let mut out = format!("{COMPARISON_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.baseline,
            r.treatment,
            r.baseline_hit_rate,
            r.treatment_hit_rate,
            r.comparison.hit_rate_gain_pct,
            r.baseline_on_demand,
            r.treatment_on_demand,
            r.comparison.on_demand_reduction_pct,
            r.treatment_prefetches,
            r.comparison.prefetch_overhead
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub results: Vec<CellResult>,
    pub comparisons: Vec<ComparisonRow>,
}

impl ExperimentOutcome {
    pub fn find(&self, pred: impl Fn(&Cell) -> bool) -> impl Iterator<Item = &CellResult> {
        self.results.iter().filter(move |r| pred(&r.cell))
    }
}

/// Highest hit rate per (dataset, policy, mode) over the sweep axes. Ties
/// go to the lower minimum support, then to the earlier cell.
pub fn best_over_sweep(results: &[CellResult]) -> Vec<&CellResult> {
    let mut best: Vec<&CellResult> = Vec::new();
    for r in results {
        let slot = best
            .iter_mut()
            .find(|b| b.cell.dataset == r.cell.dataset && b.cell.policy == r.cell.policy && b.cell.mode == r.cell.mode);
        match slot {
            None => best.push(r),
            Some(b) => {
                let better = r.report.hit_rate > b.report.hit_rate
                    || (r.report.hit_rate == b.report.hit_rate && r.cell.min_support < b.cell.min_support);
                if better {
                    *b = r;
                }
            }
        }
    }
    best
}

pub const SUMMARY_HEADER: &str = "cell,seed,n_users,n_objects,policy,mode,min_support,min_confidence,association_factor,proximity,hits,misses,hit_rate,on_demand,coalesced,prefetches,evictions,mean_latency_ms,config_hash";

pub fn summary_csv<'a>(results: impl IntoIterator<Item = &'a CellResult>) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in results {
        let (c, p) = (&r.cell, &r.report);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.id(),
            c.dataset.seed,
            c.dataset.n_users,
            c.dataset.n_objects,
            c.policy,
            c.mode,
            c.min_support,
            c.min_confidence,
            c.association_factor,
            c.proximity,
            p.hits,
            p.misses,
            p.hit_rate,
            p.on_demand_fetches,
            p.coalesced_misses,
            p.prefetch_count,
            p.evictions,
            p.mean_latency_ms,
            r.config_hash
        );
    }
    out
}

pub const MANIFEST_HEADER: &str = "cell,report,seed,workload_hash,policy,capacity_mb,mode,config_hash";

fn manifest_csv(results: &[CellResult]) -> String {
    let mut out = format!("{MANIFEST_HEADER}\n");
    for r in results {
        let f = &r.report.fingerprint;
        let _ = writeln!(
            out,
            "{},reports/{}.csv,{},{},{},{},{},{}",
            r.cell.id(),
            r.cell.id(),
            f.seed,
            f.workload,
            f.policy,
            f.capacity_mb,
            r.cell.mode,
            r.config_hash
        );
    }
    out
}

fn write_cell(dir: &Path, result: &CellResult) -> Result<()> {
    let id = result.cell.id();
    write_atomic(&dir.join("reports").join(format!("{id}.csv")), &result.report.to_csv())?;
    if result.cell.mode == Mode::SpaarcTune {
        write_atomic(
            &dir.join("tuner").join(format!("{id}.csv")),
            &tuner_log_csv(&result.report.tuner_log),
        )?;
    }
    if !result.report.decisions.is_empty() {
        write_atomic(
            &dir.join("decisions").join(format!("{id}.csv")),
            &decision_log_csv(&result.report.decisions),
        )?;
    }
    Ok(())
}

/// Runs every cell of `spec`. With `out`, writes per-cell reports and the
/// summary, comparison, best-cell and manifest tables under it.
pub fn run_experiment(spec: &ExperimentSpec, out: Option<&Path>) -> Result<ExperimentOutcome> {
    spec.validate()?;
    if let Some(dir) = out {
        let mut subs = vec!["reports", "comparisons"];
        if spec.modes.contains(&Mode::SpaarcTune) {
            subs.push("tuner");
        }
        if spec.decision_log {
            subs.push("decisions");
        }
        for sub in subs {
            fs::create_dir_all(dir.join(sub))?;
        }
    }

    let datasets = spec.datasets();
    let workloads: HashMap<DatasetKey, (GeneratedWorkload, Vec<Transaction>)> = datasets
        .par_iter()
        .map(|&key| {
            let w = spec.workload_for(key)?;
            let history = w.history.clone();
            Ok((key, (w, history)))
        })
        .collect::<Result<_>>()?;

    let cells = spec.cells();
    let results = cells
        .par_iter()
        .map(|cell| {
            let (w, history) = &workloads[&cell.dataset];
            let cache = spec.cache_size.resolve(&w.catalog, cell.policy)?;
            let report = sim::run(&w.trace, &w.catalog, history, &spec.run_config(cell, cache))?;
            let result = CellResult {
                cell: *cell,
                config_hash: spec.cell_hash(cell),
                report,
            };
            if let Some(dir) = out {
                write_cell(dir, &result)?;
            }
            Ok(result)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut comparisons = Vec::new();
    for t in results.iter().filter(|r| r.cell.mode != Mode::Baseline) {
        let Some(b) = results
            .iter()
            .find(|b| b.cell.mode == Mode::Baseline && b.cell.same_point(&t.cell))
        else {
            continue;
        };
        comparisons.push(ComparisonRow {
            baseline: b.cell.id(),
            treatment: t.cell.id(),
            baseline_hit_rate: b.report.hit_rate,
            treatment_hit_rate: t.report.hit_rate,
            baseline_on_demand: b.report.on_demand_fetches,
            treatment_on_demand: t.report.on_demand_fetches,
            treatment_prefetches: t.report.prefetch_count,
            comparison: sim::compare(&b.report, &t.report)?,
        });
    }

    if let Some(dir) = out {
        comparisons.par_iter().try_for_each(|row| {
            write_atomic(
                &dir.join("comparisons").join(format!("{}.csv", row.treatment)),
                &comparisons_csv(std::slice::from_ref(row)),
            )
        })?;
        write_atomic(&dir.join("comparisons.csv"), &comparisons_csv(&comparisons))?;
        write_atomic(&dir.join("summary.csv"), &summary_csv(&results))?;
        write_atomic(&dir.join("best.csv"), &summary_csv(best_over_sweep(&results)))?;
        write_atomic(&dir.join("manifest.csv"), &manifest_csv(&results))?;
        let resolved = ExperimentSpec {
            output_dir: dir.to_path_buf(),
            ..spec.clone()
        };
        write_atomic(&dir.join("resolved.conf"), &resolved.to_config_string())?;
    }

    Ok(ExperimentOutcome { results, comparisons })
}

struct ManifestRow {
    report: String,
    fingerprint: [String; 4],
}

fn read_manifest(dir: &Path) -> Result<HashMap<String, ManifestRow>> {
    let mut rdr = csv::Reader::from_path(dir.join("manifest.csv"))?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != MANIFEST_HEADER {
        return Err(Error::Mismatch(format!(
            "{} is not a manifest",
            dir.join("manifest.csv").display()
        )));
    }
    let mut rows = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.insert(
            rec[0].to_string(),
            ManifestRow {
                report: rec[1].to_string(),
                fingerprint: [2, 3, 4, 5].map(|i| rec[i].to_string()),
            },
        );
    }
    Ok(rows)
}

/// `(hits, misses, hit_rate, on_demand, prefetches)` from a report's
/// summary row.
fn read_totals(path: &Path) -> Result<(u64, u64, f64, u64, u64)> {
    let text = fs::read_to_string(path)?;
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: text.lines().count(),
        msg: msg.to_string(),
    };
    let last = text.lines().last().ok_or_else(|| bad("empty report"))?;
    let f: Vec<&str> = last.split(',').collect();
    if f.len() != 6 || f[0] != "total" {
        return Err(bad("missing total row"));
    }
    let int = |s: &str| s.parse::<u64>().map_err(|_| bad("malformed total row"));
    let hit_rate = f[3].parse::<f64>().map_err(|_| bad("malformed total row"))?;
    Ok((int(f[1])?, int(f[2])?, hit_rate, int(f[4])?, int(f[5])?))
}

/// Compares two cells of a finished experiment in `dir`, by cell id.
pub fn compare_cells(dir: &Path, baseline: &str, treatment: &str) -> Result<ComparisonRow> {
    let manifest = read_manifest(dir)?;
    let row = |id: &str| {
        manifest
            .get(id)
            .ok_or_else(|| Error::Mismatch(format!("no cell {id:?} in {}", dir.display())))
    };
    let (b, t) = (row(baseline)?, row(treatment)?);
    const FIELDS: [&str; 4] = ["seeds", "workloads", "cache policies", "cache capacities"];
    for (i, name) in FIELDS.iter().enumerate() {
        if b.fingerprint[i] != t.fingerprint[i] {
            return Err(Error::Mismatch(format!("cells use different {name}")));
        }
    }
    let (_, _, hr_b, od_b, _) = read_totals(&dir.join(&b.report))?;
    let (_, _, hr_t, od_t, pf_t) = read_totals(&dir.join(&t.report))?;
    Ok(ComparisonRow {
        baseline: baseline.to_string(),
        treatment: treatment.to_string(),
        baseline_hit_rate: hr_b,
        treatment_hit_rate: hr_t,
        baseline_on_demand: od_b,
        treatment_on_demand: od_t,
        treatment_prefetches: pf_t,
        comparison: sim::compare_values(hr_b, od_b, hr_t, od_t, pf_t),
    })
}
