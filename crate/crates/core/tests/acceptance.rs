//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spaarc::arm::{gen_frequent_itemsets, gen_rules};
use spaarc::cache::{Cache, CacheConfig, Lookup, Origin, Policy};
use spaarc::domain::{Catalog, ObjectId, Point, Transaction, VirtualObject};
use spaarc::experiment::{best_over_sweep, run_experiment, CellResult, ExperimentOutcome, ExperimentSpec};
use spaarc::prefetch::{alpha, AssociationFactorTable};
use spaarc::sim::{compare, Mode};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

fn experiment(config: &str) -> ExperimentOutcome {
    let spec = ExperimentSpec::parse(config, Path::new(env!("CARGO_MANIFEST_DIR"))).expect("acceptance config parses");
    run_experiment(&spec, None).expect("acceptance experiment runs")
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Transaction>, u32) {
    let n_items = rng.random_range(1..=12u32);
    let n_txs = rng.random_range(1..=64usize);
    let density = rng.random_range(0.15..0.7);
    let txs = (0..n_txs)
        .map(|i| {
            let mut items: BTreeSet<u32> = (0..n_items).filter(|_| rng.random_bool(density)).collect();
            if items.is_empty() {
                items.insert(rng.random_range(0..n_items));
            }
            Transaction::new(i as u64, items.into_iter().map(ObjectId)).unwrap()
        })
        .collect();
    (txs, n_items)
}

fn support(txs: &[Transaction], items: &[ObjectId]) -> f64 {
    txs.iter().filter(|t| items.iter().all(|i| t.contains(*i))).count() as f64 / txs.len() as f64
}

const BETAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn arm_instances() -> Vec<(Vec<Transaction>, u32, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..200)
        .map(|_| {
            let (txs, n) = random_instance(&mut rng);
            let beta = BETAS[rng.random_range(0..BETAS.len())];
            (txs, n, beta)
        })
        .collect()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut mismatches = 0;
    for (txs, n, beta) in arm_instances() {
        let got = gen_frequent_itemsets(&txs, beta, 12).unwrap();
        let mut expected = Vec::new();
        for mask in 1u32..(1 << n) {
            let items: Vec<ObjectId> = (0..n).filter(|i| mask >> i & 1 == 1).map(ObjectId).collect();
            let s = support(&txs, &items);
            if s >= beta - 1e-12 {
                expected.push((items, s));
            }
        }
        let same = got.len() == expected.len()
            && got.iter().all(|f| {
                expected
                    .iter()
                    .any(|(items, s)| *items == f.items && (s - f.support).abs() <= 1e-12)
            });
        if !same {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!(
            "{} of 200 instances match the power set, {elapsed:.2?} (limit 10s)",
            200 - mismatches
        ),
    )
}

fn criterion_2() -> Verdict {
    let (mut rules, mut bad) = (0, 0);
    for (txs, _, beta) in arm_instances() {
        let itemsets = gen_frequent_itemsets(&txs, beta, 12).unwrap();
        for r in gen_rules(&itemsets, f64::MIN_POSITIVE).unwrap() {
            rules += 1;
            let union: Vec<ObjectId> = r
                .antecedent
                .iter()
                .chain(&r.consequent)
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let (s_ab, s_a, s_b) = (
                support(&txs, &union),
                support(&txs, &r.antecedent),
                support(&txs, &r.consequent),
            );
            if (r.confidence - s_ab / s_a).abs() > 1e-9 || (r.lift - s_ab / (s_a * s_b)).abs() > 1e-9 {
                bad += 1;
            }
        }
    }
    verdict(
        bad == 0 && rules > 0,
        format!("{rules} rules checked, {bad} off by more than 1e-9"),
    )
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_step, mut worst_limit) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let window = rng.random_range(1..=50usize);
        let a = alpha(window);
        let mut table = AssociationFactorTable::new(window);
        let id = ObjectId(0);
        for _ in 0..rng.random_range(1..40) {
            let f = rng.random_range(0..15usize);
            let old = table.factor(id);
            let new = table.update_with_count(id, f);
            worst_step = worst_step.max((new - (f as f64 * a + old * (1.0 - a))).abs());
        }
        // the window slides one interaction per update, so 50 windows are
        // 50·window updates
        let c = rng.random_range(0..15usize);
        for _ in 0..50 * window {
            table.update_with_count(id, c);
        }
        worst_limit = worst_limit.max((table.factor(id) - c as f64).abs());
    }
    verdict(
        worst_step < 1e-12 && worst_limit < 1e-6,
        format!(
            "500 cases; max recurrence error {worst_step:.1e}, max distance from F after 50 windows {worst_limit:.1e}"
        ),
    )
}

const SEEDS: &str = "1, 2, 3, 4, 5";

/// The DS30/DS75 analogs: 100 users, 50 objects, cache at 20% of the
/// catalog, swept over support and association factor.
fn analog(planted: f64) -> String {
    format!(
        "seeds = {SEEDS}\n\
         workload.n_users = 100\n\
         workload.n_objects = 50\n\
         workload.planted_support = {planted}\n\
         cache.policy = FIFO\n\
         cache.fraction = 0.2\n\
         mode = baseline, association-only, spaarc\n\
         spaarc.min_support = 0.1, 0.2, 0.3\n\
         spaarc.association_factor = 0, 0.5, 1\n"
    )
}

struct SeedOutcome {
    seed: u64,
    baseline: CellResult,
    best: CellResult,
    association: CellResult,
}

fn per_seed(out: &ExperimentOutcome) -> Vec<SeedOutcome> {
    let best = best_over_sweep(&out.results);
    let mut seeds: Vec<u64> = out.results.iter().map(|r| r.cell.dataset.seed).collect();
    seeds.dedup();
    seeds
        .into_iter()
        .map(|seed| {
            let pick = |mode: Mode| {
                (*best
                    .iter()
                    .find(|r| r.cell.dataset.seed == seed && r.cell.mode == mode)
                    .unwrap())
                .clone()
            };
            let best = pick(Mode::Spaarc);
            let association = out
                .find(|c| {
                    c.dataset.seed == seed
                        && c.mode == Mode::AssociationOnly
                        && c.min_support == best.cell.min_support
                        && c.association_factor == best.cell.association_factor
                })
                .next()
                .unwrap()
                .clone();
            SeedOutcome {
                seed,
                baseline: pick(Mode::Baseline),
                best,
                association,
            }
        })
        .collect()
}

fn gain(s: &SeedOutcome) -> f64 {
    s.best.report.hit_rate / s.baseline.report.hit_rate - 1.0
}

fn criterion_4(ds30: &[SeedOutcome], per_seed_time: Duration) -> Verdict {
    let gains: Vec<f64> = ds30.iter().map(gain).collect();
    let in_band = gains.iter().all(|g| (0.05..=1.0).contains(g));
    let list: Vec<String> = ds30
        .iter()
        .map(|s| {
            format!(
                "s{} {} ({:.3} vs {:.3}, ms {} af {})",
                s.seed,
                pct(gain(s)),
                s.best.report.hit_rate,
                s.baseline.report.hit_rate,
                s.best.cell.min_support,
                s.best.cell.association_factor
            )
        })
        .collect();
    verdict(
        in_band && per_seed_time < Duration::from_secs(120),
        format!(
            "best-over-sweep SPAARC-FIFO gain, mean {} (band 5%..100%, target >= 10%): {}; {per_seed_time:.2?} per seed",
            pct(mean(&gains)),
            list.join(", ")
        ),
    )
}

fn criterion_5(ds30: &[SeedOutcome], ds75: &[SeedOutcome]) -> Verdict {
    let g30 = mean(&ds30.iter().map(gain).collect::<Vec<_>>());
    let g75 = mean(&ds75.iter().map(gain).collect::<Vec<_>>());
    verdict(
        g30 >= g75,
        format!("mean FIFO gain DS30-analog {} >= DS75-analog {}", pct(g30), pct(g75)),
    )
}

fn criterion_6(ds30: &[SeedOutcome]) -> Verdict {
    let reductions: Vec<f64> = ds30
        .iter()
        .map(|s| {
            compare(&s.baseline.report, &s.best.report)
                .unwrap()
                .on_demand_reduction_pct
                / 100.0
        })
        .collect();
    let m = mean(&reductions);
    verdict(
        m >= 0.10,
        format!(
            "mean on-demand fetch reduction {} (>= 10%); per seed {}",
            pct(m),
            reductions.iter().map(|r| pct(*r)).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn criterion_7(ds30: &[SeedOutcome]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in ds30 {
        let sp = compare(&s.baseline.report, &s.best.report).unwrap();
        let ao = compare(&s.baseline.report, &s.association.report).unwrap();
        ok &= s.best.report.prefetch_count < s.association.report.prefetch_count
            && sp.prefetch_overhead < ao.prefetch_overhead;
        parts.push(format!(
            "s{} {} vs {} prefetches, {:.2}x vs {:.2}x",
            s.seed,
            s.best.report.prefetch_count,
            s.association.report.prefetch_count,
            sp.prefetch_overhead,
            ao.prefetch_overhead
        ));
    }
    verdict(ok, format!("SPAARC below association-only: {}", parts.join("; ")))
}

fn mode_mean(out: &ExperimentOutcome, mode: Mode, policy: Policy, f: impl Fn(&CellResult) -> f64) -> f64 {
    let xs: Vec<f64> = out.find(|c| c.mode == mode && c.policy == policy).map(f).collect();
    mean(&xs)
}

fn criterion_8() -> Verdict {
    let out = experiment(&format!(
        "seeds = {SEEDS}\n\
         workload.shift_at = 0.5\n\
         cache.policy = FIFO\n\
         mode = baseline, spaarc, spaarc-tune\n\
         spaarc.association_factor = 0\n"
    ));
    let hr = |m| mode_mean(&out, m, Policy::Fifo, |r| r.report.hit_rate);
    let (b, s, t) = (hr(Mode::Baseline), hr(Mode::Spaarc), hr(Mode::SpaarcTune));
    verdict(
        t >= s && s >= b && t >= b,
        format!("mean hit rate with a mid-trace shift: tune {t:.4} >= static {s:.4} >= baseline {b:.4}"),
    )
}

fn criterion_9() -> Verdict {
    let start = Instant::now();
    let out = experiment(
        "workload.source = spmf\n\
         workload.spmf_file = tests/fixtures/grocery.spmf\n\
         workload.region_size = 220\n\
         workload.history_sessions = 100\n\
         cache.policy = FIFO, LRU, LFU, POP\n\
         mode = baseline, spaarc, spaarc-tune\n\
         spaarc.association_factor = 0\n\
         tuner.viewpoint_size = 100\n",
    );
    let elapsed = start.elapsed();
    let mut ok = elapsed < Duration::from_secs(300);
    let mut parts = Vec::new();
    for p in Policy::ALL {
        let hr = |m| mode_mean(&out, m, p, |r| r.report.hit_rate_after(20));
        let (b, s, t) = (hr(Mode::Baseline), hr(Mode::Spaarc), hr(Mode::SpaarcTune));
        ok &= t >= s && s >= b;
        parts.push(format!("{p} {t:.4}/{s:.4}/{b:.4}"));
    }
    let items: BTreeSet<ObjectId> =
        spaarc::workload::load_spmf(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/grocery.spmf"))
            .unwrap()
            .iter()
            .flat_map(|t| t.items().to_vec())
            .collect();
    ok &= items.len() == 169;
    verdict(
        ok,
        format!(
            "{} items; hit rate after 20 viewpoints, tune/static/baseline: {}; {elapsed:.2?} (limit 5 min)",
            items.len(),
            parts.join(", ")
        ),
    )
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_10() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let spec = ExperimentSpec::parse(
        "seeds = 3, 4\n\
         workload.n_users = 40\n\
         workload.shift_at = 0.5\n\
         cache.policy = FIFO, LFU, POP\n\
         mode = baseline, association-only, spaarc, spaarc-tune\n\
         spaarc.min_support = 0.2, 0.3\n\
         spaarc.association_factor = 0\n\
         tuner.history = 30\n\
         sim.decision_log = true\n",
        Path::new("."),
    )
    .unwrap();
    run_experiment(&spec, Some(&a)).unwrap();
    // rerun from the recorded config alone
    let mut again = ExperimentSpec::load(&a.join("resolved.conf")).unwrap();
    again.output_dir = b.clone();
    run_experiment(&again, Some(&b)).unwrap();
    // and one cell on its own
    let cell = spec.cells()[spec.cells().len() - 1];
    let single = spec.for_cell(&cell);
    run_experiment(&single, Some(&c)).unwrap();

    let (ta, tb) = (read_tree(&a), read_tree(&b));
    let report = format!("reports/{}.csv", cell.id());
    let same_cell = fs::read(a.join(&report)).unwrap() == fs::read(c.join(&report)).unwrap();
    let manifest = fs::read_to_string(a.join("manifest.csv")).unwrap();
    let hash_recorded = manifest.contains(&spec.cell_hash(&cell));
    verdict(
        ta == tb && same_cell && hash_recorded && ta.len() > 50,
        format!(
            "{} CSV files byte-identical on rerun from the manifest config: {}; single-cell rerun identical: {same_cell}",
            ta.len(),
            ta == tb
        ),
    )
}

fn unit_catalog(n: u32) -> Catalog {
    Catalog::new((0..n).map(|i| VirtualObject {
        id: ObjectId(i),
        size_mb: 1.0,
        position: Point::new(i as f64, 0.0),
    }))
    .unwrap()
}

/// Replays `trace` with on-demand insertion on every miss; returns the
/// evictions in order and the hit count.
fn replay(policy: Policy, trace: &str) -> (String, usize) {
    let catalog = unit_catalog(6);
    let mut cache = Cache::new(CacheConfig::new(3.0, policy).unwrap(), &catalog).unwrap();
    let (mut evicted, mut hits) = (String::new(), 0);
    for ch in trace.chars() {
        let id = ObjectId(ch as u32 - 'A' as u32);
        if cache.lookup(id).unwrap() == Lookup::Hit {
            hits += 1;
        } else {
            for e in cache.insert(id, Origin::OnDemand).unwrap() {
                evicted.push((b'A' + e.0 as u8) as char);
            }
        }
    }
    (evicted, hits)
}

fn criterion_11() -> Verdict {
    const TRACE: &str = "ABCADBEACFABDEA";
    let golden = [
        (Policy::Fifo, "ABCDEACFB", 3),
        (Policy::Lru, "BCADBECFAB", 2),
        (Policy::Lfu, "BCDBECFB", 4),
        (Policy::Pop, "BCDEBFCD", 4),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (policy, evictions, hits) in golden {
        let got = replay(policy, TRACE);
        let pass = got == (evictions.to_string(), hits);
        ok &= pass;
        parts.push(format!("{policy} {}", if pass { "ok" } else { "MISMATCH" }));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let catalog = Catalog::new((0..40).map(|i| VirtualObject {
        id: ObjectId(i),
        size_mb: rng.random_range(10.0..15.0),
        position: Point::new(0.0, 0.0),
    }))
    .unwrap();
    let mut violations = 0;
    for policy in Policy::ALL {
        let capacity = 0.2 * catalog.total_size_mb();
        let mut cache = Cache::new(CacheConfig::new(capacity, policy).unwrap(), &catalog).unwrap();
        for _ in 0..100_000 / 4 {
            let id = ObjectId(rng.random_range(0..40));
            match rng.random_range(0..3) {
                0 => {
                    if cache.lookup(id).unwrap() == Lookup::Miss {
                        cache.insert(id, Origin::OnDemand).unwrap();
                    }
                }
                1 => {
                    cache.insert(id, Origin::Prefetch).unwrap();
                }
                _ => {
                    cache.lookup(id).unwrap();
                }
            }
            if cache.used_mb() > capacity + 1e-9 {
                violations += 1;
            }
        }
    }
    verdict(
        ok && violations == 0,
        format!(
            "15-step golden traces: {}; 100000 fuzz operations, {violations} capacity violations",
            parts.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    results.push((1, "ARM oracle equivalence", criterion_1()));
    results.push((2, "rule metric identities", criterion_2()));
    results.push((3, "association factor recurrence", criterion_3()));

    let start = Instant::now();
    let ds30 = per_seed(&experiment(&analog(0.3)));
    let per_seed_time = start.elapsed() / 5;
    let ds75 = per_seed(&experiment(&analog(0.75)));
    results.push((4, "hit-rate gain on the DS30 analog", criterion_4(&ds30, per_seed_time)));
    results.push((5, "gain ordering DS30 >= DS75", criterion_5(&ds30, &ds75)));
    results.push((6, "on-demand fetch reduction", criterion_6(&ds30)));
    results.push((7, "proximity benefit", criterion_7(&ds30)));
    results.push((8, "tuner benefit under a pattern shift", criterion_8()));
    results.push((9, "grocery trace smoke test", criterion_9()));
    results.push((10, "determinism", criterion_10()));
    results.push((11, "cache policy golden traces and fuzzing", criterion_11()));

    let mut failed = 0;
    for (n, name, v) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {n:>2} {name}: {}", v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
