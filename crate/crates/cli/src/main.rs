use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spaarc::experiment::{self, comparisons_csv, summary_csv, ExperimentSpec};
use spaarc::io::{write_catalog, write_itemsets, write_spmf, write_trace};
use spaarc::Error;

/// Edge cache simulator with association-rule prefetching.
#[derive(Parser)]
#[command(name = "spaarc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Replace the configured seeds with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the catalog, trace, history and planted itemsets of a workload.
    Generate(Common),
    /// Run one configuration under each configured mode and policy.
    Run(Common),
    /// Run the full matrix over every swept axis.
    Sweep(Common),
    /// Compare two cells of a finished experiment.
    Compare {
        /// Experiment output directory holding manifest.csv.
        #[arg(long, short)]
        out: PathBuf,
        /// Baseline cell id.
        baseline: String,
        /// Treatment cell id.
        treatment: String,
    },
}

fn load_spec(common: &Common) -> spaarc::Result<ExperimentSpec> {
    let mut spec = match &common.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = common.seed {
        spec.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        spec.output_dir = out.clone();
    }
    Ok(spec)
}

fn generate(common: &Common) -> spaarc::Result<()> {
    let spec = load_spec(common)?;
    let cells = spec.cells();
    let mut datasets: Vec<_> = cells.iter().map(|c| c.dataset).collect();
    datasets.dedup();
    for key in &datasets {
        let dir = if datasets.len() == 1 {
            spec.output_dir.clone()
        } else {
            spec.output_dir.join(key.id())
        };
        fs::create_dir_all(&dir)?;
        let w = spec.workload_for(*key)?;
        write_catalog(&dir.join("catalog.csv"), &w.catalog)?;
        write_trace(&dir.join("trace.csv"), &w.trace)?;
        write_spmf(&dir.join("history.spmf"), &w.history)?;
        write_itemsets(&dir.join("planted_itemsets.txt"), &w.planted_itemsets)?;
        if !w.shifted_itemsets.is_empty() {
            write_itemsets(&dir.join("shifted_itemsets.txt"), &w.shifted_itemsets)?;
        }
        println!(
            "{}: {} objects, {} events, {} history transactions -> {}",
            key.id(),
            w.catalog.len(),
            w.trace.len(),
            w.history.len(),
            dir.display()
        );
    }
    Ok(())
}

fn run(common: &Common, sweep: bool) -> spaarc::Result<()> {
    let spec = load_spec(common)?;
    if !sweep && spec.is_sweep() {
        return Err(Error::Config {
            key: swept_key(&spec).into(),
            msg: "several values given; use `spaarc sweep` for a matrix".into(),
        });
    }
    let out = spec.output_dir.clone();
    let outcome = experiment::run_experiment(&spec, Some(&out))?;
    if sweep {
        print!("{}", summary_csv(experiment::best_over_sweep(&outcome.results)));
    } else {
        print!("{}", summary_csv(&outcome.results));
    }
    log::info!("wrote {} cells to {}", outcome.results.len(), out.display());
    Ok(())
}

fn swept_key(spec: &ExperimentSpec) -> &'static str {
    let axes = [
        ("seeds", spec.seeds.len()),
        ("workload.n_users", spec.n_users.len()),
        ("workload.n_objects", spec.n_objects.len()),
        ("spaarc.min_support", spec.min_support.len()),
        ("spaarc.min_confidence", spec.min_confidence.len()),
        ("spaarc.association_factor", spec.association_factor.len()),
        ("spaarc.proximity", spec.proximity.len()),
    ];
    axes.iter().find(|(_, n)| *n > 1).map(|(k, _)| *k).unwrap_or("seeds")
}

fn compare(dir: &Path, baseline: &str, treatment: &str) -> spaarc::Result<()> {
    let row = experiment::compare_cells(dir, baseline, treatment)?;
    print!("{}", comparisons_csv(&[row]));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(c) => generate(c),
        Command::Run(c) => run(c, false),
        Command::Sweep(c) => run(c, true),
        Command::Compare {
            out,
            baseline,
            treatment,
        } => compare(out, baseline, treatment),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
