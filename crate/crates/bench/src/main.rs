use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mrvcg::baselines::{concave_auction, SingleResourceBid};
use mrvcg::datasets::{build_dataset, read_dataset, write_dataset, CostSource, DatasetKind, DatasetSpec};
use mrvcg::oracle::{optimal_welfare, vcg_payments};
use mrvcg::{run_vcg_auction, Allocation, AuctionResult, DsKind, JoinOptions, ValuationTensor};
use mrvcg_bench::experiments::{
    doubling_points, naive_sweep, separate_sweep, time_auction, time_generated_auction, EnvStamp, JoinSweep,
};
use mrvcg_bench::report::{auction_table, write_auction_csv, write_csv};
use mrvcg_bench::verify::{agree, parse_fault, run_suite, Suite, SuiteConfig};
use mrvcg_bench::config;
use serde::Serialize;

/// Exact multi-resource VCG auctions: dataset generation, auctions,
/// benchmarks and verification.
#[derive(Parser)]
#[command(name = "mrvcg", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Gen(GenArgs),
    /// Run an auction over a dataset directory.
    Auction(AuctionArgs),
    /// Run benchmark sweeps and write CSV files.
    Bench(BenchArgs),
    /// Run the seeded verification suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "increasing")]
    kind: DatasetKind,
    #[arg(long, default_value_t = 256)]
    clients: usize,
    /// Number of resources; a single `--units` value is repeated this often.
    #[arg(long)]
    resources: Option<usize>,
    /// Units per resource, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    units: Vec<u32>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = mrvcg::datasets::DEFAULT_PARETO_INDEX)]
    pareto_index: f64,
    /// CSV with `agent_id,cost` rows instead of synthetic bundle costs.
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuctionArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "combination")]
    ds: DsKind,
    /// Directory for `result.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the result as CSV instead of a table.
    #[arg(long)]
    csv: bool,
    /// Check welfare and payments against brute-force optima.
    #[arg(long)]
    oracle: bool,
    /// Check agreement with the greedy auction (one concave resource).
    #[arg(long)]
    verify_baseline: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    out: PathBuf,
    /// Experiments to run: naive, joins, auction, separate.
    #[arg(long, value_delimiter = ',', default_value = "naive,joins,auction,separate")]
    experiments: Vec<Experiment>,
    #[arg(long, default_value = "increasing")]
    kind: DatasetKind,
    #[arg(long, value_delimiter = ',', default_value = "combination,sim_2d_trees,sim_1d,kd_tree,linear_scan")]
    ds: Vec<DsKind>,
    /// Largest cell count of the join sweeps.
    #[arg(long, default_value_t = 65536)]
    max_cells: usize,
    /// Resource counts of the join sweeps.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    sweep_resources: Vec<usize>,
    /// Largest cell count at which `linear_scan` is swept.
    #[arg(long, default_value_t = 4096)]
    scan_max_cells: usize,
    #[arg(long, default_value_t = 4)]
    pairs: usize,
    #[arg(long, default_value_t = 7)]
    reps: usize,
    /// Passes over the join sweep; timing medians pool all passes.
    #[arg(long, default_value_t = 3)]
    rounds: usize,
    /// Clients of the timed auction.
    #[arg(long, default_value_t = 256)]
    clients: usize,
    #[arg(long, value_delimiter = ',', default_value = "15,15,15,15")]
    auction_units: Vec<u32>,
    /// Time auctions over these dataset directories instead of a generated one.
    #[arg(long)]
    dataset: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    separate_datasets: usize,
    #[arg(long, default_value_t = 15)]
    separate_units: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Small sizes for a fast smoke run.
    #[arg(long)]
    quick: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Experiment {
    Naive,
    Joins,
    Auction,
    Separate,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_value = "oracle,invariants,structures,baseline")]
    suite: Vec<Suite>,
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Index of the first instance of each suite.
    #[arg(long, default_value_t = 0)]
    first: usize,
    /// Instances per suite instead of the suite default.
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long, default_value = "combination")]
    ds: DsKind,
    #[arg(long, hide = true, value_parser = parse_fault)]
    inject_fault: Option<mrvcg::join::Fault>,
    /// Directory for `verify.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A check that ran and failed, as opposed to bad input.
#[derive(Debug)]
struct AssertionFailure(String);

impl fmt::Display for AssertionFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AssertionFailure {}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Auction(a) => cmd_auction(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<AssertionFailure>().is_some() => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let units = match a.resources {
        Some(r) if a.units.len() == 1 => vec![a.units[0]; r],
        Some(r) if a.units.len() != r => bail!("--resources {r} but {} --units values", a.units.len()),
        _ => a.units,
    };
    let mut spec = DatasetSpec::new(a.kind, a.clients, units, a.seed);
    spec.pareto_index = a.pareto_index;
    if let Some(p) = a.costs {
        spec.cost_source = CostSource::Csv(p);
    }
    spec.validate()?;
    let clients = build_dataset(&spec)?;
    write_dataset(&a.out, &spec, &clients)?;
    println!("wrote {} clients to {}", clients.len(), a.out.display());
    Ok(())
}

fn cmd_auction(a: AuctionArgs) -> Result<()> {
    let data = read_dataset(&a.dataset).with_context(|| format!("loading {}", a.dataset.display()))?;
    let opts = JoinOptions::new(a.ds);
    let start = Instant::now();
    let r = run_vcg_auction(&data.bids, &data.capacity, &opts)?;
    let elapsed = start.elapsed();

    if a.csv {
        write_auction_csv(io::stdout().lock(), &r)?;
    } else {
        print!("{}", auction_table(&r));
        println!("elapsed         {:.3} s", elapsed.as_secs_f64());
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        let path = dir.join("result.csv");
        write_auction_csv(fs::File::create(&path)?, &r)?;
    }
    if a.oracle {
        check_oracle(&data.bids, &r)?;
        eprintln!("oracle: welfare and payments agree");
    }
    if a.verify_baseline {
        check_baseline(&data.bids, &r)?;
        eprintln!("baseline: allocation values and payments agree with the greedy auction");
    }
    Ok(())
}

fn check_oracle(bids: &[mrvcg::Bid], r: &AuctionResult) -> Result<()> {
    let tensors: Vec<&ValuationTensor> = bids.iter().map(|b| &b.valuation).collect();
    let best = optimal_welfare(&tensors, &r.capacity)?;
    let allocations: Vec<Allocation> = r.agents.iter().map(|a| a.allocation.clone()).collect();
    let payments = vcg_payments(bids, &r.capacity, &allocations)?;
    let mut diffs = Vec::new();
    if !agree(r.social_welfare, best.welfare, best.welfare) {
        diffs.push(format!("social welfare: auction {} oracle {}", r.social_welfare, best.welfare));
    }
    for (a, p) in r.agents.iter().zip(&payments) {
        if !agree(a.payment, *p, best.welfare) {
            diffs.push(format!("{}: payment auction {} oracle {p}", a.agent_id, a.payment));
        }
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(AssertionFailure(format!("oracle mismatch ({:?}):\n  {}", best.method, diffs.join("\n  "))).into())
    }
}

fn check_baseline(bids: &[mrvcg::Bid], r: &AuctionResult) -> Result<()> {
    if r.capacity.resources() != 1 {
        bail!("--verify-baseline needs a one-resource dataset");
    }
    let single = bids
        .iter()
        .map(SingleResourceBid::from_bid)
        .collect::<mrvcg::Result<Vec<_>>>()
        .context("--verify-baseline needs concave, strictly increasing bids")?;
    let g = concave_auction(&single, r.capacity.units()[0])?;
    let mut diffs = Vec::new();
    if !agree(r.social_welfare, g.social_welfare, g.social_welfare) {
        diffs.push(format!("social welfare: auction {} baseline {}", r.social_welfare, g.social_welfare));
    }
    for (a, b) in r.agents.iter().zip(&g.agents) {
        if !agree(a.payment, b.payment, g.social_welfare) || !agree(a.value, b.value, g.social_welfare) {
            diffs.push(format!(
                "{}: auction value {} payment {}, baseline value {} payment {}",
                a.agent_id, a.value, a.payment, b.value, b.payment
            ));
        }
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(AssertionFailure(format!("baseline mismatch:\n  {}", diffs.join("\n  "))).into())
    }
}

#[derive(Serialize)]
struct MatchRow<'a> {
    dataset: &'a str,
    seed: u64,
    resources: usize,
    cells: usize,
    ds: &'a str,
    pair: usize,
    queries: u64,
    exact_matches: u64,
    matches_per_query: f64,
}

#[derive(Serialize)]
struct PhaseRow<'a> {
    dataset: &'a str,
    seed: u64,
    resources: usize,
    cells: usize,
    ds: &'a str,
    pair: usize,
    construct: f64,
    query: f64,
    fetch: f64,
    compare: f64,
}

#[derive(Serialize)]
struct FalsePositiveRow<'a> {
    dataset: &'a str,
    seed: u64,
    resources: usize,
    cells: usize,
    ds: &'a str,
    pair: usize,
    candidates: u64,
    exact_matches: u64,
    false_positive_ratio: f64,
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let env = EnvStamp::current();
    write_csv(&a.out.join("env.csv"), &[&env])?;
    let (max_cells, reps, pairs) = if a.quick {
        (a.max_cells.min(1024), a.reps.min(3), a.pairs.min(2))
    } else {
        (a.max_cells, a.reps, a.pairs)
    };
    let mut out = io::stdout().lock();

    if a.experiments.contains(&Experiment::Naive) {
        let points: Vec<Vec<u32>> = if a.quick {
            vec![vec![63], vec![127], vec![7, 7], vec![15, 7], vec![15, 15], vec![3, 3, 3], vec![7, 3, 3], vec![7, 7, 3]]
        } else {
            vec![
                vec![1023],
                vec![4095],
                vec![31, 31],
                vec![63, 63],
                vec![127, 127],
                vec![15, 15, 15],
                vec![31, 31, 15],
                vec![7, 7, 7, 7],
                vec![15, 15, 15, 15],
            ]
        };
        let rows = naive_sweep(&points, reps.min(5), a.seed)?;
        write_csv(&a.out.join("naive_comparisons.csv"), &rows)?;
        writeln!(out, "naive: {} points", rows.len())?;
    }

    if a.experiments.contains(&Experiment::Joins) {
        if a.sweep_resources.contains(&0) {
            bail!("--sweep-resources values must be positive");
        }
        let points: Vec<Vec<u32>> = a.sweep_resources.iter().flat_map(|&r| doubling_points(r, max_cells)).collect();
        let mut rows = Vec::new();
        for &ds in &a.ds {
            let pts: Vec<Vec<u32>> = points
                .iter()
                .filter(|u| ds != DsKind::LinearScan || cells(u) <= a.scan_max_cells)
                .cloned()
                .collect();
            rows.extend(
                JoinSweep {
                    kind: a.kind,
                    points: pts,
                    ds: vec![ds],
                    pairs,
                    reps,
                    rounds: if a.quick { 1 } else { a.rounds },
                    seed: a.seed,
                }
                .run()?,
            );
            writeln!(out, "joins: {ds} done")?;
        }
        write_csv(&a.out.join("join_timing.csv"), &rows)?;
        let matches: Vec<MatchRow> = rows
            .iter()
            .map(|r| MatchRow {
                dataset: &r.dataset,
                seed: r.seed,
                resources: r.resources,
                cells: r.cells,
                ds: &r.ds,
                pair: r.pair,
                queries: r.queries,
                exact_matches: r.exact_matches,
                matches_per_query: r.matches_per_query,
            })
            .collect();
        write_csv(&a.out.join("matches_per_query.csv"), &matches)?;
        let phases: Vec<PhaseRow> = rows
            .iter()
            .map(|r| {
                let [construct, query, fetch, compare] = r.phase_fractions();
                PhaseRow {
                    dataset: &r.dataset,
                    seed: r.seed,
                    resources: r.resources,
                    cells: r.cells,
                    ds: &r.ds,
                    pair: r.pair,
                    construct,
                    query,
                    fetch,
                    compare,
                }
            })
            .collect();
        write_csv(&a.out.join("phases.csv"), &phases)?;
        let fps: Vec<FalsePositiveRow> = rows
            .iter()
            .map(|r| FalsePositiveRow {
                dataset: &r.dataset,
                seed: r.seed,
                resources: r.resources,
                cells: r.cells,
                ds: &r.ds,
                pair: r.pair,
                candidates: r.candidates,
                exact_matches: r.exact_matches,
                false_positive_ratio: r.false_positive_ratio,
            })
            .collect();
        write_csv(&a.out.join("false_positives.csv"), &fps)?;
    }

    if a.experiments.contains(&Experiment::Auction) {
        let ds = a.ds.first().copied().unwrap_or(DsKind::Combination);
        let mut rows = Vec::new();
        if a.dataset.is_empty() {
            let (clients, units) = if a.quick {
                (a.clients.min(16), vec![7, 7])
            } else {
                (a.clients, a.auction_units.clone())
            };
            let spec = DatasetSpec::new(a.kind, clients, units, a.seed);
            rows.push(time_generated_auction(&spec, ds)?);
        } else {
            for dir in &a.dataset {
                let data = read_dataset(dir).with_context(|| format!("loading {}", dir.display()))?;
                let mut row = time_auction(&dir.display().to_string(), &data.bids, &data.capacity, ds)?;
                if let Some(spec) = &data.spec {
                    row.kind = spec.kind.to_string();
                    row.seed = spec.seed;
                }
                rows.push(row);
            }
        }
        for r in &rows {
            writeln!(
                out,
                "auction: {} clients over {} cells took {:.2} s",
                r.clients,
                r.cells,
                r.total_ns as f64 / 1e9
            )?;
        }
        write_csv(&a.out.join("auction_timing.csv"), &rows)?;
    }

    if a.experiments.contains(&Experiment::Separate) {
        let (datasets, clients, units) = if a.quick {
            (2, 16, 5)
        } else {
            (a.separate_datasets, a.clients, a.separate_units)
        };
        let seeds: Vec<u64> = (0..datasets as u64).map(|i| a.seed + i).collect();
        let rows = separate_sweep(clients, units, &[1, 2, 3], &seeds, DsKind::Combination)?;
        write_csv(&a.out.join("separate_auctions.csv"), &rows)?;
        writeln!(out, "separate: {} rows", rows.len())?;
    }
    writeln!(out, "results in {}", a.out.display())?;
    Ok(())
}

fn cells(units: &[u32]) -> usize {
    units.iter().map(|&m| m as usize + 1).product()
}

#[derive(Serialize)]
struct VerifyRow {
    suite: String,
    status: &'static str,
    instances: usize,
    checks: u64,
    seconds: f64,
    failing_instance: String,
    message: String,
    reproduce: String,
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let mut opts = JoinOptions::new(a.ds);
    opts.fault = a.inject_fault;
    let cfg = SuiteConfig {
        seed: a.seed,
        first: a.first,
        instances: a.instances,
        quick: a.quick,
        opts,
    };
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for &suite in &a.suite {
        let r = run_suite(suite, &cfg);
        let status = if r.passed() { "pass" } else { "fail" };
        println!(
            "suite={suite} status={status} instances={} checks={} seconds={:.2}",
            r.instances,
            r.checks,
            r.elapsed.as_secs_f64()
        );
        for n in &r.notes {
            println!("  {n}");
        }
        let reproduce = r.reproduce(&cfg, a.ds).unwrap_or_default();
        if let Some(f) = &r.failure {
            println!("  failing instance {}: {}", f.index, f.instance);
            println!("  {}", f.message);
            println!("  reproduce: {reproduce}");
            failed.push(suite.to_string());
        }
        rows.push(VerifyRow {
            suite: suite.to_string(),
            status,
            instances: r.instances,
            checks: r.checks,
            seconds: r.elapsed.as_secs_f64(),
            failing_instance: r.failure.as_ref().map(|f| f.instance.clone()).unwrap_or_default(),
            message: r.failure.as_ref().map(|f| f.message.clone()).unwrap_or_default(),
            reproduce,
        });
    }
    if let Some(dir) = &a.out {
        write_csv(&dir.join("verify.csv"), &rows)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(AssertionFailure(format!("failed suites: {}", failed.join(", "))).into())
    }
}
