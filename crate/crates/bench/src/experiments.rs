//! Timing and counting experiments. Every function returns plain rows; the
//! CLI and the acceptance suite decide what to write or assert.

use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use mrvcg::auction::{compute_payments, solve_allocation};
use mrvcg::baselines::separate_auctions;
use mrvcg::datasets::{build_dataset, DatasetKind, DatasetSpec};
use mrvcg::{join_with, naive_join, Bid, DsKind, JoinMetrics, JoinOptions, ResourceCapacity, ValuationTensor};
use serde::Serialize;

use crate::stats::{median, median_u64};

/// Machine description stamped on every run.
#[derive(Clone, Debug, Serialize)]
pub struct EnvStamp {
    pub os: &'static str,
    pub arch: &'static str,
    pub threads: usize,
    pub profile: &'static str,
}

impl EnvStamp {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            profile: if cfg!(debug_assertions) { "debug" } else { "release" },
        }
    }
}

pub fn units_label(units: &[u32]) -> String {
    units.iter().map(u32::to_string).collect::<Vec<_>>().join("x")
}

pub fn dataset_id(kind: DatasetKind, units: &[u32], clients: usize, seed: u64) -> String {
    format!("{kind}-{}-n{clients}-s{seed}", units_label(units))
}

/// `prod_r m_r (m_r + 1) / 2`.
pub fn closed_form_divisions(units: &[u32]) -> u128 {
    units.iter().map(|&m| m as u128 * (m as u128 + 1) / 2).product()
}

#[derive(Clone, Debug, Serialize)]
pub struct NaiveRow {
    pub dataset: String,
    pub seed: u64,
    pub resources: usize,
    pub units: String,
    pub cells: usize,
    pub comparisons: u64,
    /// `prod_r (m_r+1)(m_r+2)/2`: splits of every cell.
    pub division_count: u128,
    /// `prod_r m_r(m_r+1)/2`.
    pub closed_form: u128,
    pub median_ns: u64,
    pub reps: usize,
}

/// Times `naive_join` of two increasing clients at each unit vector.
pub fn naive_sweep(points: &[Vec<u32>], reps: usize, seed: u64) -> Result<Vec<NaiveRow>> {
    let mut rows = Vec::with_capacity(points.len());
    for units in points {
        let spec = DatasetSpec::new(DatasetKind::Increasing, 2, units.clone(), seed);
        let clients = build_dataset(&spec)?;
        let (a, b) = (&clients[0].valuation, &clients[1].valuation);
        let mut times = Vec::with_capacity(reps);
        let mut comparisons = 0;
        for _ in 0..reps.max(1) {
            let t = Instant::now();
            let (joint, count) = naive_join(a, b)?;
            times.push(t.elapsed().as_nanos() as u64);
            std::hint::black_box(joint);
            comparisons = count;
        }
        let cap = a.capacity();
        rows.push(NaiveRow {
            dataset: dataset_id(DatasetKind::Increasing, units, 2, seed),
            seed,
            resources: units.len(),
            units: units_label(units),
            cells: cap.cells(),
            comparisons,
            division_count: cap.division_count(),
            closed_form: closed_form_divisions(units),
            median_ns: median_u64(&times),
            reps: times.len(),
        });
    }
    Ok(rows)
}

/// One pair join measured at one size with one structure.
#[derive(Clone, Debug, Serialize)]
pub struct JoinRow {
    pub dataset: String,
    pub kind: String,
    pub seed: u64,
    pub resources: usize,
    pub units: String,
    pub cells: usize,
    pub ds: String,
    pub pair: usize,
    /// Median wall time without phase timers.
    pub median_ns: u64,
    pub construct_ns: u64,
    pub query_ns: u64,
    pub fetch_ns: u64,
    pub compare_ns: u64,
    pub left_survivors: usize,
    pub right_survivors: usize,
    pub queries: u64,
    pub candidates: u64,
    pub exact_matches: u64,
    pub matches_per_query: f64,
    pub false_positive_ratio: f64,
    pub reps: usize,
}

impl JoinRow {
    pub fn phase_fractions(&self) -> [f64; 4] {
        let total = (self.construct_ns + self.query_ns + self.fetch_ns + self.compare_ns).max(1) as f64;
        [
            self.construct_ns as f64 / total,
            self.query_ns as f64 / total,
            self.fetch_ns as f64 / total,
            self.compare_ns as f64 / total,
        ]
    }
}

#[derive(Clone, Debug)]
pub struct JoinSweep {
    pub kind: DatasetKind,
    pub points: Vec<Vec<u32>>,
    pub ds: Vec<DsKind>,
    /// Disjoint client pairs joined at every point.
    pub pairs: usize,
    pub reps: usize,
    /// Passes over the whole sweep; see [`JoinSweep::run`].
    pub rounds: usize,
    pub seed: u64,
}

impl JoinSweep {
    /// Every round makes one pass over all sizes, with a warm-up plus `reps`
    /// back-to-back runs per pair. Medians are taken over the samples of all
    /// rounds, so slow drift in machine load lands on every size alike.
    pub fn run(&self) -> Result<Vec<JoinRow>> {
        let clients = 2 * self.pairs;
        let mut sets = Vec::with_capacity(self.points.len());
        for units in &self.points {
            let spec = DatasetSpec::new(self.kind, clients, units.clone(), self.seed);
            let tensors: Vec<ValuationTensor> = build_dataset(&spec)?.into_iter().map(|c| c.valuation).collect();
            sets.push(tensors);
        }
        let mut jobs = Vec::new();
        for (pi, units) in self.points.iter().enumerate() {
            let t = &sets[pi];
            for &ds in &self.ds {
                for p in 0..self.pairs {
                    let indexed = t[2 * p].pareto_survivor_cells().len().max(t[2 * p + 1].pareto_survivor_cells().len());
                    if ds.supports(indexed, 3 * units.len()) {
                        jobs.push((pi, ds, p, Vec::new()));
                    }
                }
            }
        }
        for _ in 0..self.rounds.max(1) {
            for (pi, ds, p, wall) in &mut jobs {
                let (a, b) = (&sets[*pi][2 * *p], &sets[*pi][2 * *p + 1]);
                time_join(a, b, *ds)?;
                for _ in 0..self.reps.max(1) {
                    wall.push(time_join(a, b, *ds)?);
                }
            }
        }
        let mut rows = Vec::with_capacity(jobs.len());
        for (pi, ds, p, wall) in jobs {
            let units = &self.points[pi];
            let m = join_row(&sets[pi][2 * p], &sets[pi][2 * p + 1], ds, &wall)?;
            rows.push(JoinRow {
                dataset: dataset_id(self.kind, units, clients, self.seed),
                kind: self.kind.to_string(),
                seed: self.seed,
                pair: p,
                ..m
            });
        }
        Ok(rows)
    }
}

fn time_join(a: &ValuationTensor, b: &ValuationTensor, ds: DsKind) -> Result<u64> {
    let t = Instant::now();
    let out = join_with(a, b, &JoinOptions::new(ds))?;
    let ns = t.elapsed().as_nanos() as u64;
    std::hint::black_box(out);
    Ok(ns)
}

/// Pair join timing. `None` when `ds` cannot index the larger side.
pub fn measure_join(a: &ValuationTensor, b: &ValuationTensor, ds: DsKind, reps: usize) -> Result<Option<JoinRow>> {
    let dims = 3 * a.capacity().resources();
    let indexed = a.pareto_survivor_cells().len().max(b.pareto_survivor_cells().len());
    if !ds.supports(indexed, dims) {
        return Ok(None);
    }
    // One discarded warm-up run, then `reps` timed ones back to back.
    time_join(a, b, ds)?;
    let wall = (0..reps.max(1)).map(|_| time_join(a, b, ds)).collect::<Result<Vec<_>>>()?;
    join_row(a, b, ds, &wall).map(Some)
}

/// Row from untimed wall samples plus up to three runs with phase timers.
fn join_row(a: &ValuationTensor, b: &ValuationTensor, ds: DsKind, wall: &[u64]) -> Result<JoinRow> {
    let timed = JoinOptions::new(ds).with_timings();
    let mut phases: Vec<JoinMetrics> = Vec::new();
    for _ in 0..wall.len().clamp(1, 3) {
        phases.push(join_with(a, b, &timed)?.1);
    }
    let m = phases[0];
    let pick = |f: fn(&JoinMetrics) -> u64| median_u64(&phases.iter().map(f).collect::<Vec<_>>());
    Ok(JoinRow {
        dataset: String::new(),
        kind: String::new(),
        seed: 0,
        resources: a.capacity().resources(),
        units: units_label(a.capacity().units()),
        cells: m.cells,
        ds: ds.to_string(),
        pair: 0,
        median_ns: median_u64(wall),
        construct_ns: pick(|m| m.construct_ns),
        query_ns: pick(|m| m.query_ns),
        fetch_ns: pick(|m| m.fetch_ns),
        compare_ns: pick(|m| m.compare_ns),
        left_survivors: m.left_survivors,
        right_survivors: m.right_survivors,
        queries: m.queries,
        candidates: m.candidates,
        exact_matches: m.exact_matches,
        matches_per_query: m.matches_per_query(),
        false_positive_ratio: m.false_positive_ratio(),
        reps: wall.len(),
    })
}

/// Per-size summary of one structure at one resource count: cells, median
/// over pairs of the per-pair median join time, mean matches per query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizePoint {
    pub cells: usize,
    pub join_ns: f64,
    pub matches_per_query: f64,
}

pub fn summarize(rows: &[JoinRow], ds: DsKind, resources: usize) -> Vec<SizePoint> {
    let name = ds.to_string();
    let sel: Vec<&JoinRow> = rows.iter().filter(|r| r.ds == name && r.resources == resources).collect();
    let mut cells: Vec<usize> = sel.iter().map(|r| r.cells).collect();
    cells.sort_unstable();
    cells.dedup();
    cells
        .into_iter()
        .map(|n| {
            let at: Vec<&JoinRow> = sel.iter().copied().filter(|r| r.cells == n).collect();
            let times: Vec<f64> = at.iter().map(|r| r.median_ns as f64).collect();
            SizePoint {
                cells: n,
                join_ns: median(&times),
                matches_per_query: mean(at.iter().map(|r| r.matches_per_query)),
            }
        })
        .collect()
}

/// Consecutive time ratios of a sweep whose sizes double.
pub fn doubling_ratios(points: &[SizePoint]) -> Vec<(usize, usize, f64)> {
    points
        .windows(2)
        .map(|w| (w[0].cells, w[1].cells, w[1].join_ns / w[0].join_ns))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct AuctionRow {
    pub dataset: String,
    pub kind: String,
    pub seed: u64,
    pub resources: usize,
    pub units: String,
    pub cells: usize,
    pub clients: usize,
    pub ds: String,
    pub allocation_ns: u64,
    pub payment_ns: u64,
    pub total_ns: u64,
    pub social_welfare: f64,
    pub winners: usize,
    pub total_payments: f64,
    pub threads: usize,
}

/// Full auction, with allocation and payments timed separately.
pub fn time_auction(id: &str, bids: &[Bid], cap: &ResourceCapacity, ds: DsKind) -> Result<AuctionRow> {
    let opts = JoinOptions::new(ds);
    let t = Instant::now();
    let outcome = solve_allocation(bids, cap, &opts)?;
    let allocation = t.elapsed();
    let t = Instant::now();
    let pay = compute_payments(bids, cap, &opts, &outcome.chain, &outcome.allocations, outcome.social_welfare)?;
    let payment = t.elapsed();
    let winners = bids
        .iter()
        .zip(&outcome.allocations)
        .map(|(b, a)| b.valuation.value(a))
        .collect::<mrvcg::Result<Vec<f64>>>()?
        .into_iter()
        .filter(|&v| v > 0.0)
        .count();
    let ns = |d: Duration| d.as_nanos() as u64;
    Ok(AuctionRow {
        dataset: id.to_string(),
        kind: String::new(),
        seed: 0,
        resources: cap.resources(),
        units: units_label(cap.units()),
        cells: cap.cells(),
        clients: bids.len(),
        ds: ds.to_string(),
        allocation_ns: ns(allocation),
        payment_ns: ns(payment),
        total_ns: ns(allocation + payment),
        social_welfare: outcome.social_welfare,
        winners,
        total_payments: pay.payments.iter().sum(),
        threads: 1,
    })
}

pub fn time_generated_auction(spec: &DatasetSpec, ds: DsKind) -> Result<AuctionRow> {
    let bids: Vec<Bid> = build_dataset(spec)?.iter().map(|c| c.bid()).collect();
    let id = dataset_id(spec.kind, &spec.units, spec.clients, spec.seed);
    let mut row = time_auction(&id, &bids, &spec.capacity()?, ds)?;
    row.kind = spec.kind.to_string();
    row.seed = spec.seed;
    Ok(row)
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparateRow {
    pub dataset: String,
    pub seed: u64,
    pub resources: usize,
    pub units: String,
    pub clients: usize,
    pub achieved: f64,
    pub optimal: f64,
    pub ratio: f64,
    /// `optimal / achieved`.
    pub improvement: f64,
}

/// Separate per-resource auctions on concave datasets, projected to each
/// resource count in `resources` so rows with the same seed share clients.
pub fn separate_sweep(
    clients: usize,
    units: u32,
    resources: &[usize],
    seeds: &[u64],
    ds: DsKind,
) -> Result<Vec<SeparateRow>> {
    let max_r = resources.iter().copied().max().context("no resource counts")?;
    let mut rows = Vec::new();
    for &seed in seeds {
        let full = DatasetSpec::new(DatasetKind::Concave, clients, vec![units; max_r], seed);
        for &r in resources {
            ensure!(r >= 1, "resource count must be positive");
            let spec = full.projected(r);
            let generated = build_dataset(&spec)?;
            let s = separate_auctions(&generated, &spec.capacity()?, &JoinOptions::new(ds))?;
            rows.push(SeparateRow {
                dataset: dataset_id(DatasetKind::Concave, &spec.units, clients, seed),
                seed,
                resources: r,
                units: units_label(&spec.units),
                clients,
                achieved: s.achieved,
                optimal: s.optimal,
                ratio: s.ratio(),
                improvement: if s.achieved > 0.0 { s.optimal / s.achieved } else { f64::INFINITY },
            });
        }
    }
    Ok(rows)
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Unit vectors whose cell counts double from about 256 up to `max_cells`.
pub fn doubling_points(resources: usize, max_cells: usize) -> Vec<Vec<u32>> {
    assert!(resources >= 1);
    // Start near 256 cells; each step doubles the shortest side.
    let start = 1u64 << 8usize.div_ceil(resources);
    let mut sides = vec![start; resources];
    let mut out = Vec::new();
    while sides.iter().product::<u64>() <= max_cells as u64 {
        out.push(sides.iter().map(|&s| (s - 1) as u32).collect());
        let i = (0..resources).min_by_key(|&i| sides[i]).expect("resources >= 1");
        sides[i] *= 2;
    }
    out
}
