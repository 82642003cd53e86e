//! Seeded verification suites. Each instance is fully determined by the base
//! seed and its index, so a failure can be replayed on its own.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Result};
use mrvcg::baselines::{concave_auction, SingleResourceBid};
use mrvcg::datasets::{build_dataset, DatasetKind, DatasetSpec};
use mrvcg::join::Fault;
use mrvcg::oracle::{optimal_welfare, vcg_payments};
use mrvcg::{
    run_vcg_auction, Allocation, AuctionResult, Bid, Candidates, DsKind, JoinOptions, QueryBound, ResourceCapacity,
    UbVector, UpperBoundIndex, ValuationTensor,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Welfare and payment agreement, relative to `max(1, welfare)`.
pub const TOLERANCE: f64 = 1e-9;

pub fn agree(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= TOLERANCE * scale.abs().max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Oracle,
    Invariants,
    Structures,
    Baseline,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Oracle, Suite::Invariants, Suite::Structures, Suite::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Oracle => "oracle",
            Suite::Invariants => "invariants",
            Suite::Structures => "structures",
            Suite::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| anyhow!("unknown suite `{s}` (expected oracle, invariants, structures or baseline)"))
    }
}

pub fn parse_fault(s: &str) -> Result<Fault> {
    match s {
        "skip-pareto-filter" => Ok(Fault::SkipParetoFilter),
        "drop-left-infinity" => Ok(Fault::DropLeftInfinity),
        _ => bail!("unknown fault `{s}` (expected skip-pareto-filter or drop-left-infinity)"),
    }
}

pub fn fault_name(f: Fault) -> &'static str {
    match f {
        Fault::SkipParetoFilter => "skip-pareto-filter",
        Fault::DropLeftInfinity => "drop-left-infinity",
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Index of the first instance to run.
    pub first: usize,
    /// Overrides the suite's default instance count.
    pub instances: Option<usize>,
    pub quick: bool,
    pub opts: JoinOptions,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            first: 0,
            instances: None,
            quick: false,
            opts: JoinOptions::default(),
        }
    }
}

impl SuiteConfig {
    fn count(&self, full: usize, quick: usize) -> usize {
        self.instances.unwrap_or(if self.quick { quick } else { full })
    }

    fn indices(&self, full: usize, quick: usize) -> std::ops::Range<usize> {
        self.first..self.first + self.count(full, quick)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub index: usize,
    pub instance: String,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: Suite,
    pub instances: usize,
    pub checks: u64,
    pub failure: Option<Failure>,
    pub elapsed: Duration,
    pub notes: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    /// Command line replaying the failing instance alone.
    pub fn reproduce(&self, cfg: &SuiteConfig, ds: DsKind) -> Option<String> {
        let f = self.failure.as_ref()?;
        let mut cmd = format!(
            "mrvcg verify --suite {} --seed {} --first {} --instances 1 --ds {ds}",
            self.suite, cfg.seed, f.index
        );
        if cfg.quick {
            cmd.push_str(" --quick");
        }
        if let Some(fault) = cfg.opts.fault {
            cmd.push_str(" --inject-fault ");
            cmd.push_str(fault_name(fault));
        }
        Some(cmd)
    }
}

pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> SuiteReport {
    let start = Instant::now();
    let mut report = SuiteReport {
        suite,
        instances: 0,
        checks: 0,
        failure: None,
        elapsed: Duration::ZERO,
        notes: Vec::new(),
    };
    let result = match suite {
        Suite::Oracle => oracle_suite(cfg, &mut report),
        Suite::Invariants => invariant_suite(cfg, &mut report),
        Suite::Structures => structure_suite(cfg, &mut report),
        Suite::Baseline => baseline_suite(cfg, &mut report),
    };
    if let Err((index, instance, e)) = result {
        report.failure = Some(Failure {
            index,
            instance,
            message: format!("{e:#}"),
        });
    }
    report.elapsed = start.elapsed();
    report
}

type SuiteResult = std::result::Result<(), (usize, String, anyhow::Error)>;

/// A generated auction instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub kind: DatasetKind,
    pub units: Vec<u32>,
    pub clients: usize,
    pub seed: u64,
}

impl Instance {
    pub fn spec(&self) -> DatasetSpec {
        DatasetSpec::new(self.kind, self.clients, self.units.clone(), self.seed)
    }

    pub fn bids(&self) -> Result<(Vec<Bid>, ResourceCapacity)> {
        let spec = self.spec();
        let bids = build_dataset(&spec)?.iter().map(|c| c.bid()).collect();
        Ok((bids, spec.capacity()?))
    }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} clients={} units={} seed={}",
            self.kind,
            self.clients,
            crate::experiments::units_label(&self.units),
            self.seed
        )
    }
}

fn instance_seed(base: u64, index: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

/// Instance `index` of the oracle grid: kinds fastest, then one to four
/// resources, then the unit choices, then two to six clients.
pub fn oracle_instance(base: u64, index: usize, unit_choices: &[u32]) -> Instance {
    let kind = DatasetKind::ALL[index % 3];
    let resources = 1 + (index / 3) % 4;
    let m = unit_choices[(index / 12) % unit_choices.len()];
    let clients = 2 + (index / (12 * unit_choices.len())) % 5;
    Instance {
        kind,
        units: vec![m; resources],
        clients,
        seed: instance_seed(base, index),
    }
}

pub const ORACLE_UNITS: [u32; 3] = [3, 7, 15];
const QUICK_ORACLE_UNITS: [u32; 2] = [3, 7];

fn oracle_suite(cfg: &SuiteConfig, report: &mut SuiteReport) -> SuiteResult {
    let units: &[u32] = if cfg.quick { &QUICK_ORACLE_UNITS } else { &ORACLE_UNITS };
    for i in cfg.indices(216, 40) {
        let inst = oracle_instance(cfg.seed, i, units);
        let fail = |e: anyhow::Error| (i, inst.to_string(), e);
        let (bids, cap) = inst.bids().map_err(fail)?;
        report.checks += check_against_oracle(&bids, &cap, &cfg.opts).map_err(fail)?;
        report.instances += 1;
    }
    Ok(())
}

/// Welfare and every payment against exhaustive or naive-chain optima.
/// Returns the number of comparisons made.
pub fn check_against_oracle(bids: &[Bid], cap: &ResourceCapacity, opts: &JoinOptions) -> Result<u64> {
    let r = run_vcg_auction(bids, cap, opts)?;
    let tensors: Vec<&ValuationTensor> = bids.iter().map(|b| &b.valuation).collect();
    let best = optimal_welfare(&tensors, cap)?.welfare;
    if !agree(r.social_welfare, best, best) {
        bail!("social welfare {} but optimum is {best}", r.social_welfare);
    }
    let allocations: Vec<Allocation> = r.agents.iter().map(|a| a.allocation.clone()).collect();
    let expected = vcg_payments(bids, cap, &allocations)?;
    for (a, p) in r.agents.iter().zip(&expected) {
        if !agree(a.payment, *p, best) {
            bail!("{} pays {} but exclusion compensation is {p}", a.agent_id, a.payment);
        }
    }
    Ok(1 + expected.len() as u64)
}

pub fn invariant_instance(base: u64, index: usize) -> Instance {
    const UNITS: [u32; 3] = [3, 5, 7];
    Instance {
        kind: DatasetKind::ALL[index % 3],
        units: vec![UNITS[(index / 9) % 3]; 1 + (index / 3) % 3],
        clients: 2 + (index / 27) % 7,
        seed: instance_seed(base ^ 0x5555, index),
    }
}

fn invariant_suite(cfg: &SuiteConfig, report: &mut SuiteReport) -> SuiteResult {
    for i in cfg.indices(189, 36) {
        let inst = invariant_instance(cfg.seed, i);
        let fail = |e: anyhow::Error| (i, inst.to_string(), e);
        let (bids, cap) = inst.bids().map_err(fail)?;
        let mut rng = ChaCha8Rng::seed_from_u64(inst.seed);
        report.checks += check_invariants(&bids, &cap, &cfg.opts, &mut rng).map_err(fail)?;
        report.instances += 1;
    }
    Ok(())
}

/// Feasibility, individual rationality, optimality of random winner groups,
/// bid-order invariance, and monotone welfare in the bid set.
pub fn check_invariants(bids: &[Bid], cap: &ResourceCapacity, opts: &JoinOptions, rng: &mut impl Rng) -> Result<u64> {
    let r = run_vcg_auction(bids, cap, opts)?;
    let scale = r.social_welfare;
    let mut checks = 0;

    for (used, &m) in r.units_allocated().iter().zip(cap.units()) {
        if *used > m as u64 {
            bail!("allocated {used} units of a resource with {m}");
        }
    }
    let total: f64 = r.agents.iter().map(|a| a.value).sum();
    if !agree(total, r.social_welfare, scale) {
        bail!("agent values sum to {total} but welfare is {}", r.social_welfare);
    }
    for a in &r.agents {
        if !(a.payment >= 0.0 && a.payment <= a.value) {
            bail!("{} pays {} for value {}", a.agent_id, a.payment, a.value);
        }
    }
    checks += 2;

    let winners: Vec<usize> = (0..bids.len()).filter(|&i| r.agents[i].is_winner()).collect();
    for _ in 0..3 {
        if winners.is_empty() {
            break;
        }
        let size = rng.gen_range(1..=winners.len());
        let group: Vec<usize> = winners.choose_multiple(rng, size).copied().collect();
        check_group(bids, &r, &group)?;
        checks += 1;
    }

    let mut reversed: Vec<Bid> = bids.to_vec();
    reversed.reverse();
    let mut rotated: Vec<Bid> = bids.to_vec();
    rotated.rotate_left(1);
    for order in [reversed, rotated] {
        let q = run_vcg_auction(&order, cap, opts)?;
        if !agree(q.social_welfare, r.social_welfare, scale) {
            bail!("reordering bids changed welfare from {} to {}", r.social_welfare, q.social_welfare);
        }
        for a in &r.agents {
            let b = q.agent(&a.agent_id).ok_or_else(|| anyhow!("{} missing after reorder", a.agent_id))?;
            if !agree(a.payment, b.payment, scale) {
                bail!("reordering bids changed the payment of {} from {} to {}", a.agent_id, a.payment, b.payment);
            }
        }
        checks += 1;
    }

    if bids.len() > 1 {
        let fewer = run_vcg_auction(&bids[..bids.len() - 1], cap, opts)?;
        if fewer.social_welfare > r.social_welfare + TOLERANCE * scale.max(1.0) {
            bail!(
                "dropping the last bid raised welfare from {} to {}",
                r.social_welfare,
                fewer.social_welfare
            );
        }
        checks += 1;
    }
    Ok(checks)
}

/// The group's optimum over exactly the units it holds must equal what it holds.
fn check_group(bids: &[Bid], r: &AuctionResult, group: &[usize]) -> Result<()> {
    let mut units = vec![0u32; r.capacity.resources()];
    for &i in group {
        for (u, &x) in units.iter_mut().zip(r.agents[i].allocation.counts()) {
            *u += x;
        }
    }
    let upper = Allocation::new(units);
    let mut restricted = Vec::with_capacity(group.len());
    for &i in group {
        match bids[i].valuation.restrict(&upper)? {
            Some(t) => restricted.push(t),
            // Winners hold at least one unit.
            None => bail!("winner {} holds no units", bids[i].agent_id),
        }
    }
    let refs: Vec<&ValuationTensor> = restricted.iter().collect();
    let best = optimal_welfare(&refs, restricted[0].capacity())?.welfare;
    let held: f64 = group.iter().map(|&i| r.agents[i].value).sum();
    if !agree(best, held, best) {
        let ids: Vec<&str> = group.iter().map(|&i| bids[i].agent_id.as_str()).collect();
        bail!("group {ids:?} holds {held} but could reach {best} on its own units");
    }
    Ok(())
}

/// Point distributions for the structure suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointSource {
    Uniform,
    /// Small integers and infinities, so most coordinates tie.
    Ties,
    /// Gradient vectors of generated clients.
    Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureConfig {
    pub dims: usize,
    pub size: usize,
    pub source: PointSource,
    pub queries: usize,
    pub seed: u64,
}

impl fmt::Display for StructureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} dims={} size={} queries={} seed={}",
            self.source, self.dims, self.size, self.queries, self.seed
        )
    }
}

pub fn structure_config(base: u64, index: usize, queries: usize) -> StructureConfig {
    const DIMS: [usize; 4] = [3, 6, 9, 12];
    const SIZES: [usize; 3] = [64, 512, 4096];
    const SOURCES: [PointSource; 3] = [PointSource::Uniform, PointSource::Ties, PointSource::Tensor];
    StructureConfig {
        dims: DIMS[index % 4],
        size: SIZES[(index / 4) % 3],
        source: SOURCES[(index / 12) % 3],
        queries,
        seed: instance_seed(base ^ 0xAAAA, index),
    }
}

/// Per-structure tallies over one configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StructureTally {
    pub queries: u64,
    pub candidates: u64,
    pub matches: u64,
}

impl StructureTally {
    pub fn false_positive_ratio(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            (self.candidates - self.matches) as f64 / self.candidates as f64
        }
    }
}

fn structure_suite(cfg: &SuiteConfig, report: &mut SuiteReport) -> SuiteResult {
    let queries = if cfg.quick { 200 } else { 1000 };
    let mut totals = [StructureTally::default(); 5];
    for i in cfg.indices(36, 12) {
        let sc = structure_config(cfg.seed, i, queries);
        let tallies = check_structures(&sc).map_err(|e| (i, sc.to_string(), e))?;
        for (t, (_, x)) in totals.iter_mut().zip(&tallies) {
            t.queries += x.queries;
            t.candidates += x.candidates;
            t.matches += x.matches;
        }
        report.checks += tallies.iter().map(|(_, t)| t.queries).sum::<u64>();
        report.instances += 1;
    }
    for (kind, t) in DsKind::ALL.iter().zip(&totals) {
        report.notes.push(format!(
            "{kind}: {} queries, false-positive ratio {:.4}",
            t.queries,
            t.false_positive_ratio()
        ));
    }
    Ok(())
}

/// Every structure against a linear scan of the same points.
pub fn check_structures(sc: &StructureConfig) -> Result<Vec<(DsKind, StructureTally)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let (points, queries) = match sc.source {
        PointSource::Tensor => tensor_points(sc, &mut rng)?,
        _ => {
            let draw = |rng: &mut ChaCha8Rng| -> f64 {
                match sc.source {
                    PointSource::Uniform => rng.gen_range(-1.0..1.0),
                    _ => match rng.gen_range(0..10) {
                        0 => f64::INFINITY,
                        1 => f64::NEG_INFINITY,
                        k => (k % 5) as f64,
                    },
                }
            };
            let row = |rng: &mut ChaCha8Rng| (0..sc.dims).map(|_| draw(rng)).collect::<Vec<_>>();
            let points = (0..sc.size).map(|_| row(&mut rng)).collect::<Vec<_>>();
            let queries = (0..sc.queries).map(|_| row(&mut rng)).collect();
            (points, queries)
        }
    };
    let below = |p: &[f64], q: &[f64]| p.iter().zip(q).all(|(a, b)| a <= b);
    let expected: Vec<Vec<u32>> = queries
        .iter()
        .map(|q| (0..points.len() as u32).filter(|&i| below(&points[i as usize], q)).collect())
        .collect();
    let flat: Vec<f64> = points.concat();
    let mut out = Vec::new();
    let mut cands = Candidates::new();
    for kind in DsKind::ALL {
        let mut tally = StructureTally::default();
        if !kind.supports(points.len(), sc.dims) {
            out.push((kind, tally));
            continue;
        }
        let index = UpperBoundIndex::from_flat(sc.dims, flat.clone(), kind)?;
        for (q, want) in queries.iter().zip(&expected) {
            index.query_keys_into(q, &mut cands);
            let mut got = index.fetch(&cands)?;
            tally.queries += 1;
            tally.candidates += got.len() as u64;
            got.sort_unstable();
            let before = got.len();
            got.dedup();
            if got.len() != before {
                bail!("{kind} returned a candidate twice");
            }
            got.retain(|&i| below(&points[i as usize], q));
            tally.matches += got.len() as u64;
            if &got != want {
                bail!("{kind} found {} of {} matches", got.len(), want.len());
            }
        }
        if kind.is_exact() && tally.candidates != tally.matches {
            bail!("{kind} returned {} false positives", tally.candidates - tally.matches);
        }
        out.push((kind, tally));
    }
    Ok(out)
}

/// Stored vectors of one client's efficient allocations, queried with
/// bounds of another client's.
/// Point keys and query keys.
type KeySets = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn tensor_points(sc: &StructureConfig, rng: &mut ChaCha8Rng) -> Result<KeySets> {
    let res = sc.dims / 3;
    let side = ((sc.size as f64).powf(1.0 / res as f64).round() as u32).max(2);
    let kind = DatasetKind::ALL[rng.gen_range(0..3)];
    let spec = DatasetSpec::new(kind, 2, vec![side - 1; res], rng.gen());
    let clients = build_dataset(&spec)?;
    let (v1, v2) = (&clients[0].valuation, &clients[1].valuation);
    let vectors = v1
        .pareto_survivors()
        .iter()
        .map(|a| UbVector::from_tensor(v1, a).map(|v| v.keys()))
        .collect::<mrvcg::Result<Vec<_>>>()?;
    let pool = v2.pareto_survivors();
    let queries = (0..sc.queries)
        .map(|_| QueryBound::for_allocation(v2, pool.choose(rng).expect("origin survives")).map(|q| q.keys()))
        .collect::<mrvcg::Result<Vec<_>>>()?;
    Ok((vectors, queries))
}

pub fn baseline_instance(base: u64, index: usize, quick: bool) -> Instance {
    const UNITS: [u32; 5] = [15, 31, 63, 127, 255];
    let (clients, m) = if quick {
        (32, UNITS[index % 3])
    } else {
        (256, UNITS[index % 5])
    };
    Instance {
        kind: DatasetKind::Concave,
        units: vec![m],
        clients,
        seed: instance_seed(base ^ 0x3333, index),
    }
}

fn baseline_suite(cfg: &SuiteConfig, report: &mut SuiteReport) -> SuiteResult {
    for i in cfg.indices(10, 3) {
        let inst = baseline_instance(cfg.seed, i, cfg.quick);
        let fail = |e: anyhow::Error| (i, inst.to_string(), e);
        let (bids, cap) = inst.bids().map_err(fail)?;
        report.checks += check_baseline(&bids, &cap, &cfg.opts).map_err(fail)?;
        report.instances += 1;
    }
    Ok(())
}

/// Joint auction against the greedy concave auction on one resource.
pub fn check_baseline(bids: &[Bid], cap: &ResourceCapacity, opts: &JoinOptions) -> Result<u64> {
    if cap.resources() != 1 {
        bail!("the concave baseline needs one resource, got {}", cap.resources());
    }
    let single = bids.iter().map(SingleResourceBid::from_bid).collect::<mrvcg::Result<Vec<_>>>()?;
    let g = concave_auction(&single, cap.units()[0])?;
    let r = run_vcg_auction(bids, cap, opts)?;
    let scale = g.social_welfare;
    if !agree(g.social_welfare, r.social_welfare, scale) {
        bail!("welfare {} but the greedy baseline reaches {}", r.social_welfare, g.social_welfare);
    }
    for (a, b) in r.agents.iter().zip(&g.agents) {
        if !agree(a.payment, b.payment, scale) {
            bail!("{} pays {} but {} under the baseline", a.agent_id, a.payment, b.payment);
        }
        if !agree(a.value, b.value, scale) {
            bail!("{} gets value {} but {} under the baseline", a.agent_id, a.value, b.value);
        }
    }
    Ok(1 + 2 * bids.len() as u64)
}
