//! Synthetic bids: tensor products of random 1-d functions scaled by a
//! Pareto-distributed maximal value that exceeds a bundle cost.
//!
//! Randomness is ChaCha8 seeded from the dataset seed. Client `k` uses stream
//! `k << 8` for its cost and maximal value and stream `(k << 8) | (r + 1)` for
//! component `r`, so a projection onto fewer resources reuses the same
//! leading components.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::auction::Bid;
use crate::error::{Error, Result};
use crate::tensor::{Odometer, ResourceCapacity, ValuationTensor};
use crate::vft;

pub const DEFAULT_PARETO_INDEX: f64 = 1.1;
/// Lower end of the increment range of mostly-increasing components.
pub const MOSTLY_INCREASING_DIP: f64 = -0.25;
const MAX_SECTIONS: usize = 3;
/// Relative tolerance of the shape validators.
const SHAPE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Concave,
    Increasing,
    MostlyIncreasing,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 3] = [
        DatasetKind::Concave,
        DatasetKind::Increasing,
        DatasetKind::MostlyIncreasing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Concave => "concave",
            DatasetKind::Increasing => "increasing",
            DatasetKind::MostlyIncreasing => "mostly-increasing",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concave" => Ok(DatasetKind::Concave),
            "increasing" => Ok(DatasetKind::Increasing),
            "mostly-increasing" | "mostly_increasing" => Ok(DatasetKind::MostlyIncreasing),
            _ => Err(Error::Validation(format!(
                "unknown dataset kind `{s}` (expected concave, increasing or mostly-increasing)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostSource {
    Synthetic,
    Csv(PathBuf),
}

impl fmt::Display for CostSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostSource::Synthetic => f.write_str("synthetic"),
            CostSource::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub clients: usize,
    pub units: Vec<u32>,
    pub seed: u64,
    pub pareto_index: f64,
    pub cost_source: CostSource,
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, clients: usize, units: Vec<u32>, seed: u64) -> Self {
        Self {
            kind,
            clients,
            units,
            seed,
            pareto_index: DEFAULT_PARETO_INDEX,
            cost_source: CostSource::Synthetic,
        }
    }

    pub fn resources(&self) -> usize {
        self.units.len()
    }

    pub fn capacity(&self) -> Result<ResourceCapacity> {
        ResourceCapacity::new(self.units.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::Validation("a dataset needs at least one client".into()));
        }
        if !(self.pareto_index > 1.0 && self.pareto_index.is_finite()) {
            return Err(Error::Validation(format!(
                "pareto index must be finite and above 1, got {}",
                self.pareto_index
            )));
        }
        self.capacity().map(|_| ())
    }

    /// Same clients restricted to the first `resources` resources.
    pub fn projected(&self, resources: usize) -> Self {
        let mut s = self.clone();
        s.units.truncate(resources);
        s
    }

    /// `key = value` text stored as `spec.cfg`.
    pub fn to_cfg(&self) -> String {
        let units: Vec<String> = self.units.iter().map(|u| u.to_string()).collect();
        format!(
            "kind = {}\nclients = {}\nresources = {}\nunits = {}\nseed = {}\npareto_index = {:?}\ncost_source = {}\n",
            self.kind,
            self.clients,
            self.resources(),
            units.join(" "),
            self.seed,
            self.pareto_index,
            self.cost_source
        )
    }

    pub fn from_cfg(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("spec.cfg line {}", i + 1), "expected `key = value`"))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::parse("spec.cfg", format!("missing key `{k}`")))
        };
        let bad = |k: &str, e: &dyn fmt::Display| Error::parse("spec.cfg", format!("`{k}`: {e}"));
        let kind: DatasetKind = get("kind")?.parse()?;
        let clients = get("clients")?.parse().map_err(|e| bad("clients", &e))?;
        let units = get("units")?
            .split_whitespace()
            .map(|u| u.parse::<u32>().map_err(|e| bad("units", &e)))
            .collect::<Result<Vec<_>>>()?;
        if let Some(r) = map.get("resources") {
            let r: usize = r.parse().map_err(|e| bad("resources", &e))?;
            if r != units.len() {
                return Err(Error::parse(
                    "spec.cfg",
                    format!("resources = {r} but {} unit counts given", units.len()),
                ));
            }
        }
        let seed = get("seed")?.parse().map_err(|e| bad("seed", &e))?;
        let pareto_index = match map.get("pareto_index") {
            Some(p) => p.parse().map_err(|e| bad("pareto_index", &e))?,
            None => DEFAULT_PARETO_INDEX,
        };
        let cost_source = match map.get("cost_source").map(String::as_str) {
            None | Some("synthetic") => CostSource::Synthetic,
            Some(s) => match s.strip_prefix("csv:") {
                Some(p) => CostSource::Csv(PathBuf::from(p)),
                None => return Err(bad("cost_source", &"expected `synthetic` or `csv:<path>`")),
            },
        };
        let spec = Self {
            kind,
            clients,
            units,
            seed,
            pareto_index,
            cost_source,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedClient {
    pub agent_id: String,
    /// One function per resource, each of length `m_r + 1`.
    pub components: Vec<Vec<f64>>,
    pub max_value: f64,
    pub bundle_cost: f64,
    pub valuation: ValuationTensor,
}

impl GeneratedClient {
    pub fn bid(&self) -> Bid {
        Bid::new(self.agent_id.clone(), self.valuation.clone())
    }
}

pub fn agent_id(k: usize) -> String {
    format!("client_{k}")
}

fn client_rng(seed: u64, client: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((client as u64) << 8) | stream);
    rng
}

/// Random 1-d function of `length` points starting at 0.
///
/// Increments are split into up to three sections, each sorted ascending or
/// descending in alternation, so the marginal value is piecewise monotone.
/// Concave functions use a single descending section.
pub fn gen_component<R: Rng + ?Sized>(kind: DatasetKind, length: usize, rng: &mut R) -> Vec<f64> {
    assert!(length >= 2, "a component needs at least two points");
    let steps = length - 1;
    loop {
        let mut inc: Vec<f64> = match kind {
            DatasetKind::Concave | DatasetKind::Increasing => {
                (0..steps).map(|_| 1.0 - rng.gen::<f64>()).collect()
            }
            DatasetKind::MostlyIncreasing => (0..steps)
                .map(|_| rng.gen_range(MOSTLY_INCREASING_DIP..1.0))
                .collect(),
        };
        match kind {
            DatasetKind::Concave => inc.sort_by(|a, b| b.total_cmp(a)),
            _ => shape_sections(&mut inc, rng),
        }
        let mut values = Vec::with_capacity(length);
        let mut acc = 0.0f64;
        values.push(0.0);
        for d in inc {
            acc += d;
            if kind == DatasetKind::MostlyIncreasing {
                acc = acc.max(0.0);
            }
            values.push(acc);
        }
        let top = values.iter().copied().fold(0.0, f64::max);
        if top <= 0.0 {
            continue;
        }
        for v in &mut values {
            *v /= top;
        }
        return values;
    }
}

fn shape_sections<R: Rng + ?Sized>(inc: &mut [f64], rng: &mut R) {
    let sections = rng.gen_range(1..=MAX_SECTIONS).min(inc.len());
    let mut cuts: Vec<usize> = (1..inc.len()).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(sections - 1).collect();
    cuts.sort_unstable();
    cuts.push(inc.len());
    let mut descending = rng.gen::<bool>();
    let mut start = 0;
    for end in cuts {
        let part = &mut inc[start..end];
        if descending {
            part.sort_by(|a, b| b.total_cmp(a));
        } else {
            part.sort_by(|a, b| a.total_cmp(b));
        }
        descending = !descending;
        start = end;
    }
}

/// Pareto draw conditioned above `cost`: `cost * (1 - u)^(-1 / alpha)`.
pub fn pareto_above(cost: f64, alpha: f64, u: f64) -> f64 {
    cost * (1.0 - u).powf(-1.0 / alpha)
}

/// Maximal valuation strictly above `bundle_cost`.
pub fn draw_max_value<R: Rng + ?Sized>(rng: &mut R, alpha: f64, bundle_cost: f64) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            let v = pareto_above(bundle_cost, alpha, u);
            if v > bundle_cost && v.is_finite() {
                return v;
            }
        }
    }
}

/// `max_value * (v^1 x ... x v^R)` on the grid of `cap`.
pub fn tensor_product(max_value: f64, components: &[Vec<f64>], cap: &ResourceCapacity) -> Result<ValuationTensor> {
    if components.len() != cap.resources() {
        return Err(Error::DimensionMismatch {
            expected: cap.resources(),
            found: components.len(),
        });
    }
    for (c, &m) in components.iter().zip(cap.units()) {
        if c.len() != m as usize + 1 {
            return Err(Error::DimensionMismatch {
                expected: m as usize + 1,
                found: c.len(),
            });
        }
    }
    let mut values = Vec::with_capacity(cap.cells());
    let mut odo = Odometer::new(cap.units());
    while !odo.done() {
        let p: f64 = odo
            .coords
            .iter()
            .zip(components)
            .map(|(&a, c)| c[a as usize])
            .product();
        values.push(max_value * p);
        odo.advance();
    }
    ValuationTensor::new(cap.clone(), values)
}

pub fn build_dataset(spec: &DatasetSpec) -> Result<Vec<GeneratedClient>> {
    spec.validate()?;
    let cap = spec.capacity()?;
    let costs = match &spec.cost_source {
        CostSource::Synthetic => None,
        CostSource::Csv(path) => Some(read_cost_csv(path, spec.clients)?),
    };
    let lognormal = LogNormal::new(0.0, 1.0).expect("valid log-normal parameters");
    (0..spec.clients)
        .map(|k| {
            let mut rng = client_rng(spec.seed, k, 0);
            let synthetic_cost = lognormal.sample(&mut rng);
            let bundle_cost = match &costs {
                Some(c) => c[k],
                None => synthetic_cost,
            };
            let max_value = draw_max_value(&mut rng, spec.pareto_index, bundle_cost);
            let components: Vec<Vec<f64>> = spec
                .units
                .iter()
                .enumerate()
                .map(|(r, &m)| {
                    let mut rng = client_rng(spec.seed, k, r as u64 + 1);
                    gen_component(spec.kind, m as usize + 1, &mut rng)
                })
                .collect();
            let valuation = tensor_product(max_value, &components, &cap)?;
            Ok(GeneratedClient {
                agent_id: agent_id(k),
                components,
                max_value,
                bundle_cost,
                valuation,
            })
        })
        .collect()
}

/// Reads `agent_id,cost` rows; agent ids must be `client_<k>` for every
/// `k < clients`. All offending rows are reported together.
pub fn read_cost_csv(path: &Path, clients: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::CostFile(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "agent_id" || &headers[1] != "cost" {
        return Err(Error::CostFile(format!(
            "{}: header must be `agent_id,cost`",
            path.display()
        )));
    }
    let mut costs = vec![None; clients];
    let mut problems = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let id = row.get(0).unwrap_or("");
        let k = id
            .strip_prefix("client_")
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k < clients);
        let Some(k) = k else {
            problems.push(format!("line {line}: unknown agent `{id}`"));
            continue;
        };
        match row.get(1).unwrap_or("").parse::<f64>() {
            Ok(c) if c.is_finite() && c > 0.0 => {
                if costs[k].replace(c).is_some() {
                    problems.push(format!("line {line}: duplicate agent `{id}`"));
                }
            }
            _ => problems.push(format!(
                "line {line}: cost `{}` must be a positive number",
                row.get(1).unwrap_or("")
            )),
        }
    }
    let missing: Vec<String> = (0..clients).filter(|&k| costs[k].is_none()).map(agent_id).collect();
    if !missing.is_empty() {
        problems.push(format!("missing agents: {}", missing.join(", ")));
    }
    if !problems.is_empty() {
        return Err(Error::CostFile(format!("{}: {}", path.display(), problems.join("; "))));
    }
    Ok(costs.into_iter().map(|c| c.expect("checked above")).collect())
}

/// Checks a component against the shape of its kind.
pub fn validate_component(kind: DatasetKind, values: &[f64]) -> Result<()> {
    let fail = |msg: String| Err(Error::Validation(format!("{kind} component: {msg}")));
    if values.len() < 2 || values[0] != 0.0 {
        return fail("must start at 0 and have two points".into());
    }
    if values.iter().any(|v| !(0.0..=1.0 + SHAPE_TOL).contains(v)) {
        return fail("values must lie in [0, 1]".into());
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    match kind {
        DatasetKind::Concave | DatasetKind::Increasing => {
            if let Some(i) = diffs.iter().position(|&d| d <= 0.0) {
                return fail(format!("not strictly increasing at {}", i + 1));
            }
            if (values[values.len() - 1] - 1.0).abs() > SHAPE_TOL {
                return fail("must end at 1".into());
            }
            if kind == DatasetKind::Concave {
                if let Some(i) = diffs.windows(2).position(|w| w[1] > w[0] + SHAPE_TOL) {
                    return fail(format!("marginal value rises at {}", i + 2));
                }
            }
        }
        DatasetKind::MostlyIncreasing => {
            let top = values.iter().copied().fold(0.0, f64::max);
            if (top - 1.0).abs() > SHAPE_TOL {
                return fail("maximum must be 1".into());
            }
        }
    }
    Ok(())
}

/// Whether every axis of `tensor` has nonincreasing first differences, up to
/// a tolerance relative to the largest value.
pub fn is_concave_along_axes(tensor: &ValuationTensor) -> bool {
    let cap = tensor.capacity();
    let tol = SHAPE_TOL * tensor.max_value().max(1.0);
    let units = cap.units();
    let mut odo = Odometer::new(units);
    while !odo.done() {
        let cell = odo.index;
        for (r, &m) in units.iter().enumerate() {
            let a = odo.coords[r];
            if a >= 1 && a < m {
                let s = cap.strides()[r];
                let v = tensor.values();
                let left = v[cell] - v[cell - s];
                let right = v[cell + s] - v[cell];
                if right > left + tol {
                    return false;
                }
            }
        }
        odo.advance();
    }
    true
}

const SPEC_FILE: &str = "spec.cfg";
const META_FILE: &str = "meta.csv";

pub fn client_file(k: usize) -> String {
    format!("client_{k}.vft")
}

/// Writes `spec.cfg`, one `client_<k>.vft` per client and `meta.csv`.
pub fn write_dataset(dir: &Path, spec: &DatasetSpec, clients: &[GeneratedClient]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SPEC_FILE), spec.to_cfg())?;
    let mut meta = csv::Writer::from_path(dir.join(META_FILE))?;
    meta.write_record(["agent_id", "bundle_cost", "max_value"])?;
    for (k, c) in clients.iter().enumerate() {
        let file = fs::File::create(dir.join(client_file(k)))?;
        vft::write_vft(&c.valuation, std::io::BufWriter::new(file))?;
        meta.write_record([
            c.agent_id.clone(),
            format!("{:?}", c.bundle_cost),
            format!("{:?}", c.max_value),
        ])?;
    }
    meta.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub spec: Option<DatasetSpec>,
    pub capacity: ResourceCapacity,
    pub bids: Vec<Bid>,
}

/// Loads a dataset directory. `client_<k>.vft` files are read in order of
/// `k`; a directory without them falls back to every `*.vft` by file name,
/// with the file stem as agent id.
pub fn read_dataset(dir: &Path) -> Result<LoadedDataset> {
    let spec_path = dir.join(SPEC_FILE);
    let spec = if spec_path.exists() {
        Some(DatasetSpec::from_cfg(&fs::read_to_string(&spec_path)?)?)
    } else {
        None
    };
    let mut clients: Vec<(usize, PathBuf)> = Vec::new();
    let mut others: Vec<(String, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("vft") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
        match stem.strip_prefix("client_").and_then(|k| k.parse().ok()) {
            Some(k) => clients.push((k, path)),
            None => others.push((stem, path)),
        }
    }
    let files: Vec<(String, PathBuf)> = if clients.is_empty() {
        others.sort();
        others
    } else {
        clients.sort();
        clients.into_iter().map(|(k, p)| (agent_id(k), p)).collect()
    };
    if files.is_empty() {
        return Err(Error::NoBids);
    }
    let mut bids = Vec::with_capacity(files.len());
    for (id, path) in files {
        let file = fs::File::open(&path)?;
        let tensor = vft::read_vft(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Parse { location, message } => Error::Parse {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })?;
        bids.push(Bid::new(id, tensor));
    }
    let capacity = bids[0].valuation.capacity().clone();
    for b in &bids {
        if b.valuation.capacity() != &capacity {
            return Err(Error::AgentCapacityMismatch {
                agent: b.agent_id.clone(),
                expected: capacity.to_string(),
                found: b.valuation.capacity().to_string(),
            });
        }
    }
    Ok(LoadedDataset { spec, capacity, bids })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pareto_infimum() {
        assert_eq!(pareto_above(2.5, 1.1, 0.0), 2.5);
        assert!(pareto_above(1.0, 1.1, 0.5) > 1.0);
    }

    #[test]
    fn components_have_their_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in DatasetKind::ALL {
            for len in [2, 3, 9, 64] {
                for _ in 0..50 {
                    let c = gen_component(kind, len, &mut rng);
                    assert_eq!(c.len(), len);
                    validate_component(kind, &c).unwrap();
                }
            }
        }
    }

    #[test]
    fn cfg_round_trip() {
        let mut spec = DatasetSpec::new(DatasetKind::MostlyIncreasing, 5, vec![3, 7], 99);
        spec.cost_source = CostSource::Csv(PathBuf::from("costs.csv"));
        assert_eq!(DatasetSpec::from_cfg(&spec.to_cfg()).unwrap(), spec);
        assert!(DatasetSpec::from_cfg("kind = concave\n").is_err());
        assert!(DatasetSpec::from_cfg("kind = convex\nclients = 1\nunits = 2\nseed = 1\n").is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = DatasetSpec::new(DatasetKind::Concave, 0, vec![3], 1);
        assert!(spec.validate().is_err());
        spec.clients = 2;
        spec.pareto_index = 1.0;
        assert!(spec.validate().is_err());
        spec.pareto_index = 1.1;
        spec.validate().unwrap();
    }

    #[test]
    fn tensor_product_values() {
        let cap = ResourceCapacity::new(vec![1, 2]).unwrap();
        let t = tensor_product(2.0, &[vec![0.0, 1.0], vec![0.0, 0.5, 1.0]], &cap).unwrap();
        assert_eq!(t.values(), &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0]);
        assert!(tensor_product(2.0, &[vec![0.0, 1.0]], &cap).is_err());
    }

    #[test]
    fn concave_tensors_pass_axis_check() {
        let spec = DatasetSpec::new(DatasetKind::Concave, 4, vec![8, 5], 7);
        for c in build_dataset(&spec).unwrap() {
            assert!(is_concave_along_axes(&c.valuation));
            assert!(c.max_value > c.bundle_cost);
        }
        let cap = ResourceCapacity::new(vec![2]).unwrap();
        let convex = ValuationTensor::new(cap, vec![0.0, 1.0, 3.0]).unwrap();
        assert!(!is_concave_along_axes(&convex));
    }
}
