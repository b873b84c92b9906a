//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::class_a::{self, ClassAError, ClassASpec};
use crate::class_b::{ClassBError, Construction};
use crate::code::{CodeError, CodeParams, CodeSpec};
use crate::gf::{FieldSpec, GfError};
use crate::layout::{CodeArray, DataArray, LayoutError};
use crate::metrics::{self, MetricsError, OpCounter};
use crate::oracle;
use crate::repair::{self, RepairError};

pub const SEED_ENV: &str = "PBDSS_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Unrecoverable(String),
    #[error("verification failed:\n{0}")]
    Verification(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Unrecoverable(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io { .. } | CliError::Other(_) => 1,
        }
    }
}

impl From<CodeError> for CliError {
    fn from(e: CodeError) -> Self {
        match e {
            CodeError::ClassA(ClassAError::Unrecoverable { .. }) => CliError::Unrecoverable(e.to_string()),
            CodeError::ClassA(ClassAError::NotMds { .. }) => CliError::Verification(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<RepairError> for CliError {
    fn from(e: RepairError) -> Self {
        match e {
            RepairError::Unrecoverable { .. } => CliError::Unrecoverable(e.to_string()),
            RepairError::Code(c) => c.into(),
            RepairError::Precondition(_) => CliError::Validation(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Code(c) => c.into(),
            MetricsError::Repair(r) => r.into(),
            MetricsError::Inapplicable(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ClassAError> for CliError {
    fn from(e: ClassAError) -> Self {
        CodeError::from(e).into()
    }
}

impl From<ClassBError> for CliError {
    fn from(e: ClassBError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<GfError> for CliError {
    fn from(e: GfError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<LayoutError> for CliError {
    fn from(e: LayoutError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "pbdss", version, about = "Piggybacked MDS storage codes with cheap-repair sum parities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a code and write its spec as JSON.
    Construct(ConstructArgs),
    /// Encode one stripe of random data or of a small input file.
    Encode(EncodeArgs),
    /// Fail nodes and repair them, reporting every read.
    RepairSim(RepairArgs),
    /// Emit the comparison tables as CSV or JSON.
    Tables(TablesArgs),
    /// Check fault tolerance, roundtrips and bounds against brute force.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct CodeArgs {
    /// Read the code from a spec file instead of building it.
    #[arg(long, conflicts_with_all = ["k", "n_a", "n_b", "tau"])]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Length of the Class A code.
    #[arg(long)]
    pub n_a: Option<usize>,
    /// Length of the Class B code (`n_B = k` means no Class B nodes).
    #[arg(long)]
    pub n_b: Option<usize>,
    /// Number of piggybacked Class A parity nodes.
    #[arg(long)]
    pub tau: Option<usize>,
    /// 1: closed-form Class B sums, 2: greedy layout.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub construction: u8,
    #[arg(long, requires = "field_m")]
    pub field_p: Option<u32>,
    #[arg(long, requires = "field_p")]
    pub field_m: Option<u32>,
    /// Shuffle ties of the greedy layout with the run seed.
    #[arg(long)]
    pub random_ties: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl CodeArgs {
    pub fn seed(&self) -> Result<u64, CliError> {
        resolve_seed(self.seed)
    }

    pub fn params(&self) -> Result<CodeParams, CliError> {
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| CliError::Validation(format!("--{name} is required unless --spec is given")))
        };
        let k = need(self.k, "k")?;
        let n_a = need(self.n_a, "n-a")?;
        let n_b = need(self.n_b, "n-b")?;
        let tau = need(self.tau, "tau")?;
        let construction = Construction::try_from(self.construction).map_err(CliError::Validation)?;
        let mut params = CodeParams::new(k, n_a, n_b, tau).construction(construction);
        if let (Some(p), Some(m)) = (self.field_p, self.field_m) {
            params = params.field(FieldSpec::with_default_reduction(p, m)?);
        }
        if self.random_ties {
            params.tie_seed = Some(self.seed()?);
        }
        Ok(params)
    }

    pub fn code(&self) -> Result<CodeSpec, CliError> {
        match &self.spec {
            Some(path) => Ok(CodeSpec::from_json(&read_text(path)?)?),
            None => Ok(CodeSpec::build(&self.params()?)?),
        }
    }
}

#[derive(Debug, Args)]
pub struct ConstructArgs {
    #[command(flatten)]
    pub code: CodeArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub code: CodeArgs,
    /// Bytes to place in the data array, zero padded; random data if absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    #[command(flatten)]
    pub code: CodeArgs,
    /// Encoded array to damage; random data if absent.
    #[arg(long)]
    pub array: Option<PathBuf>,
    /// Drop this many trailing Class B nodes first.
    #[arg(long, default_value_t = 0)]
    pub punctured: usize,
    /// Repair these nodes one at a time; all data nodes if empty.
    #[arg(long, value_delimiter = ',')]
    pub node: Vec<usize>,
    /// Fail these nodes together and decode.
    #[arg(long, value_delimiter = ',', conflicts_with = "node")]
    pub fail: Vec<usize>,
    /// Write the read traces as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    /// 2: repair complexity and bandwidth against a ring-based baseline;
    /// 3: closed-form against greedy Class B layout.
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
    pub table: u8,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Largest `k` in the sweep.
    #[arg(long, default_value_t = 8)]
    pub max_k: usize,
    /// Random data arrays per code in the roundtrip checks.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Verify only this spec file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn resolve_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Validation(format!("{SEED_ENV}={v:?} is not an integer"))),
        Err(_) => Ok(flag),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io { path: path.into(), source })
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Construct(a) => cmd_construct(&a, out),
        Command::Encode(a) => cmd_encode(&a, out),
        Command::RepairSim(a) => cmd_repair_sim(&a, out),
        Command::Tables(a) => cmd_tables(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
    }
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::Other(e.to_string()))
}

pub fn cmd_construct(args: &ConstructArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = args.code.code()?;
    let report = metrics::formula_for(&spec);
    say(out, format_args!("code ({}, {}) over {}: n_A = {}, n_B = {}, tau = {}", spec.n(), spec.k(), spec.field().spec(), spec.n_a(), spec.n_b(), spec.tau()))?;
    say(out, format_args!("fault tolerance f = {}", report.f))?;
    say(out, format_args!("rate {:.4} (bounds {:.4} .. {:.4})", report.rate, report.rate_lower, report.rate_upper))?;
    match report.lambda_bound {
        Some(b) => say(out, format_args!("repair bandwidth bound {b:.4}"))?,
        None => say(out, "repair bandwidth bound: none without Class B nodes")?,
    }
    let padded: usize = spec.class_b().nodes().iter().map(|n| n.padding).sum();
    if padded > 0 {
        say(out, format_args!("greedy layout left {padded} parity slots empty"))?;
    }
    match &args.out {
        Some(path) => write_bytes(path, spec.to_json().as_bytes()),
        None => say(out, spec.to_json()),
    }
}

/// Packs bytes into symbols of `floor(log2 q)` bits each, least significant first.
fn data_from_bytes(bytes: &[u8], spec: &CodeSpec) -> Result<DataArray, CliError> {
    let k = spec.k();
    let bits = 31 - spec.field().order().leading_zeros();
    let capacity = (k * k) as u64 * bits as u64;
    if bytes.len() as u64 * 8 > capacity {
        return Err(CliError::Validation(format!(
            "input is {} bytes; one stripe holds {} bits",
            bytes.len(),
            capacity
        )));
    }
    let bit = |x: u64| bytes.get((x / 8) as usize).map_or(0, |b| (b >> (x % 8)) & 1) as u32;
    let symbols = (0..(k * k) as u64)
        .map(|s| {
            let v = (0..bits as u64).fold(0u32, |acc, b| acc | bit(s * bits as u64 + b) << b);
            spec.field().elem(v)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DataArray::new(k, symbols))
}

pub fn cmd_encode(args: &EncodeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = args.code.code()?;
    let data = match &args.input {
        Some(path) => data_from_bytes(&fs::read(path).map_err(|source| CliError::Io { path: path.into(), source })?, &spec)?,
        None => DataArray::random(spec.k(), spec.field(), &mut ChaCha8Rng::seed_from_u64(args.code.seed()?)),
    };
    let mut ops = OpCounter::default();
    let arr = spec.encode(&data, &mut ops)?;
    write_bytes(&args.out, &arr.to_bytes())?;
    say(out, format_args!("encoded {} x {} array, {} additions, {} multiplications", spec.k(), spec.n(), ops.additions, ops.multiplications))
}

#[derive(Serialize)]
struct NodeTrace<'a> {
    node: usize,
    #[serde(flatten)]
    trace: &'a serde_json::Value,
}

pub fn cmd_repair_sim(args: &RepairArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = repair::puncture(&args.code.code()?, args.punctured)?;
    let arr = match &args.array {
        Some(path) => {
            let bytes = fs::read(path).map_err(|source| CliError::Io { path: path.into(), source })?;
            let arr = CodeArray::from_bytes(&bytes)?;
            if arr.k() != spec.k() || arr.n() < spec.n() || arr.field() != spec.field().spec() {
                return Err(CliError::Validation("array does not match the code".into()));
            }
            arr.truncate(spec.n())
        }
        None => {
            let data = DataArray::random(spec.k(), spec.field(), &mut ChaCha8Rng::seed_from_u64(args.code.seed()?));
            spec.encode(&data, &mut OpCounter::default())?
        }
    };
    if !args.fail.is_empty() {
        let restored = repair::repair_multi(&arr, &args.fail, &spec)?;
        if restored != arr {
            return Err(CliError::Other("decoded array differs from the original".into()));
        }
        return say(out, format_args!("nodes {:?} recovered", args.fail));
    }
    let nodes: Vec<usize> = if args.node.is_empty() { (0..spec.k()).collect() } else { args.node.clone() };
    let mut dump = Vec::new();
    let mut data_reads = 0;
    for &node in &nodes {
        let mut broken = arr.clone();
        broken.erase_node(node);
        let (column, total, json) = if node < spec.k() {
            let (column, trace) = repair::repair_data_node(&broken, node, &spec)?;
            data_reads += trace.total();
            let fallback = if trace.fallbacks().is_empty() {
                String::new()
            } else {
                format!(", Class A fallback for rows {:?}", trace.fallbacks())
            };
            say(out, format_args!("node {node}: {} reads{fallback}", trace.total()))?;
            (column, trace.total(), serde_json::to_value(&trace).expect("trace serializes"))
        } else {
            let r = repair::repair_parity_node(&broken, node, &spec)?;
            say(out, format_args!("node {node}: {} reads ({} per symbol)", r.total_reads(), r.total_reads() as f64 / spec.k() as f64))?;
            let total = r.total_reads();
            let rows: Vec<_> = r.rows.iter().map(|t| serde_json::to_value(t).expect("trace serializes")).collect();
            (r.column, total, serde_json::json!({ "rows": rows, "total": total }))
        };
        if column != arr.column(node) {
            return Err(CliError::Other(format!("node {node} repaired incorrectly")));
        }
        let _ = total;
        dump.push(serde_json::to_value(NodeTrace { node, trace: &json }).expect("trace serializes"));
    }
    let data_nodes = nodes.iter().filter(|&&c| c < spec.k()).count();
    if data_nodes > 0 {
        say(out, format_args!("average lambda over data nodes {:.4}", data_reads as f64 / (data_nodes * spec.k()) as f64))?;
    }
    if let Some(path) = &args.out {
        write_bytes(path, serde_json::to_string_pretty(&dump).expect("traces serialize").as_bytes())?;
    }
    Ok(())
}

fn emit<T: Serialize>(rows: &[T], format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => Ok(serde_json::to_vec_pretty(rows).expect("rows serialize")),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| CliError::Other(e.to_string()))?;
            }
            w.into_inner().map_err(|e| CliError::Other(e.to_string()))
        }
    }
}

pub fn cmd_tables(args: &TablesArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    let bytes = if args.table == 2 {
        let rows = metrics::COMPARISON_CASES
            .iter()
            .map(|c| metrics::comparison_row(c, seed))
            .collect::<Result<Vec<_>, _>>()?;
        emit(&rows, args.format)?
    } else {
        let rows = metrics::LAYOUT_CASES
            .iter()
            .map(|&(n, k, n_a, tau)| metrics::layout_row(n, k, n_a, tau, seed))
            .collect::<Result<Vec<_>, _>>()?;
        emit(&rows, args.format)?
    };
    match &args.out {
        Some(path) => write_bytes(path, &bytes),
        None => out.write_all(&bytes).map_err(|e| CliError::Other(e.to_string())),
    }
}

/// One failed check with what is needed to reproduce it.
#[derive(Debug, Clone)]
pub struct Failure(pub String);

/// Closed-form fault tolerance against exhaustive search, for one shape.
pub fn check_fault_tolerance(n_a: usize, k: usize, tau: usize) -> Result<usize, Failure> {
    let spec = ClassASpec::with_default_field(n_a, k, tau)
        .map_err(|e| Failure(format!("Class A ({n_a},{k}) tau={tau}: {e}")))?;
    let predicted = class_a::fault_tolerance(n_a, k, tau).f;
    let patterns = (1..=predicted + 1).map(|t| class_a::binomial(n_a, t) as usize).sum();
    let found = oracle::brute_force_fault_tolerance(&spec);
    if found == predicted {
        Ok(patterns)
    } else {
        Err(Failure(format!("Class A ({n_a},{k}) tau={tau}: formula f = {predicted}, exhaustive search f = {found}")))
    }
}

/// Shapes of the fault-tolerance sweep.
pub fn sweep_shapes(min_k: usize, max_k: usize) -> Vec<(usize, usize, usize)> {
    (min_k..=max_k)
        .flat_map(|k| (k + 2..=(k + 4).min(2 * k)).flat_map(move |n_a| (1..n_a - k).map(move |tau| (n_a, k, tau))))
        .collect()
}

/// Every single-node repair and every multi-node pattern up to `f` data and
/// Class A nodes, on `trials` random arrays.
pub fn check_roundtrips(spec: &CodeSpec, trials: usize, seed: u64) -> Result<usize, Failure> {
    let label = |what: String| Failure(format!("({}, {}) n_A={} tau={} {:?}: {what}", spec.n(), spec.k(), spec.n_a(), spec.tau(), spec.class_b().construction()));
    let f = class_a::fault_tolerance(spec.n_a(), spec.k(), spec.tau()).f;
    let mut checks = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let data = DataArray::random(spec.k(), spec.field(), &mut rng);
        let arr = spec.encode(&data, &mut OpCounter::default()).map_err(|e| label(e.to_string()))?;
        for j in 0..spec.n() {
            let mut broken = arr.clone();
            broken.erase_node(j);
            let column = if j < spec.k() {
                repair::repair_data_node(&broken, j, spec).map(|r| r.0)
            } else {
                repair::repair_parity_node(&broken, j, spec).map(|r| r.column)
            }
            .map_err(|e| label(format!("node {j}: {e}")))?;
            if column != arr.column(j) {
                return Err(label(format!("node {j} repaired incorrectly")));
            }
            checks += 1;
        }
        for size in 2..=f {
            for pattern in (0..spec.n_a()).combinations(size) {
                let restored = repair::repair_multi(&arr, &pattern, spec).map_err(|e| label(format!("{pattern:?}: {e}")))?;
                if restored != arr {
                    return Err(label(format!("{pattern:?} decoded incorrectly")));
                }
                checks += 1;
            }
        }
    }
    Ok(checks)
}

/// Measured repair bandwidth against its closed-form bound.
pub fn check_bound(spec: &CodeSpec, seed: u64) -> Result<(), Failure> {
    let Some(bound) = metrics::read_bound(spec.n(), spec.k(), spec.n_a(), spec.tau()) else {
        return Ok(());
    };
    let m = metrics::measured_lambda(spec, seed).map_err(|e| Failure(e.to_string()))?;
    match m.per_node.iter().position(|&r| r > bound) {
        None => Ok(()),
        Some(j) => Err(Failure(format!(
            "({}, {}) n_A={} tau={} {:?}: node {j} took {} reads, bound {bound}",
            spec.n(),
            spec.k(),
            spec.n_a(),
            spec.tau(),
            spec.class_b().construction(),
            m.per_node[j]
        ))),
    }
}

/// All codes of the roundtrip sweep: every Class B length and both layouts.
pub fn sweep_codes(min_k: usize, max_k: usize) -> Vec<CodeSpec> {
    let mut codes = Vec::new();
    for (n_a, k, tau) in sweep_shapes(min_k, max_k) {
        if tau + 2 > k {
            continue;
        }
        for n_b in k..2 * k - tau {
            for c in [Construction::Sums, Construction::Heuristic] {
                if let Ok(spec) = CodeSpec::build(&CodeParams::new(k, n_a, n_b, tau).construction(c)) {
                    codes.push(spec);
                }
            }
        }
    }
    codes
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    let mut failures = Vec::new();
    if let Some(path) = &args.spec {
        let spec = CodeSpec::from_json(&read_text(path)?)?;
        let predicted = class_a::fault_tolerance(spec.n_a(), spec.k(), spec.tau()).f;
        let found = oracle::brute_force_fault_tolerance(spec.class_a());
        if found != predicted {
            failures.push(format!("fault tolerance: formula {predicted}, search {found}"));
        }
        for r in [check_roundtrips(&spec, args.trials, seed).map(|_| ()), check_bound(&spec, seed)] {
            if let Err(Failure(msg)) = r {
                failures.push(msg);
            }
        }
    } else {
        if args.max_k < 4 {
            return Err(CliError::Validation("--max-k must be at least 4".into()));
        }
        let shapes = sweep_shapes(4, args.max_k);
        let results: Vec<_> = shapes.par_iter().map(|&(n_a, k, tau)| check_fault_tolerance(n_a, k, tau)).collect();
        let patterns: usize = results.iter().filter_map(|r| r.as_ref().ok()).sum();
        failures.extend(results.into_iter().filter_map(|r| r.err().map(|f| f.0)));
        say(out, format_args!("fault tolerance: {} shapes, {patterns} erasure patterns", shapes.len()))?;

        let codes = sweep_codes(4, args.max_k.min(6));
        let results: Vec<_> = codes
            .par_iter()
            .map(|c| check_roundtrips(c, args.trials, seed).and_then(|n| check_bound(c, seed).map(|_| n)))
            .collect();
        let checks: usize = results.iter().filter_map(|r| r.as_ref().ok()).sum();
        failures.extend(results.into_iter().filter_map(|r| r.err().map(|f| f.0)));
        say(out, format_args!("roundtrips and bounds: {} codes, {checks} repairs", codes.len()))?;
    }
    if failures.is_empty() {
        say(out, "PASS")
    } else {
        Err(CliError::Verification(failures.join("\n")))
    }
}
