//! Command-line front end.
//!
//! Every subcommand prints one record: `key: value` lines by default, or a
//! single JSON line with `--format json`. Exit codes: 0 ok, 1 guarantee not
//! satisfied or verdict false, 2 infeasible or invalid input, 3 I/O or parse
//! failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{distance_stats, is_t_disjunct, ratio_f64, Disjunctness, DistanceStats, StatsMode};
use crate::bounds::{check, plan, realize, GuaranteeInputs, Model, PlanModel, PlanResult};
use crate::concat::{concatenate_prefix, TestMatrix};
use crate::error::{Error, Result};
use crate::field::build_field;
use crate::qary::{gv_construct, rs_generate, LinearCode};
use crate::simulate::{run_experiment, DefectKind, DefectiveModel};

#[derive(Parser, Debug)]
#[command(name = "disjunct", version, about = "Group-testing matrices from concatenated q-ary codes")]
pub struct Cli {
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Choose q, m, k and the distance target for (N, t, eps).
    Plan(PlanArgs),
    /// Build a concatenated test matrix and write it to a file.
    Construct(ConstructArgs),
    /// Distance statistics d, D, mean and D2 of a matrix file.
    Stats(StatsArgs),
    /// Evaluate a recovery guarantee on a matrix file.
    Certify(CertifyArgs),
    /// Exhaustive t-disjunctness check.
    Verify(VerifyArgs),
    /// Seeded recovery experiment with the cover decoder.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

impl ModelArg {
    fn plan_model(self) -> PlanModel {
        match self {
            ModelArg::One => PlanModel::Model1,
            ModelArg::Two => PlanModel::Model2,
        }
    }

    fn defect_kind(self) -> DefectKind {
        match self {
            ModelArg::One => DefectKind::Model1,
            ModelArg::Two => DefectKind::Model2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CertifyModel {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "2d2")]
    TwoD2,
    Classical,
}

impl CertifyModel {
    fn model(self) -> Model {
        match self {
            CertifyModel::One => Model::Model1,
            CertifyModel::Two => Model::Model2,
            CertifyModel::TwoD2 => Model::Model2D2,
            CertifyModel::Classical => Model::Classical,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct PlanArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub t: u64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = ModelArg::Two)]
    pub model: ModelArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Gv,
    Rs,
}

#[derive(Args, Debug)]
pub struct ConstructArgs {
    #[arg(long, value_enum, default_value_t = Kind::Gv)]
    pub kind: Kind,
    /// Plan for this many items (with --t and --eps) instead of giving q, m.
    #[arg(long, requires_all = ["t", "eps"], conflicts_with_all = ["q", "k", "m", "d_target", "s"])]
    pub n: Option<u64>,
    #[arg(long)]
    pub t: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModelArg::Two)]
    pub model: ModelArg,
    #[arg(long)]
    pub q: Option<u64>,
    /// Dimension; for gv, defaults to the largest feasible one.
    #[arg(long)]
    pub k: Option<usize>,
    /// Code length (evaluation points for rs).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub d_target: Option<usize>,
    /// Relative distance parameter: d_target = ceil(m (1 - 1/s)).
    #[arg(long, conflicts_with = "d_target")]
    pub s: Option<u64>,
    /// Keep only the first columns of the concatenation.
    #[arg(long)]
    pub n_keep: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the packed GTMB format instead of ASCII GTM1.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Args, Debug, Clone)]
pub struct StatsModeArgs {
    /// Estimate from this many random pairs instead of all pairs.
    #[arg(long, requires = "seed")]
    pub sampled_pairs: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl StatsModeArgs {
    fn mode(&self) -> StatsMode {
        match (self.sampled_pairs, self.seed) {
            (Some(pairs), Some(seed)) => StatsMode::Sampled { pairs, seed },
            _ => StatsMode::Exact,
        }
    }
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    pub matrix: PathBuf,
    #[command(flatten)]
    pub mode: StatsModeArgs,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    pub matrix: PathBuf,
    #[arg(long)]
    pub t: u64,
    /// Failure budget; not used by the classical check.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum, default_value_t = CertifyModel::Two)]
    pub model: CertifyModel,
    #[command(flatten)]
    pub mode: StatsModeArgs,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub matrix: PathBuf,
    #[arg(long)]
    pub t: usize,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    pub matrix: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub t: usize,
    #[arg(long)]
    pub trials: u64,
    #[arg(long)]
    pub seed: u64,
}

/// Outcome of a subcommand: the record to print and the exit status.
struct Outcome {
    record: Value,
    code: i32,
}

impl Outcome {
    fn ok(record: Value) -> Self {
        Outcome { record, code: 0 }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Parse { .. } => 3,
        _ => 2,
    }
}

/// Git-style blob hash of `bytes`, with SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("records serialize")
}

fn read_matrix(path: &Path) -> Result<(TestMatrix, String)> {
    let bytes = std::fs::read(path)?;
    let matrix = TestMatrix::read(BufReader::new(bytes.as_slice()))?;
    Ok((matrix, content_hash(&bytes)))
}

fn stats_value(s: &DistanceStats) -> Value {
    json!({
        "N": s.n,
        "d_min": s.d_min,
        "D": s.d_avg.to_string(),
        "D_f64": s.d_avg_f64(),
        "mean_pairwise": s.mean_pairwise.to_string(),
        "mean_pairwise_f64": s.mean_pairwise_f64(),
        "D2": s.second_moment.to_string(),
        "D2_f64": ratio_f64(&s.second_moment),
        "exact": s.exact,
    })
}

fn cmd_plan(args: &PlanArgs) -> Result<Outcome> {
    let p = plan(args.n, args.t, args.eps, args.model.plan_model())?;
    let mut record = to_value(&p);
    record["epsilon"] = json!(args.eps);
    record["model"] = json!(args.model.plan_model());
    Ok(Outcome::ok(record))
}

fn explicit_code(args: &ConstructArgs) -> Result<LinearCode> {
    let need = |v: Option<usize>, name: &str| {
        v.ok_or_else(|| Error::InvalidInput(format!("--{name} is required without --n")))
    };
    let q = args
        .q
        .ok_or_else(|| Error::InvalidInput("--q is required without --n".into()))?;
    let field = build_field(q)?;
    let m = need(args.m, "m")?;
    match args.kind {
        Kind::Rs => rs_generate(&field, need(args.k, "k")?, m),
        Kind::Gv => {
            let d = match (args.d_target, args.s) {
                (Some(d), _) => d,
                (None, Some(s)) if s >= 1 => (m as u64 * (s - 1)).div_ceil(s) as usize,
                _ => return Err(Error::InvalidInput("gv needs --d-target or --s".into())),
            };
            gv_construct(&field, m, d, args.k)
        }
    }
}

fn cmd_construct(args: &ConstructArgs) -> Result<Outcome> {
    let (code, matrix, planned): (LinearCode, TestMatrix, Option<PlanResult>) = match args.n {
        Some(n) => {
            if args.kind == Kind::Rs {
                return Err(Error::InvalidInput("planned construction uses gv codes".into()));
            }
            let p = plan(n, args.t.unwrap_or(0), args.eps.unwrap_or(0.0), args.model.plan_model())?;
            let (code, matrix) = realize(&p)?;
            (code, matrix, Some(p))
        }
        None => {
            let code = explicit_code(args)?;
            let size = code.size().filter(|&s| s <= u32::MAX as u64);
            let keep = match (args.n_keep, size) {
                (Some(n), _) => n,
                (None, Some(s)) => s as usize,
                (None, None) => return Err(Error::InvalidParams("code too large; pass --n-keep".into())),
            };
            let matrix = concatenate_prefix(&code, keep)?;
            (code, matrix, None)
        }
    };
    let bytes = matrix.to_bytes(args.binary);
    let mut out = BufWriter::new(File::create(&args.out)?);
    out.write_all(&bytes)?;
    out.flush()?;
    let mut record = json!({
        "kind": match args.kind { Kind::Gv => "gv", Kind::Rs => "rs" },
        "q": code.q(),
        "k": code.dimension(),
        "m": code.length(),
        "d_claimed": code.d_claimed(),
        "M": matrix.rows(),
        "N": matrix.cols(),
        "w": matrix.meta().w,
        "D_formula": matrix.meta().d_formula.map(|r| r.to_string()),
        "format": if args.binary { "GTMB" } else { "GTM1" },
        "out": args.out.display().to_string(),
        "sha256": content_hash(&bytes),
    });
    if let Some(p) = planned {
        record["plan"] = to_value(&p);
    }
    Ok(Outcome::ok(record))
}

fn cmd_stats(args: &StatsArgs) -> Result<Outcome> {
    let (matrix, hash) = read_matrix(&args.matrix)?;
    let stats = distance_stats(&matrix, args.mode.mode())?;
    let mut record = stats_value(&stats);
    record["M"] = json!(matrix.rows());
    record["matrix_sha256"] = json!(hash);
    record["mode"] = to_value(&args.mode.mode());
    Ok(Outcome::ok(record))
}

fn cmd_certify(args: &CertifyArgs) -> Result<Outcome> {
    let (matrix, hash) = read_matrix(&args.matrix)?;
    let w = matrix.constant_weight().ok_or(Error::NotConstantWeight)?;
    let stats = distance_stats(&matrix, args.mode.mode())?;
    let inputs = GuaranteeInputs::measured(w as u64, &stats, matrix.rows() as u64)?;
    let eps = match (args.model, args.eps) {
        (CertifyModel::Classical, e) => e.unwrap_or(0.0),
        (_, Some(e)) => e,
        (_, None) => return Err(Error::InvalidInput("--eps is required for this model".into())),
    };
    let report = check(args.model.model(), &inputs, args.t, eps)?;
    let mut record = to_value(&report);
    record["exact_stats"] = json!(stats.exact);
    record["matrix_sha256"] = json!(hash);
    Ok(Outcome {
        code: if report.satisfied { 0 } else { 1 },
        record,
    })
}

fn cmd_verify(args: &VerifyArgs) -> Result<Outcome> {
    let (matrix, hash) = read_matrix(&args.matrix)?;
    let verdict = is_t_disjunct(&matrix, args.t)?;
    let mut record = json!({ "t": args.t, "disjunct": verdict.holds(), "matrix_sha256": hash });
    if let Disjunctness::NotDisjunct { set, item } = &verdict {
        record["witness_set"] = json!(set);
        record["witness_item"] = json!(item);
    }
    Ok(Outcome {
        code: if verdict.holds() { 0 } else { 1 },
        record,
    })
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Outcome> {
    let (matrix, hash) = read_matrix(&args.matrix)?;
    let model = DefectiveModel::new(args.model.defect_kind(), matrix.cols(), args.t)?;
    let report = run_experiment(&matrix, &model, args.trials, args.seed)?;
    let mut record = to_value(&report);
    record["matrix"] = json!(args.matrix.display().to_string());
    record["matrix_sha256"] = json!(hash);
    Ok(Outcome::ok(record))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Plan(_) => "plan",
        Command::Construct(_) => "construct",
        Command::Stats(_) => "stats",
        Command::Certify(_) => "certify",
        Command::Verify(_) => "verify",
        Command::Simulate(_) => "simulate",
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Construct(a) => cmd_construct(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn render(record: &Value, format: Format) -> String {
    match format {
        Format::Json => format!("{record}\n"),
        Format::Text => {
            let mut out = String::new();
            if let Value::Object(map) = record {
                for (k, v) in map {
                    let shown = match v {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    out.push_str(&format!("{k}: {shown}\n"));
                }
            }
            out
        }
    }
}

/// Runs the CLI on `args` (including the program name), writing the record
/// to `out` and diagnostics to `err`; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let threads = cli.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start thread pool: {e}");
            return 2;
        }
    };
    let result = pool.install(|| dispatch(&cli));
    match result {
        Ok(Outcome { mut record, code }) => {
            if let Value::Object(map) = &mut record {
                map.insert("command".into(), json!(command_name(&cli.command)));
                map.insert("exit_code".into(), json!(code));
            }
            if let Err(e) = out.write_all(render(&record, cli.format).as_bytes()) {
                let _ = writeln!(err, "error: {e}");
                return 3;
            }
            code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
