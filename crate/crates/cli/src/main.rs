//! `tnconv`: generate, convert, verify and benchmark tensor networks.
//!
//! Exit codes: 0 success, 1 validation failure or bound violation, 2 usage
//! error.

mod bench;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tnconv::convert::{self, ConversionReport, ConvertOptions, RankSplitStrategy, Target};
use tnconv::network::{self, build_uniform};
use tnconv::verify::{self, ErrorMethod, RelativeError};
use tnconv::{Fill, TensorNetwork, Topology, TruncationPolicy};

#[derive(Parser)]
#[command(name = "tnconv", version, about = "Tensor network topology conversion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a uniform random network.
    Generate(GenerateArgs),
    /// Convert a network to another layout.
    Convert(ConvertArgs),
    /// Relative error between two networks.
    Verify(VerifyArgs),
    /// Run a benchmark table and print CSV.
    Bench(bench::BenchArgs),
    /// Print the rank bounds a conversion will respect.
    Bounds(BoundsArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Layout {
    #[value(alias = "ring")]
    Tc,
    #[value(alias = "train")]
    Tt,
    #[value(alias = "grid")]
    Peps,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    topology: Layout,
    /// Number of nodes (tc, tt).
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Physical dimension of every node.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Rank of every bond.
    #[arg(long, default_value_t = 6)]
    rank: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// All-zero tensors instead of random ones.
    #[arg(long)]
    zeros: bool,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    Tt,
    Tc,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Target {
        match t {
            TargetArg::Tt => Target::Tt,
            TargetArg::Tc => Target::Tc,
        }
    }
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    to: TargetArg,
    /// exact | eps:<float> | maxrank:<int> | eps:<float>,maxrank:<int>
    #[arg(long, default_value = "exact", value_parser = parse_policy)]
    policy: TruncationPolicy,
    /// balanced | fixed:<closing rank>
    #[arg(long, default_value = "balanced", value_parser = parse_split)]
    split: RankSplitStrategy,
    /// Plan the independent steps of each round concurrently.
    #[arg(long)]
    parallel: bool,
    /// Skip the environment norms behind the error bound.
    #[arg(long)]
    no_error_bound: bool,
    /// Converted network; not written when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// JSON report; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Auto,
    Oracle,
    Inner,
}

#[derive(Args)]
struct VerifyArgs {
    /// Reference network.
    a: PathBuf,
    b: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    mode: Mode,
    /// Conversion report whose error bound the error must respect.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    to: TargetArg,
    #[arg(long, default_value = "balanced", value_parser = parse_split)]
    split: RankSplitStrategy,
}

fn parse_policy(s: &str) -> std::result::Result<TruncationPolicy, String> {
    s.parse::<TruncationPolicy>()
        .and_then(TruncationPolicy::validated)
        .map_err(|e| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<RankSplitStrategy, String> {
    if s == "balanced" {
        return Ok(RankSplitStrategy::Balanced);
    }
    let r_d = s
        .strip_prefix("fixed:")
        .ok_or_else(|| format!("expected `balanced` or `fixed:<rank>`, got `{s}`"))?
        .parse::<usize>()
        .map_err(|e| e.to_string())?;
    if r_d == 0 {
        return Err("closing rank must be positive".into());
    }
    Ok(RankSplitStrategy::Fixed { r_d })
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(String),
    Invalid(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

impl From<tnconv::Error> for Failure {
    fn from(e: tnconv::Error) -> Self {
        Failure::Invalid(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Convert(a) => convert_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Bench(a) => bench::run(a),
        Command::Bounds(a) => bounds(a),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read_network(path: &Path) -> Result<TensorNetwork> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    network::deserialize(&text).with_context(|| format!("loading {}", path.display()))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => print_stdout(&format!("{text}\n")),
    }
}

/// Writes to stdout; a closed pipe ends output quietly.
pub(crate) fn print_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e).context("writing to stdout"),
        _ => Ok(()),
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| anyhow!("serializing output: {e}"))
}

fn topology_from(args: &GenerateArgs) -> std::result::Result<Topology, Failure> {
    let need = |v: Option<usize>, flag: &str| v.ok_or_else(|| Failure::Usage(format!("--{flag} is required")));
    Ok(match args.topology {
        Layout::Tc => Topology::Chain { d: need(args.d, "d")? },
        Layout::Tt => Topology::Train { d: need(args.d, "d")? },
        Layout::Peps => Topology::Grid { rows: need(args.rows, "rows")?, cols: need(args.cols, "cols")? },
    })
}

fn generate(args: GenerateArgs) -> std::result::Result<ExitCode, Failure> {
    let topology = topology_from(&args)?;
    let fill = if args.zeros { Fill::Zeros } else { Fill::SeededRandom(args.seed) };
    let net = build_uniform(&topology, args.n, args.rank, fill)?;
    let summary = match net.validate() {
        Ok(()) => format!("{}: {} nodes, {} bonds, valid", net.topology(), net.node_count(), net.bond_count()),
        Err(v) => {
            let list: Vec<String> = v.iter().map(ToString::to_string).collect();
            return Err(Failure::Invalid(anyhow!("generated network is invalid: {}", list.join("; "))));
        }
    };
    write_text(args.output.as_deref(), &network::serialize(&net))?;
    eprintln!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn convert_cmd(args: ConvertArgs) -> std::result::Result<ExitCode, Failure> {
    let net = read_network(&args.input)?;
    let options = ConvertOptions {
        policy: args.policy,
        parallel_steps: args.parallel,
        track_error: !args.no_error_bound,
        split: args.split,
        ..ConvertOptions::default()
    };
    let (out, report) = convert::convert(&net, args.to.into(), &options)?;
    if let Some(path) = &args.output {
        write_text(Some(path), &network::serialize(&out))?;
    }
    write_text(args.report.as_deref(), &json(&report)?)?;
    eprintln!(
        "{} -> {}: {} steps, avg rank {:.2}, max rank {}, {:.3} s",
        report.source,
        report.target,
        report.steps.len(),
        report.avg_rank,
        report.max_rank,
        report.seconds
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct VerifyOutput {
    relative_error: f64,
    method: ErrorMethod,
    clamped: bool,
    resolution: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    within_bound: Option<bool>,
}

fn measure(a: &TensorNetwork, b: &TensorNetwork, mode: Mode) -> tnconv::Result<RelativeError> {
    match mode {
        Mode::Oracle => verify::relative_error_oracle(a, b),
        Mode::Inner => verify::relative_error_inner(a, b),
        Mode::Auto if a.full_size() <= verify::DEFAULT_ORACLE_CAP && b.full_size() <= verify::DEFAULT_ORACLE_CAP => {
            verify::relative_error_oracle(a, b)
        }
        Mode::Auto => verify::relative_error_detailed(a, b),
    }
}

fn verify_cmd(args: VerifyArgs) -> std::result::Result<ExitCode, Failure> {
    let a = read_network(&args.a)?;
    let b = read_network(&args.b)?;
    let err = measure(&a, &b, args.mode)?;
    let bound = match &args.report {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let report: ConversionReport =
                serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))?;
            match report.relative_error_bound {
                Some(b) => Some(b),
                None => return Err(anyhow!("report carries no relative error bound").into()),
            }
        }
        None => None,
    };
    let within = bound.map(|b| err.value <= b + err.resolution);
    let out = VerifyOutput {
        relative_error: err.value,
        method: err.method,
        clamped: err.clamped,
        resolution: err.resolution,
        bound,
        within_bound: within,
    };
    print_stdout(&format!("{}\n", json(&out)?))?;
    if within == Some(false) {
        eprintln!("error: relative error {:e} exceeds bound {:e}", err.value, bound.unwrap_or(0.0));
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn bounds(args: BoundsArgs) -> std::result::Result<ExitCode, Failure> {
    let net = read_network(&args.input)?;
    let plan = convert::predict_with(&net, args.to.into(), args.split)?;
    print_stdout(&format!("{}\n", json(&plan)?))?;
    Ok(ExitCode::SUCCESS)
}
