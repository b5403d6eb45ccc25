//! Benchmark tables: sweeps over `d` with per-seed statistics, as CSV.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};

use tnconv::convert::{self, ConversionReport, ConvertOptions, RankBoundPlan, Target};
use tnconv::network::build_uniform;
use tnconv::verify::{self, DEFAULT_ORACLE_CAP};
use tnconv::{Fill, TensorNetwork, Topology, TruncationPolicy};

use crate::Failure;

pub const CSV_VERSION: u32 = 1;

pub const CSV_COLUMNS: &str = "table,d,stage,seeds,time_mean,time_std,avg_rank_mean,avg_rank_std,\
max_rank_mean,max_rank_std,rel_error_mean,rel_error_std,within_bounds";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Table {
    #[value(name = "tc2tt-exact")]
    Tc2TtExact,
    #[value(name = "tc2tt-approx")]
    Tc2TtApprox,
    #[value(name = "tt2tc-approx")]
    Tt2TcApprox,
    #[value(name = "tc2tt2tc-exact")]
    Tc2Tt2TcExact,
    #[value(name = "tc2tt2tc-approx")]
    Tc2Tt2TcApprox,
}

impl Table {
    fn name(self) -> &'static str {
        match self {
            Table::Tc2TtExact => "tc2tt-exact",
            Table::Tc2TtApprox => "tc2tt-approx",
            Table::Tt2TcApprox => "tt2tc-approx",
            Table::Tc2Tt2TcExact => "tc2tt2tc-exact",
            Table::Tc2Tt2TcApprox => "tc2tt2tc-approx",
        }
    }

    fn exact(self) -> bool {
        matches!(self, Table::Tc2TtExact | Table::Tc2Tt2TcExact)
    }

    fn default_ds(self) -> Vec<usize> {
        match self {
            Table::Tc2TtExact => vec![4, 6, 8, 10],
            Table::Tc2TtApprox | Table::Tt2TcApprox => vec![10, 100],
            Table::Tc2Tt2TcExact => vec![4, 6],
            Table::Tc2Tt2TcApprox => vec![4, 6, 8, 10],
        }
    }
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    table: Table,
    /// Comma-separated node counts; a per-table default when absent.
    #[arg(long, value_delimiter = ',')]
    d: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 6)]
    rank: usize,
    /// Cutoff for the approximate tables.
    #[arg(long, default_value_t = 1e-10)]
    eps: f64,
    /// Random instances per `d`.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    /// First seed; instance `i` uses `seed + i`.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Wall-clock budget in seconds; the sweep stops once it is spent.
    #[arg(long, default_value_t = 600.0)]
    budget: f64,
    /// Largest SVD matrix (entries) an exact sweep may plan.
    #[arg(long, default_value_t = 1_000_000)]
    max_entries: usize,
    #[arg(long)]
    parallel: bool,
    /// CSV file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Mean and sample standard deviation.
fn stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Default)]
struct Samples {
    time: Vec<f64>,
    avg_rank: Vec<f64>,
    max_rank: Vec<f64>,
    rel_error: Vec<f64>,
    within_bounds: bool,
}

impl Samples {
    fn new() -> Self {
        Samples { within_bounds: true, ..Default::default() }
    }

    fn push(&mut self, report: &ConversionReport, plan: &RankBoundPlan, rel_error: f64) {
        self.time.push(report.seconds);
        self.avg_rank.push(report.avg_rank);
        self.max_rank.push(report.max_rank as f64);
        self.rel_error.push(rel_error);
        self.within_bounds &= respects(report, plan);
    }

    fn row(&self, table: Table, d: usize, stage: &str) -> String {
        let mut line = format!("{},{d},{stage},{}", table.name(), self.time.len());
        for xs in [&self.time, &self.avg_rank, &self.max_rank, &self.rel_error] {
            let (m, s) = stats(xs);
            write!(line, ",{m:e},{s:e}").expect("string write");
        }
        write!(line, ",{}", self.within_bounds).expect("string write");
        line
    }
}

/// Observed ranks never exceed the symbolic bounds, step by step and at the end.
pub fn respects(report: &ConversionReport, plan: &RankBoundPlan) -> bool {
    report.steps.len() == plan.steps.len()
        && report.steps.iter().zip(&plan.steps).all(|(s, b)| s.kept_rank <= b.bound)
        && report
            .final_ranks
            .iter()
            .all(|(label, r)| plan.final_bounds.get(label).is_some_and(|b| r <= b))
}

fn rel_error(a: &TensorNetwork, b: &TensorNetwork) -> tnconv::Result<f64> {
    if a.full_size() <= DEFAULT_ORACLE_CAP {
        verify::relative_error_oracle(a, b).map(|e| e.value)
    } else {
        verify::relative_error(a, b)
    }
}

fn largest_matrix(plan: &RankBoundPlan) -> usize {
    plan.steps.iter().map(|s| s.rows.saturating_mul(s.cols)).max().unwrap_or(0)
}

struct Sweep<'a> {
    args: &'a BenchArgs,
    options: ConvertOptions,
    start: Instant,
}

enum Stop {
    Budget,
    TooLarge(usize),
}

impl Sweep<'_> {
    /// One conversion, checked against the matrix cap first.
    fn stage(
        &self,
        net: &TensorNetwork,
        target: Target,
    ) -> Result<std::result::Result<(TensorNetwork, ConversionReport, RankBoundPlan), Stop>, Failure> {
        let plan = convert::predict_with(net, target, self.options.split)?;
        if self.args.table.exact() && largest_matrix(&plan) > self.args.max_entries {
            return Ok(Err(Stop::TooLarge(largest_matrix(&plan))));
        }
        let (out, report) = convert::convert(net, target, &self.options)?;
        Ok(Ok((out, report, plan)))
    }

    fn over_budget(&self) -> bool {
        self.start.elapsed().as_secs_f64() > self.args.budget
    }
}

pub fn run(args: BenchArgs) -> Result<ExitCode, Failure> {
    if args.seeds == 0 {
        return Err(Failure::Usage("--seeds must be positive".into()));
    }
    let policy = if args.table.exact() {
        TruncationPolicy::Exact
    } else {
        TruncationPolicy::rel_cutoff(args.eps).map_err(|e| Failure::Usage(e.to_string()))?
    };
    let ds = if args.d.is_empty() { args.table.default_ds() } else { args.d.clone() };
    if let Some(d) = ds.iter().find(|d| **d < 3) {
        return Err(Failure::Usage(format!("d = {d} is below the smallest ring size 3")));
    }
    let options = ConvertOptions { policy, parallel_steps: args.parallel, ..ConvertOptions::default() };
    let sweep = Sweep { args: &args, options, start: Instant::now() };

    let mut out = format!(
        "# tnconv-bench v{CSV_VERSION} table={} n={} rank={} policy={policy} seeds={} seed={}\n{CSV_COLUMNS}\n",
        args.table.name(),
        args.n,
        args.rank,
        args.seeds,
        args.seed
    );
    let mut all_within = true;
    'sweep: for &d in &ds {
        let mut first = Samples::new();
        let mut second = Samples::new();
        for i in 0..args.seeds {
            if sweep.over_budget() {
                truncation_row(&mut out, d, Stop::Budget, &args);
                break 'sweep;
            }
            let fill = Fill::SeededRandom(args.seed + i);
            let source = match args.table {
                Table::Tt2TcApprox => Topology::Train { d },
                _ => Topology::Chain { d },
            };
            let net = build_uniform(&source, args.n, args.rank, fill)?;
            let target = if args.table == Table::Tt2TcApprox { Target::Tc } else { Target::Tt };
            let (mid, report, plan) = match sweep.stage(&net, target)? {
                Ok(x) => x,
                Err(stop) => {
                    truncation_row(&mut out, d, stop, &args);
                    break 'sweep;
                }
            };
            first.push(&report, &plan, rel_error(&net, &mid)?);
            if matches!(args.table, Table::Tc2Tt2TcExact | Table::Tc2Tt2TcApprox) {
                let (back, report, plan) = match sweep.stage(&mid, Target::Tc)? {
                    Ok(x) => x,
                    Err(stop) => {
                        truncation_row(&mut out, d, stop, &args);
                        break 'sweep;
                    }
                };
                second.push(&report, &plan, rel_error(&net, &back)?);
            }
        }
        let roundtrip = !second.time.is_empty();
        all_within &= first.within_bounds && second.within_bounds;
        writeln!(out, "{}", first.row(args.table, d, if roundtrip { "tt" } else { "out" })).expect("string write");
        if roundtrip {
            writeln!(out, "{}", second.row(args.table, d, "tc")).expect("string write");
        }
    }

    match &args.output {
        Some(p) => std::fs::write(p, &out).with_context(|| format!("writing {}", p.display()))?,
        None => crate::print_stdout(&out)?,
    }
    if !all_within {
        return Err(anyhow!("observed ranks exceeded the predicted bounds").into());
    }
    Ok(ExitCode::SUCCESS)
}

fn truncation_row(out: &mut String, d: usize, stop: Stop, args: &BenchArgs) {
    let reason = match stop {
        Stop::Budget => format!("budget of {} s spent", args.budget),
        Stop::TooLarge(entries) => {
            format!("planned matrix of {entries} entries exceeds --max-entries {}", args.max_entries)
        }
    };
    writeln!(out, "# truncated: {reason} at d={d}").expect("string write");
}
