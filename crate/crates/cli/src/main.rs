use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use ppsim::acceptance;
use ppsim::channels::ChannelKind;
use ppsim::classical_sim::{
    contradiction_checks, search_feasibility, verdict, Metric, SearchConfig, Target, Verdict,
};
use ppsim::export::{csv_row, render_csv, CSV_HEADER};
use ppsim::protocol::{metrics, p_grid, run_pipeline, sweep, ProtocolConfig, SweepPoint};

const EXIT_USAGE: u8 = 1;
const EXIT_FALSIFIED: u8 = 2;

/// Noisy Ping-Pong QKD simulator under a probe attack.
#[derive(Parser, Debug)]
#[command(name = "ppsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Metrics over an evenly spaced grid of noise strengths.
    Sweep(SweepArgs),
    /// Full report (table, metrics, spectra) at one noise strength.
    Point(PointArgs),
    /// Search for a local classical model of the damping statistics.
    ClassicalSim(ClassicalArgs),
    /// Run the acceptance checks.
    Selftest(CommonArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Worker threads; defaults to $PPSIM_JOBS, then the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Channel {
    Ad,
    Depol,
    None,
}

impl From<Channel> for ChannelKind {
    fn from(c: Channel) -> Self {
        match c {
            Channel::Ad => ChannelKind::AmplitudeDamping,
            Channel::Depol => ChannelKind::Depolarizing,
            Channel::None => ChannelKind::None,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum, default_value = "ad")]
    channel: Channel,
    #[arg(long, default_value_t = 101)]
    steps: usize,
    #[arg(long, default_value_t = 0.0)]
    p_start: f64,
    #[arg(long, default_value_t = 1.0)]
    p_end: f64,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct PointArgs {
    #[arg(long, value_enum, default_value = "ad")]
    channel: Channel,
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct ClassicalArgs {
    /// Damping strength, strictly between 0 and 1.
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `tv` or `l2`.
    #[arg(long, default_value = "tv")]
    metric: String,
    /// `quoted` (closed-form table) or `simulated`.
    #[arg(long, default_value = "quoted")]
    target: String,
    /// Maximum objective evaluations.
    #[arg(long)]
    budget: Option<u64>,
    #[command(flatten)]
    common: CommonArgs,
}

enum Failure {
    Usage(String),
    Falsified(String),
}

impl From<ppsim::Error> for Failure {
    fn from(e: ppsim::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn jobs(requested: Option<usize>) -> Result<usize, Failure> {
    let n = match requested {
        Some(n) => n,
        None => match std::env::var("PPSIM_JOBS") {
            Ok(s) => s.trim().parse().map_err(|_| {
                Failure::Usage(format!("PPSIM_JOBS must be a positive integer, got `{s}`"))
            })?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        return Err(Failure::Usage("the number of jobs must be positive".into()));
    }
    Ok(n)
}

fn with_pool<T: Send>(
    requested: Option<usize>,
    f: impl FnOnce() -> Result<T, Failure> + Send,
) -> Result<T, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs(requested)?)
        .build()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    pool.install(f)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Outcome {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Usage(format!("cannot write to standard output: {e}")))
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn point_report(kind: ChannelKind, p: f64) -> Result<Value, Failure> {
    let jd = run_pipeline(&ProtocolConfig::new(kind, p)?)?;
    let m = metrics(&jd)?;
    let spectra = [jd.reduced_ht[0].spectrum()?, jd.reduced_ht[1].spectrum()?];
    let average = jd.reduced_ht[0].average(&jd.reduced_ht[1])?.spectrum()?;
    Ok(json!({
        "p": p,
        "channel": kind.short_name(),
        "joint": {
            "axes": ["a", "e", "b"],
            "shape": [2, 2, 4],
            "values": jd.p_aeb.values(),
        },
        "metrics": m,
        "eigenvalues": {
            "rho_ht_0": spectra[0],
            "rho_ht_1": spectra[1],
            "rho_ht_average": average,
        },
    }))
}

fn cmd_sweep(args: SweepArgs) -> Outcome {
    let kind = ChannelKind::from(args.channel);
    let grid = p_grid(args.p_start, args.p_end, args.steps)?;
    let text = with_pool(args.common.jobs, || match args.format {
        Format::Csv => Ok(render_csv(&sweep(kind, &grid)?)),
        Format::Json => {
            let points = grid
                .par_iter()
                .map(|&p| point_report(kind, p))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(pretty(&Value::Array(points)))
        }
    })?;
    emit(&args.common.out, &text)
}

fn cmd_point(args: PointArgs) -> Outcome {
    let kind = ChannelKind::from(args.channel);
    let report = point_report(kind, args.p)?;
    let text = match args.format {
        Format::Json => pretty(&report),
        Format::Csv => {
            let jd = run_pipeline(&ProtocolConfig::new(kind, args.p)?)?;
            let pt = SweepPoint {
                p: args.p,
                metrics: metrics(&jd)?,
            };
            format!("{CSV_HEADER}\n{}\n", csv_row(&pt))
        }
    };
    emit(&args.common.out, &text)
}

fn cmd_classical(args: ClassicalArgs) -> Outcome {
    if !(args.p > 0.0 && args.p < 1.0) {
        return Err(Failure::Usage(format!(
            "--p must lie strictly between 0 and 1, got {}",
            args.p
        )));
    }
    let metric: Metric = args.metric.parse()?;
    let target: Target = args.target.parse()?;
    let defaults = SearchConfig::default();
    let cfg = SearchConfig {
        metric,
        target,
        seed: args.seed,
        budget: args.budget.unwrap_or(defaults.budget),
        ..defaults
    };
    let p = args.p;
    let (search, checks) = with_pool(args.common.jobs, || {
        let checks = contradiction_checks(&target.table(p)?)?;
        Ok((search_feasibility(p, &cfg)?, checks))
    })?;
    let v = verdict(&search, &checks);
    let report = json!({
        "p": p,
        "seed": args.seed,
        "verdict": v,
        "search": search,
        "contradictions": checks,
    });
    emit(&args.common.out, &pretty(&report))?;
    match v {
        Verdict::InfeasibilityConfirmed => Ok(()),
        Verdict::Falsified => Err(Failure::Falsified(format!(
            "a local model reproduces the target at p = {p} (distance {:e})",
            search.min_distance
        ))),
        Verdict::Unconfirmed => Err(Failure::Falsified(format!(
            "distance {:e} is positive but not every contradiction step holds at p = {p}",
            search.min_distance
        ))),
    }
}

fn cmd_selftest(args: CommonArgs) -> Outcome {
    let results = with_pool(args.jobs, || Ok(acceptance::run_all()))?;
    let mut text = String::new();
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        text.push_str(&format!(
            "criterion {:>2} {status}: {} ({})\n",
            r.id, r.title, r.detail
        ));
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    text.push_str(&format!(
        "{} of {} criteria passed\n",
        results.len() - failed,
        results.len()
    ));
    emit(&args.out, &text)?;
    if failed > 0 {
        return Err(Failure::Usage(format!(
            "{failed} acceptance criteria failed"
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Sweep(a) => cmd_sweep(a),
        Command::Point(a) => cmd_point(a),
        Command::ClassicalSim(a) => cmd_classical(a),
        Command::Selftest(a) => cmd_selftest(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("ppsim: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Falsified(msg)) => {
            eprintln!("ppsim: {msg}");
            ExitCode::from(EXIT_FALSIFIED)
        }
    }
}
