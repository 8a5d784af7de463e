use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};

use hdbo::analysis::{self, Report};
use hdbo::harness::{self, PlanLayer, RunStatus};

#[derive(Parser)]
#[command(name = "hdbo", version, about = "High-dimensional Bayesian optimization benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment plan and write logs plus a manifest.
    Run(RunArgs),
    /// Aggregate logs into plot-ready tables.
    Analyze(AnalyzeArgs),
    /// List registered solvers.
    Solvers,
}

/// Comma-separated values; integer ranges like `1-24` expand.
#[derive(Debug, Clone)]
struct List<T>(Vec<T>);

impl<T: FromStr + TryFrom<u64>> FromStr for List<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if let Some((a, b)) = part.split_once('-') {
                let (a, b): (u64, u64) =
                    (a.parse().map_err(|_| format!("bad range `{part}`"))?, b.parse().map_err(|_| format!("bad range `{part}`"))?);
                if a > b {
                    return Err(format!("empty range `{part}`"));
                }
                for v in a..=b {
                    out.push(T::try_from(v).map_err(|_| format!("`{v}` out of range"))?);
                }
            } else {
                out.push(part.parse().map_err(|_| format!("bad value `{part}`"))?);
            }
        }
        if out.is_empty() {
            return Err("empty list".into());
        }
        Ok(List(out))
    }
}

#[derive(clap::Args)]
struct RunArgs {
    /// Solver names, comma-separated.
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<String>>,
    #[arg(long)]
    fid: Option<List<u32>>,
    #[arg(long)]
    dim: Option<List<usize>>,
    #[arg(long)]
    instance: Option<List<u64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    budget_factor: Option<usize>,
    #[arg(long)]
    budget_offset: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel runs; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// JSON plan file; command-line flags override its fields.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Write zero timing columns so reruns give identical logs.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum What {
    Convergence,
    Cpu,
    Wilcoxon,
    Violin,
    All,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    what: What,
    /// Restrict to these dimensions.
    #[arg(long)]
    dims: Option<List<usize>>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Algorithm pair for the signed-rank test, as `A:B`. Repeatable.
    #[arg(long = "pair")]
    pairs: Vec<String>,
    /// Evaluation counts at which pairs are compared; default is each
    /// group's final evaluation.
    #[arg(long)]
    checkpoint: Option<List<usize>>,
    /// Bootstrap seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(args: RunArgs) -> hdbo::Result<bool> {
    let cli = PlanLayer {
        algorithms: args.algo,
        fids: args.fid.map(|l| l.0),
        dims: args.dim.map(|l| l.0),
        instances: args.instance.map(|l| l.0),
        repetitions: args.reps,
        budget_factor: args.budget_factor,
        budget_offset: args.budget_offset,
        base_seed: args.seed,
        output_root: args.out,
        jobs: args.jobs,
        record_timing: args.no_timing.then_some(false),
    };
    let file = match &args.plan {
        Some(p) => PlanLayer::from_json_file(p)?,
        None => PlanLayer::default(),
    };
    let plan = cli.or(file).resolve()?;
    let summary = harness::run_experiment(&plan)?;
    let failed: Vec<_> = summary.entries.iter().filter(|e| e.status != RunStatus::Completed).collect();
    println!("{} of {} runs completed; logs in {}", summary.completed(), summary.entries.len(), plan.output_root.display());
    for e in &failed {
        println!("  {} {:?}: {}", e.file, e.status, e.cause.as_deref().unwrap_or(""));
    }
    Ok(failed.is_empty())
}

fn parse_pair(s: &str) -> hdbo::Result<(String, String)> {
    match s.split_once(':') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(hdbo::Error::InvalidArgument(format!("pair `{s}` is not of the form A:B"))),
    }
}

fn analyze(args: AnalyzeArgs) -> hdbo::Result<bool> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(hdbo::Error::InvalidArgument("alpha must lie in (0, 1)".into()));
    }
    let mut logs = analysis::load_dir(&args.input)?;
    if let Some(d) = &args.dims {
        logs.retain(|l| d.0.contains(&l.dim));
    }
    let mut dims: Vec<usize> = logs.iter().map(|l| l.dim).collect();
    dims.sort_unstable();
    dims.dedup();
    let want = |w: What| args.what == w || args.what == What::All;
    let pairs: Vec<(String, String)> = args.pairs.iter().map(|p| parse_pair(p)).collect::<hdbo::Result<_>>()?;
    if args.what == What::Wilcoxon && pairs.is_empty() {
        return Err(hdbo::Error::InvalidArgument("--what wilcoxon needs at least one --pair A:B".into()));
    }

    let mut report = Report::default();
    if want(What::Convergence) {
        report.convergence = analysis::aggregate_convergence(&logs)?;
    }
    if want(What::Cpu) {
        for &d in &dims {
            let s = analysis::cpu_summary(&logs, d, args.seed);
            if s.is_empty() {
                log::warn!("no completed runs at dim {d}");
            }
            report.cpu.extend(s);
        }
    }
    if want(What::Wilcoxon) && !pairs.is_empty() {
        for &d in &dims {
            let checkpoints = match &args.checkpoint {
                Some(c) => c.0.clone(),
                None => logs
                    .iter()
                    .filter(|l| l.dim == d && l.status == RunStatus::Completed)
                    .map(|l| l.rows.len())
                    .max()
                    .into_iter()
                    .collect(),
            };
            report.wilcoxon.extend(analysis::wilcoxon_table(&logs, &pairs, &checkpoints, Some(&[d]), args.alpha));
        }
    }
    if want(What::Violin) {
        report.violin = analysis::violin_data(&logs);
    }
    let index = analysis::export_report(&report, &args.out)?;
    let written = index.convergence.len() + index.cpu.len() + index.wilcoxon.len() + index.violin.len();
    println!("{written} tables and {} in {}", analysis::INDEX_FILE, args.out.display());
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Analyze(a) => analyze(a),
        Command::Solvers => {
            for s in hdbo::registry::list_solvers() {
                let c = s.capabilities;
                println!("{:<8} batched={} embedding={} surrogate_timed={}", s.name, c.batched, c.embedding, c.surrogate_timed);
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
