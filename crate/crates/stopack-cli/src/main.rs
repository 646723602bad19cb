//! `stopack`: generators, solvers, online allocators, fairness tools, and
//! the benchmark harness behind one binary.
//!
//! Every subcommand is deterministic given its full flag set: seeds default
//! to `SPL_SEED` (then 0), output paths default to `SPL_OUT` (then stdout),
//! and flags always win over the environment. Exit codes: 0 on success, 1 on
//! a validation error, 2 on an I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stopack::bench::{
    emit_csv, lower_bound_demo, random_order, run_experiment, AlgorithmId, BenchError,
    ExperimentConfig,
};
use stopack::fairness::{compute_fair, total_value, verify_fair, SharingPolicy};
use stopack::instance::{
    describe_plp, generate_lower_bound, generate_sharing_gap, generate_synthetic, AnyInstance,
    InstanceError, LowerBoundParams, SyntheticConfig,
};
use stopack::lp;
use stopack::online::{run_hybrid, run_online, HybridSchedule, OnlineRule};
use stopack::training::{run_dual_base, run_dual_base_da, TrainError, TrainingPolicy};

#[derive(Parser)]
#[command(
    name = "stopack",
    version,
    about = "Stochastic online packing: generators, LP oracle, online allocators, fairness, benchmarks",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file (synthetic display-ad by default).
    Gen(GenArgs),
    /// Solve the offline LP and print the optimum and resource prices.
    Lp(LpArgs),
    /// Run one algorithm over one random arrival order.
    Run(RunArgs),
    /// Compute the fair allocation under a sharing policy.
    Fair(FairArgs),
    /// Run the paired-trial benchmark and write a CSV report.
    Bench(BenchArgs),
    /// Train prices on a sample prefix and print concentration diagnostics.
    Diag(DiagArgs),
    /// Fixed-threshold versus hindsight demonstration on the tiered market.
    Lbdemo(LbdemoArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Advertiser count for the synthetic generator.
    #[arg(long = "m", default_value_t = 10)]
    advertisers: usize,
    /// Impression count for the synthetic generator.
    #[arg(long = "n", default_value_t = 1000)]
    impressions: usize,
    #[arg(long, default_value_t = 10)]
    demand_min: u64,
    #[arg(long, default_value_t = 100)]
    demand_max: u64,
    /// Probability that an (impression, advertiser) pair is eligible.
    #[arg(long, default_value_t = 0.3)]
    density: f64,
    /// Log-normal weight location parameter.
    #[arg(long, default_value_t = 0.0)]
    weight_mu: f64,
    /// Log-normal weight scale parameter.
    #[arg(long, default_value_t = 1.0)]
    weight_sigma: f64,
    /// Generate the tiered single-resource packing instance with this many
    /// tiers instead of a synthetic display-ad instance.
    #[arg(long, conflicts_with = "sharing_gap")]
    lower_bound: Option<u32>,
    /// Draw count for --lower-bound.
    #[arg(long, default_value_t = 100)]
    draws: usize,
    /// Generate the K^2-advertiser contested-impression instance instead.
    #[arg(long)]
    sharing_gap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; defaults to SPL_OUT, then stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LpArgs {
    instance: PathBuf,
    /// Also write the model in LP text format.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
    /// Write the full solution (primal, duals, certificate inputs) as JSON.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunAlgo {
    Greedy,
    PdAvg,
    PdExp,
    Hybrid,
    Dualbase,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainingPolicyArg {
    /// Leave sampled arrivals unassigned (the analyzed configuration).
    Skip,
    /// Assign sampled arrivals with the averaging rule.
    Online,
}

impl From<TrainingPolicyArg> for TrainingPolicy {
    fn from(p: TrainingPolicyArg) -> Self {
        match p {
            TrainingPolicyArg::Skip => TrainingPolicy::Skip,
            TrainingPolicyArg::Online => TrainingPolicy::Online,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Equal,
    Proportional,
    #[value(alias = "stable_matching")]
    StableMatching,
}

impl From<PolicyArg> for SharingPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Equal => SharingPolicy::Equal,
            PolicyArg::Proportional => SharingPolicy::Proportional,
            PolicyArg::StableMatching => SharingPolicy::StableMatching,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    instance: PathBuf,
    #[arg(long, value_enum)]
    algo: RunAlgo,
    /// Sample fraction for hybrid/dualbase.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// How dualbase handles the sampled prefix.
    #[arg(long, value_enum, default_value = "online")]
    training_policy: TrainingPolicyArg,
    /// Shrink capacities before training so the emitted packing allocation
    /// is feasible.
    #[arg(long)]
    shrink: bool,
    /// Hybrid price decay: "linear" or "exp:<half-life fraction>".
    #[arg(long, default_value = "linear")]
    hybrid_schedule: String,
    /// Output file for the JSON run record; defaults to SPL_OUT, then stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FairArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "equal")]
    policy: PolicyArg,
    /// Output file for the JSON allocation; omitted = print value only.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    instance: PathBuf,
    /// Comma-separated algorithm list.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "greedy,pd_avg,pd_exp,hybrid,dualbase,fair,lp_weight"
    )]
    algos: Vec<String>,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel trials (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Sharing policy of the fairness target.
    #[arg(long, value_enum, default_value = "equal")]
    fair_policy: PolicyArg,
    #[arg(long, default_value = "linear")]
    hybrid_schedule: String,
    /// Disable dualbase capacity shrink.
    #[arg(long)]
    no_shrink: bool,
    #[arg(long, value_enum, default_value = "online")]
    training_policy: TrainingPolicyArg,
    /// Record wall times (makes reruns differ byte-for-byte).
    #[arg(long)]
    timings: bool,
    /// CSV output path; defaults to SPL_OUT, then results.csv.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Optional JSON dump of the full table (rows + summaries).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct DiagArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shrink: bool,
    /// Output file for the JSON run record; defaults to SPL_OUT, then stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LbdemoArgs {
    #[arg(long, default_value_t = 2)]
    tiers: u32,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file for the JSON report; omitted = print summary only.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

enum CliError {
    Validation(String),
    Io(String),
}

fn chain(err: &dyn std::error::Error) -> String {
    let mut msg = err.to_string();
    let mut source = err.source();
    while let Some(s) = source {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        source = s.source();
    }
    msg
}

impl From<InstanceError> for CliError {
    fn from(e: InstanceError) -> Self {
        match e {
            InstanceError::Io { .. } => CliError::Io(chain(&e)),
            other => CliError::Validation(chain(&other)),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Validation(chain(&e))
    }
}

impl From<lp::LpError> for CliError {
    fn from(e: lp::LpError) -> Self {
        CliError::Validation(chain(&e))
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Io { .. } => CliError::Io(chain(&e)),
            BenchError::Instance(inner) => inner.into(),
            other => CliError::Validation(chain(&other)),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("SPL_SEED") {
        Ok(text) => text
            .parse()
            .map_err(|_| CliError::Validation(format!("SPL_SEED is not an integer: {text}"))),
        Err(_) => Ok(0),
    }
}

fn resolve_out(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var("SPL_OUT").ok().map(PathBuf::from))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Io(format!("failed to write {}: {e}", path.display())))
}

/// Writes to the resolved output path, or prints to stdout when there is
/// none.
fn write_or_print(out: Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match resolve_out(out) {
        Some(path) => write_file(&path, content),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn parse_schedule(text: &str) -> Result<HybridSchedule, CliError> {
    if text == "linear" {
        return Ok(HybridSchedule::Linear);
    }
    if let Some(frac) = text.strip_prefix("exp:") {
        let frac: f64 = frac.parse().map_err(|_| {
            CliError::Validation(format!("bad half-life fraction in schedule: {text}"))
        })?;
        if !(frac.is_finite() && frac > 0.0) {
            return Err(CliError::Validation(format!(
                "half-life fraction must be positive: {text}"
            )));
        }
        return Ok(HybridSchedule::ExpHalfLife(frac));
    }
    Err(CliError::Validation(format!(
        "unknown hybrid schedule {text:?}; use \"linear\" or \"exp:<fraction>\""
    )))
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    let json = if let Some(tiers) = args.lower_bound {
        let inst = generate_lower_bound(&LowerBoundParams {
            tiers,
            draws: args.draws,
            seed,
        })?;
        eprintln!("{}", describe_plp(&inst));
        inst.to_json()
    } else if let Some(k) = args.sharing_gap {
        let da = generate_sharing_gap(k)?;
        eprintln!(
            "display-ad instance: {} advertisers, {} impressions",
            da.num_advertisers(),
            da.num_impressions()
        );
        da.to_json()
    } else {
        let da = generate_synthetic(&SyntheticConfig {
            advertisers: args.advertisers,
            impressions: args.impressions,
            demand_min: args.demand_min,
            demand_max: args.demand_max,
            density: args.density,
            weight_mu: args.weight_mu,
            weight_sigma: args.weight_sigma,
            seed,
        })?;
        eprintln!(
            "display-ad instance: {} advertisers, {} impressions",
            da.num_advertisers(),
            da.num_impressions()
        );
        da.to_json()
    };
    write_or_print(args.out, &json)
}

fn cmd_lp(args: LpArgs) -> Result<(), CliError> {
    let inst = AnyInstance::load(&args.instance)?.into_plp().normalize();
    if let Some(path) = &args.dump_lp {
        write_file(path, &lp::write_lp_text(&inst))?;
    }
    let solution = lp::solve_primal(&inst);
    let report = lp::verify_duality(&inst, &solution, lp::SOLVER_TOL)?;
    println!("route {:?}", solution.route);
    println!("objective {}", solution.objective);
    for (j, resource) in inst.resources.iter().enumerate() {
        println!("beta {} {}", resource.id, solution.beta[j]);
    }
    println!("certified {}", report.pass);
    if let Some(path) = args.out {
        write_file(
            &path,
            &serde_json::to_string_pretty(&solution).expect("solution serializes"),
        )?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    let schedule = parse_schedule(&args.hybrid_schedule)?;
    let any = AnyInstance::load(&args.instance)?;
    let record = match (&any, args.algo) {
        (AnyInstance::Da(da), RunAlgo::Greedy | RunAlgo::PdAvg | RunAlgo::PdExp) => {
            let rule = match args.algo {
                RunAlgo::Greedy => OnlineRule::Greedy,
                RunAlgo::PdAvg => OnlineRule::PdAvg,
                _ => OnlineRule::PdExp,
            };
            let order = random_order(da.num_impressions(), seed);
            let run = run_online(da, &order, rule);
            println!("{} value {}", rule.name(), run.allocation.total_value);
            serde_json::json!({
                "algorithm": rule.name(),
                "seed": seed,
                "run": run,
            })
        }
        (AnyInstance::Da(da), RunAlgo::Hybrid) => {
            let order = random_order(da.num_impressions(), seed);
            let run = run_hybrid(da, &order, args.eps, seed, schedule)?;
            println!("HYBRID value {}", run.allocation.total_value);
            serde_json::json!({
                "algorithm": "HYBRID",
                "seed": seed,
                "epsilon": args.eps,
                "run": run,
            })
        }
        (AnyInstance::Da(da), RunAlgo::Dualbase) => {
            let order = random_order(da.num_impressions(), seed);
            let run = run_dual_base_da(
                da,
                &order,
                args.eps,
                seed,
                args.training_policy.into(),
                args.shrink,
            )?;
            println!("DualBase value {}", run.allocation.total_value);
            serde_json::json!({
                "algorithm": "DualBase",
                "seed": seed,
                "epsilon": args.eps,
                "run": run,
            })
        }
        (AnyInstance::Plp(plp), RunAlgo::Dualbase) => {
            let inst = plp.clone().normalize();
            let order = random_order(inst.num_agents(), seed);
            let run = run_dual_base(
                &inst,
                &order,
                args.eps,
                seed,
                args.training_policy.into(),
                args.shrink,
            )?;
            println!("DualBase value {}", run.allocation.value);
            serde_json::json!({
                "algorithm": "DualBase",
                "seed": seed,
                "epsilon": args.eps,
                "run": run,
            })
        }
        (AnyInstance::Plp(_), _) => {
            return Err(CliError::Validation(
                "this algorithm needs a display-ad instance; packing instances support only \
                 --algo dualbase"
                    .into(),
            ))
        }
    };
    write_or_print(
        args.out,
        &serde_json::to_string_pretty(&record).expect("record serializes"),
    )
}

fn cmd_fair(args: FairArgs) -> Result<(), CliError> {
    let any = AnyInstance::load(&args.instance)?;
    let AnyInstance::Da(da) = any else {
        return Err(CliError::Validation(
            "fair allocations are defined on display-ad instances".into(),
        ));
    };
    let policy: SharingPolicy = args.policy.into();
    let fair = compute_fair(&da, policy);
    verify_fair(&da, &fair, policy)
        .map_err(|msg| CliError::Validation(format!("fair-allocation self-check failed: {msg}")))?;
    println!("policy {}", policy.name());
    println!("value {}", total_value(&fair, &da));
    if let Some(path) = resolve_out(args.out) {
        write_file(&path, &fair.to_json(&da))?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    let algorithms = args
        .algos
        .iter()
        .map(|name| name.parse::<AlgorithmId>())
        .collect::<Result<Vec<_>, _>>()?;
    let any = AnyInstance::load(&args.instance)?;
    let AnyInstance::Da(da) = any else {
        return Err(CliError::Validation(
            "the benchmark compares display-ad algorithms; convert packing instances first".into(),
        ));
    };
    let mut config = ExperimentConfig::new(algorithms, args.trials, args.eps, seed);
    config.fair_policy = args.fair_policy.into();
    config.hybrid_schedule = parse_schedule(&args.hybrid_schedule)?;
    config.shrink = !args.no_shrink;
    config.training_policy = args.training_policy.into();
    config.timings = args.timings;

    let table = match args.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| CliError::Validation(format!("cannot build thread pool: {e}")))?;
            pool.install(|| run_experiment(&da, &config))?
        }
        None => run_experiment(&da, &config)?,
    };

    println!("lp_value {}", table.lp_value);
    for s in &table.summaries {
        println!(
            "{} eff {:.2} (sd {:.2}) fairness_raw {:.2} fairness_norm {:.2}",
            s.algorithm, s.mean_eff, s.std_eff, s.mean_fairness_raw, s.mean_fairness_norm
        );
    }
    let csv_path = resolve_out(args.out).unwrap_or_else(|| PathBuf::from("results.csv"));
    emit_csv(&table.reports, &csv_path)?;
    eprintln!("wrote {}", csv_path.display());
    if let Some(path) = args.summary {
        write_file(
            &path,
            &serde_json::to_string_pretty(&table).expect("table serializes"),
        )?;
    }
    Ok(())
}

fn cmd_diag(args: DiagArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    let inst = AnyInstance::load(&args.instance)?.into_plp().normalize();
    let order = random_order(inst.num_agents(), seed);
    let run = run_dual_base(
        &inst,
        &order,
        args.eps,
        seed,
        TrainingPolicy::Skip,
        args.shrink,
    )?;
    let diag = &run.diagnostics;
    let bad_resources = diag.resources.iter().filter(|r| r.bad).count();
    println!(
        "sample {} of {} agents, value deviation {:.6} (threshold {:.6})",
        diag.sample_size,
        inst.num_agents(),
        diag.value_deviation,
        diag.value_threshold
    );
    println!(
        "bad flags: {} resource(s) + {} value flag(s)",
        bad_resources,
        if diag.value_bad { 1 } else { 0 }
    );
    write_or_print(
        args.out,
        &serde_json::to_string_pretty(&run).expect("run record serializes"),
    )
}

fn cmd_lbdemo(args: LbdemoArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    let report = lower_bound_demo(args.tiers, seed)?;
    println!(
        "tiers {} capacity {} draw_counts {:?}",
        report.tiers, report.capacity, report.draw_counts
    );
    for s in &report.strategies {
        println!(
            "threshold {} worst_ratio {:.4} per_count {:?}",
            s.threshold,
            s.worst_ratio,
            s.mean_ratio_per_count
                .iter()
                .map(|r| (r * 1e4).round() / 1e4)
                .collect::<Vec<_>>()
        );
    }
    println!("best_worst_ratio {:.4}", report.best_worst_ratio);
    if let Some(path) = resolve_out(args.out) {
        write_file(
            &path,
            &serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Lp(args) => cmd_lp(args),
        Command::Run(args) => cmd_run(args),
        Command::Fair(args) => cmd_fair(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Diag(args) => cmd_diag(args),
        Command::Lbdemo(args) => cmd_lbdemo(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{err}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
