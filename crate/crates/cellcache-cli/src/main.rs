//! Command line front end: instance/workload generation, scheme runs,
//! adversary sweeps and full experiments.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 infeasible input or
//! validation failure, 3 competitive-bound defect.

use cellcache::adversary::{gen_adversary_stream, AdversaryTree};
use cellcache::harness::{
    self, write_outputs, ErrorModel, ExperimentConfig, InstanceParams, Scheme, SweepParam,
    WorkloadParams,
};
use cellcache::instance::{load_instance, save_instance, validate_instance, Instance};
use cellcache::offline::{
    complete_assignments, offline_collaborative_exact, offline_noncollaborative, verify_plan,
    OfflinePlan,
};
use cellcache::online::{probe_invariants, run_stream, run_stream_observed};
use cellcache::workload::{
    demands_to_stream, gen_demands_with, load_demands, load_stream, save_demands, save_stream,
    StreamPolicy, UserModel,
};
use cellcache::{Error, Result};
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};

type F = f64;

#[derive(Parser)]
#[command(
    name = "cellcache",
    version,
    about = "Collaborative base-station caching simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random problem instance and write instance.toml.
    GenInstance(GenInstanceArgs),
    /// Generate Zipf demands for an instance and write demands.toml.
    GenDemands(GenDemandsArgs),
    /// Order a demand matrix into a request stream (stream.toml + stream.csv).
    GenStream(GenStreamArgs),
    /// Run the online scheme on a stream (trace.csv + online_costs.csv).
    RunOnline(RunOnlineArgs),
    /// Exact offline collaborative optimum (plan.csv).
    RunOffline(RunOfflineArgs),
    /// Offline non-collaborative optimum (plan.csv).
    RunNoncollab(RunOfflineArgs),
    /// Adversary tree sweep (adversary.csv).
    Adversary(AdversaryArgs),
    /// Full scheme-comparison experiment from a config file.
    Experiment(ExperimentArgs),
    /// Recompute summary and savings CDFs from a results.csv.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenInstanceArgs {
    #[arg(long, default_value_t = 10)]
    stations: usize,
    #[arg(long, default_value_t = 50.0)]
    area: f64,
    #[arg(long, default_value_t = 15.0)]
    threshold: f64,
    #[arg(long, default_value_t = 20)]
    contents: usize,
    #[arg(long, default_value_t = 600.0)]
    caching_cost_mean: f64,
    #[arg(long, default_value_t = 0.5)]
    caching_cost_spread: f64,
    /// Internet UA cost as a multiple of the topology diameter.
    #[arg(long, default_value_t = 4.0)]
    internet_factor: f64,
    /// Fixed internet UA cost; overrides --internet-factor.
    #[arg(long)]
    internet_cost: Option<f64>,
    #[arg(long, default_value_t = 10)]
    size_min: u32,
    #[arg(long, default_value_t = 20)]
    size_max: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenDemandsArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 100.0)]
    users: f64,
    #[arg(long, default_value_t = 1.1)]
    zeta: f64,
    /// Draw per-station user counts from a Poisson distribution instead of
    /// using the mean exactly.
    #[arg(long)]
    poisson: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenStreamArgs {
    #[arg(long)]
    demands: PathBuf,
    #[arg(long, default_value = "random-interleave")]
    policy: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunOnlineArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    stream: PathBuf,
    /// Check the proof invariants after every request; violations exit 3.
    #[arg(long)]
    probe: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunOfflineArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Demands the plan is costed against.
    #[arg(long)]
    demands: PathBuf,
    /// Optional estimated demands to optimize on (the plan is still costed
    /// against --demands).
    #[arg(long)]
    estimates: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct AdversaryArgs {
    #[arg(long, default_value_t = 3)]
    height: usize,
    /// Cost decay factor m; defaults to the height.
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    root_cost: f64,
    /// Leaf caching cost f; defaults to height * root_cost.
    #[arg(long)]
    leaf_cost: Option<f64>,
    #[arg(long, default_value_t = 100)]
    runs: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict the schemes to run (repeatable).
    #[arg(long = "scheme")]
    schemes: Vec<String>,
    /// Override the error model: none, uniform:<margin> or rank-shuffle.
    #[arg(long)]
    error_model: Option<String>,
    /// Sweep one parameter and emit a cost-vs-parameter curve instead of a
    /// single experiment, e.g. --sweep stations=6,8,10,12 (parameters:
    /// stations, zeta, caching-cost-mean, users).
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}

/// 1 for usage/I-O problems, 2 for validation or infeasibility.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Event { source, .. } | Error::Run { source, .. } => exit_code(source),
        Error::InvalidInput(_) | Error::Io(_) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenInstance(args) => gen_instance(args),
        Command::GenDemands(args) => gen_demands_cmd(args),
        Command::GenStream(args) => gen_stream_cmd(args),
        Command::RunOnline(args) => run_online_cmd(args),
        Command::RunOffline(args) => run_offline_cmd(args, true),
        Command::RunNoncollab(args) => run_offline_cmd(args, false),
        Command::Adversary(args) => adversary_cmd(args),
        Command::Experiment(args) => experiment_cmd(args),
        Command::Report(args) => report_cmd(args),
    }
}

fn load_valid_instance(path: &Path) -> Result<Instance<F>> {
    let instance = load_instance::<F>(path)?;
    let report = validate_instance(&instance);
    if !report.is_valid() {
        return Err(Error::Validation(report.to_string()));
    }
    Ok(instance)
}

fn gen_instance(args: GenInstanceArgs) -> Result<i32> {
    let instance_params = InstanceParams {
        num_stations: args.stations,
        area_side: args.area,
        link_threshold: args.threshold,
        internet_cost_factor: args.internet_factor,
        internet_cost_constant: args.internet_cost,
        caching_cost_mean: args.caching_cost_mean,
        caching_cost_spread: args.caching_cost_spread,
    };
    let workload_params = WorkloadParams {
        num_contents: args.contents,
        size_min: args.size_min,
        size_max: args.size_max,
        ..WorkloadParams::default()
    };
    let instance = harness::generate_instance::<F>(&instance_params, &workload_params, args.seed)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("instance.toml");
    save_instance(&instance, &path)?;
    let repaired = instance
        .provenance
        .as_ref()
        .is_some_and(|p| !p.bridged.is_empty());
    println!(
        "wrote {} ({} stations, {} contents{})",
        path.display(),
        instance.num_stations,
        instance.num_contents(),
        if repaired {
            ", connectivity repaired"
        } else {
            ""
        }
    );
    Ok(0)
}

fn gen_demands_cmd(args: GenDemandsArgs) -> Result<i32> {
    let instance = load_valid_instance(&args.instance)?;
    let model = if args.poisson {
        UserModel::Poisson
    } else {
        UserModel::Fixed
    };
    let demands = gen_demands_with(
        instance.num_stations,
        instance.num_contents(),
        args.users,
        args.zeta,
        model,
        args.seed,
    );
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("demands.toml");
    save_demands(&demands, &path)?;
    println!(
        "wrote {} ({} total requests)",
        path.display(),
        demands.total_requests()
    );
    Ok(0)
}

fn gen_stream_cmd(args: GenStreamArgs) -> Result<i32> {
    let demands = load_demands(&args.demands)?;
    let policy: StreamPolicy = args.policy.parse()?;
    let stream = demands_to_stream(&demands, args.seed, policy);
    std::fs::create_dir_all(&args.out)?;
    let toml_path = args.out.join("stream.toml");
    save_stream(&stream, &toml_path)?;
    let csv_path = args.out.join("stream.csv");
    stream.write_csv(std::fs::File::create(&csv_path)?)?;
    println!(
        "wrote {} and {} ({} events)",
        toml_path.display(),
        csv_path.display(),
        stream.len()
    );
    Ok(0)
}

fn run_online_cmd(args: RunOnlineArgs) -> Result<i32> {
    let instance = load_valid_instance(&args.instance)?;
    let stream = load_stream(&args.stream)?;
    std::fs::create_dir_all(&args.out)?;

    let mut probe_failures = 0usize;
    let outcome = if args.probe {
        run_stream_observed(&instance, &stream, |index, _, state| {
            let report = probe_invariants(state, &instance);
            if !report.ok() {
                probe_failures += 1;
                for v in &report.violations {
                    eprintln!("probe violation at event {index}: {v}");
                }
            }
        })?
    } else {
        run_stream(&instance, &stream)?
    };

    let trace_path = args.out.join("trace.csv");
    outcome
        .trace
        .write_csv(std::fs::File::create(&trace_path)?)?;

    let costs_path = args.out.join("online_costs.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&costs_path)?);
    writeln!(
        w,
        "content,processed_requests,ua_cost,caching_cost,total_cost"
    )?;
    for (j, state) in outcome.states.iter().enumerate() {
        let s = instance.content_sizes[j];
        writeln!(
            w,
            "{},{},{},{},{}",
            j,
            state.processed_requests(),
            s * outcome.ledger.per_content_ua[j],
            s * outcome.ledger.per_content_caching[j],
            outcome.ledger.content_total(j)
        )?;
    }
    w.flush()?;

    println!(
        "online cost: total {} (ua {}, caching {}); wrote {} and {}",
        outcome.ledger.total(),
        outcome.ledger.total_ua(),
        outcome.ledger.total_caching(),
        trace_path.display(),
        costs_path.display()
    );
    if probe_failures > 0 {
        eprintln!("{probe_failures} event(s) violated the invariants");
        return Ok(3);
    }
    Ok(0)
}

fn write_plan_outputs(
    out: &Path,
    plan: &OfflinePlan,
    total: F,
    caching: F,
    ua: F,
    feasible: bool,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let plan_path = out.join("plan.csv");
    plan.write_csv(std::fs::File::create(&plan_path)?)?;
    println!(
        "plan cost: total {total} (ua {ua}, caching {caching}), feasible: {feasible}; wrote {}",
        plan_path.display()
    );
    Ok(())
}

fn run_offline_cmd(args: RunOfflineArgs, collaborative: bool) -> Result<i32> {
    let instance = load_valid_instance(&args.instance)?;
    let actual = load_demands(&args.demands)?;
    let basis = match &args.estimates {
        Some(path) => load_demands(path)?,
        None => actual.clone(),
    };
    let (plan, _) = if collaborative {
        offline_collaborative_exact(&instance, &basis)?
    } else {
        offline_noncollaborative(&instance, &basis)?
    };
    let completed = complete_assignments(&instance, &actual, &plan, collaborative);
    let (total, report) = verify_plan(&instance, &actual, &completed);
    write_plan_outputs(
        &args.out,
        &completed,
        total,
        report.cost.caching,
        report.cost.ua,
        report.feasible(),
    )?;
    if !report.feasible() {
        for v in &report.violations {
            eprintln!("infeasible: {v}");
        }
        return Ok(2);
    }
    Ok(0)
}

fn adversary_cmd(args: AdversaryArgs) -> Result<i32> {
    let decay = args.decay.unwrap_or(args.height as f64);
    let leaf_cost = args
        .leaf_cost
        .unwrap_or(args.height as f64 * args.root_cost);
    let tree = AdversaryTree::new(args.height, decay, args.root_cost, leaf_cost)?;
    let instance = tree.build_instance();

    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("adversary.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(
        w,
        "height,decay,root_cost,leaf_cost,seed,path,online_cost,offline_cost,ratio"
    )?;
    let mut ratio_sum = 0.0;
    for run in 0..args.runs {
        let seed = harness::sub_seed(args.seed, run, 1);
        let (stream, walk) = gen_adversary_stream(&tree, seed);
        let outcome = run_stream(&instance, &stream)?;
        let online = outcome.ledger.total();
        let counts = stream.counts(instance.num_stations, 1);
        let demands = cellcache::workload::DemandMatrix::new(counts)?;
        let (_, offline) = offline_collaborative_exact(&instance, &demands)?;
        let ratio = online / offline;
        ratio_sum += ratio;
        let walk_str = walk
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            args.height, decay, args.root_cost, leaf_cost, seed, walk_str, online, offline, ratio
        )?;
    }
    w.flush()?;
    println!(
        "wrote {} ({} runs, mean online/offline ratio {:.4})",
        path.display(),
        args.runs,
        ratio_sum / args.runs as f64
    );
    Ok(0)
}

fn experiment_cmd(args: ExperimentArgs) -> Result<i32> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if !args.schemes.is_empty() {
        config.schemes = args
            .schemes
            .iter()
            .map(|s| s.parse::<Scheme>())
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(model) = &args.error_model {
        config.error_model = model.parse::<ErrorModel>()?;
    }

    if let Some(sweep_arg) = &args.sweep {
        let (param_str, values_str) = sweep_arg.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!(
                "bad sweep argument {sweep_arg:?}, expected <param>=<v1,v2,...>"
            ))
        })?;
        let param: SweepParam = param_str.parse()?;
        let values = values_str
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad sweep value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let points = harness::sweep_experiment::<F>(&config, param, &values)?;
        std::fs::create_dir_all(&args.out)?;
        let path = args.out.join(format!("curve_{param}.csv"));
        harness::write_curve(&points, &path)?;
        println!(
            "swept {param} over {} values; wrote {}",
            values.len(),
            path.display()
        );
        return Ok(0);
    }

    let (results, error) = harness::run_experiment_partial::<F>(&config);
    write_outputs(&results, &args.out)?;
    if let Some(err) = error {
        eprintln!(
            "experiment aborted after {} completed run(s); partial results flushed to {}",
            results.runs.len(),
            args.out.display()
        );
        return Err(err);
    }

    println!(
        "experiment {:?}: {} runs -> {}",
        config.name,
        config.runs,
        args.out.display()
    );
    for scheme in Scheme::ALL {
        if let Some(mean) = results.mean_total(scheme) {
            println!("  mean total {scheme}: {mean:.3}");
        }
    }
    if let Some(frac) = results.fraction_online_beats_offline() {
        println!(
            "  online beats offline-collab in {:.0}% of runs",
            frac * 100.0
        );
    }
    if results.any_defect() {
        eprintln!("competitive-bound defect detected; see competitive.csv");
        return Ok(3);
    }
    Ok(0)
}

fn report_cmd(args: ReportArgs) -> Result<i32> {
    let rows = harness::read_results_csv(&args.results)?;
    harness::write_report_from_rows(&rows, &args.out)?;
    println!("wrote report tables to {}", args.out.display());
    Ok(0)
}
