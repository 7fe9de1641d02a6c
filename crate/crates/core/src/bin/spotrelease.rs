use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spotrelease::belief::{write_trajectory, Channel, InitialBelief, MlsController, ObservationModel};
use spotrelease::calibration::{
    calibrate, clearance_wait_stats, saturation_stats, solve_bernoulli_pair, CalibrationInput, MinuteSeries,
};
use spotrelease::compare::{emissions, read_comparison};
use spotrelease::experiment::{policy_file, run_experiment, write_emissions, Bundle, Manifest};
use spotrelease::optimal::{pareto_sweep, write_metrics, CostParams, LpOptions, Policy, PolicyKind};
use spotrelease::sim::{
    congestion_curve, never_clear_policy, rollout, rollout_table, run_single, saturating_policy, write_curve, MlsSim,
    SimConfig, SimResult,
};
use spotrelease::state::{AirportConfig, Fairness};
use spotrelease::threshold::{threshold_policy, threshold_sweep, ThresholdParams};
use spotrelease::transition::{build_transitions, validate_kernel, TransitionModel};
use spotrelease::Error;

#[derive(Parser)]
#[command(name = "spotrelease", version, about = "Departure release control for single-runway airports")]
struct Cli {
    /// Airport configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed for simulations (default 0; overrides an experiment spec).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive model parameters from taxi and throughput statistics, or from a
    /// minute series CSV (`minute,pushbacks,takeoffs`).
    Calibrate {
        input: PathBuf,
        /// Surface count from which a minute counts as saturated.
        #[arg(long, default_value_t = 14)]
        cutoff: u32,
        /// Calibration input whose throughput is replaced by the series estimate.
        #[arg(long)]
        taxi: Option<PathBuf>,
    },
    /// Build and validate the transition kernel, exporting it as CSV.
    Build,
    /// Solve for optimal policies over a list of betas.
    Solve {
        #[arg(long = "beta", required = true, num_args = 1.., value_delimiter = ',')]
        betas: Vec<f64>,
        #[arg(long)]
        fairness: Option<FairnessArg>,
    },
    /// Evaluate threshold policies.
    Threshold {
        #[arg(long = "th", required = true, num_args = 1.., value_delimiter = ',')]
        thresholds: Vec<u32>,
        /// Cost weight for the reported expected cost.
        #[arg(long, default_value_t = 10.0)]
        beta: f64,
    },
    /// Simulate the most-likely-state controller built on the beta-optimal policy.
    Mls {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        fairness: Option<FairnessArg>,
        #[arg(long, value_enum, default_value_t = ChannelArg::Surface)]
        channel: ChannelArg,
        /// Write the per-step trajectory log of the first replication.
        #[arg(long)]
        trajectory: bool,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Simulate a controller: saturating, never, threshold:TH, optimal:BETA or a policy CSV path.
    Simulate {
        #[arg(long, default_value = "saturating")]
        policy: String,
        /// Shift applied to congestion-curve bins.
        #[arg(long, default_value_t = 0)]
        offset: i64,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Run an experiment spec: sweeps, simulations and the comparison table.
    #[command(alias = "run")]
    Compare { spec: PathBuf },
    /// Convert a comparison table into emission deltas.
    Emissions {
        comparison: PathBuf,
        /// kg per aircraft-minute.
        #[arg(long)]
        factor: f64,
    },
}

#[derive(Args, Clone, Copy)]
struct SimArgs {
    #[arg(long, default_value_t = 1_000_000)]
    steps: u64,
    #[arg(long, default_value_t = 10_000)]
    warmup: u64,
    #[arg(long, default_value_t = 1)]
    replications: u32,
}

impl SimArgs {
    fn config(self, seed: u64) -> SimConfig {
        SimConfig { steps: self.steps, warmup: self.warmup, seed, replications: self.replications }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FairnessArg {
    Alternation,
    Statistical,
    None,
}

impl From<FairnessArg> for Fairness {
    fn from(f: FairnessArg) -> Self {
        match f {
            FairnessArg::Alternation => Fairness::Alternation,
            FairnessArg::Statistical => Fairness::Statistical,
            FairnessArg::None => Fairness::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Surface,
    Identity,
}

struct Failure {
    code: u8,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::Parse(_) | Error::Json(_) | Error::Csv(_) | Error::InvalidConfig(_) | Error::InvalidArgument(_) => 2,
            Error::NoRealSolution(_) | Error::NegativeVariance(_) | Error::EmptySample(_) => 3,
            _ => 1,
        };
        Failure { code, error }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, error: Error::InvalidArgument(msg.into()) }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load_config(cli: &Cli) -> Result<(PathBuf, AirportConfig), Failure> {
    let path = cli.config.clone().ok_or_else(|| usage("--config is required for this command"))?;
    let cfg = AirportConfig::from_json(&read_input(&path)?)?;
    cfg.validate()?;
    Ok((path, cfg))
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn bundle(
    cli: &Cli,
    command: &str,
    cfg: &AirportConfig,
    cfg_path: &Path,
    seed: Option<u64>,
) -> Result<Bundle, Failure> {
    let mut manifest = Manifest::new(command, cfg, seed);
    manifest.input(cfg_path)?;
    Ok(Bundle::create(&out_dir(cli), manifest)?)
}

fn finish(bundle: Bundle) -> Result<(), Failure> {
    let manifest = bundle.finish()?;
    if manifest.failed() {
        let failed: Vec<String> =
            manifest.stages.iter().filter(|(_, v)| *v != "ok").map(|(k, v)| format!("{k}: {v}")).collect();
        return Err(Failure { code: 1, error: Error::Numerical(failed.join("; ")) });
    }
    Ok(())
}

fn with_fairness(mut cfg: AirportConfig, f: Option<FairnessArg>) -> Result<AirportConfig, Failure> {
    if let Some(f) = f {
        cfg.fairness = f.into();
        cfg.validate()?;
    }
    Ok(cfg)
}

fn solve_one(model: &TransitionModel, beta: f64) -> Result<Policy, Failure> {
    let fairness = model.config().effective_fairness();
    let point = pareto_sweep(model, &[beta], fairness, &LpOptions::default())?.remove(0);
    Ok(point.outcome?.policy)
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Result<Vec<u8>, Failure> {
    let mut text = serde_json::to_string_pretty(v).map_err(Error::from)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn write_sim(bundle: &mut Bundle, result: &SimResult, offset: i64) -> Result<(), Failure> {
    bundle.write("sim_result.json", &json_bytes(result)?)?;
    let curve = congestion_curve(result, offset);
    bundle.write_with("congestion.csv", |b| write_curve(&curve, b))?;
    Ok(())
}

fn cmd_calibrate(cli: &Cli, input: &Path, cutoff: u32, taxi: Option<&Path>) -> Result<(), Failure> {
    let text = read_input(input)?;
    let is_series = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let report = if is_series {
        let series = MinuteSeries::from_csv(text.as_bytes())?;
        let stats = saturation_stats(&series, cutoff)?;
        match taxi {
            Some(path) => {
                let mut base: CalibrationInput = serde_json::from_str(&read_input(path)?).map_err(Error::from)?;
                base.throughput = stats;
                serde_json::to_value(calibrate(&base)?).map_err(Error::from)?
            }
            None => {
                let (c1, c2) = solve_bernoulli_pair(stats)?;
                let (wait_mean, wait_std) = clearance_wait_stats(c1, c2)?;
                serde_json::json!({
                    "mean_rate": stats.mean_rate,
                    "std_rate": stats.std_rate,
                    "cutoff": cutoff,
                    "c1": c1,
                    "c2": c2,
                    "clearance_wait_mean": wait_mean,
                    "clearance_wait_std": wait_std,
                })
            }
        }
    } else {
        let input: CalibrationInput = serde_json::from_str(&text).map_err(Error::from)?;
        serde_json::to_value(calibrate(&input)?).map_err(Error::from)?
    };
    let bytes = json_bytes(&report)?;
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(Error::from)?;
            fs::write(dir.join("calibration.json"), &bytes).map_err(Error::from)?;
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

fn cmd_build(cli: &Cli) -> Result<(), Failure> {
    let (path, cfg) = load_config(cli)?;
    let mut b = bundle(cli, "build", &cfg, &path, None)?;
    let model = build_transitions(&cfg)?;
    let report = validate_kernel(&model);
    let summary = serde_json::json!({
        "states": report.states,
        "feasible_pairs": report.feasible_pairs,
        "nonzeros": report.nonzeros,
        "violations": report.violations.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>(),
    });
    b.write("kernel_report.json", &json_bytes(&summary)?)?;
    b.write_with("kernel.csv", |w| model.write_csv(w))?;
    if !report.passed() {
        b.manifest.stages.insert("validate".into(), format!("failed: {} violations", report.violations.len()));
    }
    println!("{} states, {} nonzeros, {} violations", report.states, report.nonzeros, report.violations.len());
    finish(b)
}

fn cmd_solve(cli: &Cli, betas: &[f64], fairness: Option<FairnessArg>) -> Result<(), Failure> {
    let (path, cfg) = load_config(cli)?;
    let cfg = with_fairness(cfg, fairness)?;
    for &beta in betas {
        CostParams::new(beta)?;
    }
    let mut b = bundle(cli, "solve", &cfg, &path, None)?;
    let model = build_transitions(&cfg)?;
    let points = pareto_sweep(&model, betas, cfg.effective_fairness(), &LpOptions::default())?;
    let mut rows = Vec::new();
    let mut details = Vec::new();
    for p in points {
        match p.outcome {
            Ok(o) => {
                b.write_with(&policy_file(p.beta), |w| o.policy.write_csv(&model, w))?;
                rows.push((p.beta, o.metrics));
                details.push(serde_json::json!({
                    "beta": p.beta,
                    "objective": o.solution.objective,
                    "lower_bound": o.solution.lower_bound,
                    "gap": o.solution.gap(),
                    "multiplier": o.solution.multiplier,
                    "balance_residual": o.solution.measure.balance_residual(&model),
                    "imbalance": o.solution.measure.imbalance(),
                    "randomized_states": o.policy.randomized.iter().map(|i| i.0).collect::<Vec<_>>(),
                    "transient_states": o.policy.transient,
                    "policy_metrics": o.policy_metrics,
                }));
                b.manifest.stages.insert(format!("beta={}", p.beta), "ok".into());
            }
            Err(e) => {
                b.manifest.stages.insert(format!("beta={}", p.beta), format!("failed: {e}"));
            }
        }
    }
    b.write_with("optimal_metrics.csv", |w| write_metrics("beta", &rows, w))?;
    b.write("solve_report.json", &json_bytes(&details)?)?;
    finish(b)
}

fn cmd_threshold(cli: &Cli, thresholds: &[u32], beta: f64) -> Result<(), Failure> {
    let (path, cfg) = load_config(cli)?;
    for &th in thresholds {
        ThresholdParams::new(th, &cfg)?;
    }
    let mut b = bundle(cli, "threshold", &cfg, &path, None)?;
    let model = build_transitions(&cfg)?;
    let mut rows = Vec::new();
    for (th, ev) in threshold_sweep(&model, thresholds, CostParams::new(beta)?)? {
        match ev {
            Ok(ev) => {
                rows.push((f64::from(th), ev.metrics));
                b.manifest.stages.insert(format!("th={th}"), "ok".into());
            }
            Err(e) => {
                b.manifest.stages.insert(format!("th={th}"), format!("failed: {e}"));
            }
        }
    }
    b.write_with("threshold_metrics.csv", |w| write_metrics("threshold", &rows, w))?;
    finish(b)
}

fn cmd_mls(
    cli: &Cli,
    beta: f64,
    fairness: Option<FairnessArg>,
    channel: ChannelArg,
    trajectory: bool,
    sim: SimArgs,
) -> Result<(), Failure> {
    let (path, cfg) = load_config(cli)?;
    let cfg = with_fairness(cfg, fairness)?;
    let sim = sim.config(cli.seed.unwrap_or(0));
    sim.validate()?;
    let mut b = bundle(cli, "mls", &cfg, &path, Some(sim.seed))?;
    let model = build_transitions(&cfg)?;
    let policy = solve_one(&model, beta)?;
    let channel = match channel {
        ChannelArg::Surface => Channel::Surface,
        ChannelArg::Identity => Channel::Identity,
    };
    let obs = ObservationModel::new(&model, channel)?;
    let make = |_| Ok(MlsSim { inner: MlsController::new(&model, &obs, &policy, InitialBelief::Empty)?, obs: &obs });
    let result = rollout(&model, make, &sim)?;
    write_sim(&mut b, &result, 0)?;
    if trajectory {
        let mut ctrl =
            MlsSim { inner: MlsController::new(&model, &obs, &policy, InitialBelief::Empty)?.with_log(), obs: &obs };
        run_single(&model, &mut ctrl, &sim, 0)?;
        let log = ctrl.inner.log().unwrap_or(&[]);
        b.write_with("mls_trajectory.csv", |w| write_trajectory(log, w))?;
    }
    finish(b)
}

fn parse_policy(model: &TransitionModel, spec: &str) -> Result<Vec<spotrelease::transition::Decision>, Failure> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "saturating" => Ok(saturating_policy(model)),
        "never" => Ok(never_clear_policy(model)),
        "threshold" => {
            let th: u32 = arg.parse().map_err(|_| usage(format!("bad threshold in {spec:?}")))?;
            Ok(threshold_policy(model, ThresholdParams::new(th, model.config())?)?)
        }
        "optimal" => {
            let beta: f64 = arg.parse().map_err(|_| usage(format!("bad beta in {spec:?}")))?;
            Ok(solve_one(model, beta)?.decisions)
        }
        _ => {
            let text = read_input(Path::new(spec))?;
            Ok(Policy::read_csv(model, text.as_bytes(), PolicyKind::FullState)?.decisions)
        }
    }
}

fn cmd_simulate(cli: &Cli, policy: &str, offset: i64, sim: SimArgs) -> Result<(), Failure> {
    let (path, cfg) = load_config(cli)?;
    let sim = sim.config(cli.seed.unwrap_or(0));
    sim.validate()?;
    let mut b = bundle(cli, "simulate", &cfg, &path, Some(sim.seed))?;
    let model = build_transitions(&cfg)?;
    let table = parse_policy(&model, policy)?;
    let result = rollout_table(&model, &table, &sim)?;
    write_sim(&mut b, &result, offset)?;
    println!(
        "take-off rate {:.4} (std {:.4}), mean surface count {:.4}, utilization {:.4}",
        result.takeoff_mean, result.takeoff_std, result.mean_n_ac, result.utilization
    );
    finish(b)
}

fn cmd_compare(cli: &Cli, spec: &Path) -> Result<(), Failure> {
    read_input(spec)?;
    let manifest = run_experiment(spec, cli.out.as_deref(), cli.seed, &LpOptions::default())?;
    if manifest.failed() {
        let failed: Vec<String> =
            manifest.stages.iter().filter(|(_, v)| *v != "ok").map(|(k, v)| format!("{k}: {v}")).collect();
        return Err(Failure { code: 1, error: Error::Numerical(failed.join("; ")) });
    }
    Ok(())
}

fn cmd_emissions(cli: &Cli, comparison: &Path, factor: f64) -> Result<(), Failure> {
    let text = read_input(comparison)?;
    let rows = read_comparison(text.as_bytes())?;
    let out = emissions(&rows, factor)?;
    let mut buf = Vec::new();
    write_emissions(&out, &mut buf)?;
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(Error::from)?;
            fs::write(dir.join("emissions.csv"), &buf).map_err(Error::from)?;
        }
        None => print!("{}", String::from_utf8_lossy(&buf)),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Calibrate { input, cutoff, taxi } => cmd_calibrate(&cli, input, *cutoff, taxi.as_deref()),
        Command::Build => cmd_build(&cli),
        Command::Solve { betas, fairness } => cmd_solve(&cli, betas, *fairness),
        Command::Threshold { thresholds, beta } => cmd_threshold(&cli, thresholds, *beta),
        Command::Mls { beta, fairness, channel, trajectory, sim } => {
            cmd_mls(&cli, *beta, *fairness, *channel, *trajectory, *sim)
        }
        Command::Simulate { policy, offset, sim } => cmd_simulate(&cli, policy, *offset, *sim),
        Command::Compare { spec } => cmd_compare(&cli, spec),
        Command::Emissions { comparison, factor } => cmd_emissions(&cli, comparison, *factor),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
