use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lqswitch::adaptive::{adaptive_run, gap_curve, AdaptiveConfig, DwellSchedule, ThresholdSchedule};
use lqswitch::control::{dare_solve, LQWeights, LinearPlant, Matrix};
use lqswitch::experiments::{
    adaptive_steps_csv, adaptive_updates_csv, bound_report, certify_report, dare_report, estimate_text,
    example1_plant, example1_weights, gap_curve_csv, gap_sweep, gap_sweep_csv, simulate, standin_plant,
    standin_weights, trajectory_csv, write_example_bundle, write_file, AnyController, BundleConfig, Provenance,
};
use lqswitch::matio::{load_gain, load_plant, load_weights};
use lqswitch::montecarlo::MonteCarloConfig;
use lqswitch::{Error, Result};

/// Switched LQ control: Riccati solutions, stability certificates, bounds
/// and Monte Carlo experiments.
#[derive(Debug, Parser)]
#[command(name = "lqswitch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the Riccati equation and report P*, K*, J*.
    Dare(DareArgs),
    /// Build and check the certificates for (K0, K1).
    Certify(CertifyArgs),
    /// Evaluate every bound at a given threshold and dwell time.
    Bound(BoundArgs),
    /// Monte Carlo cost of the switched or linear controller.
    Simulate(SimulateArgs),
    /// Gap bound and paired Monte Carlo gap over a range of thresholds.
    GapSweep(SweepArgs),
    /// Least-squares learning run with the switch in the loop.
    Adaptive(AdaptiveArgs),
    /// Write the dwell-time comparison and learning gap-curve CSVs.
    Examples(BundleArgs),
}

#[derive(Debug, Args)]
struct System {
    /// Plant file with blocks A, B, W (or @example1, @standin).
    #[arg(long, default_value = "@example1")]
    plant: String,
    /// Weights file with blocks Q, R (or @example1, @standin).
    #[arg(long, default_value = "@example1")]
    weights: String,
}

#[derive(Debug, Args)]
struct Gains {
    /// Fallback gain: a matrix file, "zero", "optimal", or rows like "0,0.7;1,2".
    #[arg(long, default_value = "zero", allow_hyphen_values = true)]
    k0: String,
    /// Primary gain, same forms as --k0.
    #[arg(long, default_value = "optimal", allow_hyphen_values = true)]
    k1: String,
}

#[derive(Debug, Args)]
struct Sampling {
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    #[arg(long = "n-traj", default_value_t = 1000)]
    n_traj: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
}

impl Sampling {
    fn config(&self) -> MonteCarloConfig {
        let mut mc = MonteCarloConfig::new(self.horizon, self.n_traj, self.seed);
        mc.threads = self.threads;
        mc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
struct DareArgs {
    #[command(flatten)]
    system: System,
    /// Output path prefix; prints to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[command(flatten)]
    system: System,
    #[command(flatten)]
    gains: Gains,
    /// Threshold M for the bounds.
    #[arg(long = "M")]
    threshold: Option<f64>,
    /// Dwell time t for the bounds (t_min when absent).
    #[arg(long)]
    dwell: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[command(flatten)]
    system: System,
    #[command(flatten)]
    gains: Gains,
    #[arg(long = "M")]
    threshold: f64,
    #[arg(long)]
    dwell: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    system: System,
    #[command(flatten)]
    gains: Gains,
    #[arg(long = "M", default_value_t = 10.0)]
    threshold: f64,
    #[arg(long, default_value_t = 1)]
    dwell: usize,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    switch: Switch,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    system: System,
    #[command(flatten)]
    gains: Gains,
    /// Comma-separated thresholds; multiples of M0 when absent.
    #[arg(long = "M", value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long)]
    dwell: Option<usize>,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AdaptiveArgs {
    #[command(flatten)]
    system: System,
    /// Fallback gain, same forms as for the other commands.
    #[arg(long, default_value = "zero", allow_hyphen_values = true)]
    k0: String,
    #[arg(long, default_value_t = 1024)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    switch: Switch,
    /// A fixed threshold, or "schedule" for max(ln(k+1), 1).
    #[arg(long = "M", default_value = "schedule")]
    threshold: String,
    /// A fixed dwell time, or "schedule" for max(floor(ln(k+1)), 1).
    #[arg(long, default_value = "schedule")]
    dwell: String,
    #[arg(long = "eval-horizon", default_value_t = 100)]
    eval_horizon: usize,
    #[arg(long = "eval-n-traj", default_value_t = 1000)]
    eval_n_traj: usize,
    #[arg(long)]
    threads: Option<usize>,
    /// Output path prefix for the step, update and gap-curve CSVs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BundleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "dwell-horizon", default_value_t = 1000)]
    dwell_horizon: usize,
    /// Learning run length; the default covers updates up to k = 2^14.
    #[arg(long = "learning-horizon", default_value_t = (1 << 14) + 1)]
    learning_horizon: usize,
    #[arg(long = "eval-horizon", default_value_t = 100)]
    eval_horizon: usize,
    #[arg(long = "eval-n-traj", default_value_t = 1000)]
    eval_n_traj: usize,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn load_system(s: &System) -> Result<(LinearPlant, LQWeights)> {
    let plant = match s.plant.as_str() {
        "@example1" => example1_plant(),
        "@standin" => standin_plant(),
        path => load_plant(path)?,
    };
    let weights = match s.weights.as_str() {
        "@example1" => example1_weights(),
        "@standin" => standin_weights(),
        path => load_weights(path)?,
    };
    weights.check_plant(&plant)?;
    Ok((plant, weights))
}

fn parse_inline(text: &str) -> Option<Matrix> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|r| r.split(',').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<_, _>>())
        .collect::<std::result::Result<_, _>>()
        .ok()?;
    let cols = rows.first()?.len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return None;
    }
    Some(Matrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

fn resolve_gain(spec: &str, plant: &LinearPlant, weights: &LQWeights) -> Result<Matrix> {
    let k = match spec {
        "zero" => Matrix::zeros(plant.m(), plant.n()),
        "optimal" => dare_solve(plant, weights)?.k_star,
        _ => match parse_inline(spec) {
            Some(k) if !Path::new(spec).exists() => k,
            _ => load_gain(spec)?,
        },
    };
    plant.check_gain(&k)?;
    Ok(k)
}

fn emit(out: Option<&Path>, suffix: &str, text: &str) -> Result<()> {
    match out {
        Some(prefix) => {
            let mut path = prefix.as_os_str().to_os_string();
            path.push(suffix);
            let path = write_file(Path::new(&path), text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn system_provenance(command: &str, s: &System) -> Provenance {
    Provenance::new(command).param("plant", &s.plant).param("weights", &s.weights)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dare(a) => {
            let (plant, weights) = load_system(&a.system)?;
            let report = dare_report(&plant, &weights)?;
            emit(a.out.as_deref(), "dare.txt", &report.to_text(&system_provenance("dare", &a.system)))
        }
        Command::Certify(a) => {
            let (plant, weights) = load_system(&a.system)?;
            let k0 = resolve_gain(&a.gains.k0, &plant, &weights)?;
            let k1 = resolve_gain(&a.gains.k1, &plant, &weights)?;
            let hyper = match (a.threshold, a.dwell) {
                (Some(m), Some(t)) => Some((m, t)),
                (Some(m), None) => {
                    let t = match lqswitch::certificates::build_common_certificate(&plant, &k0, &k1, None) {
                        Ok(c) => c.t_min,
                        Err(_) => 1,
                    };
                    Some((m, t))
                }
                (None, Some(_)) => return Err(Error::Invalid("--dwell needs --M".into())),
                (None, None) => None,
            };
            let report = certify_report(&plant, &weights, &k0, &k1, hyper)?;
            let mut prov = system_provenance("certify", &a.system).param("k0", &a.gains.k0).param("k1", &a.gains.k1);
            if let Some((m, t)) = hyper {
                prov = prov.param("M", m).param("dwell", t);
            }
            emit(a.out.as_deref(), "certify.txt", &report.to_text(&prov))
        }
        Command::Bound(a) => {
            let (plant, weights) = load_system(&a.system)?;
            let k0 = resolve_gain(&a.gains.k0, &plant, &weights)?;
            let k1 = resolve_gain(&a.gains.k1, &plant, &weights)?;
            let report = bound_report(&plant, &weights, &k0, &k1, a.threshold, a.dwell)?;
            let prov = system_provenance("bound", &a.system)
                .param("k0", &a.gains.k0)
                .param("k1", &a.gains.k1)
                .param("M", a.threshold)
                .param("dwell", a.dwell);
            emit(a.out.as_deref(), "bound.txt", &report.to_text(&prov))
        }
        Command::Simulate(a) => {
            let (plant, weights) = load_system(&a.system)?;
            let k0 = resolve_gain(&a.gains.k0, &plant, &weights)?;
            let k1 = resolve_gain(&a.gains.k1, &plant, &weights)?;
            let controller = AnyController::new(&k0, &k1, a.threshold, a.dwell, a.switch == Switch::On)?;
            let mc = a.sampling.config();
            let sim = simulate(&plant, &weights, &controller, mc)?;
            let prov = system_provenance("simulate", &a.system)
                .seed(mc.seed)
                .param("k0", &a.gains.k0)
                .param("k1", &a.gains.k1)
                .param("M", a.threshold)
                .param("dwell", a.dwell)
                .param("switch", if a.switch == Switch::On { "on" } else { "off" })
                .param("horizon", mc.horizon)
                .param("n_traj", mc.n_traj);
            if a.out.is_some() {
                emit(a.out.as_deref(), "trajectory.csv", &trajectory_csv(&sim.trajectory, &prov))?;
            }
            emit(a.out.as_deref(), "estimate.txt", &estimate_text(&sim.estimate, &prov))
        }
        Command::GapSweep(a) => {
            let (plant, weights) = load_system(&a.system)?;
            let k0 = resolve_gain(&a.gains.k0, &plant, &weights)?;
            let k1 = resolve_gain(&a.gains.k1, &plant, &weights)?;
            let mc = a.sampling.config();
            let sweep = gap_sweep(&plant, &weights, &k0, &k1, a.thresholds.as_deref(), a.dwell, mc)?;
            let prov = system_provenance("gap-sweep", &a.system)
                .seed(mc.seed)
                .param("k0", &a.gains.k0)
                .param("k1", &a.gains.k1)
                .param("dwell", a.dwell.unwrap_or(sweep.t_min))
                .param("horizon", mc.horizon)
                .param("n_traj", mc.n_traj);
            emit(a.out.as_deref(), "gap_sweep.csv", &gap_sweep_csv(&sweep, &prov))
        }
        Command::Adaptive(a) => {
            let (plant, weights) = load_system(&a.system)?;
            let k0 = resolve_gain(&a.k0, &plant, &weights)?;
            let mut cfg = AdaptiveConfig::new(k0);
            if a.threshold != "schedule" {
                let m: f64 = a
                    .threshold
                    .parse()
                    .map_err(|_| Error::Invalid(format!("--M expects a number or \"schedule\", got {:?}", a.threshold)))?;
                cfg.threshold = ThresholdSchedule::Fixed(m);
            }
            if a.dwell != "schedule" {
                let t: usize = a
                    .dwell
                    .parse()
                    .map_err(|_| Error::Invalid(format!("--dwell expects an integer or \"schedule\", got {:?}", a.dwell)))?;
                cfg.dwell = DwellSchedule::Fixed(t);
            }
            cfg.switching = a.switch == Switch::On;
            let rec = adaptive_run(&plant, &weights, &cfg, a.horizon, a.seed)?;
            let mut mc = MonteCarloConfig::new(a.eval_horizon, a.eval_n_traj, a.seed.wrapping_add(1));
            mc.threads = a.threads;
            let points = gap_curve(&plant, &weights, &rec, mc)?;
            let prov = system_provenance("adaptive", &a.system)
                .seed(a.seed)
                .param("k0", &a.k0)
                .param("horizon", a.horizon)
                .param("switch", if cfg.switching { "on" } else { "off" })
                .param("M", &a.threshold)
                .param("dwell", &a.dwell)
                .param("eval_horizon", mc.horizon)
                .param("eval_n_traj", mc.n_traj)
                .param("eval_seed", mc.seed);
            let out = Some(a.out.as_path());
            emit(out, "steps.csv", &adaptive_steps_csv(&rec, &prov))?;
            emit(out, "updates.csv", &adaptive_updates_csv(&rec, &prov))?;
            emit(out, "gap.csv", &gap_curve_csv(&points, &prov))
        }
        Command::Examples(a) => {
            let cfg = BundleConfig {
                seed: a.seed,
                dwell_horizon: a.dwell_horizon,
                learning_horizon: a.learning_horizon,
                eval_horizon: a.eval_horizon,
                eval_n_traj: a.eval_n_traj,
                threads: a.threads,
            };
            for path in write_example_bundle(&a.out, cfg)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
