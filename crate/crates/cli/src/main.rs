use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use coop_aloha::analysis::{
    noncoop_asymptotic, noncoop_exact_mixture, spatial_upper_bound, temporal_lower_bound, threshold_bounds,
    AreaSamples, AsymptoticMode,
};
use coop_aloha::evolution::{
    default_g_hi, single_bs_hstar, stability_bound, threshold_estimate, threshold_inverse, QResolution,
    DEFAULT_BISECT_TOL, DEFAULT_J_GRID,
};
use coop_aloha::geometry::radius_for_delta;
use coop_aloha::harness::config::load_range;
use coop_aloha::harness::{linear_fit, linearity_study, run_experiment, write_csv, ExperimentConfig, DEFAULT_G_STEP};
use coop_aloha::optimize::{finetune_two_mass, optimize_lambda, OptimizerConfig, DEFAULT_SEARCH_RESOLUTION};
use coop_aloha::phy::{calibrate_radius, SnrReading};
use coop_aloha::traffic::DEFAULT_MAX_DEGREE;
use coop_aloha::{DegreeDistribution, Error, NamedDistribution, PhyConfig, PlacementConfig};

#[derive(Parser)]
#[command(name = "coop-aloha", version, about = "Cooperative framed slotted Aloha simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment described by a JSON config.
    Simulate(SimulateArgs),
    /// Evaluate the analytical formulas over a (delta, G) grid.
    Formulas(FormulasArgs),
    /// Generate or load cached union-area samples.
    Alphas(AlphasArgs),
    /// Density-evolution thresholds, stability bound and single-station H*.
    Threshold(ThresholdArgs),
    /// Optimize the temporal degree distribution.
    Optimize(OptimizeArgs),
    /// Physical-layer experiments.
    Physim {
        #[command(subcommand)]
        command: PhyCommand,
    },
}

#[derive(Args)]
struct Output {
    /// CSV destination; a `.meta.json` sidecar is written next to it. Stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON experiment config.
    #[arg(short, long)]
    config: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Fast,
    Integral,
    Mixture,
}

#[derive(Args)]
struct FormulasArgs {
    /// Spatial degrees, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    delta: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_G_STEP)]
    g_start: f64,
    #[arg(long, default_value_t = 1.0)]
    g_stop: f64,
    #[arg(long, default_value_t = DEFAULT_G_STEP)]
    g_step: f64,
    #[arg(long, value_enum, default_value_t = Mode::Mixture)]
    mode: Mode,
    /// Stations for the finite-size formula; omitted means asymptotic only.
    #[arg(long)]
    m: Option<usize>,
    /// Slots per frame for the finite-size formula.
    #[arg(long, default_value_t = 40)]
    tau: usize,
    /// Temporal degree distribution for the temporal bound.
    #[arg(long, default_value = "crdsa2")]
    distribution: String,
    /// Draws for the mixture estimator.
    #[arg(long, default_value_t = 40_000)]
    configs: usize,
    /// Area samples per k for the fast and integral modes.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Cache file for area samples.
    #[arg(long)]
    alpha_cache: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct AlphasArgs {
    #[arg(long, default_value_t = 40)]
    k_max: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cache file, reused when its key matches.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    delta: Vec<f64>,
    /// Named distribution or `degree:prob` pairs such as `2:0.5,3:0.28,8:0.22`.
    #[arg(long, default_value = "crdsa2")]
    distribution: String,
    /// Resolution of the q grid.
    #[arg(long, default_value_t = DEFAULT_J_GRID)]
    j: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0])]
    delta: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Resolution of the q grid; zero means the continuum.
    #[arg(long, default_value_t = 20_000)]
    j: usize,
    /// Grid search over two-mass distributions instead of random search.
    #[arg(long)]
    finetune: bool,
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Subcommand)]
enum PhyCommand {
    /// Radius at which the mean SNR meets the threshold.
    Calibrate(CalibrateArgs),
    /// Run an experiment whose config carries a `phy` block.
    Run(SimulateArgs),
    /// Peak throughput as the number of stations grows.
    Linearity(LinearityArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 40)]
    m: usize,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 0.09)]
    noise: f64,
    #[arg(long)]
    double_path_loss: bool,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LinearityArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 40, 80])]
    m_grid: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    calibration_samples: usize,
    #[command(flatten)]
    output: Output,
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn parse_distribution(text: &str) -> Result<DegreeDistribution> {
    if text.contains(':') {
        let pairs = text
            .split(',')
            .map(|p| {
                let (s, v) = p.split_once(':').ok_or_else(|| config_error(format!("bad pair '{p}'")))?;
                let s = s.trim().parse::<usize>().map_err(|e| config_error(format!("bad degree '{s}': {e}")))?;
                let v = v.trim().parse::<f64>().map_err(|e| config_error(format!("bad probability '{v}': {e}")))?;
                Ok((s, v))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DegreeDistribution::from_pairs(&pairs, DEFAULT_MAX_DEGREE)?)
    } else {
        Ok(DegreeDistribution::named(text.parse::<NamedDistribution>()?))
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    Ok(ExperimentConfig::from_json(&text)?)
}

/// Writes `body` to the destination and, for files, the metadata sidecar.
fn emit(output: &Output, body: &[u8], meta: serde_json::Value) -> Result<()> {
    match &output.out {
        None => io::stdout().write_all(body).context("writing to stdout"),
        Some(path) => {
            fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
            let mut side = path.as_os_str().to_owned();
            side.push(".meta.json");
            let text = serde_json::to_string_pretty(&meta)?;
            fs::write(&side, text + "\n").with_context(|| format!("writing {}", Path::new(&side).display()))
        }
    }
}

fn simulate(args: &SimulateArgs, need_phy: bool) -> Result<()> {
    let cfg = read_config(&args.config)?;
    if need_phy && cfg.phy.is_none() {
        return Err(config_error("physical-layer runs need a phy block"));
    }
    let spec = cfg.resolve()?;
    let result = run_experiment(&spec)?;
    let mut body = Vec::new();
    write_csv(&mut body, &result, spec.delta(), spec.master_seed)?;
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "resolved": spec,
        "skipped_loads": result.skipped,
    });
    emit(&args.output, &body, meta)
}

fn formulas(args: &FormulasArgs) -> Result<()> {
    let grid = load_range(args.g_start, args.g_stop, args.g_step)?;
    let dist = parse_distribution(&args.distribution)?;
    let areas = match args.mode {
        Mode::Mixture => None,
        Mode::Fast | Mode::Integral => {
            let k_max = args.delta.iter().map(|d| (5.0 * d).ceil() as usize).max().unwrap_or(1).max(args.m.unwrap_or(0));
            Some(match &args.alpha_cache {
                Some(p) => AreaSamples::load_or_generate(p, k_max, args.samples, args.seed)?,
                None => coop_aloha::analysis::sample_alphas(k_max, args.samples, args.seed),
            })
        }
    };
    let mut body = Vec::new();
    writeln!(
        body,
        "delta,g,noncoop_asymptotic,noncoop_asymptotic_stderr,spatial_upper_bound,temporal_lower_bound,noncoop_exact,noncoop_exact_lower,noncoop_exact_upper"
    )?;
    for &delta in &args.delta {
        for &g in &grid {
            let asym = match (&areas, args.mode) {
                (Some(a), Mode::Fast) => noncoop_asymptotic(delta, g, a, AsymptoticMode::Fast)?,
                (Some(a), _) => noncoop_asymptotic(delta, g, a, AsymptoticMode::Integral)?,
                (None, _) => noncoop_asymptotic(
                    delta,
                    g,
                    &AreaSamples { k_max: 0, samples: Vec::new(), means: Vec::new() },
                    AsymptoticMode::Mixture { configs: args.configs, seed: args.seed },
                )?,
            };
            let temporal = temporal_lower_bound(delta, g, &dist, 1e-6)?;
            let exact = match args.m {
                Some(m) if radius_for_delta(delta, m) <= 0.25 => {
                    let n = (g * (m * args.tau) as f64).round() as usize;
                    if n == 0 {
                        None
                    } else {
                        let cfg = PlacementConfig::from_delta(n, m, args.tau, delta, 0);
                        Some(noncoop_exact_mixture(&cfg, args.configs, args.seed)?)
                    }
                }
                _ => None,
            };
            let (e, lo, hi) = exact.map_or((String::new(), String::new(), String::new()), |x| {
                (x.nominal.value.to_string(), x.lower.to_string(), x.upper.to_string())
            });
            writeln!(
                body,
                "{delta},{g},{},{},{},{temporal},{e},{lo},{hi}",
                asym.value,
                asym.std_error,
                spatial_upper_bound(delta, g)
            )?;
        }
    }
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "mode": match args.mode { Mode::Fast => "fast", Mode::Integral => "integral", Mode::Mixture => "mixture" },
        "g_step": args.g_step,
        "distribution": dist,
        "m": args.m,
        "tau": args.tau,
        "configs": args.configs,
        "samples": args.samples,
        "seed": args.seed,
    });
    emit(&args.output, &body, meta)
}

fn alphas(args: &AlphasArgs) -> Result<()> {
    if args.k_max == 0 || args.samples == 0 {
        return Err(config_error("k_max and samples must be positive"));
    }
    let areas = match &args.cache {
        Some(p) => AreaSamples::load_or_generate(p, args.k_max, args.samples, args.seed)?,
        None => coop_aloha::analysis::sample_alphas(args.k_max, args.samples, args.seed),
    };
    let mut body = Vec::new();
    areas.write_means_csv(&mut body)?;
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "k_max": args.k_max,
        "samples": args.samples,
        "seed": args.seed,
    });
    emit(&args.output, &body, meta)
}

fn flag_text<T: std::fmt::Debug>(f: Option<T>) -> String {
    f.map(|f| format!("{f:?}")).unwrap_or_default()
}

fn threshold(args: &ThresholdArgs) -> Result<()> {
    if args.j == 0 {
        return Err(config_error("j must be positive"));
    }
    let dist = parse_distribution(&args.distribution)?;
    let hstar = single_bs_hstar(&dist, 1e-6);
    let mut body = Vec::new();
    writeln!(
        body,
        "delta,threshold,threshold_flag,threshold_continuum,stability_bound,single_station_hstar,temporal_threshold_lb"
    )?;
    for &delta in &args.delta {
        if !(delta > 0.0) {
            return Err(config_error("delta must be positive"));
        }
        let t = threshold_estimate(delta, &dist, args.j, default_g_hi(delta, &dist), DEFAULT_BISECT_TOL);
        let c = threshold_inverse(delta, &dist, QResolution::Continuum);
        let bound = stability_bound(delta, &dist).map(|b| b.to_string()).unwrap_or_default();
        writeln!(
            body,
            "{delta},{},{},{},{bound},{},{}",
            t.value,
            flag_text(t.flag),
            c.value,
            hstar.value,
            threshold_bounds(delta, &dist).temporal_lb
        )?;
    }
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "distribution": dist,
        "j": args.j,
        "bisect_tol": DEFAULT_BISECT_TOL,
        "hstar_flag": flag_text(hstar.flag),
    });
    emit(&args.output, &body, meta)
}

fn optimize(args: &OptimizeArgs) -> Result<()> {
    let res = if args.j == 0 { QResolution::Continuum } else { QResolution::Grid(args.j) };
    let mut body = Vec::new();
    if args.finetune {
        writeln!(body, "delta,lambda1,lambda2,g_star")?;
        for &delta in &args.delta {
            let t = finetune_two_mass(delta, args.grid_points, res);
            writeln!(body, "{delta},{},{},{}", t.lambda1, 1.0 - t.lambda1, t.g_star)?;
        }
    } else {
        let cols: Vec<String> = (1..=DEFAULT_MAX_DEGREE).map(|s| format!("lambda{s}")).collect();
        writeln!(body, "delta,g_star,{}", cols.join(","))?;
        for &delta in &args.delta {
            let cfg = OptimizerConfig {
                delta,
                iterations: args.iterations,
                restarts: args.restarts,
                seed: args.seed,
                resolution: res,
                ..OptimizerConfig::default()
            };
            let found = optimize_lambda(&cfg);
            let probs: Vec<String> = (1..=DEFAULT_MAX_DEGREE).map(|s| found.dist.prob(s).to_string()).collect();
            writeln!(body, "{delta},{},{}", found.g_star, probs.join(","))?;
        }
    }
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "resolution": res,
        "default_resolution": DEFAULT_SEARCH_RESOLUTION,
        "iterations": args.iterations,
        "restarts": args.restarts,
        "seed": args.seed,
        "finetune": args.finetune,
    });
    emit(&args.output, &body, meta)
}

fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let mut cfg = PhyConfig::new(args.alpha, args.theta, args.noise);
    if args.double_path_loss {
        cfg.snr_reading = SnrReading::DoublePathLoss;
    }
    let cal = calibrate_radius(&cfg, args.m, args.samples, 1e-6, args.seed)?;
    let delta = args.m as f64 * cal.r * cal.r * std::f64::consts::PI;
    println!("r = {:.6}  delta = {delta:.3}  snr = {:.4} ± {:.4}", cal.r, cal.snr, cal.snr_std_error);
    Ok(())
}

fn linearity(args: &LinearityArgs) -> Result<()> {
    let cfg = read_config(&args.config)?;
    let spec = cfg.resolve()?;
    let pts = linearity_study(&spec, &args.m_grid, args.calibration_samples)?;
    let x: Vec<f64> = pts.iter().map(|p| p.m as f64).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.unnormalized_peak).collect();
    let fit = linear_fit(&x, &y);
    let mut body = Vec::new();
    writeln!(body, "m,r,peak_g,peak_throughput,unnormalized_peak")?;
    for p in &pts {
        writeln!(body, "{},{},{},{},{}", p.m, p.r, p.peak_g, p.peak_throughput, p.unnormalized_peak)?;
    }
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "fit": fit,
    });
    emit(&args.output, &body, meta)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a, false),
        Command::Formulas(a) => formulas(&a),
        Command::Alphas(a) => alphas(&a),
        Command::Threshold(a) => threshold(&a),
        Command::Optimize(a) => optimize(&a),
        Command::Physim { command } => match command {
            PhyCommand::Calibrate(a) => calibrate(&a),
            PhyCommand::Run(a) => simulate(&a, true),
            PhyCommand::Linearity(a) => linearity(&a),
        },
    }
}

/// 1 for configuration problems, 2 for everything that fails at run time.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
