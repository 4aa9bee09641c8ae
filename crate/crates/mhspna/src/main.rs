use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mhspna_core::betweenness::ColumnId;

use mhspna::commands::{self, PredictArgs, PredictMode, SynthArgs};
use mhspna::config::ProjectConfig;
use mhspna::error::{CliError, CliResult};
use mhspna::synth::WeightPlan;

#[derive(Parser)]
#[command(
    name = "mhspna",
    version,
    about = "Pedestrian flow models on street networks: prepare, analyze, calibrate, predict"
)]
struct Cli {
    /// Project configuration JSON (strict keys)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the randomized metric and cross-validation (default: config seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap worker threads; never changes results
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Direct,
    Incremental,
    Null,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanArg {
    None,
    Default,
}

#[derive(Subcommand)]
enum Command {
    /// Clean a network: drop duplicate links, split at interior junctions, remove islands
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Cleaning report JSON
        #[arg(long)]
        report: Option<PathBuf>,
        /// Junction snap tolerance in metres (default: config)
        #[arg(long)]
        tolerance: Option<f64>,
        /// Keep disconnected components
        #[arg(long)]
        keep_islands: bool,
    },
    /// Run the configured analysis battery and write per-link flows
    Analyze {
        #[arg(long)]
        network: PathBuf,
        /// Flow GeoJSON (one property per column)
        #[arg(long)]
        output: PathBuf,
        /// Also write a flow CSV (link_id,analysis,radius,value)
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fit the weighted ridge model against observed counts
    Calibrate {
        #[arg(long)]
        network: PathBuf,
        /// Flow CSV from analyze
        #[arg(long)]
        flows: PathBuf,
        /// Counts CSV (point_id,x,y,year,flow)
        #[arg(long)]
        counts: PathBuf,
        /// Observation year to calibrate against
        #[arg(long)]
        year: String,
        /// Model JSON output
        #[arg(long)]
        model: PathBuf,
        /// Coefficient table CSV (variable,radius,coeff,std,stdcoeff)
        #[arg(long)]
        coefficients: Option<PathBuf>,
        /// Fit without an intercept
        #[arg(long)]
        no_intercept: bool,
    },
    /// Predict flows with a calibrated model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Network for direct mode
        #[arg(long)]
        network: Option<PathBuf>,
        /// Baseline-epoch network for incremental mode
        #[arg(long)]
        network_t1: Option<PathBuf>,
        /// Edited-epoch network for incremental mode
        #[arg(long)]
        network_t2: Option<PathBuf>,
        /// Baseline counts CSV (incremental and null modes)
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Year of the baseline observations
        #[arg(long)]
        year: Option<String>,
        /// Year label written on predicted rows
        #[arg(long, default_value = "predicted")]
        label: String,
        /// Direct mode writes GeoJSON, the others a counts-schema CSV
        #[arg(long)]
        output: PathBuf,
    },
    /// Score predictions against observations (r2, GEH)
    Evaluate {
        /// Predictions CSV in the counts schema
        #[arg(long)]
        predictions: PathBuf,
        /// Year label carried by prediction rows
        #[arg(long)]
        pred_year: String,
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        obs_year: String,
        /// Report JSON output
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a synthetic grid network, optionally with planted counts
    Synth {
        /// Junction rows
        #[arg(long)]
        rows: usize,
        /// Junction columns
        #[arg(long)]
        cols: usize,
        /// Junction spacing in metres
        #[arg(long, default_value_t = 100.0)]
        spacing: f64,
        /// Weight plan: none, or default (retail/carpark/station fields)
        #[arg(long, value_enum, default_value_t = PlanArg::None)]
        plan: PlanArg,
        #[arg(long)]
        output: PathBuf,
        /// Write planted counts here (runs the configured battery)
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long, default_value = "2007")]
        plant_year: String,
        #[arg(long, default_value_t = 60)]
        plant_points: usize,
        #[arg(long, default_value_t = 100.0)]
        plant_intercept: f64,
        /// Planted coefficient as "key@radius=value"; repeatable
        #[arg(long = "plant-coeff")]
        plant_coeffs: Vec<String>,
        /// Multiplicative noise level on planted counts
        #[arg(long, default_value_t = 0.0)]
        plant_noise: f64,
    },
    /// Rerun one analysis over an (a, sigma) grid and score each cell
    SweepSigma {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        year: String,
        /// Key of the configured analysis to sweep
        #[arg(long)]
        analysis: String,
        /// Outer radius for the swept column
        #[arg(long)]
        radius: f64,
        /// Comma-separated sigma values
        #[arg(long)]
        sigma_grid: String,
        /// Comma-separated blend values (default: the configured a)
        #[arg(long)]
        a_grid: Option<String>,
        /// Output CSV (a,sigma,r2)
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_grid(flag: &str, s: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let v: f64 = part
            .parse()
            .map_err(|e| CliError::usage(format!("{flag}: bad number {part:?} ({e})")))?;
        out.push(v);
    }
    Ok(out)
}

fn parse_plant_coeff(s: &str) -> CliResult<(ColumnId, f64)> {
    let (label, value) = s
        .rsplit_once('=')
        .ok_or_else(|| CliError::usage(format!("--plant-coeff {s:?}: expected label=value")))?;
    let id = ColumnId::parse(label).ok_or_else(|| {
        CliError::usage(format!("--plant-coeff {s:?}: label must look like key@radius"))
    })?;
    let v: f64 = value
        .parse()
        .map_err(|e| CliError::usage(format!("--plant-coeff {s:?}: bad value ({e})")))?;
    Ok((id, v))
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(path) => ProjectConfig::load(path)?,
        None => ProjectConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    match cli.command {
        Command::Prepare { input, output, report, tolerance, keep_islands } => commands::cmd_prepare(
            &cfg,
            &input,
            &output,
            report.as_deref(),
            tolerance,
            keep_islands,
        ),
        Command::Analyze { network, output, csv } => {
            commands::cmd_analyze(&cfg, &network, &output, csv.as_deref(), seed)
        }
        Command::Calibrate {
            network,
            flows,
            counts,
            year,
            model,
            coefficients,
            no_intercept,
        } => commands::cmd_calibrate(
            &cfg,
            &network,
            &flows,
            &counts,
            &year,
            &model,
            coefficients.as_deref(),
            no_intercept,
            seed,
        ),
        Command::Predict { model, mode, network, network_t1, network_t2, baseline, year, label, output } => {
            let args = PredictArgs {
                model: &model,
                mode: match mode {
                    ModeArg::Direct => PredictMode::Direct,
                    ModeArg::Incremental => PredictMode::Incremental,
                    ModeArg::Null => PredictMode::Null,
                },
                network: network.as_deref(),
                network_t1: network_t1.as_deref(),
                network_t2: network_t2.as_deref(),
                baseline: baseline.as_deref(),
                year: year.as_deref(),
                label: &label,
                output: &output,
            };
            commands::cmd_predict(&cfg, &args, seed)
        }
        Command::Evaluate { predictions, pred_year, observations, obs_year, report } => {
            commands::cmd_evaluate(
                &predictions,
                &pred_year,
                &observations,
                &obs_year,
                report.as_deref(),
            )
        }
        Command::Synth {
            rows,
            cols,
            spacing,
            plan,
            output,
            counts,
            plant_year,
            plant_points,
            plant_intercept,
            plant_coeffs,
            plant_noise,
        } => {
            let coeffs: Vec<(ColumnId, f64)> = plant_coeffs
                .iter()
                .map(|s| parse_plant_coeff(s))
                .collect::<CliResult<_>>()?;
            let args = SynthArgs {
                rows,
                cols,
                spacing,
                plan: match plan {
                    PlanArg::None => WeightPlan::None,
                    PlanArg::Default => WeightPlan::Default,
                },
                output: &output,
                counts_out: counts.as_deref(),
                plant_year: &plant_year,
                plant_points,
                plant_intercept,
                plant_coefficients: &coeffs,
                plant_noise,
            };
            commands::cmd_synth(&cfg, &args, seed)
        }
        Command::SweepSigma {
            network,
            counts,
            year,
            analysis,
            radius,
            sigma_grid,
            a_grid,
            output,
        } => {
            let sigmas = parse_grid("--sigma-grid", &sigma_grid)?;
            let blends = match a_grid {
                Some(s) => parse_grid("--a-grid", &s)?,
                None => vec![cfg.metric.a],
            };
            commands::cmd_sweep_sigma(
                &cfg, &network, &counts, &year, &analysis, radius, &sigmas, &blends, &output, seed,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
