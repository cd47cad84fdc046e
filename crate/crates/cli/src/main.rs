mod config;
mod error;
mod fit;
mod systems;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use koopman_lmi::analysis::{self, PredictionMode};
use koopman_lmi::{io, linalg, KoopmanModel, SnapshotDataset};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::FitConfig;
use crate::error::{Classify, CliError};
use crate::systems::{GenerateOptions, System};

#[derive(Parser)]
#[command(name = "koopman-lmi", version, about = "Koopman operator identification with LMI-regularized EDMD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a toy system and write an episode CSV.
    Generate {
        #[arg(long, value_enum)]
        system: System,
        /// States per episode.
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 4)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
        /// Euler step; defaults to 0.1 for linear2d and 0.05 otherwise.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        input_amplitude: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model as described by a JSON config.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_path` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll a fitted model forward from the first state of an episode.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long, value_parser = parse_mode, default_value = "lifted_rollout")]
        mode: PredictionMode,
        #[arg(long, default_value_t = 0)]
        episode: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the one-step lifted residuals of the whole dataset.
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Refit over a grid of one regularization weight.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        parameter: Parameter,
        /// Comma-separated, strictly increasing values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        grid: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Parameter {
    Alpha,
    Beta,
}

fn parse_mode(s: &str) -> Result<PredictionMode, String> {
    s.parse().map_err(|e: koopman_lmi::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { system, steps, episodes, seed, noise_std, dt, input_amplitude, out } => {
            let opts = GenerateOptions {
                system,
                steps,
                episodes,
                seed,
                noise_std,
                dt: dt.unwrap_or_else(|| system.default_dt()),
                input_amplitude,
            };
            cmd_generate(&opts, &out)
        }
        Command::Fit { config, out } => cmd_fit(&config, out),
        Command::Predict { model, data, horizon, mode, episode, out, residuals } => {
            cmd_predict(&model, &data, horizon, mode, episode, &out, residuals.as_deref())
        }
        Command::Sweep { config, parameter, grid, out } => cmd_sweep(&config, parameter, &grid, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_generate(opts: &GenerateOptions, out: &Path) -> Result<(), CliError> {
    opts.validate().map_err(CliError::usage_msg)?;
    let data = systems::generate(opts).map_err(CliError::numerical_msg)?;
    io::save_dataset(&data, out).usage("cannot write dataset")?;
    Ok(())
}

fn cmd_fit(config: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = FitConfig::load(config).usage("invalid configuration")?;
    if let Some(out) = out {
        cfg.output_path = out;
    }
    let data: SnapshotDataset = io::load_dataset(&cfg.data_path).usage("cannot read data")?;
    let mut outcome = fit::run_fit(&cfg, &data)?;

    if let Some(trace) = &outcome.trace {
        let path = cfg.trace_path();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).usage("cannot encode trace")?;
        io::write_atomic(&path, &buf).usage("cannot write trace")?;
        outcome.report.trace_path = Some(path);
    }
    io::save_model(&outcome.model, &cfg.output_path).usage("cannot write model")?;
    outcome.report.model_path = Some(cfg.output_path.clone());
    let json = serde_json::to_string_pretty(&outcome.report).usage("cannot encode report")?;
    io::write_atomic(&cfg.report_path(), json.as_bytes()).usage("cannot write report")?;
    println!("{json}");
    Ok(())
}

#[derive(Serialize)]
struct PredictionSummary {
    mode: &'static str,
    horizon: usize,
    compared_steps: usize,
    mse: Option<f64>,
    max_abs_error: Option<f64>,
    one_step_score: f64,
}

fn cmd_predict(
    model_path: &Path,
    data_path: &Path,
    horizon: usize,
    mode: PredictionMode,
    episode: usize,
    out: &Path,
    residuals: Option<&Path>,
) -> Result<(), CliError> {
    if horizon == 0 {
        return Err(CliError::usage_msg("horizon must be at least 1"));
    }
    let model: KoopmanModel = io::load_model(model_path).usage("cannot read model")?;
    let data: SnapshotDataset = io::load_dataset(data_path).usage("cannot read data")?;
    let spec = model.lifting();
    if (data.state_dim, data.input_dim) != (spec.state_dim, spec.input_dim) {
        return Err(CliError::usage_msg(format!(
            "lifting mismatch: model expects {} states and {} inputs, data has {} and {}",
            spec.state_dim, spec.input_dim, data.state_dim, data.input_dim
        )));
    }
    let ep = data.episodes.get(episode).ok_or_else(|| {
        CliError::usage_msg(format!("episode {episode} not found ({} episodes)", data.episodes.len()))
    })?;
    let inputs = if spec.input_dim == 0 {
        vec![koopman_lmi::Vector::zeros(0); horizon]
    } else if ep.inputs.len() >= horizon {
        ep.inputs[..horizon].to_vec()
    } else {
        return Err(CliError::usage_msg(format!(
            "horizon {horizon} exceeds the {} recorded inputs of episode {episode}",
            ep.inputs.len()
        )));
    };
    let x0 = &ep.states[0];
    let pred = analysis::predict(&model, x0, &inputs, mode).numerical("prediction failed")?;

    let mut buf = Vec::new();
    io::write_prediction(x0, &pred, &mut buf).usage("cannot encode prediction")?;
    io::write_atomic(out, &buf).usage("cannot write prediction")?;

    if let Some(path) = residuals {
        let r = analysis::residuals(&model, &data).numerical("cannot compute residuals")?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["k".to_string()];
        header.extend((0..r.nrows()).map(|i| format!("r{i}")));
        w.write_record(&header).usage("cannot encode residuals")?;
        for (k, col) in r.column_iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(col.iter().map(|v| v.to_string()));
            w.write_record(&row).usage("cannot encode residuals")?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::usage_msg(e.to_string()))?;
        io::write_atomic(path, &bytes).usage("cannot write residuals")?;
    }

    let truth = &ep.states[1..];
    let compared = truth.len().min(horizon);
    let errors: Vec<f64> = (0..compared).map(|k| (&pred.states[k] - &truth[k]).amax()).collect();
    let sq: f64 = (0..compared).map(|k| (&pred.states[k] - &truth[k]).norm_squared()).sum();
    let summary = PredictionSummary {
        mode: mode.as_str(),
        horizon,
        compared_steps: compared,
        mse: (compared > 0).then(|| sq / compared as f64),
        max_abs_error: errors.iter().copied().reduce(f64::max),
        one_step_score: analysis::score(&model, &data).numerical("cannot score the model")?,
    };
    println!("{}", serde_json::to_string(&summary).usage("cannot encode summary")?);
    Ok(())
}

#[derive(Debug, Default)]
struct SweepRow {
    value: f64,
    status: String,
    objective: Option<f64>,
    fro_norm: Option<f64>,
    max_singular_value: Option<f64>,
    nuclear_norm: Option<f64>,
    spectral_radius: Option<f64>,
    gamma: Option<f64>,
    error: String,
}

fn cmd_sweep(config: &Path, parameter: Parameter, grid: &[f64], out: &Path) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(CliError::usage_msg("grid must not be empty"));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::usage_msg("grid must be finite and strictly increasing"));
    }
    let cfg = FitConfig::load(config).usage("invalid configuration")?;
    let configs = grid
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            match parameter {
                Parameter::Alpha => c.regularizer.tikhonov_alpha = v,
                Parameter::Beta => {
                    c.regularizer.extra = c
                        .regularizer
                        .extra
                        .with_beta(v)
                        .ok_or_else(|| CliError::usage_msg("a beta sweep needs an extra regularizer"))?;
                }
            }
            c.validate().usage(&format!("invalid grid value {v}"))?;
            Ok(c)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let data: SnapshotDataset = io::load_dataset(&cfg.data_path).usage("cannot read data")?;

    let rows: Vec<SweepRow> = configs
        .par_iter()
        .zip(grid.par_iter())
        .map(|(c, &value)| match fit::run_fit(c, &data) {
            Ok(fit) => {
                let u = fit.model.u();
                SweepRow {
                    value,
                    status: fit.report.termination.unwrap_or(fit.report.status),
                    objective: Some(fit.report.objective),
                    fro_norm: Some(u.norm()),
                    max_singular_value: Some(linalg::max_singular_value(u)),
                    nuclear_norm: Some(linalg::nuclear_norm(u)),
                    spectral_radius: Some(fit.report.spectral_radius),
                    gamma: fit.report.gamma,
                    error: String::new(),
                }
            }
            Err(e) => SweepRow { value, status: "error".into(), error: e.to_string(), ..SweepRow::default() },
        })
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "value",
        "status",
        "objective",
        "fro_norm",
        "max_singular_value",
        "nuclear_norm",
        "spectral_radius",
        "gamma",
        "error",
    ];
    w.write_record(header).usage("cannot encode sweep")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rows {
        w.write_record([
            r.value.to_string(),
            r.status.clone(),
            opt(r.objective),
            opt(r.fro_norm),
            opt(r.max_singular_value),
            opt(r.nuclear_norm),
            opt(r.spectral_radius),
            opt(r.gamma),
            r.error.clone(),
        ])
        .usage("cannot encode sweep")?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::usage_msg(e.to_string()))?;
    io::write_atomic(out, &bytes).usage("cannot write sweep table")?;
    Ok(())
}
