use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pimoe_cli::{
    cmd_analyze, cmd_classify, cmd_evaluate, cmd_ingest, cmd_predict, cmd_synth, cmd_train, parse_variant, Baseline,
    CliError, EvaluateArgs, PredictArgs, RunConfig, Subset,
};
use pimoe_synthgen::SynthConfig;

#[derive(Parser)]
#[command(name = "pimoe", version, about = "Battery degradation-trajectory forecasting with a physics-informed mixture of experts")]
struct Cli {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fleet as CSV files.
    Synth {
        /// `ul` or `tpsl`; replaces the config's `synth` section.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = 32)]
        batteries: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate, clean and archive a CSV dataset directory.
    Ingest {
        /// Directory with cycles.csv, summary.csv and batteries.csv.
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model on an archive.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Share of the training pool to keep, in (0, 1].
        #[arg(long)]
        fraction: Option<f64>,
        /// pimoe, pimoe-linear, pimoe-wofo or pimoe-history.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Forecast one battery from one anchor cycle.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        battery: String,
        #[arg(long)]
        anchor: Option<u32>,
        #[arg(long)]
        horizon: Option<usize>,
        /// CSV of planned `charge_c,discharge_c,temp_c` per cycle.
        #[arg(long)]
        conditions: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        repeat: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a model or a history baseline.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        /// `poly` or `mlp` instead of a model.
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// split.json written by `train`.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        subset: String,
        /// Score against noise-free generator capacities.
        #[arg(long)]
        truth_targets: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label windows by dominant expert and tabulate confidence.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        subset: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export gate weights, stage heatmap, trend embeddings and t-SNE.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        subset: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| fallback.clone()).ok_or_else(|| CliError::Config(format!("no {name}: pass the flag or set it in the config")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Synth { preset, batteries, out } => {
            if let Some(p) = preset {
                let seed = cfg.synth.as_ref().map_or(0, |s| s.seed);
                cfg.synth = Some(match p.as_str() {
                    "ul" => SynthConfig::ul_like(batteries, seed),
                    "tpsl" => SynthConfig::tpsl_like(batteries, seed),
                    other => return Err(CliError::Config(format!("unknown preset `{other}` (ul, tpsl)"))),
                });
            }
            let cfg = cfg.resolve()?;
            let out = required(out, &cfg.output_dir, "output directory")?;
            let ds = cmd_synth(&cfg, &out)?;
            println!("{} batteries written to {}", ds.batteries.len(), out.display());
        }
        Command::Ingest { src, out } => {
            let cfg = cfg.resolve()?;
            let out = required(out, &cfg.dataset, "archive directory")?;
            let m = cmd_ingest(&src, &out)?;
            let removed: usize = m.removed.iter().map(|r| r.removed.len()).sum();
            println!("{} batteries, {} cycles archived ({removed} removed)", m.n_batteries, m.n_cycles);
        }
        Command::Train { data, out, fraction, variant, epochs } => {
            if let Some(f) = fraction {
                cfg.train_fraction = f;
            }
            if let Some(v) = variant {
                cfg.train.variant = parse_variant(&v)?;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let cfg = cfg.resolve()?;
            let data = required(data, &cfg.dataset, "dataset archive")?;
            let out = required(out, &cfg.output_dir, "output directory")?;
            let o = cmd_train(&cfg, &data, &out)?;
            println!("best epoch {} of {}; model in {}", o.best_epoch, o.history.len(), out.join("model.ck").display());
        }
        Command::Predict { model, data, battery, anchor, horizon, conditions, repeat, out } => {
            let cfg = cfg.resolve()?;
            let args = PredictArgs {
                model,
                archive: required(data, &cfg.dataset, "dataset archive")?,
                battery,
                anchor,
                horizon,
                conditions,
                repeat,
                out: required(out, &cfg.output_dir, "output directory")?,
            };
            let o = cmd_predict(&args)?;
            println!(
                "{}@{}: {} cycles, median {:.3} ms over {} runs",
                o.battery_id,
                o.anchor_cycle,
                o.soh.len(),
                o.latency.median_ms,
                o.latency.n
            );
        }
        Command::Evaluate { model, baseline, data, split, subset, truth_targets, out } => {
            let baseline = baseline.map(|b| b.parse::<Baseline>()).transpose()?;
            let subset: Subset = subset.parse()?;
            let cfg = cfg.resolve()?;
            let args = EvaluateArgs {
                model,
                baseline,
                archive: required(data, &cfg.dataset, "dataset archive")?,
                split,
                subset,
                truth_targets,
                out: required(out, &cfg.output_dir, "output directory")?,
            };
            let r = cmd_evaluate(&cfg, &args)?;
            if let Some(m) = r.overall {
                println!("MAPE {:.3}%  RMSE {:.3}  MAE {:.3}  R² {:.4}", m.mape_percent, m.rmse, m.mae, m.r2);
            }
        }
        Command::Classify { model, data, split, subset, out } => {
            let subset: Subset = subset.parse()?;
            let cfg = cfg.resolve()?;
            let data = required(data, &cfg.dataset, "dataset archive")?;
            let out = required(out, &cfg.output_dir, "output directory")?;
            for r in cmd_classify(&cfg, &model, &data, split.as_deref(), subset, &out)? {
                let conf = r.confidence_percent.map_or_else(|| "-".into(), |c| format!("{c:.1}%"));
                println!("SOH {}%: n={} E/Q/S={}/{}/{} confidence {conf}", r.bucket.percent(), r.n, r.excellent, r.qualified, r.scrap);
            }
        }
        Command::Analyze { model, data, split, subset, out } => {
            let subset: Subset = subset.parse()?;
            let cfg = cfg.resolve()?;
            let data = required(data, &cfg.dataset, "dataset archive")?;
            let out = required(out, &cfg.output_dir, "output directory")?;
            let n = cmd_analyze(&cfg, &model, &data, split.as_deref(), subset, &out)?;
            println!("{n} windows analyzed into {}", out.display());
        }
    }
    Ok(())
}


fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pimoe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
