use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pgop_core::experiments::config::{preset, ExperimentConfig, PRESET_NAMES};
use pgop_core::experiments::reference::class_optimum;
use pgop_core::experiments::run::{run_experiment, run_landscape};
use pgop_core::experiments::sweep::{fig1_sweep, run_sweep, SweepAxes, SweepConfig};
use pgop_core::experiments::verify::{check_names, verify, VerifyOptions};
use pgop_core::policy::policy_gradient_from;
use pgop_core::{evaluate_policy, SoftmaxPolicy};

#[derive(Parser)]
#[command(
    name = "pgop",
    version,
    about = "Exact policy-gradient operator experiments on tabular MDPs"
)]
struct Cli {
    /// Worker threads for parallel work (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// Experiment config JSON.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a policy exactly and print J, gradient norm and optima.
    Eval {
        #[command(flatten)]
        source: Source,
        /// Policy JSON to evaluate instead of the config's initial policy.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Train and write curve.csv, final_policy.json and manifest.json.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the bound landscape, one CSV per anchor.
    Landscape {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a cross-product of experiments and write summary.json.
    Sweep {
        /// Sweep document JSON.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// `fig1` for the built-in comparison, or a preset run as a single cell.
        #[arg(long)]
        preset: Option<String>,
        /// Replaces the seed axis with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the property checks and print a JSON report.
    Verify {
        /// Run only checks whose name contains this string.
        selector: Option<String>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// List check names and exit.
        #[arg(long)]
        list: bool,
    },
}

fn load(source: &Source) -> Result<ExperimentConfig> {
    let mut config = match (&source.config, &source.preset) {
        (Some(path), _) => ExperimentConfig::from_path(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        (None, Some(name)) => preset(name)?,
        (None, None) => bail!(
            "give --config <path> or --preset <{}>",
            PRESET_NAMES.join("|")
        ),
    };
    if let Some(seed) = source.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn out_dir(config: &ExperimentConfig, out: Option<PathBuf>) -> Result<PathBuf> {
    out.or_else(|| config.output_dir.clone())
        .context("no output directory: pass --out or set output_dir")
}

#[derive(Serialize)]
struct EvalReport {
    #[serde(rename = "J")]
    j: f64,
    gradient_norm: f64,
    occupancy_mass: f64,
    class_optimum_j: f64,
    value_iteration_j: f64,
    values: Vec<f64>,
}

fn eval(source: &Source, policy: Option<&Path>) -> Result<()> {
    let config = load(source)?;
    let mdp = config.build_env()?;
    let policy = match policy {
        Some(path) => {
            let p: SoftmaxPolicy = serde_json::from_str(&fs::read_to_string(path)?)
                .with_context(|| format!("reading policy {}", path.display()))?;
            if p.n_states() != mdp.n_states() || p.n_actions() != mdp.n_actions() {
                bail!("policy shape does not match the environment");
            }
            p
        }
        None => config.initial_policy(&mdp)?,
    };
    let eval = evaluate_policy(&mdp, &policy.table())?;
    let grad = policy_gradient_from(&policy, &eval);
    let optimum = class_optimum(&mdp, policy.mode(), config.seed)?;
    let report = EvalReport {
        j: eval.j,
        gradient_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
        occupancy_mass: eval.occupancy.iter().sum(),
        class_optimum_j: optimum.j,
        value_iteration_j: optimum.value_iteration_j,
        values: eval.v.clone(),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn sweep_document(config: Option<&Path>, preset_name: Option<&str>) -> Result<SweepConfig> {
    match (config, preset_name) {
        (Some(path), _) => Ok(SweepConfig::from_json_str(&fs::read_to_string(path)?)
            .with_context(|| format!("reading sweep {}", path.display()))?),
        (None, Some("fig1")) => Ok(fig1_sweep()),
        (None, Some(name)) => {
            preset(name)?;
            Ok(SweepConfig {
                preset: Some(name.to_string()),
                base: None,
                axes: SweepAxes::default(),
            })
        }
        (None, None) => bail!("give --config <path> or --preset <fig1|preset name>"),
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Eval { source, policy } => eval(&source, policy.as_deref())?,
        Command::Run { source, out } => {
            let config = load(&source)?;
            let dir = out_dir(&config, out)?;
            let result = run_experiment(&config, &dir)?;
            println!(
                "{}: J {:.6} -> {:.6} over {} iterations",
                dir.display(),
                result.manifest.initial_j,
                result.manifest.final_j,
                result.manifest.iterations
            );
        }
        Command::Landscape { source, out } => {
            let config = load(&source)?;
            let dir = out_dir(&config, out)?;
            for file in run_landscape(&config, &dir)? {
                println!("{} ({} rows)", file.path.display(), file.rows.len());
            }
        }
        Command::Sweep {
            config,
            preset,
            seed,
            out,
        } => {
            let mut sweep = sweep_document(config.as_deref(), preset.as_deref())?;
            if let Some(seed) = seed {
                sweep.axes.seeds = vec![seed];
            }
            let summary = run_sweep(&sweep, &out)?;
            for cell in &summary.cells {
                println!(
                    "{} final J {:.6} regret slope {:.4e}",
                    cell.dir, cell.final_j, cell.regret_slope
                );
            }
        }
        Command::Verify {
            selector,
            out,
            list,
        } => {
            if list {
                for name in check_names() {
                    println!("{name}");
                }
                return Ok(true);
            }
            let report = verify(&VerifyOptions {
                filter: selector,
                ..VerifyOptions::default()
            });
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(path) = out {
                fs::write(&path, format!("{text}\n"))?;
            }
            println!("{text}");
            if report.checks.is_empty() {
                bail!("no check matches the selector");
            }
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PGOP_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
