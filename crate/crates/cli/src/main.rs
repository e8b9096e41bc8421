use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use wsn_energy::catalog::{default_space, ConfigSpace, Param};
use wsn_energy::dataset::Dataset;
use wsn_energy::pipeline::{self, PipelineOptions};
use wsn_energy::regression::{evaluate, LinearModel};
use wsn_energy::sim::{Simulator, WorldConfig};
use wsn_energy::stats::{analyze, reduce, ReductionResult};
use wsn_energy::Error;

#[derive(Parser)]
#[command(
    name = "wsn-energy",
    version,
    about = "Profile, screen and model sensor-node residual energy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SimArgs {
    /// World constants as JSON; missing fields take their defaults.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Parameter space as JSON.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Width of the performance band in standard deviations.
    #[arg(long, default_value_t = 1.0)]
    sigma_mult: f64,
    /// Worker threads (defaults to available cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Clone)]
struct ScreenArgs {
    #[arg(long, default_value_t = pipeline::DEFAULT_ALPHA)]
    alpha: f64,
    /// Also require |linear correlation| at or above this value.
    #[arg(long)]
    corr_threshold: Option<f64>,
    /// Use only rows whose detected-event count is within the band.
    #[arg(long)]
    performance_filter: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate `runs` randomly sampled configurations and write the dataset CSV.
    Profile {
        #[arg(long, default_value_t = pipeline::DEFAULT_TRAIN_RUNS)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Correlation report and parameter selection for a dataset.
    Reduce {
        dataset: PathBuf,
        #[command(flatten)]
        screen: ScreenArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Least-squares model on the parameters of a selection file.
    Fit {
        dataset: PathBuf,
        #[arg(long)]
        selection: PathBuf,
        #[arg(long)]
        performance_filter: bool,
        /// Model JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Prediction errors of a model on a holdout dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        holdout: PathBuf,
        #[arg(long)]
        performance_filter: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Profile, reduce, fit and evaluate in one go.
    Pipeline {
        /// Training runs.
        #[arg(long, default_value_t = pipeline::DEFAULT_TRAIN_RUNS)]
        runs: u64,
        #[arg(long, default_value_t = pipeline::DEFAULT_HOLDOUT_RUNS)]
        holdout_runs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        screen: ScreenArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep data for the g_Tx and h_iD trend plots, plus the error table.
    Figures {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = pipeline::SWEEP_SEEDS)]
        seeds_per_point: u64,
        /// With --holdout, also write the predicted-vs-actual table.
        #[arg(long, requires = "holdout")]
        model: Option<PathBuf>,
        #[arg(long, requires = "model")]
        holdout: Option<PathBuf>,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn simulator(args: &SimArgs) -> Result<Simulator, Error> {
    let world: WorldConfig = match &args.world {
        Some(p) => pipeline::read_json(p)?,
        None => WorldConfig::default(),
    };
    let space: ConfigSpace = match &args.space {
        Some(p) => pipeline::read_json(p)?,
        None => default_space(),
    };
    if !(args.sigma_mult.is_finite() && args.sigma_mult > 0.0) {
        return Err(Error::Usage(format!(
            "--sigma-mult must be positive, got {}",
            args.sigma_mult
        )));
    }
    Ok(Simulator::new(space, world)?.with_sigma_mult(args.sigma_mult))
}

fn load(path: &Path, performance_filter: bool) -> Result<Dataset, Error> {
    let ds = Dataset::read_csv(path)?;
    Ok(if performance_filter {
        ds.performance_filtered()
    } else {
        ds
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Profile { runs, seed, out, sim } => {
            let jobs = sim.jobs;
            let sim = simulator(&sim)?;
            let ds = pipeline::profile(&sim, seed..seed + runs, jobs)?;
            ds.write_csv(&out)?;
            info!("wrote {} rows to {}", ds.len(), out.display());
        }
        Command::Reduce { dataset, screen, out } => {
            let ds = load(&dataset, screen.performance_filter)?;
            let report = analyze(&ds)?;
            let reduction = reduce(&report, screen.alpha, screen.corr_threshold)?;
            pipeline::ensure_dir(&out)?;
            pipeline::write_file(&out.join(pipeline::CORRELATION_CSV), report.to_csv_string())?;
            pipeline::write_json(&out.join(pipeline::CORRELATION_JSON), &report)?;
            pipeline::write_json(&out.join(pipeline::SELECTION_JSON), &reduction)?;
            info!("selected [{}]", reduction.symbols().join(", "));
        }
        Command::Fit {
            dataset,
            selection,
            performance_filter,
            out,
        } => {
            let ds = load(&dataset, performance_filter)?;
            let reduction: ReductionResult = pipeline::read_json(&selection)?;
            let model = pipeline::fit_model(&ds, &reduction.symbols())?;
            pipeline::write_json(&out, &model)?;
            info!("model LSE {:e}, condition {:e}", model.lse, model.condition);
        }
        Command::Evaluate {
            model,
            holdout,
            performance_filter,
            out,
        } => {
            let model: LinearModel = pipeline::read_json(&model)?;
            let ds = load(&holdout, performance_filter)?;
            let report = evaluate(&model, &ds)?;
            pipeline::ensure_dir(&out)?;
            pipeline::write_file(&out.join(pipeline::EVALUATION_CSV), report.to_csv_string())?;
            pipeline::write_json(&out.join(pipeline::EVALUATION_JSON), &report)?;
            println!("mean relative error {:.4}", report.mean_relative_error);
        }
        Command::Pipeline {
            runs,
            holdout_runs,
            seed,
            screen,
            sim,
            out,
        } => {
            let jobs = sim.jobs;
            let sim = simulator(&sim)?;
            let opts = PipelineOptions {
                train_runs: runs,
                holdout_runs,
                seed,
                alpha: screen.alpha,
                corr_threshold: screen.corr_threshold,
                performance_filter: screen.performance_filter,
                jobs,
            };
            let result = pipeline::run_pipeline(&sim, &opts)?;
            pipeline::write_artifacts(&result, &out)?;
            println!(
                "selected [{}]; mean relative error {:.4}",
                result.manifest.selected.join(", "),
                result.evaluation.mean_relative_error
            );
        }
        Command::Figures {
            seed,
            seeds_per_point,
            model,
            holdout,
            sim,
            out,
        } => {
            let jobs = sim.jobs;
            let sim = simulator(&sim)?;
            let seeds = seed..seed + seeds_per_point;
            for (param, grid) in [
                (Param::TransmissionInterval, pipeline::transmission_interval_grid()),
                (Param::NumHops, pipeline::hop_grid()),
            ] {
                let sweep = pipeline::sweep(&sim, param, &grid, seeds.clone(), jobs)?;
                pipeline::write_sweep(&sweep, &out)?;
            }
            if let (Some(model), Some(holdout)) = (model, holdout) {
                let model: LinearModel = pipeline::read_json(&model)?;
                let report = evaluate(&model, &Dataset::read_csv(&holdout)?)?;
                pipeline::write_file(&out.join("prediction_error.csv"), report.to_csv_string())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
