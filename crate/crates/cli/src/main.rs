//! Command line interface for the fire modeling pipeline.
//!
//! Exit codes: 0 success, 2 configuration errors, 3 missing or malformed
//! files, 4 numeric failures.

use clap::{Parser, Subcommand, ValueEnum};
use flamefit::pipeline::{
    load_job_config, run_analyze, run_optimize, run_render, run_scene_demo, run_synth, run_tonemap,
    JobConfig,
};
use flamefit::synth::{RecipeKind, SyntheticRecipe};
use flamefit::voxelgrid::GridDims;
use flamefit::Error;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "flamefit",
    version,
    about = "Volumetric fire model reconstruction from multi-view images"
)]
struct Cli {
    /// Worker threads (default: all cores; FLAMEFIT_THREADS overrides the
    /// default, this flag overrides both).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Random seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    GaussianPlume,
    CandleEllipsoid,
    TwoLobe,
}

impl From<KindArg> for RecipeKind {
    fn from(k: KindArg) -> RecipeKind {
        match k {
            KindArg::GaussianPlume => RecipeKind::GaussianPlume,
            KindArg::CandleEllipsoid => RecipeKind::CandleEllipsoid,
            KindArg::TwoLobe => RecipeKind::TwoLobe,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic flame: ground-truth FVOL, emission RGB volume
    /// and metadata with the ground-truth exposure
    Synth {
        /// Recipe kind; ignored when --recipe is given
        #[arg(long, value_enum, default_value = "gaussian-plume")]
        kind: KindArg,
        /// Cubic grid resolution
        #[arg(long, default_value_t = 32)]
        dims: usize,
        /// Full recipe as JSON (overrides --kind/--dims)
        #[arg(long)]
        recipe: Option<PathBuf>,
    },
    /// Render a fire volume (2-channel FVOL or synthetic) from the views in
    /// a job config: linear PFM plus exposure-applied PPM per view
    Render {
        /// Job config JSON
        #[arg(long)]
        config: PathBuf,
    },
    /// Recover temperature/density fields and exposure from goal images
    Optimize {
        /// Job config JSON; omit with --desk for the built-in profile
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run the desk-scale demo profile (32^3 synthetic, two 160x120
        /// views)
        #[arg(long)]
        desk: bool,
    },
    /// Convergence tables and the MDS projection from a finished run
    Analyze {
        /// trace.csv written by optimize
        #[arg(long)]
        trace: PathBuf,
        /// snapshots.fvol written by optimize
        #[arg(long)]
        snapshots: PathBuf,
    },
    /// Reinhard tone mapping of a PFM image to PPM
    Tonemap {
        #[arg(long)]
        input: PathBuf,
        /// Key value `a` of the global operator
        #[arg(long, default_value_t = 0.18)]
        key: f64,
        /// Output PPM path (default: <output-dir>/tonemapped.ppm)
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Scene illumination demo: quads lit by the flame volume or the
    /// spherical baseline
    SceneDemo {
        /// 2-channel fire FVOL
        #[arg(long)]
        volume: PathBuf,
        /// Scene description JSON
        #[arg(long)]
        scene: PathBuf,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Shape(_) | Error::Mode(_) | Error::Index(_) => 2,
        Error::MissingFile { .. } | Error::Io(_) | Error::Format(_) => 3,
        Error::Domain(_) | Error::Numeric(_) => 4,
    }
}

fn configure_threads(flag: Option<usize>) {
    let from_env = std::env::var("FLAMEFIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(from_env) {
        flamefit::pipeline::set_thread_count(n);
    }
}

fn require_output_dir(cli: &Cli) -> Result<PathBuf, Error> {
    cli.output_dir
        .clone()
        .ok_or_else(|| Error::Config("--output-dir is required for this command".into()))
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads(cli.threads);
    match &cli.command {
        Command::Synth { kind, dims, recipe } => {
            let out = require_output_dir(&cli)?;
            let mut recipe = match recipe {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(path).map_err(|source| Error::MissingFile {
                            path: path.clone(),
                            source,
                        })?;
                    serde_json::from_str::<SyntheticRecipe>(&text)
                        .map_err(|e| Error::Config(format!("bad recipe: {e}")))?
                }
                None => SyntheticRecipe {
                    dims: GridDims::cube(*dims)?,
                    ..SyntheticRecipe::new((*kind).into(), 8, 0)?
                },
            };
            if let Some(seed) = cli.seed {
                recipe.seed = seed;
            }
            let outputs = run_synth(&recipe, &out)?;
            for p in outputs {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Render { config } => {
            let job = override_job(load_job_config(config)?, &cli);
            let outputs = run_render(&job)?;
            for p in outputs {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Optimize { config, desk } => {
            let job = match (config, desk) {
                (Some(path), _) => override_job(load_job_config(path)?, &cli),
                (None, true) => {
                    let out = require_output_dir(&cli)?;
                    JobConfig::desk_profile(cli.seed.unwrap_or(0), out)?
                }
                (None, false) => {
                    return Err(Error::Config(
                        "optimize needs --config <job.json> or --desk".into(),
                    ))
                }
            };
            let summary = run_optimize(&job)?;
            println!(
                "initial energy {:.6e}, final energy {:.6e} ({} iterations, {} evaluations)",
                summary.initial_energy,
                summary.final_energy,
                summary.iterations,
                summary.evaluations
            );
            println!(
                "exposure {:.6}, density factor {:.6}",
                summary.exposure, summary.density_factor
            );
            for p in summary.outputs {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Analyze { trace, snapshots } => {
            let out = require_output_dir(&cli)?;
            let outputs = run_analyze(trace, snapshots, &out)?;
            for p in outputs {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Tonemap { input, key, output } => {
            let output = match output {
                Some(p) => p.clone(),
                None => require_output_dir(&cli)?.join("tonemapped.ppm"),
            };
            run_tonemap(input, *key, &output)?;
            println!("{}", output.display());
            Ok(())
        }
        Command::SceneDemo { volume, scene } => {
            let out = require_output_dir(&cli)?;
            let outputs = run_scene_demo(volume, scene, &out, None)?;
            for p in outputs {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

/// Apply the global --seed/--output-dir overrides to a loaded job.
fn override_job(mut job: JobConfig, cli: &Cli) -> JobConfig {
    if let Some(seed) = cli.seed {
        job.optimizer.seed = seed;
        if let flamefit::pipeline::VolumeSource::Synthetic(recipe) = &mut job.volume {
            recipe.seed = seed;
        }
    }
    if let Some(dir) = &cli.output_dir {
        job.output_dir = dir.clone();
    }
    job
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
