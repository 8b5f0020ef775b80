use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nbv_core::harness::{self, RunConfig};
use nbv_core::mesh::{load_mesh, shapes};

/// Next-best-view planning with ellipsoid projection scoring.
#[derive(Parser)]
#[command(name = "nbv", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the planning loop on a mesh and write records.csv and final.ply.
    Run(RunArgs),
    /// Aggregate records.csv from several run directories.
    Summarize {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Write the aggregate here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time projection scoring against ray casting on the same scene.
    Bench {
        #[command(flatten)]
        opts: RunArgs,
        /// Planning iterations before timing.
        #[arg(long, default_value_t = 3)]
        warmup: usize,
    },
    /// Write one of the built-in desk objects as OBJ.
    ExportMesh {
        /// sphere, cube, torus, l_bracket or u_channel
        shape: String,
        path: PathBuf,
        /// Overall size in meters.
        #[arg(long, default_value_t = 0.3)]
        size: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// key=value file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mesh: Option<String>,
    /// hemisphere or full_sphere
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    resolution: Option<String>,
    #[arg(long)]
    t_max: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    candidates: Option<String>,
    #[arg(long)]
    working_distance: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// projection, oracle or random
    #[arg(long)]
    evaluator: Option<String>,
    /// Oracle pixel stride.
    #[arg(long)]
    stride: Option<String>,
    #[arg(long)]
    initial_distance: Option<String>,
    #[arg(long)]
    depth_noise: Option<String>,
    #[arg(long)]
    coverage_threshold: Option<String>,
    /// Dump per-iteration voxels, ellipsoids and candidate scores.
    #[arg(long)]
    verbose: bool,
    #[arg(long)]
    out: Option<String>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                RunConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        // evaluator before stride so a stride flag lands on the oracle
        let flags = [
            ("mesh", self.mesh),
            ("mode", self.mode),
            ("resolution", self.resolution),
            ("t_max", self.t_max),
            ("beta", self.beta),
            ("alpha", self.alpha),
            ("candidates", self.candidates),
            ("working_distance", self.working_distance),
            ("gamma", self.gamma),
            ("iterations", self.iterations),
            ("seed", self.seed),
            ("evaluator", self.evaluator),
            ("stride", self.stride),
            ("initial_distance", self.initial_distance),
            ("depth_noise", self.depth_noise),
            ("coverage_threshold", self.coverage_threshold),
            ("out", self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)
                    .with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        if self.verbose {
            cfg.verbose = true;
        }
        if cfg.mesh_path.as_os_str().is_empty() {
            bail!("no mesh given (--mesh or mesh= in the config file)");
        }
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NBV_LOG", "warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            let outcome = harness::run(&cfg)
                .with_context(|| format!("run on {}", cfg.mesh_path.display()))?;
            println!(
                "final coverage {:.4} after {} iterations, compute {:.3} s",
                outcome.final_coverage(),
                outcome.rows.len(),
                outcome.total_compute_time()
            );
        }
        Command::Summarize { dirs, out } => {
            let rows = harness::summarize(&dirs)?;
            let text = harness::summary_csv(&rows);
            match out {
                Some(p) => {
                    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?
                }
                None => print!("{text}"),
            }
        }
        Command::Bench { opts, warmup } => {
            let cfg = opts.into_config()?;
            let stride = match cfg.evaluator {
                nbv_core::planner::Evaluator::Oracle { stride } => stride,
                _ => nbv_core::oracle::DEFAULT_STRIDE,
            };
            let mesh = load_mesh(&cfg.mesh_path)?;
            let r = harness::bench(mesh, &cfg, warmup, stride)?;
            println!("candidates      {}", r.candidates);
            println!("active voxels   {}", r.active_voxels);
            println!("ellipsoids      {}", r.ellipsoids);
            println!("projection      {:.4} s", r.projection_s);
            println!("oracle (s={})    {:.4} s", r.stride, r.oracle_s);
            println!("speedup         {:.1}x", r.speedup());
            println!("spearman        {:.3}", r.spearman);
            println!("top-1 in oracle rank {}", r.top1_oracle_rank);
        }
        Command::ExportMesh { shape, path, size } => {
            let Some(mesh) = shapes::desk_object(&shape, size) else {
                bail!(
                    "unknown shape {shape:?}; expected one of {:?}",
                    shapes::DESK_OBJECTS
                );
            };
            mesh.write_obj(&path)?;
        }
    }
    Ok(())
}
