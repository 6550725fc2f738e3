use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use pipe_router::policy::RLConfig;
use pipe_router::reward::RewardWeights;
use pipe_router::runner::{self, RunConfig};
use pipe_router::Error;

const EXIT_NOT_DONE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_FAULT: u8 = 3;

#[derive(Parser)]
#[command(name = "pipe-router", version, about = "Frenet-frame pipe routing and free-bending export")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a routing policy and write the best path with all artifacts.
    Route {
        #[arg(long)]
        scene: PathBuf,
        /// Route name or index inside the scene file.
        #[arg(long)]
        route: Option<String>,
        #[arg(long)]
        machine: Option<PathBuf>,
        /// TOML file with [rl] and [weights] overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Total environment steps.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
        /// Divide the length penalty by s_max.
        #[arg(long, action = clap::ArgAction::Set)]
        len_normalized: Option<bool>,
    },
    /// Layout report (PL, CFI, MVR, l_align) of a path document.
    Eval {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        route: Option<String>,
        #[arg(long)]
        machine: Option<PathBuf>,
        #[arg(long, default_value_t = 20.0)]
        s_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Die trajectory CSV from a curvature/torsion profile or a path document.
    ExportMachine {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        machine: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Similarity measures between two trajectories with x, y, z columns.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 25.0)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Scene(_) | Error::Parse(_)) => EXIT_USAGE,
        Some(Error::NumericFault(_)) => EXIT_FAULT,
        _ => EXIT_NOT_DONE,
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Route { scene, route, machine, config, seed, steps, workers, out, len_normalized } => {
            let (mut rl, mut weights) = match &config {
                Some(p) => runner::load_overrides(p)?,
                None => (RLConfig::default(), RewardWeights::default()),
            };
            if let Some(steps) = steps {
                rl.total_steps = steps;
            }
            if let Some(flag) = len_normalized {
                weights.len_normalized = flag;
            }
            rl.seed = seed;
            let cfg = RunConfig { scene_path: scene, route, machine_path: machine, rl, weights, seed, workers, out_dir: out };
            let art = runner::cmd_route(&cfg)?;
            match &art.layout {
                Some(r) => println!("done: PL={:.3} mm CFI={} MVR={} l_align={:.6}", r.pl, r.cfi, r.mvr, r.l_align),
                None => println!("no episode reached the target"),
            }
            if let Some(e) = &art.trajectory_error {
                eprintln!("die trajectory not written: {e}");
            }
            println!("artifacts in {}", cfg.out_dir.display());
            Ok(art.found_done)
        }
        Command::Eval { path, scene, route, machine, s_max, out } => {
            let r = runner::cmd_eval(&path, &scene, route.as_deref(), machine.as_deref(), s_max, out.as_deref())?;
            println!("PL={} CFI={} MVR={} l_align={}", r.pl, r.cfi, r.mvr, r.l_align);
            Ok(true)
        }
        Command::ExportMachine { input, machine, out } => {
            let text = runner::cmd_export_machine(&input, machine.as_deref())?;
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Command::Compare { a, b, eps, out } => {
            let r = runner::cmd_compare(&a, &b, eps, out.as_deref())?;
            println!("lcss={} frechet_mm={} dtw_mm={} edit_distance={}", r.lcss_ratio, r.frechet_mm, r.dtw_mm, r.edit_distance);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NOT_DONE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
