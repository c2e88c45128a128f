//! Command-line driver: `run` simulates a scene, `compare` runs the
//! multilevel and reference solvers side by side per timestep, `partition`
//! exports the precomputed partition/weights/cubature without simulating.
//!
//! Exit code 0 on success; any failure prints a phase-tagged diagnostic to
//! stderr and exits nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smsim::error::Result;
use smsim::scene::{load_scene, Scene};
use smsim::sim::{compare_mode, export_precompute, run_simulation};

#[derive(Parser)]
#[command(
    name = "sms-cli",
    version,
    about = "Multilevel subspace elastodynamics on triangle meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; overrides the RAYON_NUM_THREADS environment variable.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the scene's partition and cubature seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the scene's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene: frames as OBJ plus stats.csv and timings.csv.
    Run { scene: PathBuf },
    /// Per-timestep displacement error of the multilevel solver against the
    /// full-space reference (single-step protocol), written to compare.csv.
    Compare { scene: PathBuf },
    /// Run only the precompute pipeline and export partition.txt,
    /// weights.txt, and cubature.txt.
    Partition { scene: PathBuf },
}

fn load(path: &PathBuf, cli: &Cli) -> Result<Scene> {
    let mut scene = load_scene(path)?;
    if let Some(s) = cli.seed {
        scene.partition.seed = s;
        scene.cubature.seed = s;
    }
    if let Some(dir) = &cli.out {
        scene.out_dir = dir.clone();
    }
    Ok(scene)
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { scene } => {
            let scene = load(scene, cli)?;
            let out = run_simulation(&scene)?;
            println!(
                "precompute: {} handles, {} cubature points, {} refinement iterations",
                out.n_handles, out.n_cubature_points, out.n_refine
            );
            let newton: usize = out.steps.iter().map(|s| s.newton_iters).sum();
            let pcg: usize = out.steps.iter().map(|s| s.total_pcg()).sum();
            println!(
                "simulated {} steps ({newton} Newton iterations, {pcg} PCG iterations)",
                out.steps.len()
            );
            println!("wrote {} frames and {}", out.frames.len(), out.stats_csv.display());
        }
        Command::Compare { scene } => {
            let scene = load(scene, cli)?;
            let out = compare_mode(&scene)?;
            println!("compared {} steps with {} handles", out.steps.len(), out.n_handles);
            println!("step  max_rel_err  mean_rel_err  ours(newton/pcg)  ref(newton/pcg)");
            for s in &out.steps {
                println!(
                    "{:>4}  {:>11.4e}  {:>12.4e}  {:>7}/{:<8} {:>6}/{:<8}",
                    s.step,
                    s.error.max,
                    s.error.mean,
                    s.ours.newton_iters,
                    s.ours.total_pcg(),
                    s.reference.newton_iters,
                    s.reference.total_pcg()
                );
            }
            let worst = out.steps.iter().map(|s| s.error.max).fold(0.0, f64::max);
            println!("worst per-vertex relative error: {worst:.4e}");
            println!("wrote {}", out.csv.display());
        }
        Command::Partition { scene } => {
            let scene = load(scene, cli)?;
            let out = export_precompute(&scene)?;
            println!(
                "precompute: {} handles, {} cubature points, {} refinement iterations",
                out.n_handles, out.n_cubature_points, out.n_refine
            );
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: threads: --threads must be >= 1");
            return ExitCode::FAILURE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
