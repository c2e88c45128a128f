//! The simulation driver: precompute pipeline (partition → bases →
//! cubature), the timestep loop with frame/stats output, single-step
//! comparison against the reference solver, and precompute exports.
//!
//! Output files (all inside the scene's output directory):
//! - `frame_NNNN.obj` — deformed mesh per written frame (frame 0 always).
//! - `stats.csv` — one row per timestep with solver counters. Everything in
//!   it is derived from seeded computation, so reruns are byte-identical.
//! - `timings.csv` — wall-clock seconds per phase; kept out of `stats.csv`
//!   so timing noise never breaks the determinism contract.
//! - `compare.csv` — per-step displacement error and iteration counts
//!   (compare mode).
//! - `partition.txt`, `weights.txt`, `cubature.txt` — ASCII dumps of the
//!   precomputed data (partition export mode).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cubature::{build_cubature, CubatureScheme};
use crate::energy::integrator::{advance, predictor, KinematicState};
use crate::energy::IpModel;
use crate::error::{Result, SimError};
use crate::mesh::{load_obj, write_obj, SimMesh};
use crate::operators::{build_operators, DiscreteOperators};
use crate::partition::{jump_penalty_stiffness, partition_mesh, PartitionSet};
use crate::reference::{displacement_error, reference_timestep, ErrorReport, RefStats};
use crate::scene::{RefineMode, Scene};
use crate::solver::{choose_refinement_iters, newton_solve, NewtonStats, SolverConfig};
use crate::subspace::{build_subspace, SubspaceBases};

/// Everything the timestep loop needs, built once per scene.
pub struct Precomputed {
    pub ops: DiscreteOperators,
    pub parts: PartitionSet,
    pub bases: SubspaceBases,
    pub scheme: CubatureScheme,
    /// Resolved full-space refinement iteration count.
    pub n_refine: usize,
    /// (phase name, seconds) for `timings.csv`.
    pub timings: Vec<(&'static str, f64)>,
}

/// Partition → weight solves → cubature fitting. The partitioner sees the
/// jump-penalized stiffness so clusters hug material interfaces; the weight
/// solves see the true per-element stiffness (or a uniform override when
/// the material-blind ablation is on).
pub fn precompute(scene: &Scene) -> Result<Precomputed> {
    let mesh = &scene.mesh;
    let mats = &scene.materials;
    let mut timings = Vec::new();

    let t = Instant::now();
    let ops = build_operators(mesh, mats, None)?;
    let penalized = jump_penalty_stiffness(mesh, mats, scene.partition.gamma)?;
    let part_ops = build_operators(mesh, mats, Some(&penalized))?;
    timings.push(("operators", t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let parts = partition_mesh(
        mesh,
        &part_ops,
        scene.partition.k,
        &scene.partition.prune,
        scene.partition.seed,
    )?;
    timings.push(("partition", t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let bases = if scene.material_blind {
        let uniform = vec![mats.median_youngs(mesh); mesh.n_elements()];
        let blind_ops = build_operators(mesh, mats, Some(&uniform))?;
        build_subspace(mesh, &blind_ops, &parts, &scene.basis)?
    } else {
        build_subspace(mesh, &ops, &parts, &scene.basis)?
    };
    timings.push(("basis", t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let scheme = if scene.exact_integration {
        CubatureScheme::full(mesh, &parts)
    } else {
        build_cubature(mesh, &parts, &bases, &scene.cubature)?
    };
    timings.push(("cubature", t.elapsed().as_secs_f64()));

    let n_refine = match scene.refine {
        RefineMode::Auto => choose_refinement_iters(mesh, &parts),
        RefineMode::Fixed(n) => n,
    };
    Ok(Precomputed { ops, parts, bases, scheme, n_refine, timings })
}

/// One timestep's solver counters for `stats.csv`.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub newton_iters: usize,
    pub converged: bool,
    pub pcg_affine: usize,
    pub pcg_sms: usize,
    pub pcg_refine: usize,
    pub hlag_refreshes: usize,
    pub refine_dropped: usize,
    pub energy: f64,
}

impl StepRecord {
    fn from_stats(step: usize, stats: &NewtonStats, energy: f64) -> StepRecord {
        StepRecord {
            step,
            newton_iters: stats.iters.len(),
            converged: stats.converged,
            pcg_affine: stats.iters.iter().map(|r| r.pcg_affine).sum(),
            pcg_sms: stats.iters.iter().map(|r| r.pcg_sms).sum(),
            pcg_refine: stats.iters.iter().map(|r| r.pcg_refine).sum(),
            hlag_refreshes: stats.iters.iter().filter(|r| r.hlag_refreshed).count(),
            refine_dropped: stats.iters.iter().filter(|r| r.dropped_refinement).count(),
            energy,
        }
    }

    pub fn total_pcg(&self) -> usize {
        self.pcg_affine + self.pcg_sms + self.pcg_refine
    }
}

/// Result of [`run_simulation`]: the full trajectory plus output paths.
#[derive(Debug)]
pub struct RunSummary {
    pub steps: Vec<StepRecord>,
    /// Position vector after every step; `positions[0]` is the initial state.
    pub positions: Vec<Vec<f64>>,
    pub final_state: KinematicState,
    pub frames: Vec<PathBuf>,
    pub stats_csv: PathBuf,
    pub n_handles: usize,
    pub n_cubature_points: usize,
    pub n_refine: usize,
}

fn dof_velocity(scene: &Scene) -> Vec<f64> {
    let n = scene.mesh.n_verts();
    let mut v = vec![0.0; 2 * n];
    for i in 0..n {
        v[2 * i] = scene.initial_velocity.x;
        v[2 * i + 1] = scene.initial_velocity.y;
    }
    for script in &scene.dbc {
        for &vert in &script.verts {
            v[2 * vert] = script.velocity.x;
            v[2 * vert + 1] = script.velocity.y;
        }
    }
    v
}

/// Overwrite Dirichlet coordinates with their exact scripted position at
/// time `t` (rest + t·velocity), keeping scripted motion drift-free.
fn apply_dbc_targets(scene: &Scene, t: f64, x: &mut [f64]) {
    for script in &scene.dbc {
        for &v in &script.verts {
            x[2 * v] = scene.mesh.rest[2 * v] + t * script.velocity.x;
            x[2 * v + 1] = scene.mesh.rest[2 * v + 1] + t * script.velocity.y;
        }
    }
}

fn apply_dbc_velocity(scene: &Scene, v: &mut [f64]) {
    for script in &scene.dbc {
        for &vert in &script.verts {
            v[2 * vert] = script.velocity.x;
            v[2 * vert + 1] = script.velocity.y;
        }
    }
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)
        .map_err(|e| SimError::io(path.display().to_string(), e.to_string()))
}

fn write_frame(dir: &Path, mesh: &SimMesh, x: &[f64], step: usize) -> Result<PathBuf> {
    let path = dir.join(format!("frame_{step:04}.obj"));
    let mut buf = String::new();
    write_obj(mesh, x, &mut buf);
    write_text(&path, &buf)?;
    Ok(path)
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| SimError::io(dir.display().to_string(), e.to_string()))
}

/// Every written frame must be strictly outside every collider. Frames are
/// re-read from disk so the check covers what was actually written.
fn recheck_frames(scene: &Scene, frames: &[PathBuf]) -> Result<()> {
    for path in frames {
        let frame = load_obj(path)?;
        for v in 0..frame.n_verts() {
            let p = frame.vertex(v);
            for (c, collider) in scene.colliders.iter().enumerate() {
                let d = collider.shape.distance(p);
                if d <= 0.0 {
                    return Err(SimError::Solver(format!(
                        "output: {} vertex {v} penetrates collider {c} (distance {d:.3e})",
                        path.display()
                    )));
                }
            }
        }
    }
    Ok(())
}

fn stats_csv(steps: &[StepRecord]) -> String {
    let mut out = String::from(
        "step,newton_iters,converged,pcg_affine,pcg_sms,pcg_refine,hlag_refreshes,refine_dropped,energy\n",
    );
    for r in steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            r.newton_iters,
            r.converged,
            r.pcg_affine,
            r.pcg_sms,
            r.pcg_refine,
            r.hlag_refreshes,
            r.refine_dropped,
            r.energy
        );
    }
    out
}

fn solver_config_for(scene: &Scene, n_refine: usize) -> SolverConfig {
    let mut cfg = scene.solver.clone();
    cfg.n_refine_cg = n_refine;
    cfg
}

fn initial_state(scene: &Scene, model: &IpModel) -> Result<KinematicState> {
    let x0 = scene.mesh.rest.clone();
    let e0 = model.value(&x0, &x0, scene.time.h * scene.time.h);
    if !e0.is_finite() {
        return Err(SimError::at_step(
            0,
            "initial state",
            "infinite energy: the rest configuration is inverted or touching a collider",
        ));
    }
    Ok(KinematicState { x: x0, v: dof_velocity(scene), prev: None })
}

/// Execute the scene: precompute, `n_steps` implicit steps, frames and
/// stats written under the scene's output directory, then a post-hoc
/// penetration re-check of every written frame.
pub fn run_simulation(scene: &Scene) -> Result<RunSummary> {
    let total = Instant::now();
    let mut pre = precompute(scene)?;
    let model = IpModel::new(
        &scene.mesh,
        &scene.materials,
        pre.ops.mass.clone(),
        scene.colliders.clone(),
        scene.gravity,
    );
    let dbc = scene.mesh.dbc_mask();
    let cfg = solver_config_for(scene, pre.n_refine);
    let h = scene.time.h;

    ensure_out_dir(&scene.out_dir)?;
    let mut state = initial_state(scene, &model)?;
    let mut frames = vec![write_frame(&scene.out_dir, &scene.mesh, &state.x, 0)?];
    let mut positions = vec![state.x.clone()];
    let mut steps: Vec<StepRecord> = Vec::with_capacity(scene.n_steps);

    let t_loop = Instant::now();
    for step in 1..=scene.n_steps {
        let t_now = step as f64 * h;
        let alpha_h2 = scene.time.alpha(&state) * h * h;
        let mut x_tilde = predictor(&state, &scene.time);
        apply_dbc_targets(scene, t_now, &mut x_tilde);
        let mut x_start = state.x.clone();
        apply_dbc_targets(scene, t_now, &mut x_start);
        if !model.value(&x_start, &x_tilde, alpha_h2).is_finite() {
            return Err(SimError::at_step(
                step,
                "boundary script",
                "scripted Dirichlet motion produced an inverted or penetrating start state",
            ));
        }

        let (x_new, stats) =
            newton_solve(&model, &x_start, &x_tilde, h, alpha_h2, &pre.bases, &pre.scheme, &dbc, &cfg);
        if !stats.converged {
            return Err(SimError::at_step(
                step,
                "newton",
                format!(
                    "no convergence within {} iterations (line search failed: {})",
                    cfg.max_newton, stats.line_search_failed
                ),
            ));
        }
        let energy = model.value(&x_new, &x_tilde, alpha_h2);
        steps.push(StepRecord::from_stats(step, &stats, energy));

        state = advance(&state, &x_new, &x_tilde, &scene.time);
        apply_dbc_targets(scene, t_now, &mut state.x);
        apply_dbc_velocity(scene, &mut state.v);
        positions.push(state.x.clone());
        if step % scene.frame_every == 0 || step == scene.n_steps {
            frames.push(write_frame(&scene.out_dir, &scene.mesh, &state.x, step)?);
        }
    }
    pre.timings.push(("timesteps", t_loop.elapsed().as_secs_f64()));
    pre.timings.push(("total", total.elapsed().as_secs_f64()));

    let stats_path = scene.out_dir.join("stats.csv");
    write_text(&stats_path, &stats_csv(&steps))?;
    let mut timing = String::from("phase,seconds\n");
    for (phase, secs) in &pre.timings {
        let _ = writeln!(timing, "{phase},{secs:.6}");
    }
    write_text(&scene.out_dir.join("timings.csv"), &timing)?;

    recheck_frames(scene, &frames)?;

    Ok(RunSummary {
        steps,
        positions,
        final_state: state,
        frames,
        stats_csv: stats_path,
        n_handles: pre.parts.m,
        n_cubature_points: pre.scheme.n_points(),
        n_refine: pre.n_refine,
    })
}

/// One compared step: both solvers run from the same (reference) state.
#[derive(Debug)]
pub struct CompareStep {
    pub step: usize,
    pub error: ErrorReport,
    pub ours: StepRecord,
    pub reference: RefStats,
}

#[derive(Debug)]
pub struct CompareSummary {
    pub steps: Vec<CompareStep>,
    pub csv: PathBuf,
    pub n_handles: usize,
}

/// Single-step comparison protocol: each timestep starts both solvers from
/// the reference trajectory's state, so errors measure one step of drift
/// rather than accumulated chaos. The trajectory itself advances with the
/// reference solution.
pub fn compare_mode(scene: &Scene) -> Result<CompareSummary> {
    let pre = precompute(scene)?;
    let model = IpModel::new(
        &scene.mesh,
        &scene.materials,
        pre.ops.mass.clone(),
        scene.colliders.clone(),
        scene.gravity,
    );
    let dbc = scene.mesh.dbc_mask();
    let cfg = solver_config_for(scene, pre.n_refine);
    let h = scene.time.h;

    ensure_out_dir(&scene.out_dir)?;
    let mut state = initial_state(scene, &model)?;
    let mut steps: Vec<CompareStep> = Vec::with_capacity(scene.n_steps);

    for step in 1..=scene.n_steps {
        let t_now = step as f64 * h;
        let alpha_h2 = scene.time.alpha(&state) * h * h;
        let mut x_tilde = predictor(&state, &scene.time);
        apply_dbc_targets(scene, t_now, &mut x_tilde);
        let mut x_start = state.x.clone();
        apply_dbc_targets(scene, t_now, &mut x_start);
        if !model.value(&x_start, &x_tilde, alpha_h2).is_finite() {
            return Err(SimError::at_step(
                step,
                "boundary script",
                "scripted Dirichlet motion produced an inverted or penetrating start state",
            ));
        }

        let (x_ours, stats_ours) =
            newton_solve(&model, &x_start, &x_tilde, h, alpha_h2, &pre.bases, &pre.scheme, &dbc, &cfg);
        if !stats_ours.converged {
            return Err(SimError::at_step(
                step,
                "newton",
                format!(
                    "no convergence within {} iterations (line search failed: {})",
                    cfg.max_newton, stats_ours.line_search_failed
                ),
            ));
        }
        let (x_ref, stats_ref) =
            reference_timestep(&model, &x_start, &x_tilde, h, alpha_h2, &dbc, &scene.reference);
        if !stats_ref.converged {
            return Err(SimError::at_step(
                step,
                "reference newton",
                format!(
                    "no convergence within {} iterations (line search failed: {})",
                    scene.reference.max_newton, stats_ref.line_search_failed
                ),
            ));
        }
        let error = displacement_error(&x_ours, &x_ref, &scene.mesh);
        let energy = model.value(&x_ours, &x_tilde, alpha_h2);
        steps.push(CompareStep {
            step,
            error,
            ours: StepRecord::from_stats(step, &stats_ours, energy),
            reference: stats_ref,
        });

        state = advance(&state, &x_ref, &x_tilde, &scene.time);
        apply_dbc_targets(scene, t_now, &mut state.x);
        apply_dbc_velocity(scene, &mut state.v);
    }

    let mut csv = String::from(
        "step,max_rel_err,mean_rel_err,ours_newton,ours_pcg,ref_newton,ref_pcg\n",
    );
    for s in &steps {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            s.step,
            s.error.max,
            s.error.mean,
            s.ours.newton_iters,
            s.ours.total_pcg(),
            s.reference.newton_iters,
            s.reference.total_pcg()
        );
    }
    let csv_path = scene.out_dir.join("compare.csv");
    write_text(&csv_path, &csv)?;

    Ok(CompareSummary { steps, csv: csv_path, n_handles: pre.parts.m })
}

#[derive(Debug)]
pub struct ExportSummary {
    pub files: Vec<PathBuf>,
    pub n_handles: usize,
    pub n_cubature_points: usize,
    pub n_refine: usize,
}

/// Run only the precompute pipeline and dump its products as ASCII:
/// `partition.txt` (per-element assignment + handle centroids),
/// `weights.txt` (sparse per-vertex weights; handle id `m` is the Dirichlet
/// field), and `cubature.txt` (per-partition element/weight pairs).
pub fn export_precompute(scene: &Scene) -> Result<ExportSummary> {
    let pre = precompute(scene)?;
    ensure_out_dir(&scene.out_dir)?;
    let mut files = Vec::new();

    let mut part = String::from("# element partition\n");
    let _ = writeln!(part, "# m {}", pre.parts.m);
    for (i, &c) in pre.parts.centroid_vertex.iter().enumerate() {
        let _ = writeln!(part, "# centroid {i} {c}");
    }
    for (e, &p) in pre.parts.assignment.iter().enumerate() {
        let _ = writeln!(part, "{e} {p}");
    }
    let path = scene.out_dir.join("partition.txt");
    write_text(&path, &part)?;
    files.push(path);

    let mut weights = String::from("# vertex handle weight\n");
    let _ = writeln!(weights, "# handle id {} is the Dirichlet field", pre.parts.m);
    for (v, ws) in pre.bases.vertex_weights.iter().enumerate() {
        for &(i, w) in ws {
            let _ = writeln!(weights, "{v} {i} {w}");
        }
        if pre.bases.phi_dbc[v] != 0.0 {
            let _ = writeln!(weights, "{v} {} {}", pre.parts.m, pre.bases.phi_dbc[v]);
        }
    }
    let path = scene.out_dir.join("weights.txt");
    write_text(&path, &weights)?;
    files.push(path);

    let mut cub = String::from("# partition element weight\n");
    for (i, points) in pre.scheme.per_partition.iter().enumerate() {
        for &(e, w) in points {
            let _ = writeln!(cub, "{i} {e} {w}");
        }
    }
    let path = scene.out_dir.join("cubature.txt");
    write_text(&path, &cub)?;
    files.push(path);

    Ok(ExportSummary {
        files,
        n_handles: pre.parts.m,
        n_cubature_points: pre.scheme.n_points(),
        n_refine: pre.n_refine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::scene_from_str;
    use std::path::Path;

    fn scene_with_out(src: &str, dir: &Path) -> Scene {
        let mut s = scene_from_str(src, Path::new(".")).unwrap();
        s.out_dir = dir.to_path_buf();
        s
    }

    const FREE_FALL: &str = "\
[mesh]\ngenerate = \"grid\"\nnx = 3\nny = 3\norigin = [0.0, 2.0]\n
[time]\nh = 0.01\nsteps = 10\n
[partition]\nk = 2\nseed = 1\n";

    #[test]
    fn zero_steps_writes_only_frame_zero() {
        let dir = tempfile::tempdir().unwrap();
        let src = FREE_FALL.replace("steps = 10", "steps = 0");
        let scene = scene_with_out(&src, dir.path());
        let out = run_simulation(&scene).unwrap();
        assert_eq!(out.frames.len(), 1);
        assert!(dir.path().join("frame_0000.obj").exists());
        assert!(!dir.path().join("frame_0001.obj").exists());
        assert!(out.steps.is_empty());
        let stats = std::fs::read_to_string(out.stats_csv).unwrap();
        assert_eq!(stats.lines().count(), 1, "header only");
    }

    #[test]
    fn free_fall_matches_ballistic_closed_form() {
        let dir = tempfile::tempdir().unwrap();
        let scene = scene_with_out(FREE_FALL, dir.path());
        let out = run_simulation(&scene).unwrap();
        // Implicit Euler free fall: v_n = n h g, x_n = x_0 + h Σ v_i,
        // i.e. the discrete trajectory x_0 + g h² n(n+1)/2 — exact because
        // with no elastic stress or contact the IP minimizer is x̃.
        let h = 0.01;
        let g = -9.8;
        let n = 10.0;
        let expect_dy = g * h * h * (n * (n + 1.0) / 2.0);
        let mesh = &scene.mesh;
        let total_mass: f64 = {
            let mats = &scene.materials;
            let ops = build_operators(mesh, mats, None).unwrap();
            ops.mass.iter().sum()
        };
        let com_y = |x: &[f64]| {
            let ops = build_operators(mesh, &scene.materials, None).unwrap();
            (0..mesh.n_verts()).map(|v| ops.mass[v] * x[2 * v + 1]).sum::<f64>() / total_mass
        };
        let dy = com_y(&out.final_state.x) - com_y(&mesh.rest);
        assert!(
            (dy - expect_dy).abs() < 1e-6,
            "center of mass fell {dy}, ballistic closed form {expect_dy}"
        );
        assert_eq!(out.frames.len(), 11);
        assert_eq!(out.positions.len(), 11);
    }

    #[test]
    fn rerun_with_same_seed_is_bit_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let src = "\
[mesh]\ngenerate = \"grid\"\nnx = 6\nny = 6\norigin = [0.0, 0.3]\n
[initial]\nvelocity = [0.0, -1.0]\n
[time]\nh = 0.01\nsteps = 3\n
[[collider]]\nkind = \"halfplane\"\nnormal = [0.0, 1.0]\noffset = 0.0\ndhat = 0.01\n
[partition]\nk = 4\nseed = 0\n";
        let sa = scene_with_out(src, dir_a.path());
        let sb = scene_with_out(src, dir_b.path());
        let oa = run_simulation(&sa).unwrap();
        let ob = run_simulation(&sb).unwrap();
        let a = std::fs::read_to_string(oa.stats_csv).unwrap();
        let b = std::fs::read_to_string(ob.stats_csv).unwrap();
        assert!(!a.is_empty() && a == b, "stats.csv must be byte-identical");
        for (fa, fb) in oa.frames.iter().zip(&ob.frames) {
            let ca = std::fs::read_to_string(fa).unwrap();
            let cb = std::fs::read_to_string(fb).unwrap();
            assert_eq!(ca, cb, "frames must be byte-identical");
        }
    }

    #[test]
    fn scripted_dbc_moves_vertices_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let src = "\
gravity = [0.0, 0.0]\n
[mesh]\ngenerate = \"grid\"\nnx = 4\nny = 2\nwidth = 1.0\nheight = 0.5\n
[time]\nh = 0.05\nsteps = 4\n
[material]\nyoungs = 1e4\n
[[dbc]]\nbox = [-0.01, -0.01, 0.01, 0.51]\nvelocity = [0.0, 0.0]\n
[[dbc]]\nbox = [0.99, -0.01, 1.01, 0.51]\nvelocity = [0.1, 0.0]\n
[partition]\nk = 2\nseed = 3\n";
        let scene = scene_with_out(src, dir.path());
        let out = run_simulation(&scene).unwrap();
        let t_end = 4.0 * 0.05;
        for script in &scene.dbc {
            for &v in &script.verts {
                let expect_x = scene.mesh.rest[2 * v] + t_end * script.velocity.x;
                let got = out.final_state.x[2 * v];
                assert_eq!(got, expect_x, "vertex {v} scripted position is exact");
            }
        }
        // the pulled edge dragged the interior along
        let mid = (0..scene.mesh.n_verts())
            .find(|&v| (scene.mesh.rest[2 * v] - 0.5).abs() < 1e-9)
            .unwrap();
        assert!(out.final_state.x[2 * mid] > 0.5 + 1e-4, "interior stretched right");
    }

    #[test]
    fn compare_mode_reports_small_single_step_error() {
        let dir = tempfile::tempdir().unwrap();
        let src = "\
[mesh]\ngenerate = \"grid\"\nnx = 5\nny = 5\norigin = [0.0, 0.05]\n
[initial]\nvelocity = [0.0, -0.5]\n
[time]\nh = 0.01\nsteps = 3\n
[material]\nyoungs = 1e5\n
[[collider]]\nkind = \"halfplane\"\nnormal = [0.0, 1.0]\noffset = 0.0\ndhat = 0.01\n
[partition]\nk = 3\nseed = 5\n";
        let scene = scene_with_out(src, dir.path());
        let out = compare_mode(&scene).unwrap();
        assert_eq!(out.steps.len(), 3);
        for s in &out.steps {
            assert!(s.error.max < 0.05, "step {}: error {}", s.step, s.error.max);
            assert!(s.reference.converged);
        }
        let csv = std::fs::read_to_string(out.csv).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("step,max_rel_err"));
    }

    #[test]
    fn export_writes_partition_weights_cubature() {
        let dir = tempfile::tempdir().unwrap();
        let src = "\
[mesh]\ngenerate = \"grid\"\nnx = 6\nny = 6\n
[time]\nh = 0.01\nsteps = 0\n
[partition]\nk = 4\nseed = 2\n";
        let scene = scene_with_out(src, dir.path());
        let out = export_precompute(&scene).unwrap();
        assert_eq!(out.files.len(), 3);
        let part = std::fs::read_to_string(&out.files[0]).unwrap();
        let data_lines =
            part.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(data_lines, scene.mesh.n_elements());
        let weights = std::fs::read_to_string(&out.files[1]).unwrap();
        // every vertex appears (POU: at least one nonzero weight per vertex)
        let mut seen = vec![false; scene.mesh.n_verts()];
        for line in weights.lines().filter(|l| !l.starts_with('#')) {
            let v: usize = line.split_whitespace().next().unwrap().parse().unwrap();
            seen[v] = true;
        }
        assert!(seen.iter().all(|&s| s), "every vertex has weight entries");
        let cub = std::fs::read_to_string(&out.files[2]).unwrap();
        let n_pts = cub.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(n_pts, out.n_cubature_points);
        assert!(out.n_refine == 20 || out.n_refine == 40);
    }

    #[test]
    fn infeasible_boundary_script_is_a_tagged_error() {
        let dir = tempfile::tempdir().unwrap();
        // Sphere collider sits just right of the square; the scripted wall
        // drives the whole (fully pinned) square into it within a few steps.
        let src = "\
gravity = [0.0, 0.0]\n
[mesh]\ngenerate = \"grid\"\nnx = 2\nny = 2\n
[time]\nh = 0.1\nsteps = 10\n
[[collider]]\nkind = \"sphere\"\ncenter = [1.6, 0.5]\nradius = 0.5\ndhat = 0.01\n
[[dbc]]\nbox = [-0.1, -0.1, 1.1, 1.1]\nvelocity = [0.5, 0.0]\n
[partition]\nk = 2\nseed = 1\n";
        let scene = scene_with_out(src, dir.path());
        let e = run_simulation(&scene).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("timestep") && msg.contains("boundary script"), "{msg}");
    }
}
