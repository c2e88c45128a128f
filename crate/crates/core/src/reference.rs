//! Full-space Newton oracle: exact PSD-projected Hessian, tightly
//! converged linear solves, and displacement error metrics. Serves as the
//! ground truth the multilevel solver is measured against, and — in
//! iterative mode — as the full-space Jacobi-PCG baseline for iteration
//! count comparisons.

use crate::energy::{IpModel, Want};
use crate::mesh::SimMesh;
use crate::pcg::{pcg, Precond};
use crate::solver::{filtered_line_search, mask_gradient, mask_hessian};
use nalgebra::{Cholesky, DVector};

#[derive(Debug, Clone)]
pub struct RefConfig {
    /// Multilevel solver tolerance; the reference terminates at a tenth of
    /// it, ‖d‖/(h·|V|) < ε/10, so it can serve as ground truth.
    pub epsilon: f64,
    /// Use a dense factorization when the DOF count is at most this.
    pub dense_cutoff: usize,
    /// Relative residual for the sparse path (large systems).
    pub pcg_tol: f64,
    /// Force Jacobi-PCG at `iterative_tol` regardless of size, recording
    /// iteration counts (the full-space baseline mode).
    pub iterative: bool,
    pub iterative_tol: f64,
    pub max_newton: usize,
}

impl Default for RefConfig {
    fn default() -> Self {
        RefConfig {
            epsilon: 1e-3,
            dense_cutoff: 3000,
            pcg_tol: 1e-10,
            iterative: false,
            iterative_tol: 1e-4,
            max_newton: 200,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RefStats {
    pub newton_iters: usize,
    /// Linear-solve PCG iterations per Newton iteration (empty entries for
    /// dense solves).
    pub per_iter_pcg: Vec<usize>,
    pub energies: Vec<f64>,
    pub converged: bool,
    pub line_search_failed: bool,
}

impl RefStats {
    pub fn total_pcg(&self) -> usize {
        self.per_iter_pcg.iter().sum()
    }
}

/// One implicit timestep of projected full-space Newton with exact
/// Hessians. Same filtered line search and Dirichlet handling as the
/// multilevel solver; termination on the full direction norm.
pub fn reference_timestep(
    model: &IpModel,
    x_t: &[f64],
    x_tilde: &[f64],
    h: f64,
    alpha_h2: f64,
    dbc: &[bool],
    cfg: &RefConfig,
) -> (Vec<f64>, RefStats) {
    let n_dof = model.dof();
    let n_verts = model.n_verts;
    let mass_dof: Vec<f64> = (0..n_dof).map(|i| model.mass[i / 2]).collect();
    let eps = cfg.epsilon / 10.0;

    let mut x = x_t.to_vec();
    let mut e_curr = model.value(&x, x_tilde, alpha_h2);
    assert!(e_curr.is_finite(), "reference_timestep requires a feasible start");
    let mut stats = RefStats::default();

    for _ in 0..cfg.max_newton {
        let rep = model.evaluate_ip(&x, x_tilde, alpha_h2, Want::full(true), None);
        let mut g = rep.gradient.expect("iterate must stay feasible");
        mask_gradient(&mut g, dbc);
        let mut h_mat = rep.hessian.expect("requested Hessian");
        mask_hessian(&mut h_mat, dbc, Some(&mass_dof));
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();

        let (d, pcg_iters) = if cfg.iterative {
            let apply = |p: &[f64], out: &mut [f64]| h_mat.spmv(p, out);
            let res = pcg(
                &apply,
                &Precond::diagonal(&h_mat.diag()),
                &neg_g,
                None,
                cfg.iterative_tol,
                50_000,
            );
            (res.x, res.iters)
        } else if n_dof <= cfg.dense_cutoff {
            let dense = h_mat.to_dense();
            match Cholesky::new(dense) {
                Some(chol) => {
                    let sol = chol.solve(&DVector::from_column_slice(&neg_g));
                    (sol.as_slice().to_vec(), 0)
                }
                None => {
                    // Numerically semidefinite: fall back to tight PCG.
                    let apply = |p: &[f64], out: &mut [f64]| h_mat.spmv(p, out);
                    let res = pcg(
                        &apply,
                        &Precond::diagonal(&h_mat.diag()),
                        &neg_g,
                        None,
                        cfg.pcg_tol,
                        50 * n_dof,
                    );
                    (res.x, res.iters)
                }
            }
        } else {
            let apply = |p: &[f64], out: &mut [f64]| h_mat.spmv(p, out);
            let res = pcg(
                &apply,
                &Precond::diagonal(&h_mat.diag()),
                &neg_g,
                None,
                cfg.pcg_tol,
                50 * n_dof,
            );
            (res.x, res.iters)
        };

        let d_norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let decrement = d_norm / (h * n_verts as f64);
        let ls = filtered_line_search(model, &x, &d, x_tilde, alpha_h2, e_curr);
        stats.newton_iters += 1;
        stats.per_iter_pcg.push(pcg_iters);
        if !ls.ok {
            if decrement < eps {
                stats.converged = true;
            } else {
                stats.line_search_failed = true;
            }
            stats.energies.push(e_curr);
            break;
        }
        x = ls.x_new;
        e_curr = ls.energy;
        stats.energies.push(e_curr);
        if decrement < eps {
            stats.converged = true;
            break;
        }
    }
    (x, stats)
}

/// Per-vertex displacement differences relative to the scene bounding-box
/// diagonal.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub per_vertex: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

pub fn displacement_error(x_ours: &[f64], x_ref: &[f64], mesh: &SimMesh) -> ErrorReport {
    assert_eq!(x_ours.len(), x_ref.len());
    let diag = mesh.bbox_diagonal();
    let per_vertex: Vec<f64> = (0..mesh.n_verts())
        .map(|v| {
            let dx = x_ours[2 * v] - x_ref[2 * v];
            let dy = x_ours[2 * v + 1] - x_ref[2 * v + 1];
            (dx * dx + dy * dy).sqrt() / diag
        })
        .collect();
    let max = per_vertex.iter().cloned().fold(0.0, f64::max);
    let mean = per_vertex.iter().sum::<f64>() / per_vertex.len().max(1) as f64;
    ErrorReport { per_vertex, max, mean }
}
