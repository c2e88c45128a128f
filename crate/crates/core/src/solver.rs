//! Three-level inexact Newton timestep solver.
//!
//! Each Newton iteration evaluates the exact full-space gradient and a
//! cubature-approximated PSD Hessian, then builds a descent direction in
//! three stages: a per-object affine solve, a sparse skinning-subspace
//! correction (both PCG with 6×6 block-Jacobi preconditioners, matrix-free
//! sandwich products), and a fixed-count Jacobi-PCG full-space refinement
//! against a lagged elastic Hessian. A filtered backtracking line search
//! on the full incremental potential keeps every iterate intersection-free
//! and non-inverted. Termination uses the subspace decrement
//! ‖d_s‖/(h·|V|) < ε, tested after the line-search update.

use crate::contact::{ccd_filter_step, inversion_filter_step};
use crate::cubature::CubatureScheme;
use crate::energy::{IpModel, Want};
use crate::mesh::SimMesh;
use crate::partition::PartitionSet;
use crate::pcg::{pcg, PcgResult, Precond};
use crate::sparse::Csr;
use crate::subspace::SubspaceBases;
use nalgebra::Matrix6;
use rayon::prelude::*;
use std::collections::{HashMap, VecDeque};

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Newton tolerance for the subspace decrement (units m/s).
    pub epsilon: f64,
    /// Relative residual for both subspace PCG solves.
    pub pcg_tol: f64,
    /// Fixed full-space refinement iteration count (20 or 40).
    pub n_refine_cg: usize,
    /// Moving-average window of accepted step sizes for Hessian lagging.
    pub lag_window: usize,
    /// Refresh the lagged Hessian when the average drops below this.
    pub lag_threshold: f64,
    /// Minimum iterations between refreshes.
    pub lag_min_gap: usize,
    /// Newton iteration cap.
    pub max_newton: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-3,
            pcg_tol: 1e-4,
            n_refine_cg: 20,
            lag_window: 3,
            lag_threshold: 0.2,
            lag_min_gap: 5,
            max_newton: 100,
        }
    }
}

/// Frozen elastic Hessian for the full-space refinement. Inertia and
/// barrier terms are always rebuilt fresh at the current iterate and
/// combined with this at apply time.
pub struct LaggedHessian {
    /// α h² elastic Hessian, PSD-projected, all elements, Dirichlet-masked.
    pub elastic: Csr,
    /// Newton iteration at which it was last rebuilt.
    pub stamp: usize,
}

impl LaggedHessian {
    pub fn refresh(
        model: &IpModel,
        x: &[f64],
        alpha_h2: f64,
        dbc: &[bool],
        stamp: usize,
    ) -> LaggedHessian {
        let mut elastic = model.elastic_hessian(x, alpha_h2, true, None);
        mask_hessian(&mut elastic, dbc, None);
        LaggedHessian { elastic, stamp }
    }
}

/// One accepted (or attempted) Newton iteration.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub grad_norm: f64,
    pub ds_norm: f64,
    pub step: f64,
    pub energy: f64,
    pub pcg_affine: usize,
    pub pcg_sms: usize,
    pub pcg_refine: usize,
    pub hlag_refreshed: bool,
    /// d_f was discarded because d_s + d_f was not a descent direction.
    pub dropped_refinement: bool,
}

#[derive(Debug, Clone, Default)]
pub struct NewtonStats {
    pub iters: Vec<IterRecord>,
    pub converged: bool,
    pub line_search_failed: bool,
}

impl NewtonStats {
    pub fn total_pcg(&self) -> usize {
        self.iters.iter().map(|r| r.pcg_affine + r.pcg_sms + r.pcg_refine).sum()
    }
}

/// Zero gradient entries at Dirichlet vertices.
pub fn mask_gradient(g: &mut [f64], dbc: &[bool]) {
    for (v, &fixed) in dbc.iter().enumerate() {
        if fixed {
            g[2 * v] = 0.0;
            g[2 * v + 1] = 0.0;
        }
    }
}

/// Zero rows and columns of Dirichlet DOFs; stored diagonal entries of
/// those rows are set from `diag` (pass `None` for zero), keeping the
/// operator SPD when a mass diagonal is supplied.
pub fn mask_hessian(h: &mut Csr, dbc: &[bool], diag: Option<&[f64]>) {
    for i in 0..h.n_rows {
        let row_fixed = dbc[i / 2];
        for k in h.row_ptr[i]..h.row_ptr[i + 1] {
            let j = h.col_idx[k];
            if row_fixed || dbc[j / 2] {
                h.vals[k] = if i == j { diag.map_or(0.0, |d| d[i]) } else { 0.0 };
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-object 6×6 diagonal blocks of U_aᵀ H U_a.
fn affine_blocks(h: &Csr, bases: &SubspaceBases) -> Vec<Matrix6<f64>> {
    let n_obj = bases.r_a / 6;
    let mut blocks = vec![Matrix6::<f64>::zeros(); n_obj];
    for i in 0..h.n_rows {
        let v = i / 2;
        let rr = i % 2;
        let pv = bases.phi_affine[v];
        if pv == 0.0 {
            continue;
        }
        let o = bases.vertex_object[v];
        let cv = nalgebra::Vector2::new(bases.rest[2 * v], bases.rest[2 * v + 1])
            - bases.object_center[o];
        let bv = [pv, pv * cv.x, pv * cv.y];
        let (cols, vals) = h.row(i);
        for (&j, &val) in cols.iter().zip(vals) {
            if val == 0.0 {
                continue;
            }
            let w = j / 2;
            if bases.vertex_object[w] != o {
                continue;
            }
            let pw = bases.phi_affine[w];
            if pw == 0.0 {
                continue;
            }
            let ss = j % 2;
            let cw = nalgebra::Vector2::new(bases.rest[2 * w], bases.rest[2 * w + 1])
                - bases.object_center[o];
            let bw = [pw, pw * cw.x, pw * cw.y];
            for a in 0..3 {
                for b in 0..3 {
                    blocks[o][(3 * rr + a, 3 * ss + b)] += val * bv[a] * bw[b];
                }
            }
        }
    }
    blocks
}

/// Per-handle 6×6 diagonal blocks of U_sᵀ H U_s.
fn sms_blocks(h: &Csr, bases: &SubspaceBases) -> Vec<Matrix6<f64>> {
    (0..bases.m)
        .into_par_iter()
        .map(|k| {
            let mut blk = Matrix6::<f64>::zeros();
            let center = bases.handle_center[k];
            for &(v, pv) in &bases.handle_verts[k] {
                let cv =
                    nalgebra::Vector2::new(bases.rest[2 * v], bases.rest[2 * v + 1]) - center;
                let bv = [pv, pv * cv.x, pv * cv.y];
                for rr in 0..2 {
                    let (cols, vals) = h.row(2 * v + rr);
                    for (&j, &val) in cols.iter().zip(vals) {
                        if val == 0.0 {
                            continue;
                        }
                        let w = j / 2;
                        let pw = match bases.vertex_weights[w]
                            .binary_search_by_key(&k, |&(hh, _)| hh)
                        {
                            Ok(p) => bases.vertex_weights[w][p].1,
                            Err(_) => continue,
                        };
                        let ss = j % 2;
                        let cw = nalgebra::Vector2::new(
                            bases.rest[2 * w],
                            bases.rest[2 * w + 1],
                        ) - center;
                        let bw = [pw, pw * cw.x, pw * cw.y];
                        for a in 0..3 {
                            for b in 0..3 {
                                blk[(3 * rr + a, 3 * ss + b)] += val * bv[a] * bw[b];
                            }
                        }
                    }
                }
            }
            blk
        })
        .collect()
}

#[derive(Debug)]
pub struct SubspaceDirection {
    pub d_s: Vec<f64>,
    pub affine_iters: usize,
    pub sms_iters: usize,
    /// PCG hit its iteration cap without reaching tolerance.
    pub affine_stagnated: bool,
    pub sms_stagnated: bool,
}

/// First two solver levels: affine solve then sparse-subspace correction,
/// both PCG on the matrix-free sandwich (lift → H apply → restrict) with
/// per-handle block-Jacobi preconditioning, solved to `cfg.pcg_tol`.
/// RHS convention is descent: (UᵀHU) q = −Uᵀg.
pub fn solve_subspace_direction(
    h: &Csr,
    g: &[f64],
    bases: &SubspaceBases,
    cfg: &SolverConfig,
) -> SubspaceDirection {
    let n_dof = 2 * bases.n_verts;
    let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();

    // Affine level.
    let mut b_a = vec![0.0; bases.r_a];
    bases.restrict_a(&neg_g, &mut b_a);
    let apply_a = |q: &[f64], out: &mut [f64]| {
        let mut w = vec![0.0; n_dof];
        let mut hw = vec![0.0; n_dof];
        bases.lift_a(q, &mut w);
        h.spmv(&w, &mut hw);
        bases.restrict_a(&hw, out);
    };
    let pre_a = Precond::block_diag6(affine_blocks(h, bases));
    let res_a = pcg(&apply_a, &pre_a, &b_a, None, cfg.pcg_tol, 10 * bases.r_a);
    let mut d_s = vec![0.0; n_dof];
    bases.lift_a(&res_a.x, &mut d_s);

    // Sparse-subspace correction on the updated residual r = −g − H d_s.
    let mut hd = vec![0.0; n_dof];
    h.spmv(&d_s, &mut hd);
    let r_full: Vec<f64> = (0..n_dof).map(|i| neg_g[i] - hd[i]).collect();
    let mut b_s = vec![0.0; bases.r_s];
    bases.restrict_s(&r_full, &mut b_s);
    let apply_s = |q: &[f64], out: &mut [f64]| {
        let mut w = vec![0.0; n_dof];
        let mut hw = vec![0.0; n_dof];
        bases.lift_s(q, &mut w);
        h.spmv(&w, &mut hw);
        bases.restrict_s(&hw, out);
    };
    let pre_s = Precond::block_diag6(sms_blocks(h, bases));
    let res_s = pcg(&apply_s, &pre_s, &b_s, None, cfg.pcg_tol, 10 * bases.r_s);
    let mut w = vec![0.0; n_dof];
    bases.lift_s(&res_s.x, &mut w);
    for i in 0..n_dof {
        d_s[i] += w[i];
    }
    SubspaceDirection {
        d_s,
        affine_iters: res_a.iters,
        sms_iters: res_s.iters,
        affine_stagnated: !res_a.converged,
        sms_stagnated: !res_s.converged,
    }
}

/// Third level: exactly `n_iters` Jacobi-PCG iterations on
/// (H_lag^Ψ + inertia + barrier) d_f = r from a zero initial guess; no
/// residual-based early exit short of exact convergence.
pub fn solve_fullspace_correction(
    lag: &LaggedHessian,
    inertia_barrier: &Csr,
    r: &[f64],
    n_iters: usize,
) -> PcgResult {
    let apply = |p: &[f64], out: &mut [f64]| {
        lag.elastic.spmv(p, out);
        let mut t = vec![0.0; p.len()];
        inertia_barrier.spmv(p, &mut t);
        for i in 0..p.len() {
            out[i] += t[i];
        }
    };
    let diag: Vec<f64> = lag
        .elastic
        .diag()
        .iter()
        .zip(inertia_barrier.diag())
        .map(|(a, b)| a + b)
        .collect();
    pcg(&apply, &Precond::diagonal(&diag), r, None, 0.0, n_iters)
}

/// Refinement iteration count: per partition, the max BFS edge-hop
/// distance from the centroid vertex across its subdomain; averaged over
/// partitions and binned to the nearer of 20 or 40.
pub fn choose_refinement_iters(mesh: &SimMesh, parts: &PartitionSet) -> usize {
    let mut total = 0.0;
    for i in 0..parts.m {
        let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
        for &e in &parts.subdomain[i] {
            let t = mesh.elements[e];
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                adj.entry(a).or_default().push(b);
                adj.entry(b).or_default().push(a);
            }
        }
        let src = parts.centroid_vertex[i];
        let mut dist: HashMap<usize, usize> = HashMap::new();
        dist.insert(src, 0);
        let mut queue = VecDeque::from([src]);
        let mut radius = 0usize;
        while let Some(v) = queue.pop_front() {
            let dv = dist[&v];
            radius = radius.max(dv);
            if let Some(ns) = adj.get(&v) {
                for &w in ns {
                    if let std::collections::hash_map::Entry::Vacant(slot) = dist.entry(w) {
                        slot.insert(dv + 1);
                        queue.push_back(w);
                    }
                }
            }
        }
        total += radius as f64;
    }
    let avg = total / parts.m as f64;
    if (avg - 20.0).abs() < (avg - 40.0).abs() {
        20
    } else {
        40
    }
}

/// Lagged-Hessian refresh policy: always at iteration 0 of a timestep;
/// afterwards only when the moving average of recent accepted step sizes
/// sinks below the threshold and at least `lag_min_gap` iterations have
/// passed since the last refresh.
pub fn hlag_refresh_due(
    iter: usize,
    recent_steps: &[f64],
    iters_since_refresh: usize,
    cfg: &SolverConfig,
) -> bool {
    if iter == 0 {
        return true;
    }
    if iters_since_refresh < cfg.lag_min_gap || recent_steps.is_empty() {
        return false;
    }
    let w = recent_steps.len().min(cfg.lag_window);
    let avg: f64 = recent_steps[recent_steps.len() - w..].iter().sum::<f64>() / w as f64;
    avg < cfg.lag_threshold
}

#[derive(Debug)]
pub struct LineSearch {
    pub alpha: f64,
    pub x_new: Vec<f64>,
    pub energy: f64,
    pub ok: bool,
}

/// Backtracking line search on the full incremental potential, filtered
/// for collider impact (CCD) and element inversion before the first trial.
/// Halves α until strict energy decrease; fails below 1e-8.
pub fn filtered_line_search(
    model: &IpModel,
    x: &[f64],
    d: &[f64],
    x_tilde: &[f64],
    alpha_h2: f64,
    e0: f64,
) -> LineSearch {
    let a_ccd = ccd_filter_step(x, d, &model.colliders);
    let a_inv = inversion_filter_step(x, d, &model.tris);
    let mut alpha = a_ccd.min(a_inv).min(1.0);
    let mut trial = vec![0.0; x.len()];
    while alpha >= 1e-8 {
        for i in 0..x.len() {
            trial[i] = x[i] + alpha * d[i];
        }
        let e = model.value(&trial, x_tilde, alpha_h2);
        if e < e0 {
            return LineSearch { alpha, x_new: trial, energy: e, ok: true };
        }
        alpha *= 0.5;
    }
    LineSearch { alpha: 0.0, x_new: x.to_vec(), energy: e0, ok: false }
}

/// One implicit timestep: minimize the incremental potential from `x_t`
/// with predictor `x_tilde`, returning the accepted position and
/// per-iteration statistics. `dbc` pins vertices (their DOFs never move).
#[allow(clippy::too_many_arguments)]
pub fn newton_solve(
    model: &IpModel,
    x_t: &[f64],
    x_tilde: &[f64],
    h: f64,
    alpha_h2: f64,
    bases: &SubspaceBases,
    scheme: &CubatureScheme,
    dbc: &[bool],
    cfg: &SolverConfig,
) -> (Vec<f64>, NewtonStats) {
    let n_dof = model.dof();
    let n_verts = model.n_verts;
    let subset = scheme.concatenated();
    let mass_dof: Vec<f64> = (0..n_dof).map(|i| model.mass[i / 2]).collect();

    let mut x = x_t.to_vec();
    let mut e_curr = model.value(&x, x_tilde, alpha_h2);
    assert!(e_curr.is_finite(), "newton_solve requires a feasible start");
    let mut stats = NewtonStats::default();
    let mut lag: Option<LaggedHessian> = None;
    let mut steps: Vec<f64> = Vec::new();

    for iter in 0..cfg.max_newton {
        // Exact full-space gradient.
        let rep = model.evaluate_ip(&x, x_tilde, alpha_h2, Want::with_gradient(), None);
        let mut g = rep.gradient.expect("iterate must stay feasible");
        mask_gradient(&mut g, dbc);
        let grad_norm = norm(&g);

        // Cubature Hessian (elastic on the rule, exact inertia + barrier).
        let mut ib = model.inertia_barrier_hessian(&x, alpha_h2, true);
        mask_hessian(&mut ib, dbc, Some(&mass_dof));
        let mut h_el = model.elastic_hessian(&x, alpha_h2, true, Some(&subset));
        mask_hessian(&mut h_el, dbc, None);
        let h_mat = h_el.add(&ib);

        // Lagged-Hessian refresh.
        let since = lag.as_ref().map_or(usize::MAX, |l| iter - l.stamp);
        let mut refreshed = false;
        if hlag_refresh_due(iter, &steps, since, cfg) || lag.is_none() {
            lag = Some(LaggedHessian::refresh(model, &x, alpha_h2, dbc, iter));
            refreshed = true;
        }

        // Levels 1 + 2.
        let sub = solve_subspace_direction(&h_mat, &g, bases, cfg);
        let ds_norm = norm(&sub.d_s);
        let decrement = ds_norm / (h * n_verts as f64);

        // Level 3 on the fresh residual r = −g − H d_s.
        let mut hd = vec![0.0; n_dof];
        h_mat.spmv(&sub.d_s, &mut hd);
        let r: Vec<f64> = (0..n_dof).map(|i| -g[i] - hd[i]).collect();
        let lag_ref = lag.as_ref().unwrap();
        let mut refine = solve_fullspace_correction(lag_ref, &ib, &r, cfg.n_refine_cg);
        let mut pcg_refine = refine.iters;

        let mut d: Vec<f64> = sub.d_s.iter().zip(&refine.x).map(|(a, b)| a + b).collect();
        let mut dropped = false;
        if dot(&d, &g) >= 0.0 {
            d.copy_from_slice(&sub.d_s);
            dropped = true;
        }

        let mut ls = filtered_line_search(model, &x, &d, x_tilde, alpha_h2, e_curr);
        if !ls.ok {
            if decrement < cfg.epsilon {
                // Direction is already negligible: converged without a step.
                stats.iters.push(IterRecord {
                    grad_norm,
                    ds_norm,
                    step: 0.0,
                    energy: e_curr,
                    pcg_affine: sub.affine_iters,
                    pcg_sms: sub.sms_iters,
                    pcg_refine,
                    hlag_refreshed: refreshed,
                    dropped_refinement: dropped,
                });
                stats.converged = true;
                break;
            }
            // Retry once with a freshly rebuilt lagged Hessian.
            if lag.as_ref().unwrap().stamp != iter {
                lag = Some(LaggedHessian::refresh(model, &x, alpha_h2, dbc, iter));
                refreshed = true;
                refine = solve_fullspace_correction(lag.as_ref().unwrap(), &ib, &r, cfg.n_refine_cg);
                pcg_refine += refine.iters;
                d = sub.d_s.iter().zip(&refine.x).map(|(a, b)| a + b).collect();
                dropped = false;
                if dot(&d, &g) >= 0.0 {
                    d.copy_from_slice(&sub.d_s);
                    dropped = true;
                }
                ls = filtered_line_search(model, &x, &d, x_tilde, alpha_h2, e_curr);
            }
            if !ls.ok {
                stats.iters.push(IterRecord {
                    grad_norm,
                    ds_norm,
                    step: 0.0,
                    energy: e_curr,
                    pcg_affine: sub.affine_iters,
                    pcg_sms: sub.sms_iters,
                    pcg_refine,
                    hlag_refreshed: refreshed,
                    dropped_refinement: dropped,
                });
                stats.line_search_failed = true;
                break;
            }
        }

        x = ls.x_new;
        e_curr = ls.energy;
        steps.push(ls.alpha);
        stats.iters.push(IterRecord {
            grad_norm,
            ds_norm,
            step: ls.alpha,
            energy: e_curr,
            pcg_affine: sub.affine_iters,
            pcg_sms: sub.sms_iters,
            pcg_refine,
            hlag_refreshed: refreshed,
            dropped_refinement: dropped,
        });

        // Subspace Newton decrement, tested after the update with the d_s
        // of the just-completed iteration.
        if decrement < cfg.epsilon {
            stats.converged = true;
            break;
        }
    }
    (x, stats)
}
