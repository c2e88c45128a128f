//! Modal moment-fitting cubature.
//!
//! Each partition gets a small set of elements with nonnegative weights
//! chosen so that integrating products of the subspace weight functions
//! (and low-order spatial monomials) over the selected elements reproduces
//! the exact integrals over the whole partition. The elastic Hessian is
//! then assembled over the selected elements only, each contribution scaled
//! by weight/area, while inertia and barrier terms stay exact.

use crate::energy::IpModel;
use crate::error::Result;
use crate::mesh::SimMesh;
use crate::partition::PartitionSet;
use crate::sparse::Csr;
use crate::subspace::SubspaceBases;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Multi-indices (with repetition) over `n_gen` generators up to degree
/// `p` (p ≤ 2 supported): the empty product, singles, and sorted pairs.
pub fn moment_indices(n_gen: usize, p: usize) -> Vec<Vec<usize>> {
    assert!(p >= 1, "moment degree must be at least 1");
    let mut idx: Vec<Vec<usize>> = vec![vec![]];
    for i in 0..n_gen {
        idx.push(vec![i]);
    }
    if p >= 2 {
        for i in 0..n_gen {
            for j in i..n_gen {
                idx.push(vec![i, j]);
            }
        }
    }
    assert!(p <= 2, "degrees above 2 are not supported");
    idx
}

/// Moment-fitting system for one partition: rows are product constraints,
/// columns are candidate elements of the partition.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    /// Global element ids of the candidates (the partition's elements).
    pub candidates: Vec<usize>,
    /// Rest area of each candidate.
    pub vols: Vec<f64>,
    /// Constraint matrix: a[(α, k)] = ∏_{i∈α} ū_i(candidate k).
    pub a: DMatrix<f64>,
    /// Exact integrals: b_α = Σ_k vol_k · a[(α, k)].
    pub b: DVector<f64>,
}

impl MomentSystem {
    /// Assemble from per-generator element-averaged values
    /// (`gen_vals[i][k]` = ū_i on candidate k). `b` is computed from the
    /// same rows so that full sampling with w = vols is exact by
    /// construction.
    pub fn from_generators(
        gen_vals: &[Vec<f64>],
        vols: Vec<f64>,
        candidates: Vec<usize>,
        p: usize,
    ) -> MomentSystem {
        let n = candidates.len();
        let idx = moment_indices(gen_vals.len(), p);
        let mut a = DMatrix::<f64>::zeros(idx.len(), n);
        for (row, alpha) in idx.iter().enumerate() {
            for k in 0..n {
                let mut prod = 1.0;
                for &i in alpha {
                    prod *= gen_vals[i][k];
                }
                a[(row, k)] = prod;
            }
        }
        let mut b = DVector::<f64>::zeros(idx.len());
        for row in 0..idx.len() {
            let mut s = 0.0;
            for k in 0..n {
                s += vols[k] * a[(row, k)];
            }
            b[row] = s;
        }
        MomentSystem { candidates, vols, a, b }
    }

    pub fn n_constraints(&self) -> usize {
        self.a.nrows()
    }
}

/// Build the moment system for one partition: generators are the handle
/// weights φ_i whose support intersects the partition (ascending handle id)
/// plus the two spatial monomials x and y, normalized to the partition's
/// bounding box so the matrix stays well conditioned. Element values are
/// vertex averages.
pub fn build_moment_system(
    mesh: &SimMesh,
    bases: &SubspaceBases,
    elements: &[usize],
    p: usize,
) -> MomentSystem {
    let mut verts: Vec<usize> = elements.iter().flat_map(|&e| mesh.elements[e].iter().copied()).collect();
    verts.sort_unstable();
    verts.dedup();
    let mut handles: Vec<usize> = verts
        .iter()
        .flat_map(|&v| bases.vertex_weights[v].iter().map(|&(i, _)| i))
        .collect();
    handles.sort_unstable();
    handles.dedup();

    let (mut lo, mut hi) = (nalgebra::Vector2::repeat(f64::INFINITY), nalgebra::Vector2::repeat(f64::NEG_INFINITY));
    for &v in &verts {
        let pos = mesh.vertex(v);
        lo = lo.inf(&pos);
        hi = hi.sup(&pos);
    }
    let center = 0.5 * (lo + hi);
    let half = (0.5 * (hi - lo)).map(|h| if h > 0.0 { h } else { 1.0 });

    let phi = |i: usize, v: usize| -> f64 {
        bases.vertex_weights[v]
            .iter()
            .find(|&&(h, _)| h == i)
            .map(|&(_, p)| p)
            .unwrap_or(0.0)
    };
    let mut gen_vals: Vec<Vec<f64>> = Vec::with_capacity(handles.len() + 2);
    for &i in &handles {
        gen_vals.push(
            elements
                .iter()
                .map(|&e| mesh.elements[e].iter().map(|&v| phi(i, v)).sum::<f64>() / 3.0)
                .collect(),
        );
    }
    for axis in 0..2 {
        gen_vals.push(
            elements
                .iter()
                .map(|&e| {
                    mesh.elements[e]
                        .iter()
                        .map(|&v| (mesh.vertex(v)[axis] - center[axis]) / half[axis])
                        .sum::<f64>()
                        / 3.0
                })
                .collect(),
        );
    }
    let vols: Vec<f64> = elements.iter().map(|&e| mesh.signed_area(e)).collect();
    MomentSystem::from_generators(&gen_vals, vols, elements.to_vec(), p)
}

#[derive(Debug, Clone)]
pub struct NnlsResult {
    pub w: DVector<f64>,
    /// ‖A w − b‖₂ at the returned iterate.
    pub residual: f64,
    /// False when the active-set iteration cap was hit first.
    pub converged: bool,
}

/// Lawson–Hanson active-set nonnegative least squares:
/// min ‖A w − b‖₂ subject to w ≥ 0.
pub fn nnls_solve(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> NnlsResult {
    nnls_solve_warm(a, b, max_iter, None)
}

/// As [`nnls_solve`], optionally warm-started from a feasible `w0 ≥ 0`
/// (its positive entries seed the passive set). Columns whose insertion is
/// immediately undone by the feasibility retreat are excluded from further
/// selection, which prevents the classic active-set cycling in floating
/// point.
pub fn nnls_solve_warm(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    max_iter: usize,
    w0: Option<&DVector<f64>>,
) -> NnlsResult {
    let (m, n) = (a.nrows(), a.ncols());
    let mut w = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let mut banned = vec![false; n];
    let grad_tol = 1e-12 * a.amax().max(1.0) * b.amax().max(1.0);
    let svd_eps = 1e-13 * a.amax().max(1.0);

    let solve_passive = |passive: &[bool]| -> (Vec<usize>, DVector<f64>) {
        let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let mut ap = DMatrix::<f64>::zeros(m, cols.len());
        for (c, &j) in cols.iter().enumerate() {
            ap.set_column(c, &a.column(j));
        }
        let z = ap.svd(true, true).solve(b, svd_eps).expect("svd least squares");
        (cols, z)
    };

    // Inner feasibility loop: retreat along w → z until the passive-set
    // least squares solution is strictly positive on the passive set.
    let feasibility_loop = |passive: &mut Vec<bool>, w: &mut DVector<f64>| {
        loop {
            if !passive.iter().any(|&p| p) {
                break;
            }
            let (cols, z) = solve_passive(passive);
            if z.iter().all(|&zi| zi > 0.0) {
                w.fill(0.0);
                for (c, &j) in cols.iter().enumerate() {
                    w[j] = z[c];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (c, &j) in cols.iter().enumerate() {
                if z[c] <= 0.0 {
                    let denom = w[j] - z[c];
                    if denom > 0.0 {
                        alpha = alpha.min(w[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            let alpha = alpha.clamp(0.0, 1.0);
            for (c, &j) in cols.iter().enumerate() {
                w[j] += alpha * (z[c] - w[j]);
            }
            for j in 0..n {
                if passive[j] && w[j] <= 1e-14 {
                    w[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    };

    if let Some(w0) = w0 {
        for j in 0..n {
            if w0[j] > 0.0 {
                passive[j] = true;
                w[j] = w0[j];
            }
        }
        feasibility_loop(&mut passive, &mut w);
    }
    let mut r = b - a * &w;

    let mut converged = false;
    for _ in 0..max_iter.max(1) {
        let g = a.transpose() * &r;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if !passive[j] && !banned[j] && g[j] > grad_tol {
                if best.map_or(true, |(_, gb)| g[j] > gb) {
                    best = Some((j, g[j]));
                }
            }
        }
        let Some((jstar, _)) = best else {
            converged = true;
            break;
        };
        passive[jstar] = true;
        feasibility_loop(&mut passive, &mut w);
        if w[jstar] == 0.0 {
            banned[jstar] = true;
        }
        r = b - a * &w;
    }
    let residual = r.norm();
    NnlsResult { w, residual, converged }
}

#[derive(Debug, Clone, Copy)]
pub struct CubatureConfig {
    /// Moment degree (products of up to `p` basis functions).
    pub p: usize,
    /// Relative residual target ‖Aw − b‖/‖b‖.
    pub tol: f64,
    /// Base sampling seed; partition i uses seed + i.
    pub seed: u64,
}

impl Default for CubatureConfig {
    fn default() -> Self {
        CubatureConfig { p: 2, tol: 1e-9, seed: 0 }
    }
}

/// Per-partition cubature: (global element id, weight) with strictly
/// positive weights, elements ascending.
#[derive(Debug, Clone)]
pub struct CubatureScheme {
    pub per_partition: Vec<Vec<(usize, f64)>>,
}

impl CubatureScheme {
    /// Concatenation over partitions, sorted by element id, for the global
    /// elastic Hessian assembly.
    pub fn concatenated(&self) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> =
            self.per_partition.iter().flat_map(|p| p.iter().copied()).collect();
        all.sort_by_key(|&(e, _)| e);
        all
    }

    pub fn n_points(&self) -> usize {
        self.per_partition.iter().map(|p| p.len()).sum()
    }

    /// Scheme that integrates every element exactly (w = area).
    pub fn full(mesh: &SimMesh, parts: &PartitionSet) -> CubatureScheme {
        let mut per = vec![Vec::new(); parts.m];
        for e in 0..mesh.n_elements() {
            per[parts.assignment[e]].push((e, mesh.signed_area(e)));
        }
        CubatureScheme { per_partition: per }
    }
}

/// Iterative moment fitting for one partition: start from `n_init` random
/// candidates, NNLS-fit, and while the relative residual exceeds `tol`
/// draw `n_add` more candidates with probability proportional to
/// |column · residual|², until every element is sampled (at which point the
/// full rule w = vol is exact by construction and used as fallback).
pub fn fit_partition_cubature(
    sys: &MomentSystem,
    n_init: usize,
    n_add: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, f64)> {
    let n = sys.candidates.len();
    let b_norm = sys.b.norm();
    assert!(b_norm > 0.0, "degenerate moment system (zero targets)");

    let mut remaining: Vec<usize> = (0..n).collect();
    let mut selected: Vec<usize> = Vec::new();
    let take_uniform = |remaining: &mut Vec<usize>, rng: &mut ChaCha8Rng, count: usize| {
        let mut out = Vec::new();
        for _ in 0..count.min(remaining.len()) {
            let k = rng.random_range(0..remaining.len());
            out.push(remaining.swap_remove(k));
        }
        out
    };
    selected.extend(take_uniform(&mut remaining, rng, n_init.min(n)));
    selected.sort_unstable();
    let mut prev_w: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();

    loop {
        let mut a_sel = DMatrix::<f64>::zeros(sys.a.nrows(), selected.len());
        for (c, &j) in selected.iter().enumerate() {
            a_sel.set_column(c, &sys.a.column(j));
        }
        let warm = if prev_w.is_empty() {
            None
        } else {
            Some(DVector::from_iterator(
                selected.len(),
                selected.iter().map(|j| prev_w.get(j).copied().unwrap_or(0.0)),
            ))
        };
        let fit = nnls_solve_warm(&a_sel, &sys.b, 3 * selected.len().max(10), warm.as_ref());
        if fit.residual <= tol * b_norm {
            let mut out: Vec<(usize, f64)> = selected
                .iter()
                .enumerate()
                .filter(|&(c, _)| fit.w[c] > 0.0)
                .map(|(c, &j)| (sys.candidates[j], fit.w[c]))
                .collect();
            out.sort_by_key(|&(e, _)| e);
            return out;
        }
        if remaining.is_empty() {
            // Everything is sampled and NNLS still missed the target:
            // integrate the partition fully, which satisfies the moment
            // constraints exactly by construction.
            let mut out: Vec<(usize, f64)> =
                sys.candidates.iter().copied().zip(sys.vols.iter().copied()).collect();
            out.sort_by_key(|&(e, _)| e);
            return out;
        }
        // Residual-driven sampling without replacement.
        prev_w = selected.iter().enumerate().map(|(c, &j)| (j, fit.w[c])).collect();
        let r = &a_sel * &fit.w - &sys.b;
        let mut scores: Vec<f64> = remaining
            .iter()
            .map(|&j| {
                let s = sys.a.column(j).dot(&r);
                s * s
            })
            .collect();
        let mut total: f64 = scores.iter().sum();
        if !total.is_finite() || total <= 0.0 {
            scores.iter_mut().for_each(|s| *s = 1.0);
            total = scores.len() as f64;
        }
        for _ in 0..n_add.min(remaining.len()) {
            let mut u = rng.random::<f64>() * total;
            let mut pick = scores.len() - 1;
            for (k, &s) in scores.iter().enumerate() {
                if u < s {
                    pick = k;
                    break;
                }
                u -= s;
            }
            selected.push(remaining.swap_remove(pick));
            total -= scores.swap_remove(pick);
            if total <= 0.0 && !scores.is_empty() {
                scores.iter_mut().for_each(|s| *s = 1.0);
                total = scores.len() as f64;
            }
        }
        selected.sort_unstable();
    }
}

/// Fit every partition (in parallel; partition i samples with seed
/// `cfg.seed + i`).
pub fn build_cubature(
    mesh: &SimMesh,
    parts: &PartitionSet,
    bases: &SubspaceBases,
    cfg: &CubatureConfig,
) -> Result<CubatureScheme> {
    let partition_elements = parts.partition_elements();
    let per_partition: Vec<Vec<(usize, f64)>> = partition_elements
        .par_iter()
        .enumerate()
        .map(|(i, els)| {
            let sys = build_moment_system(mesh, bases, els, cfg.p);
            let n_idx = sys.n_constraints();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            fit_partition_cubature(&sys, n_idx.max(10), (n_idx / 2).max(5), cfg.tol, &mut rng)
        })
        .collect();
    Ok(CubatureScheme { per_partition })
}

/// The Hessian used by the subspace solves: elastic term over the cubature
/// elements (weight replaces area), inertia and barrier exact.
pub fn cubature_hessian(
    model: &IpModel,
    x: &[f64],
    alpha_h2: f64,
    scheme: &CubatureScheme,
    psd: bool,
) -> Csr {
    let subset = scheme.concatenated();
    let elastic = model.elastic_hessian(x, alpha_h2, psd, Some(&subset));
    let ib = model.inertia_barrier_hessian(x, alpha_h2, psd);
    elastic.add(&ib)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::gen;
    use crate::mesh::{Material, MaterialField};
    use crate::operators::build_operators;
    use crate::partition::{partition_mesh, subdomains_from_assignment, PartitionSet, PruneConfig};
    use crate::subspace::{build_subspace, BasisConfig};
    use nalgebra::Vector2;

    #[test]
    fn moment_index_counts() {
        assert_eq!(moment_indices(2, 2).len(), 6);
        assert_eq!(moment_indices(1, 2).len(), 3);
        assert_eq!(moment_indices(3, 1).len(), 4);
    }

    #[test]
    fn constant_generator_gives_rank_one_system() {
        let gen_vals = vec![vec![1.0; 5]];
        let vols = vec![0.3, 0.2, 0.1, 0.25, 0.15];
        let total: f64 = vols.iter().sum();
        let sys = MomentSystem::from_generators(&gen_vals, vols, (0..5).collect(), 2);
        assert_eq!(sys.n_constraints(), 3);
        for row in 0..3 {
            for k in 0..5 {
                assert_eq!(sys.a[(row, k)], 1.0);
            }
            assert!((sys.b[row] - total).abs() < 1e-15);
        }
        // Fit: a single point suffices, carrying the whole volume.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rule = fit_partition_cubature(&sys, 1, 1, 1e-9, &mut rng);
        assert_eq!(rule.len(), 1);
        assert!((rule[0].1 - total).abs() < 1e-12 * total);
    }

    #[test]
    fn full_sampling_with_volume_weights_is_exact() {
        let mesh = gen::grid(6, 4, 1.2, 0.8, Vector2::new(0.0, 0.0));
        let mats = MaterialField::uniform(Material { youngs: 1e6, poisson: 0.3, density: 1000.0 });
        let ops = build_operators(&mesh, &mats, None).unwrap();
        let parts = partition_mesh(&mesh, &ops, 2, &PruneConfig::default(), 3).unwrap();
        let bases = build_subspace(&mesh, &ops, &parts, &BasisConfig::default()).unwrap();
        let els = parts.partition_elements();
        for i in 0..parts.m {
            let sys = build_moment_system(&mesh, &bases, &els[i], 2);
            let w = DVector::from_vec(sys.vols.clone());
            let res = (&sys.a * w - &sys.b).norm();
            assert_eq!(res, 0.0, "b is its own full-sampling quadrature");
            // Degree-0 target is the partition area.
            let area: f64 = els[i].iter().map(|&e| mesh.signed_area(e)).sum();
            assert!((sys.b[0] - area).abs() < 1e-15 * area.max(1.0));
        }
    }

    #[test]
    fn nnls_identity_and_vertex_solutions() {
        let a = DMatrix::<f64>::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let res = nnls_solve(&a, &b, 20);
        assert!(res.converged);
        assert!((res.w[0] - 1.0).abs() < 1e-12 && (res.w[1] - 2.0).abs() < 1e-12);

        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0]);
        let res = nnls_solve(&a, &b, 20);
        assert!(res.residual < 1e-12);
        let nnz = res.w.iter().filter(|&&w| w > 0.0).count();
        assert!(nnz <= 1, "active-set solutions sit on a vertex, {nnz} nonzeros");
        assert!(res.w.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn nnls_matches_brute_force_support_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::<f64>::from_fn(5, 20, |_, _| rng.random::<f64>());
        let mut w_true = DVector::<f64>::zeros(20);
        w_true[3] = 0.7;
        w_true[11] = 1.4;
        w_true[17] = 0.2;
        let b = &a * &w_true;
        let res = nnls_solve(&a, &b, 100);
        // Brute force: best feasible least-squares residual over all
        // supports of size ≤ 3.
        let mut best = f64::INFINITY;
        for i in 0..20 {
            for j in i..20 {
                for k in j..20 {
                    let cols = [i, j, k];
                    let mut ap = DMatrix::<f64>::zeros(5, 3);
                    for (c, &col) in cols.iter().enumerate() {
                        ap.set_column(c, &a.column(col));
                    }
                    if let Ok(z) = ap.clone().svd(true, true).solve(&b, 1e-12) {
                        if z.iter().all(|&zi| zi >= 0.0) {
                            best = best.min((ap * z - &b).norm());
                        }
                    }
                }
            }
        }
        assert!(
            res.residual <= best + 1e-10,
            "nnls {} vs oracle {}",
            res.residual,
            best
        );
    }

    #[test]
    fn fitted_rules_hit_tolerance_with_small_support() {
        let mesh = gen::disk(6, 16, 1.0, Vector2::new(0.0, 0.0));
        let mats = MaterialField::uniform(Material { youngs: 1e6, poisson: 0.3, density: 1000.0 });
        let ops = build_operators(&mesh, &mats, None).unwrap();
        let parts = partition_mesh(&mesh, &ops, 4, &PruneConfig::default(), 2).unwrap();
        let bases = build_subspace(&mesh, &ops, &parts, &BasisConfig::default()).unwrap();
        let cfg = CubatureConfig { seed: 9, ..Default::default() };
        let scheme = build_cubature(&mesh, &parts, &bases, &cfg).unwrap();
        let els = parts.partition_elements();
        for i in 0..parts.m {
            let sys = build_moment_system(&mesh, &bases, &els[i], 2);
            let rule = &scheme.per_partition[i];
            assert!(!rule.is_empty());
            assert!(rule.iter().all(|&(_, w)| w > 0.0));
            // Residual of the fitted rule against the full constraints.
            let mut aw = DVector::<f64>::zeros(sys.n_constraints());
            for &(e, w) in rule {
                let col = sys.candidates.iter().position(|&c| c == e).unwrap();
                aw += w * sys.a.column(col);
            }
            let rel = (aw - &sys.b).norm() / sys.b.norm();
            assert!(rel <= 1e-9, "partition {i}: residual {rel}");
            // Point budget: a modest multiple of the constraint count.
            assert!(
                rule.len() <= 2 * sys.n_constraints(),
                "partition {i}: {} points for {} constraints",
                rule.len(),
                sys.n_constraints()
            );
            // Σw = partition area.
            let area: f64 = els[i].iter().map(|&e| mesh.signed_area(e)).sum();
            let total: f64 = rule.iter().map(|&(_, w)| w).sum();
            assert!((total - area).abs() <= 1e-9 * area, "partition {i}: Σw {total} vs {area}");
        }
        // Determinism.
        let again = build_cubature(&mesh, &parts, &bases, &cfg).unwrap();
        for i in 0..parts.m {
            assert_eq!(scheme.per_partition[i], again.per_partition[i]);
        }
    }

    #[test]
    fn stiff_partition_needs_fewer_points_than_soft() {
        // Two-material bar with one hand-built partition per material. The
        // stiff side's weight functions are flatter, so its moment system is
        // easier to satisfy and the fitted rule ends up smaller.
        let mut mesh = gen::grid(24, 12, 2.0, 1.0, Vector2::new(0.0, 0.0));
        for e in 0..mesh.n_elements() {
            mesh.material_id[e] = if mesh.barycenter(e).x > 1.0 { 1 } else { 0 };
        }
        let mats = MaterialField {
            table: vec![
                Material { youngs: 1e6, poisson: 0.3, density: 1000.0 },
                Material { youngs: 1e9, poisson: 0.3, density: 1000.0 },
            ],
        };
        let ops = build_operators(&mesh, &mats, None).unwrap();
        let assignment: Vec<usize> = (0..mesh.n_elements())
            .map(|e| if mesh.barycenter(e).x > 1.0 { 1 } else { 0 })
            .collect();
        let subs = subdomains_from_assignment(&mesh, &assignment, 2);
        let nearest = |px: f64, py: f64| -> usize {
            (0..mesh.n_verts())
                .min_by(|&a, &b| {
                    (mesh.vertex(a) - Vector2::new(px, py))
                        .norm()
                        .total_cmp(&(mesh.vertex(b) - Vector2::new(px, py)).norm())
                })
                .unwrap()
        };
        let parts = PartitionSet {
            m: 2,
            assignment,
            centroid_vertex: vec![nearest(0.5, 0.5), nearest(1.5, 0.5)],
            subdomain: subs.elements.clone(),
            neighbor_centroids: subs.neighbors.clone(),
            converged: true,
        };
        let bases = build_subspace(&mesh, &ops, &parts, &BasisConfig::default()).unwrap();
        let cfg = CubatureConfig { seed: 4, ..Default::default() };
        let scheme = build_cubature(&mesh, &parts, &bases, &cfg).unwrap();
        let (soft, stiff) = (&scheme.per_partition[0], &scheme.per_partition[1]);
        assert!(
            stiff.len() < soft.len(),
            "stiff {} vs soft {}",
            stiff.len(),
            soft.len()
        );
    }

    #[test]
    fn cubature_hessian_full_scheme_matches_exact_and_empty_is_inertia_barrier() {
        let mesh = gen::grid(5, 5, 1.0, 1.0, Vector2::new(0.0, 0.0));
        let mats = MaterialField::uniform(Material { youngs: 5e5, poisson: 0.35, density: 800.0 });
        let ops = build_operators(&mesh, &mats, None).unwrap();
        let parts = partition_mesh(&mesh, &ops, 2, &PruneConfig::default(), 6).unwrap();
        let model = IpModel::new(&mesh, &mats, ops.mass.clone(), vec![], Vector2::new(0.0, -9.8));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> =
            mesh.rest.iter().map(|&r| r + 0.01 * (rng.random::<f64>() - 0.5)).collect();
        let ah2 = 2.5e-4;

        let full = CubatureScheme::full(&mesh, &parts);
        let h_cub = cubature_hessian(&model, &x, ah2, &full, true);
        let h_exact = model
            .elastic_hessian(&x, ah2, true, None)
            .add(&model.inertia_barrier_hessian(&x, ah2, true));
        let (d1, d2) = (h_cub.to_dense(), h_exact.to_dense());
        assert!((&d1 - &d2).amax() < 1e-12 * d2.amax());

        let empty = CubatureScheme { per_partition: vec![Vec::new(); parts.m] };
        let h_ib = cubature_hessian(&model, &x, ah2, &empty, true);
        let d3 = model.inertia_barrier_hessian(&x, ah2, true).to_dense();
        assert!((h_ib.to_dense() - d3).amax() == 0.0);
    }

    #[test]
    fn rest_state_reduced_hessian_error_is_small() {
        let mesh = gen::grid(10, 10, 1.0, 1.0, Vector2::new(0.0, 0.0));
        let mats = MaterialField::uniform(Material { youngs: 1e6, poisson: 0.3, density: 1000.0 });
        let ops = build_operators(&mesh, &mats, None).unwrap();
        let parts = partition_mesh(&mesh, &ops, 3, &PruneConfig::default(), 5).unwrap();
        let bases = build_subspace(&mesh, &ops, &parts, &BasisConfig::default()).unwrap();
        let cfg = CubatureConfig { seed: 12, ..Default::default() };
        let scheme = build_cubature(&mesh, &parts, &bases, &cfg).unwrap();
        let model = IpModel::new(&mesh, &mats, ops.mass.clone(), vec![], Vector2::zeros());
        let ah2 = 1e-4;
        let h_cub = cubature_hessian(&model, &mesh.rest, ah2, &scheme, true);
        let h_exact = model
            .elastic_hessian(&mesh.rest, ah2, true, None)
            .add(&model.inertia_barrier_hessian(&mesh.rest, ah2, true));
        // Project both into the sparse subspace and compare.
        let reduce = |h: &Csr| -> DMatrix<f64> {
            let mut out = DMatrix::<f64>::zeros(bases.r_s, bases.r_s);
            let mut e_j = vec![0.0; bases.r_s];
            let mut col = vec![0.0; 2 * bases.n_verts];
            let mut hcol = vec![0.0; 2 * bases.n_verts];
            let mut red = vec![0.0; bases.r_s];
            for j in 0..bases.r_s {
                e_j.iter_mut().for_each(|v| *v = 0.0);
                e_j[j] = 1.0;
                bases.lift_s(&e_j, &mut col);
                h.spmv(&col, &mut hcol);
                bases.restrict_s(&hcol, &mut red);
                out.set_column(j, &DVector::from_column_slice(&red));
            }
            out
        };
        let rc = reduce(&h_cub);
        let re = reduce(&h_exact);
        let err = (&rc - &re).norm() / re.norm();
        assert!(err < 5e-2, "reduced Hessian relative error {err}");
    }
}
