//! Preconditioned conjugate gradients over matrix-free operators.
//!
//! One routine serves every linear solve in the crate that is not a dense
//! factorization: weight solves (diagonal preconditioner), the sparse-
//! subspace solve (6×6 block-Jacobi), and the lagged full-space refinement
//! (diagonal, fixed iteration count). The operator is a closure so callers
//! can compose sparse matrices, sandwich products, or sums without forming
//! anything.

use nalgebra::{Cholesky, Const, Matrix6, Vector6};

/// Preconditioner choices. `BlockDiag6` holds prefactored 6×6 diagonal
/// blocks (one per consecutive 6-entry slot of the vector).
pub enum Precond {
    Identity,
    /// Inverse applied entrywise: z = r / d (entries must be > 0).
    Diagonal(Vec<f64>),
    /// z_slot = block_slot⁻¹ r_slot via stored Cholesky factors.
    BlockDiag6(Vec<Cholesky<f64, Const<6>>>),
}

impl Precond {
    /// Build a diagonal preconditioner, guarding zero/negative entries.
    pub fn diagonal(d: &[f64]) -> Precond {
        let floor = d.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs())) * 1e-14 + 1e-300;
        Precond::Diagonal(d.iter().map(|&v| if v > floor { v } else { floor }).collect())
    }

    /// Build 6×6 block-Jacobi from raw blocks; indefinite blocks fall back
    /// to their diagonal.
    pub fn block_diag6(blocks: Vec<Matrix6<f64>>) -> Precond {
        let factors = blocks
            .into_iter()
            .map(|b| {
                let sym = 0.5 * (b + b.transpose());
                Cholesky::new(sym).unwrap_or_else(|| {
                    let mut d = Matrix6::zeros();
                    let floor =
                        (0..6).map(|i| sym[(i, i)].abs()).fold(0.0, f64::max) * 1e-12 + 1e-300;
                    for i in 0..6 {
                        d[(i, i)] = sym[(i, i)].max(floor);
                    }
                    Cholesky::new(d).expect("positive diagonal fallback must factor")
                })
            })
            .collect();
        Precond::BlockDiag6(factors)
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Identity => z.copy_from_slice(r),
            Precond::Diagonal(d) => {
                for i in 0..r.len() {
                    z[i] = r[i] / d[i];
                }
            }
            Precond::BlockDiag6(blocks) => {
                assert_eq!(r.len(), 6 * blocks.len());
                for (k, chol) in blocks.iter().enumerate() {
                    let rv = Vector6::from_column_slice(&r[6 * k..6 * k + 6]);
                    let zv = chol.solve(&rv);
                    z[6 * k..6 * k + 6].copy_from_slice(zv.as_slice());
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcgResult {
    pub x: Vec<f64>,
    pub iters: usize,
    /// ‖b − A x‖ / ‖b‖ (plain 2-norms) at exit.
    pub rel_residual: f64,
    pub converged: bool,
    /// A direction with pᵀAp ≤ 0 was encountered (operator not SPD).
    pub indefinite: bool,
}

/// Preconditioned CG on `apply_a`, stopping at ‖r‖/‖b‖ ≤ `tol` or after
/// `max_iters` iterations (use `tol = 0.0` to always run the full count,
/// e.g. for a fixed-iteration refinement). `x0` warm-starts when given.
pub fn pcg(
    apply_a: &dyn Fn(&[f64], &mut [f64]),
    precond: &Precond,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> PcgResult {
    let n = b.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = norm(b);
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    if x0.is_some() {
        apply_a(&x, &mut tmp);
        for i in 0..n {
            r[i] = b[i] - tmp[i];
        }
    } else {
        r.copy_from_slice(b);
    }
    if b_norm == 0.0 {
        return PcgResult { x, iters: 0, rel_residual: 0.0, converged: true, indefinite: false };
    }
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iters = 0;
    let mut indefinite = false;
    while iters < max_iters {
        if norm(&r) <= tol * b_norm {
            break;
        }
        apply_a(&p, &mut tmp);
        let pap = dot(&p, &tmp);
        if pap <= 0.0 {
            indefinite = true;
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * tmp[i];
        }
        iters += 1;
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        if rz_new <= 0.0 {
            // Preconditioner or roundoff breakdown; the residual is still valid.
            if rz_new < 0.0 {
                indefinite = true;
            }
            break;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = norm(&r) / b_norm;
    PcgResult { x, iters, rel_residual: rel, converged: rel <= tol, indefinite }
}
