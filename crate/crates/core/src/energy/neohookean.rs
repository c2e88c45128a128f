//! Non-inverting Neo-Hookean energy density in 2D and its derivatives in
//! vectorized deformation-gradient form:
//!
//!   Ψ(F) = μ/2 (‖F‖² − 2) − μ ln J + λ/2 (ln J)²,   J = det F.
//!
//! Ψ = 0 with zero gradient at F = I, and Ψ → ∞ as J → 0⁺; J ≤ 0 is
//! reported as +∞ so line-search filtering rejects inverting steps.
//! vec(F) ordering is column-major: (F11, F21, F12, F22).

use nalgebra::{Matrix2, SMatrix, Vector4};

pub fn psi(f: &Matrix2<f64>, mu: f64, lambda: f64) -> f64 {
    let j = f.determinant();
    if j <= 0.0 {
        return f64::INFINITY;
    }
    let ic = f.norm_squared();
    let lnj = j.ln();
    0.5 * mu * (ic - 2.0) - mu * lnj + 0.5 * lambda * lnj * lnj
}

/// First Piola–Kirchhoff stress P = ∂Ψ/∂F = μ F + (λ ln J − μ) F^{-T}.
pub fn pk1(f: &Matrix2<f64>, mu: f64, lambda: f64) -> Matrix2<f64> {
    let j = f.determinant();
    debug_assert!(j > 0.0);
    let f_inv_t = Matrix2::new(f[(1, 1)], -f[(1, 0)], -f[(0, 1)], f[(0, 0)]) / j;
    mu * f + (lambda * j.ln() - mu) * f_inv_t
}

/// ∂²Ψ/∂vec(F)², a symmetric 4×4:
///   μ I + γ ∂²J/∂F² + β g_J g_Jᵀ,
/// with γ = (λ ln J − μ)/J, β = (μ + λ(1 − ln J))/J², and
/// g_J = vec(∂J/∂F) = (F22, −F12, −F21, F11).
pub fn d2psi(f: &Matrix2<f64>, mu: f64, lambda: f64) -> SMatrix<f64, 4, 4> {
    let j = f.determinant();
    debug_assert!(j > 0.0);
    let lnj = j.ln();
    let gamma = (lambda * lnj - mu) / j;
    let beta = (mu + lambda * (1.0 - lnj)) / (j * j);
    let gj = Vector4::new(f[(1, 1)], -f[(0, 1)], -f[(1, 0)], f[(0, 0)]);
    let mut h = SMatrix::<f64, 4, 4>::identity() * mu;
    // Constant ∂²J/∂F² (2D): antidiagonal ±1.
    h[(0, 3)] += gamma;
    h[(3, 0)] += gamma;
    h[(1, 2)] -= gamma;
    h[(2, 1)] -= gamma;
    h += beta * gj * gj.transpose();
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    const MU: f64 = 3.0e5;
    const LA: f64 = 4.5e5;

    #[test]
    fn rest_state_is_stress_free_zero_energy() {
        let f = Matrix2::identity();
        assert_eq!(psi(&f, MU, LA), 0.0);
        assert!(pk1(&f, MU, LA).norm() < 1e-12 * MU);
    }

    #[test]
    fn rotation_invariance() {
        for k in 0..8 {
            let th = 0.7 * k as f64;
            let r = Matrix2::new(th.cos(), -th.sin(), th.sin(), th.cos());
            assert!(psi(&r, MU, LA).abs() < 1e-10 * MU);
        }
    }

    #[test]
    fn inversion_is_infinite() {
        let f = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        assert!(psi(&f, MU, LA).is_infinite());
        let f0 = Matrix2::new(1.0, 0.0, 0.0, 0.0);
        assert!(psi(&f0, MU, LA).is_infinite());
    }

    #[test]
    fn pk1_matches_finite_differences() {
        let f = Matrix2::new(1.1, 0.2, -0.15, 0.9);
        let p = pk1(&f, MU, LA);
        let h = 1e-6;
        for r in 0..2 {
            for c in 0..2 {
                let mut fp = f;
                let mut fm = f;
                fp[(r, c)] += h;
                fm[(r, c)] -= h;
                let fd = (psi(&fp, MU, LA) - psi(&fm, MU, LA)) / (2.0 * h);
                assert!(
                    (fd - p[(r, c)]).abs() < 1e-4 * p.norm().max(1.0),
                    "P[{r}{c}]: fd {fd} vs {}",
                    p[(r, c)]
                );
            }
        }
    }

    #[test]
    fn d2psi_matches_finite_differences() {
        let f = Matrix2::new(0.95, -0.1, 0.25, 1.2);
        let h4 = d2psi(&f, MU, LA);
        let h = 1e-6;
        // Column-major flattening matches the vec(F) convention.
        let idx = [(0, 0), (1, 0), (0, 1), (1, 1)];
        for (col, &(r, c)) in idx.iter().enumerate() {
            let mut fp = f;
            let mut fm = f;
            fp[(r, c)] += h;
            fm[(r, c)] -= h;
            let dp = pk1(&fp, MU, LA);
            let dm = pk1(&fm, MU, LA);
            for (row, &(r2, c2)) in idx.iter().enumerate() {
                let fd = (dp[(r2, c2)] - dm[(r2, c2)]) / (2.0 * h);
                assert!(
                    (fd - h4[(row, col)]).abs() < 1e-3 * h4.norm().max(1.0),
                    "H[{row},{col}]: fd {fd} vs {}",
                    h4[(row, col)]
                );
            }
        }
    }

    #[test]
    fn uniaxial_stretch_stress_sign() {
        // Stretch in x: positive P11; compression: negative.
        let s = Matrix2::new(1.2, 0.0, 0.0, 1.0);
        assert!(pk1(&s, MU, LA)[(0, 0)] > 0.0);
        let c = Matrix2::new(0.8, 0.0, 0.0, 1.0);
        assert!(pk1(&c, MU, LA)[(0, 0)] < 0.0);
        let _ = Vector2::<f64>::zeros(); // keep import used in both cfgs
    }
}
