//! Contact against analytic colliders: a C² log-barrier on vertex–collider
//! distances, plus the two step filters (earliest-impact CCD and element
//! non-inversion) that truncate line-search directions.
//!
//! The barrier on a distance d with activation distance d̂ is
//!   b(d) = −(d − d̂)² ln(d / d̂)   for 0 < d < d̂,   0 otherwise,
//! scaled by a per-collider stiffness κ. Value, first, and second
//! derivatives all vanish at d = d̂, and b → ∞ as d → 0.

use nalgebra::{Matrix2, Vector2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColliderShape {
    /// Points with normal·x − offset > 0 are outside.
    HalfPlane { normal: Vector2<f64>, offset: f64 },
    /// Solid ball; vertices must stay outside.
    Sphere { center: Vector2<f64>, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collider {
    pub shape: ColliderShape,
    /// Barrier activation distance (m).
    pub dhat: f64,
    /// Barrier stiffness (energy scale).
    pub kappa: f64,
}

impl ColliderShape {
    pub fn distance(&self, p: Vector2<f64>) -> f64 {
        match *self {
            ColliderShape::HalfPlane { normal, offset } => normal.dot(&p) - offset,
            ColliderShape::Sphere { center, radius } => (p - center).norm() - radius,
        }
    }

    pub fn distance_gradient(&self, p: Vector2<f64>) -> Vector2<f64> {
        match *self {
            ColliderShape::HalfPlane { normal, .. } => normal,
            ColliderShape::Sphere { center, .. } => {
                let q = p - center;
                q / q.norm()
            }
        }
    }

    pub fn distance_hessian(&self, p: Vector2<f64>) -> Matrix2<f64> {
        match *self {
            ColliderShape::HalfPlane { .. } => Matrix2::zeros(),
            ColliderShape::Sphere { center, .. } => {
                let q = p - center;
                let r = q.norm();
                let u = q / r;
                (Matrix2::identity() - u * u.transpose()) / r
            }
        }
    }
}

/// Scalar barrier b(d); κ is applied by the caller.
pub fn barrier(d: f64, dhat: f64) -> f64 {
    if d <= 0.0 {
        return f64::INFINITY;
    }
    if d >= dhat {
        return 0.0;
    }
    let s = d - dhat;
    -s * s * (d / dhat).ln()
}

pub fn barrier_d1(d: f64, dhat: f64) -> f64 {
    if d <= 0.0 || d >= dhat {
        return 0.0;
    }
    let s = d - dhat;
    -2.0 * s * (d / dhat).ln() - s * s / d
}

pub fn barrier_d2(d: f64, dhat: f64) -> f64 {
    if d <= 0.0 || d >= dhat {
        return 0.0;
    }
    let s = d - dhat;
    -2.0 * (d / dhat).ln() - 4.0 * s / d + s * s / (d * d)
}

/// Clamp the eigenvalues of a symmetric 2×2 matrix to be nonnegative.
fn clamp_spd2(m: Matrix2<f64>) -> Matrix2<f64> {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let c = m[(1, 1)];
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = (mean + rad, mean - rad);
    if l2 >= 0.0 {
        return Matrix2::new(a, b, b, c);
    }
    // Eigenvector for l1; guard the degenerate isotropic case.
    let v = if b.abs() > 1e-300 {
        Vector2::new(b, l1 - a).normalize()
    } else if a >= c {
        Vector2::new(1.0, 0.0)
    } else {
        Vector2::new(0.0, 1.0)
    };
    let l1c = l1.max(0.0);
    l1c * v * v.transpose()
}

pub struct BarrierTerms {
    pub value: f64,
    /// Flat d·n gradient; only active vertices touched.
    pub gradient: Option<Vec<f64>>,
    /// Hessian triplets (2×2 blocks per active vertex).
    pub triplets: Option<Vec<(usize, usize, f64)>>,
}

/// Sum barrier energy over all (vertex, collider) pairs with d < d̂.
/// Any nonpositive distance yields +∞ with no derivatives.
pub fn barrier_terms(
    x: &[f64],
    colliders: &[Collider],
    want_gradient: bool,
    want_hessian: bool,
    psd: bool,
) -> BarrierTerms {
    let n = x.len() / 2;
    let mut value = 0.0;
    let mut gradient = if want_gradient { Some(vec![0.0; x.len()]) } else { None };
    let mut triplets = if want_hessian { Some(Vec::new()) } else { None };
    for c in colliders {
        for v in 0..n {
            let p = Vector2::new(x[2 * v], x[2 * v + 1]);
            let d = c.shape.distance(p);
            if d <= 0.0 {
                return BarrierTerms { value: f64::INFINITY, gradient: None, triplets: None };
            }
            if d >= c.dhat {
                continue;
            }
            value += c.kappa * barrier(d, c.dhat);
            let b1 = c.kappa * barrier_d1(d, c.dhat);
            let gd = c.shape.distance_gradient(p);
            if let Some(g) = gradient.as_mut() {
                g[2 * v] += b1 * gd.x;
                g[2 * v + 1] += b1 * gd.y;
            }
            if let Some(t) = triplets.as_mut() {
                let b2 = c.kappa * barrier_d2(d, c.dhat);
                let mut block = b2 * gd * gd.transpose() + b1 * c.shape.distance_hessian(p);
                if psd {
                    block = clamp_spd2(block);
                }
                for r in 0..2 {
                    for s in 0..2 {
                        t.push((2 * v + r, 2 * v + s, block[(r, s)]));
                    }
                }
            }
        }
    }
    BarrierTerms { value, gradient, triplets }
}

/// Largest step fraction α ≤ 1 along `d` keeping every vertex strictly
/// outside every collider: exact per-vertex impact times scaled by 0.9.
/// Returns 0 if a vertex already touches a collider (stuck state).
pub fn ccd_filter_step(x: &[f64], dir: &[f64], colliders: &[Collider]) -> f64 {
    let n = x.len() / 2;
    let mut t_impact = f64::INFINITY;
    for c in colliders {
        for v in 0..n {
            let p = Vector2::new(x[2 * v], x[2 * v + 1]);
            let q = Vector2::new(dir[2 * v], dir[2 * v + 1]);
            let d0 = c.shape.distance(p);
            if d0 <= 0.0 {
                return 0.0;
            }
            match c.shape {
                ColliderShape::HalfPlane { normal, .. } => {
                    let dv = normal.dot(&q);
                    if dv < 0.0 {
                        t_impact = t_impact.min(-d0 / dv);
                    }
                }
                ColliderShape::Sphere { center, radius } => {
                    let rel = p - center;
                    let a = q.dot(&q);
                    if a == 0.0 {
                        continue;
                    }
                    let b = rel.dot(&q);
                    let cc = rel.dot(&rel) - radius * radius;
                    let disc = b * b - a * cc;
                    if disc <= 0.0 || b >= 0.0 {
                        continue; // no real crossing, or moving away
                    }
                    let t = (-b - disc.sqrt()) / a;
                    if t > 0.0 {
                        t_impact = t_impact.min(t);
                    }
                }
            }
        }
    }
    (0.9 * t_impact).min(1.0)
}

/// Largest step fraction α ≤ 1 along `d` keeping every element
/// non-inverted: per element, det of the deformed edge matrix is quadratic
/// in α; the smallest positive root is the inversion time. 0.9 safety.
pub fn inversion_filter_step(x: &[f64], dir: &[f64], elements: &[[usize; 3]]) -> f64 {
    let mut t_invert = f64::INFINITY;
    for tri in elements {
        let p = |v: usize| Vector2::new(x[2 * tri[v]], x[2 * tri[v] + 1]);
        let q = |v: usize| Vector2::new(dir[2 * tri[v]], dir[2 * tri[v] + 1]);
        let (a1, a2) = (p(1) - p(0), p(2) - p(0));
        let (b1, b2) = (q(1) - q(0), q(2) - q(0));
        // det(Ds + α Dp) = c0 + c1 α + c2 α²
        let c0 = a1.x * a2.y - a1.y * a2.x;
        let c1 = a1.x * b2.y - a1.y * b2.x + b1.x * a2.y - b1.y * a2.x;
        let c2 = b1.x * b2.y - b1.y * b2.x;
        debug_assert!(c0 > 0.0, "element inverted before filtering");
        if let Some(t) = smallest_positive_root(c2, c1, c0) {
            t_invert = t_invert.min(t);
        }
    }
    (0.9 * t_invert).min(1.0)
}

/// Smallest strictly positive root of c2 t² + c1 t + c0 = 0, if any.
fn smallest_positive_root(c2: f64, c1: f64, c0: f64) -> Option<f64> {
    if c2.abs() < 1e-14 * (c1.abs() + c0.abs()).max(1e-300) {
        if c1 >= 0.0 {
            return None; // constant or increasing; c0 > 0 stays positive
        }
        return Some(-c0 / c1);
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return None;
    }
    // Numerically stable split.
    let sq = disc.sqrt();
    let qq = -0.5 * (c1 + c1.signum() * sq);
    let mut roots = [qq / c2, if qq != 0.0 { c0 / qq } else { f64::INFINITY }];
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.into_iter().find(|&t| t > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ground() -> Collider {
        Collider {
            shape: ColliderShape::HalfPlane { normal: Vector2::new(0.0, 1.0), offset: 0.0 },
            dhat: 0.1,
            kappa: 1.0,
        }
    }

    #[test]
    fn barrier_matches_scalar_formula_at_half_dhat() {
        let dhat: f64 = 0.02;
        let d = dhat / 2.0;
        let expect = -(d - dhat) * (d - dhat) * (d / dhat).ln();
        assert!((barrier(d, dhat) - expect).abs() < 1e-18);
        // Through the assembled path with a single vertex.
        let c = Collider { shape: ColliderShape::HalfPlane { normal: Vector2::new(0.0, 1.0), offset: 0.0 }, dhat, kappa: 3.0 };
        let t = barrier_terms(&[0.5, d], &[c], false, false, false);
        assert!((t.value - 3.0 * expect).abs() < 1e-16);
    }

    #[test]
    fn barrier_is_c2_at_activation() {
        let dhat = 0.05;
        for f in [1.0, 1.0 - 1e-9] {
            let d = dhat * f;
            assert!(barrier(d, dhat).abs() < 1e-18);
            assert!(barrier_d1(d, dhat).abs() < 1e-9);
            assert!(barrier_d2(d, dhat).abs() < 1e-6);
        }
        assert_eq!(barrier(dhat * 1.5, dhat), 0.0);
    }

    #[test]
    fn barrier_monotone_decreasing_in_d() {
        let dhat = 0.1;
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let d = dhat * k as f64 / 200.0;
            let b = barrier(d, dhat);
            assert!(b < prev, "barrier must decrease: b({d}) = {b}");
            assert!(barrier_d1(d, dhat) < 0.0);
            prev = b;
        }
    }

    #[test]
    fn barrier_derivatives_match_finite_differences() {
        let dhat = 0.07;
        for d in [0.01, 0.03, 0.05, 0.065] {
            let h = 1e-7;
            let fd1 = (barrier(d + h, dhat) - barrier(d - h, dhat)) / (2.0 * h);
            assert!((fd1 - barrier_d1(d, dhat)).abs() < 1e-5 * fd1.abs().max(1.0));
            let fd2 = (barrier_d1(d + h, dhat) - barrier_d1(d - h, dhat)) / (2.0 * h);
            assert!((fd2 - barrier_d2(d, dhat)).abs() < 1e-5 * fd2.abs().max(1.0));
        }
    }

    #[test]
    fn inactive_barrier_is_zero() {
        let t = barrier_terms(&[0.0, 1.0, 2.0, 3.0], &[ground()], true, true, true);
        assert_eq!(t.value, 0.0);
        assert!(t.gradient.unwrap().iter().all(|&g| g == 0.0));
        assert!(t.triplets.unwrap().is_empty());
    }

    #[test]
    fn penetration_reports_infinity() {
        let t = barrier_terms(&[0.0, -0.01], &[ground()], true, false, false);
        assert!(t.value.is_infinite());
        assert!(t.gradient.is_none());
    }

    #[test]
    fn ccd_parallel_motion_returns_one() {
        let x = [0.0, 1.0, 1.0, 2.0];
        let d = [5.0, 0.0, -3.0, 0.0];
        assert_eq!(ccd_filter_step(&x, &d, &[ground()]), 1.0);
    }

    #[test]
    fn ccd_linear_impact_scaled_by_safety() {
        // Height 1 moving -2: impact at α = 0.5, filter returns 0.45.
        let x = [0.0, 1.0];
        let d = [0.0, -2.0];
        let a = ccd_filter_step(&x, &d, &[ground()]);
        assert!((a - 0.45).abs() < 1e-12);
    }

    #[test]
    fn ccd_sphere_tangent_and_hit() {
        let c = Collider {
            shape: ColliderShape::Sphere { center: Vector2::new(0.0, 0.0), radius: 1.0 },
            dhat: 0.05,
            kappa: 1.0,
        };
        // Tangential motion keeps distance: α = 1.
        let a = ccd_filter_step(&[2.0, 0.0], &[0.0, 1.0], &[c]);
        assert!((a - 1.0).abs() < 1e-12);
        // Head-on: from (2,0) moving (-2,0), impact at α = 0.5.
        let a = ccd_filter_step(&[2.0, 0.0], &[-2.0, 0.0], &[c]);
        assert!((a - 0.45).abs() < 1e-12);
    }

    #[test]
    fn inversion_filter_trivial_cases() {
        let x = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let els = [[0usize, 1, 2]];
        assert_eq!(inversion_filter_step(&x, &[0.0; 6], &els), 1.0);
        let t = [0.3, -0.7, 0.3, -0.7, 0.3, -0.7]; // rigid translation
        assert_eq!(inversion_filter_step(&x, &t, &els), 1.0);
    }

    #[test]
    fn inversion_filter_collapse_at_four_fifths() {
        // Vertex 2 moves down 1.25 units: area hits zero at α = 0.8.
        let x = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let d = [0.0, 0.0, 0.0, 0.0, 0.0, -1.25];
        let a = inversion_filter_step(&x, &d, &[[0, 1, 2]]);
        assert!((a - 0.72).abs() < 1e-12, "got {a}");
    }

    #[test]
    fn filters_guarantee_feasibility_under_fuzz() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x = [0.0, 0.5, 1.0, 0.5, 0.5, 1.5];
        let els = [[0usize, 1, 2]];
        let cols = [ground()];
        for _ in 0..1000 {
            let d: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a = ccd_filter_step(&x, &d, &cols).min(inversion_filter_step(&x, &d, &els));
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + a * di).collect();
            for v in 0..3 {
                let p = Vector2::new(xn[2 * v], xn[2 * v + 1]);
                assert!(cols[0].shape.distance(p) > 0.0);
            }
            let (p0, p1, p2) = (
                Vector2::new(xn[0], xn[1]),
                Vector2::new(xn[2], xn[3]),
                Vector2::new(xn[4], xn[5]),
            );
            let det = (p1 - p0).x * (p2 - p0).y - (p1 - p0).y * (p2 - p0).x;
            assert!(det > 0.0, "element inverted after filtering: det = {det}");
        }
    }
}
