//! The incremental potential and its derivatives:
//!
//!   E(x) = ½‖x − x̃‖²_M + α h² (Ψ(x) + B(x))
//!
//! Ψ sums the non-inverting Neo-Hookean energy over elements plus the
//! gravity potential −Σ_v m_v g·x_v; B is the contact barrier from
//! [`crate::contact`]. Gradients are always exact; the elastic Hessian can
//! be restricted to a weighted cubature subset, in which case an element's
//! cubature weight replaces its rest area. Element Hessian blocks are
//! optionally eigen-clamped to PSD (6×6 per triangle).

pub mod integrator;
pub mod neohookean;

use crate::contact::{barrier_terms, Collider};
use crate::mesh::{MaterialField, SimMesh};
use crate::sparse::Csr;
use nalgebra::{Matrix2, SMatrix, SVector, Vector2};

/// Precomputed per-element rest data: inverse edge matrix, area, the
/// linear map from stacked vertex positions to vec(F), and Lamé parameters.
#[derive(Debug, Clone)]
pub struct ElementRef {
    pub tri: [usize; 3],
    pub area: f64,
    pub bm: Matrix2<f64>,
    pub a: SMatrix<f64, 4, 6>,
    pub mu: f64,
    pub lambda: f64,
}

impl ElementRef {
    fn new(mesh: &SimMesh, materials: &MaterialField, e: usize) -> ElementRef {
        let tri = mesh.elements[e];
        let (p0, p1, p2) = (mesh.vertex(tri[0]), mesh.vertex(tri[1]), mesh.vertex(tri[2]));
        let dm = Matrix2::from_columns(&[p1 - p0, p2 - p0]);
        let bm = dm.try_inverse().expect("validated mesh has invertible rest elements");
        // vec(F)_{p+2q} = Σ_m Bm[m,q] (x_{m+1,p} − x_{0,p})
        let mut a = SMatrix::<f64, 4, 6>::zeros();
        for p in 0..2 {
            for q in 0..2 {
                let r = p + 2 * q;
                for m in 0..2 {
                    a[(r, 2 * (m + 1) + p)] += bm[(m, q)];
                    a[(r, p)] -= bm[(m, q)];
                }
            }
        }
        let (mu, lambda) = materials.of_element(mesh, e).lame();
        ElementRef { tri, area: mesh.signed_area(e), bm, a, mu, lambda }
    }

    pub fn deformation_gradient(&self, x: &[f64]) -> Matrix2<f64> {
        let p = |v: usize| Vector2::new(x[2 * self.tri[v]], x[2 * self.tri[v] + 1]);
        let ds = Matrix2::from_columns(&[p(1) - p(0), p(2) - p(0)]);
        ds * self.bm
    }
}

/// Eigen-clamp a symmetric 6×6 block to PSD.
fn clamp_spd6(h: SMatrix<f64, 6, 6>) -> SMatrix<f64, 6, 6> {
    let sym = 0.5 * (h + h.transpose());
    let eig = sym.symmetric_eigen();
    let mut any_neg = false;
    let vals = eig.eigenvalues.map(|l| {
        if l < 0.0 {
            any_neg = true;
            0.0
        } else {
            l
        }
    });
    if !any_neg {
        return sym;
    }
    let mut out = SMatrix::<f64, 6, 6>::zeros();
    for k in 0..6 {
        if vals[k] > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += vals[k] * v * v.transpose();
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct Want {
    pub value: bool,
    pub gradient: bool,
    pub hessian: bool,
    /// Eigen-clamp element / contact blocks to PSD before assembly.
    pub psd: bool,
}

impl Want {
    pub fn value_only() -> Want {
        Want { value: true, gradient: false, hessian: false, psd: false }
    }
    pub fn with_gradient() -> Want {
        Want { value: true, gradient: true, hessian: false, psd: false }
    }
    pub fn full(psd: bool) -> Want {
        Want { value: true, gradient: true, hessian: true, psd }
    }
}

#[derive(Debug)]
pub struct EnergyReport {
    pub value: f64,
    pub inertia: f64,
    pub elastic: f64,
    pub barrier: f64,
    pub gradient: Option<Vec<f64>>,
    pub hessian: Option<Csr>,
}

/// Everything needed to evaluate the incremental potential on a fixed mesh:
/// element rest data, lumped mass, colliders, gravity.
pub struct IpModel {
    pub n_verts: usize,
    pub elements: Vec<ElementRef>,
    pub tris: Vec<[usize; 3]>,
    pub mass: Vec<f64>,
    pub colliders: Vec<Collider>,
    pub gravity: Vector2<f64>,
}

impl IpModel {
    pub fn new(
        mesh: &SimMesh,
        materials: &MaterialField,
        mass: Vec<f64>,
        colliders: Vec<Collider>,
        gravity: Vector2<f64>,
    ) -> IpModel {
        let elements: Vec<ElementRef> =
            (0..mesh.n_elements()).map(|e| ElementRef::new(mesh, materials, e)).collect();
        IpModel {
            n_verts: mesh.n_verts(),
            tris: mesh.elements.clone(),
            elements,
            mass,
            colliders,
            gravity,
        }
    }

    pub fn dof(&self) -> usize {
        2 * self.n_verts
    }

    /// Full incremental potential. `alpha_h2` is α·h². The elastic strain
    /// term runs over `subset` (element, weight) pairs when given — weights
    /// replace rest areas — while inertia, gravity, and barrier stay exact.
    pub fn evaluate_ip(
        &self,
        x: &[f64],
        x_tilde: &[f64],
        alpha_h2: f64,
        want: Want,
        subset: Option<&[(usize, f64)]>,
    ) -> EnergyReport {
        debug_assert_eq!(x.len(), self.dof());
        let mut value = 0.0;
        let mut inertia = 0.0;
        let mut gradient = if want.gradient { Some(vec![0.0; self.dof()]) } else { None };
        let mut triplets: Option<Vec<(usize, usize, f64)>> =
            if want.hessian { Some(Vec::new()) } else { None };

        // Inertia ½‖x − x̃‖²_M (diagonal mass).
        for v in 0..self.n_verts {
            let m = self.mass[v];
            for c in 0..2 {
                let d = x[2 * v + c] - x_tilde[2 * v + c];
                inertia += 0.5 * m * d * d;
                if let Some(g) = gradient.as_mut() {
                    g[2 * v + c] += m * d;
                }
                if let Some(t) = triplets.as_mut() {
                    t.push((2 * v + c, 2 * v + c, m));
                }
            }
        }
        value += inertia;

        // Elastic strain energy (possibly over a cubature subset) + gravity.
        let mut elastic = 0.0;
        let mut inverted = false;
        let iter: Box<dyn Iterator<Item = (usize, f64)>> = match subset {
            Some(s) => Box::new(s.iter().copied()),
            None => Box::new((0..self.elements.len()).map(|e| (e, f64::NAN))),
        };
        for (e, w) in iter {
            let el = &self.elements[e];
            let scale = if w.is_nan() { el.area } else { w };
            let f = el.deformation_gradient(x);
            let j = f.determinant();
            if j <= 0.0 {
                inverted = true;
                break;
            }
            elastic += scale * neohookean::psi(&f, el.mu, el.lambda);
            if let Some(g) = gradient.as_mut() {
                let p = neohookean::pk1(&f, el.mu, el.lambda);
                let vec_p = SVector::<f64, 4>::new(p[(0, 0)], p[(1, 0)], p[(0, 1)], p[(1, 1)]);
                let ge = scale * el.a.transpose() * vec_p;
                for v in 0..3 {
                    g[2 * el.tri[v]] += alpha_h2 * ge[2 * v];
                    g[2 * el.tri[v] + 1] += alpha_h2 * ge[2 * v + 1];
                }
            }
            if let Some(t) = triplets.as_mut() {
                let h4 = neohookean::d2psi(&f, el.mu, el.lambda);
                let mut he = scale * el.a.transpose() * h4 * el.a;
                if want.psd {
                    he = clamp_spd6(he);
                }
                scatter_block6(t, &el.tri, &he, alpha_h2);
            }
        }
        if inverted {
            return EnergyReport {
                value: f64::INFINITY,
                inertia,
                elastic: f64::INFINITY,
                barrier: 0.0,
                gradient: None,
                hessian: None,
            };
        }
        // Gravity potential −Σ m g·x (exact regardless of subset).
        for v in 0..self.n_verts {
            let m = self.mass[v];
            elastic -= m * (self.gravity.x * x[2 * v] + self.gravity.y * x[2 * v + 1]);
            if let Some(g) = gradient.as_mut() {
                g[2 * v] -= alpha_h2 * m * self.gravity.x;
                g[2 * v + 1] -= alpha_h2 * m * self.gravity.y;
            }
        }
        value += alpha_h2 * elastic;

        // Contact barrier.
        let bt = barrier_terms(x, &self.colliders, want.gradient, want.hessian, want.psd);
        if bt.value.is_infinite() {
            return EnergyReport {
                value: f64::INFINITY,
                inertia,
                elastic,
                barrier: f64::INFINITY,
                gradient: None,
                hessian: None,
            };
        }
        value += alpha_h2 * bt.value;
        if let (Some(g), Some(bg)) = (gradient.as_mut(), bt.gradient.as_ref()) {
            for (gi, bgi) in g.iter_mut().zip(bg) {
                *gi += alpha_h2 * bgi;
            }
        }
        if let (Some(t), Some(bt)) = (triplets.as_mut(), bt.triplets.as_ref()) {
            for &(i, j, v) in bt {
                t.push((i, j, alpha_h2 * v));
            }
        }

        let hessian = triplets.map(|t| Csr::from_triplets(self.dof(), self.dof(), &t));
        EnergyReport { value, inertia, elastic, barrier: bt.value, gradient, hessian }
    }

    /// Energy value only (cheap path for line search).
    pub fn value(&self, x: &[f64], x_tilde: &[f64], alpha_h2: f64) -> f64 {
        self.evaluate_ip(x, x_tilde, alpha_h2, Want::value_only(), None).value
    }

    /// Elastic Hessian alone (α h² included), over all elements or a
    /// cubature subset.
    pub fn elastic_hessian(
        &self,
        x: &[f64],
        alpha_h2: f64,
        psd: bool,
        subset: Option<&[(usize, f64)]>,
    ) -> Csr {
        let mut triplets = Vec::new();
        let iter: Box<dyn Iterator<Item = (usize, f64)>> = match subset {
            Some(s) => Box::new(s.iter().copied()),
            None => Box::new((0..self.elements.len()).map(|e| (e, f64::NAN))),
        };
        for (e, w) in iter {
            let el = &self.elements[e];
            let scale = if w.is_nan() { el.area } else { w };
            let f = el.deformation_gradient(x);
            debug_assert!(f.determinant() > 0.0, "elastic Hessian at inverted configuration");
            let h4 = neohookean::d2psi(&f, el.mu, el.lambda);
            let mut he = scale * el.a.transpose() * h4 * el.a;
            if psd {
                he = clamp_spd6(he);
            }
            scatter_block6(&mut triplets, &el.tri, &he, alpha_h2);
        }
        Csr::from_triplets(self.dof(), self.dof(), &triplets)
    }

    /// Inertia (mass diagonal) + barrier Hessian at x (α h² on the barrier).
    pub fn inertia_barrier_hessian(&self, x: &[f64], alpha_h2: f64, psd: bool) -> Csr {
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(self.dof());
        for v in 0..self.n_verts {
            triplets.push((2 * v, 2 * v, self.mass[v]));
            triplets.push((2 * v + 1, 2 * v + 1, self.mass[v]));
        }
        let bt = barrier_terms(x, &self.colliders, false, true, psd);
        if let Some(t) = bt.triplets {
            for (i, j, v) in t {
                triplets.push((i, j, alpha_h2 * v));
            }
        }
        Csr::from_triplets(self.dof(), self.dof(), &triplets)
    }
}

fn scatter_block6(
    triplets: &mut Vec<(usize, usize, f64)>,
    tri: &[usize; 3],
    he: &SMatrix<f64, 6, 6>,
    scale: f64,
) {
    for a in 0..3 {
        for b in 0..3 {
            for r in 0..2 {
                for s in 0..2 {
                    triplets.push((2 * tri[a] + r, 2 * tri[b] + s, scale * he[(2 * a + r, 2 * b + s)]));
                }
            }
        }
    }
}
