//! Stiffness-weighted geodesic distances via the heat method.
//!
//! Three stages on the FEM operators: (1) one backward-Euler heat step
//! (M̂ + t·L̂) u = δ with t = (mean edge length)², (2) per-element unit
//! vectors X = −∇u/‖∇u‖, (3) a Poisson solve L̂ φ = ∇·X, shifted so the
//! minimum over the sources is zero. M̂ and L̂ are the lumped mass and
//! stiffness-weighted Laplacian normalized by their medians (mass median,
//! stiffness median), which keeps the time step dimensionless: scaling all
//! Young's moduli or densities by a constant leaves distances unchanged,
//! while *relative* stiffness still bends the metric (stiff regions are
//! cheap to cross, soft regions expensive).
//!
//! Both factorizations are dense Cholesky, built once per mesh and reused
//! across source sets; this is the intended scale (meshes of a few thousand
//! vertices) and keeps the hot loop — one triangular solve per source —
//! cheap.

use crate::error::{Result, SimError};
use crate::mesh::{median_of_sorted, SimMesh};
use crate::operators::{hat_gradients, DiscreteOperators};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Vector2};

/// Per-vertex distances from one source set. Vertices on connected
/// components that contain no source are `f64::INFINITY`.
#[derive(Debug, Clone)]
pub struct GeodesicField {
    pub dist: Vec<f64>,
}

/// Prefactored heat-method solver for one mesh + operator pair.
pub struct HeatContext {
    pub n_verts: usize,
    heat: Cholesky<f64, Dyn>,
    poisson: Cholesky<f64, Dyn>,
    grads: Vec<[Vector2<f64>; 3]>,
    areas: Vec<f64>,
    tris: Vec<[usize; 3]>,
    component: Vec<usize>,
}

impl HeatContext {
    pub fn new(mesh: &SimMesh, ops: &DiscreteOperators) -> Result<HeatContext> {
        let n = mesh.n_verts();
        let t = mesh.mean_edge_length().powi(2);

        let mut sorted_mass = ops.mass.clone();
        sorted_mass.sort_by(f64::total_cmp);
        let mass_median = median_of_sorted(&sorted_mass);
        if !(mass_median > 0.0) {
            return Err(SimError::mesh("mass median must be positive"));
        }
        let s_median = ops.stiffness_median;

        let mut heat_mat = DMatrix::<f64>::zeros(n, n);
        let mut poisson_mat = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let (cols, vals) = ops.laplacian.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let lhat = v / s_median;
                heat_mat[(i, j)] += t * lhat;
                poisson_mat[(i, j)] += lhat;
            }
            heat_mat[(i, i)] += ops.mass[i] / mass_median;
        }
        let mean_diag = poisson_mat.diagonal().sum() / n as f64;
        for i in 0..n {
            poisson_mat[(i, i)] += 1e-9 * mean_diag;
        }

        let heat = Cholesky::new(heat_mat)
            .ok_or_else(|| SimError::mesh("heat operator is not positive definite"))?;
        let poisson = Cholesky::new(poisson_mat)
            .ok_or_else(|| SimError::mesh("regularized Laplacian is not positive definite"))?;

        let grads = (0..mesh.n_elements()).map(|e| hat_gradients(mesh, e)).collect();
        let areas = (0..mesh.n_elements()).map(|e| mesh.signed_area(e)).collect();
        let component = mesh.vertex_object();

        Ok(HeatContext {
            n_verts: n,
            heat,
            poisson,
            grads,
            areas,
            tris: mesh.elements.clone(),
            component,
        })
    }

    /// Distances from `sources` (deduplicated union).
    pub fn distances(&self, sources: &[usize]) -> Result<GeodesicField> {
        if sources.is_empty() {
            return Err(SimError::mesh("geodesic source set is empty"));
        }
        let n = self.n_verts;
        let mut delta = DVector::<f64>::zeros(n);
        for &s in sources {
            if s >= n {
                return Err(SimError::mesh(format!("source vertex {s} out of range")));
            }
            delta[s] = 1.0;
        }
        let u = self.heat.solve(&delta);

        // Normalized negative heat gradient per element, then its weak
        // divergence against each hat function.
        let mut b = DVector::<f64>::zeros(n);
        for (e, tri) in self.tris.iter().enumerate() {
            let g = &self.grads[e];
            let mut gu = Vector2::zeros();
            for v in 0..3 {
                gu += u[tri[v]] * g[v];
            }
            let norm = gu.norm();
            if norm < 1e-280 {
                continue;
            }
            let x = -gu / norm;
            for v in 0..3 {
                b[tri[v]] += self.areas[e] * g[v].dot(&x);
            }
        }
        let phi = self.poisson.solve(&b);

        // Shift per connected component so its closest source sits at zero;
        // component without a source => infinity.
        let n_comp = self.component.iter().copied().max().map_or(0, |m| m + 1);
        let mut comp_min = vec![f64::INFINITY; n_comp];
        for &s in sources {
            let c = self.component[s];
            comp_min[c] = comp_min[c].min(phi[s]);
        }
        let dist = (0..n)
            .map(|v| {
                let m = comp_min[self.component[v]];
                if m.is_finite() {
                    (phi[v] - m).max(0.0)
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        Ok(GeodesicField { dist })
    }
}

/// One-shot convenience: build the context and solve for one source set.
pub fn heat_geodesics(
    mesh: &SimMesh,
    ops: &DiscreteOperators,
    sources: &[usize],
) -> Result<GeodesicField> {
    HeatContext::new(mesh, ops)?.distances(sources)
}
