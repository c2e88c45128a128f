//! Discrete operators on a triangle mesh: lumped mass, the
//! stiffness-weighted cotangent Laplacian, element volumes, and cached
//! adjacency. Everything downstream (heat geodesics, bilaplacian weight
//! solves, partitioning) is built from these.

use crate::error::Result;
use crate::mesh::{median_of_sorted, MaterialField, SimMesh};
use crate::sparse::Csr;
use nalgebra::Vector2;

#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    /// Lumped mass per vertex (kg): ρ_e · vol_e split equally among corners.
    pub mass: Vec<f64>,
    /// Stiffness-weighted Laplacian: per-element FEM Laplacian scaled by the
    /// element's stiffness value. Symmetric, PSD, rows sum to zero.
    /// Entries scale linearly with the stiffness values; consumers that need
    /// a dimensionless operator divide by `stiffness_median`.
    pub laplacian: Csr,
    /// Per-element rest measure (area in 2D).
    pub volumes: Vec<f64>,
    /// The per-element stiffness values that scaled the Laplacian
    /// (Young's modulus by default, or the caller's override).
    pub stiffness: Vec<f64>,
    /// Per-element mass density (kg/m²), kept so submesh operators can be
    /// re-assembled without the material table.
    pub density: Vec<f64>,
    /// Median of `stiffness`; heat solves normalize by this so their time
    /// step stays dimensionless.
    pub stiffness_median: f64,
    /// Vertex → neighbor vertices over edges.
    pub vertex_adjacency: Vec<Vec<usize>>,
    /// Vertex → incident elements.
    pub vertex_elements: Vec<Vec<usize>>,
    /// Element → edge-adjacent elements.
    pub element_adjacency: Vec<Vec<usize>>,
}

/// Constant gradients of the three linear hat functions on element `e`,
/// as rows of a 3×2 block: ∇φ_i = rot90(opposite edge) / (2·area).
pub fn hat_gradients(mesh: &SimMesh, e: usize) -> [Vector2<f64>; 3] {
    let [i, j, k] = mesh.elements[e];
    let (p0, p1, p2) = (mesh.vertex(i), mesh.vertex(j), mesh.vertex(k));
    let a2 = 2.0 * mesh.signed_area(e);
    let rot = |v: Vector2<f64>| Vector2::new(-v.y, v.x);
    [rot(p2 - p1) / a2, rot(p0 - p2) / a2, rot(p1 - p0) / a2]
}

/// Assemble mass, stiffness-weighted Laplacian, and adjacency.
///
/// `stiffness_override` replaces the per-element Young's modulus as the
/// Laplacian weight (used for the partitioner's jump penalty and for the
/// material-blind ablation).
pub fn build_operators(
    mesh: &SimMesh,
    materials: &MaterialField,
    stiffness_override: Option<&[f64]>,
) -> Result<DiscreteOperators> {
    materials.validate()?;
    let n_el = mesh.n_elements();
    let stiffness: Vec<f64> = match stiffness_override {
        Some(s) => {
            assert_eq!(s.len(), n_el, "stiffness override must have one entry per element");
            s.to_vec()
        }
        None => (0..n_el).map(|e| materials.of_element(mesh, e).youngs).collect(),
    };
    let density: Vec<f64> =
        (0..n_el).map(|e| materials.of_element(mesh, e).density).collect();
    Ok(build_operators_raw(mesh, stiffness, density))
}

/// Assembly from explicit per-element fields, used for cluster submeshes
/// where only the restricted stiffness/density vectors are available.
pub fn build_operators_raw(
    mesh: &SimMesh,
    stiffness: Vec<f64>,
    density: Vec<f64>,
) -> DiscreteOperators {
    let n = mesh.n_verts();
    let n_el = mesh.n_elements();
    assert_eq!(stiffness.len(), n_el);
    assert_eq!(density.len(), n_el);
    let mut volumes = vec![0.0; n_el];
    let mut mass = vec![0.0; n];
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(9 * n_el);
    for e in 0..n_el {
        let area = mesh.signed_area(e);
        volumes[e] = area;
        let tri = mesh.elements[e];
        for &v in &tri {
            mass[v] += density[e] * area / 3.0;
        }
        let g = hat_gradients(mesh, e);
        let w = stiffness[e] * area;
        for a in 0..3 {
            for b in 0..3 {
                triplets.push((tri[a], tri[b], w * g[a].dot(&g[b])));
            }
        }
    }
    let laplacian = Csr::from_triplets(n, n, &triplets);
    let mut sorted = stiffness.clone();
    sorted.sort_by(f64::total_cmp);
    let stiffness_median = median_of_sorted(&sorted);
    DiscreteOperators {
        mass,
        laplacian,
        volumes,
        stiffness,
        density,
        stiffness_median,
        vertex_adjacency: mesh.vertex_adjacency(),
        vertex_elements: mesh.vertex_elements(),
        element_adjacency: mesh.element_adjacency(),
    }
}
