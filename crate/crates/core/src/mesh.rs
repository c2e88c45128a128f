//! Triangle mesh storage, validation, adjacency, and file I/O.
//!
//! Meshes are 2D (`dim == 2`): triangles in the plane, loaded either from
//! OBJ files whose vertices all have z = 0 or from Triangle-style
//! `.node`/`.ele` pairs. Rest positions are flattened `[x0, y0, x1, y1, ...]`.

use crate::error::{Result, SimError};
use nalgebra::Vector2;
use std::collections::VecDeque;
use std::path::Path;

pub mod gen;

/// One material entry; elements reference these by `material_id`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// Young's modulus in Pa.
    pub youngs: f64,
    /// Poisson ratio in [0, 0.5).
    pub poisson: f64,
    /// Density in kg/m² (2D).
    pub density: f64,
}

impl Material {
    /// First and second Lamé parameters (μ, λ) from (E, ν).
    pub fn lame(&self) -> (f64, f64) {
        let e = self.youngs;
        let nu = self.poisson;
        let mu = e / (2.0 * (1.0 + nu));
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        (mu, lambda)
    }
}

/// Per-element material properties, stored as a table indexed by the mesh's
/// `material_id` labels.
#[derive(Debug, Clone)]
pub struct MaterialField {
    pub table: Vec<Material>,
}

impl MaterialField {
    pub fn uniform(m: Material) -> Self {
        MaterialField { table: vec![m] }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, m) in self.table.iter().enumerate() {
            if !(m.youngs > 0.0) {
                return Err(SimError::mesh(format!("material {i}: E must be > 0, got {}", m.youngs)));
            }
            if !(0.0..0.5).contains(&m.poisson) {
                return Err(SimError::mesh(format!(
                    "material {i}: nu must be in [0, 0.5), got {}",
                    m.poisson
                )));
            }
            if !(m.density > 0.0) {
                return Err(SimError::mesh(format!("material {i}: rho must be > 0, got {}", m.density)));
            }
        }
        Ok(())
    }

    pub fn of_element(&self, mesh: &SimMesh, e: usize) -> &Material {
        &self.table[mesh.material_id[e]]
    }

    /// Median per-element Young's modulus over the mesh.
    pub fn median_youngs(&self, mesh: &SimMesh) -> f64 {
        let mut es: Vec<f64> = mesh.material_id.iter().map(|&id| self.table[id].youngs).collect();
        es.sort_by(|a, b| a.partial_cmp(b).unwrap());
        median_of_sorted(&es)
    }

    /// Smallest Young's modulus present on the mesh.
    pub fn min_youngs(&self, mesh: &SimMesh) -> f64 {
        mesh.material_id
            .iter()
            .map(|&id| self.table[id].youngs)
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    assert!(n > 0);
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// A validated 2D triangle mesh with per-element labels.
#[derive(Debug, Clone)]
pub struct SimMesh {
    /// Spatial dimension; always 2 in this build.
    pub dim: usize,
    /// Flattened rest positions, length `dim * n_verts`.
    pub rest: Vec<f64>,
    /// Triangles as CCW vertex index triples.
    pub elements: Vec<[usize; 3]>,
    /// Per-element material label (index into a `MaterialField` table).
    pub material_id: Vec<usize>,
    /// Per-element connected-component label (components of the
    /// vertex-sharing element graph).
    pub object_id: Vec<usize>,
    /// Number of distinct objects.
    pub n_objects: usize,
    /// Dirichlet-constrained vertices (sorted, deduplicated).
    pub dbc_vertices: Vec<usize>,
}

impl SimMesh {
    /// Build and validate a mesh from raw arrays. Material ids default to 0.
    pub fn new(rest: Vec<f64>, elements: Vec<[usize; 3]>) -> Result<SimMesh> {
        if rest.len() % 2 != 0 {
            return Err(SimError::mesh("vertex array length must be even (2D)"));
        }
        let n = rest.len() / 2;
        if n == 0 || elements.is_empty() {
            return Err(SimError::mesh("mesh has no vertices or no elements"));
        }
        let mut referenced = vec![false; n];
        for (e, tri) in elements.iter().enumerate() {
            for &v in tri {
                if v >= n {
                    return Err(SimError::mesh(format!(
                        "element {e} references vertex {v} but mesh has {n} vertices"
                    )));
                }
                referenced[v] = true;
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(SimError::mesh(format!("element {e} repeats a vertex: {tri:?}")));
            }
        }
        if let Some(v) = referenced.iter().position(|&r| !r) {
            return Err(SimError::mesh(format!(
                "vertex {v} is not referenced by any element (it would carry no mass)"
            )));
        }
        let n_el = elements.len();
        let material_id = vec![0usize; n_el];
        let mut mesh = SimMesh {
            dim: 2,
            rest,
            elements,
            material_id,
            object_id: vec![0; n_el],
            n_objects: 0,
            dbc_vertices: Vec::new(),
        };
        for e in 0..n_el {
            let a = mesh.signed_area(e);
            if a <= 0.0 {
                return Err(SimError::mesh(format!(
                    "element {e} has non-positive rest area {a:.3e} (inverted or degenerate)"
                )));
            }
            if a < 1e-14 {
                return Err(SimError::mesh(format!("element {e} is degenerate (area {a:.3e})")));
            }
        }
        mesh.label_objects();
        Ok(mesh)
    }

    pub fn n_verts(&self) -> usize {
        self.rest.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertex(&self, v: usize) -> Vector2<f64> {
        Vector2::new(self.rest[2 * v], self.rest[2 * v + 1])
    }

    /// Signed rest area of element `e` (positive for CCW triangles).
    pub fn signed_area(&self, e: usize) -> f64 {
        let [i, j, k] = self.elements[e];
        let a = self.vertex(i);
        let b = self.vertex(j);
        let c = self.vertex(k);
        0.5 * ((b - a).x * (c - a).y - (b - a).y * (c - a).x)
    }

    /// Barycenter of element `e` in rest coordinates.
    pub fn barycenter(&self, e: usize) -> Vector2<f64> {
        let [i, j, k] = self.elements[e];
        (self.vertex(i) + self.vertex(j) + self.vertex(k)) / 3.0
    }

    /// Axis-aligned bounding box of the rest positions: (min, max).
    pub fn bbox(&self) -> (Vector2<f64>, Vector2<f64>) {
        let mut lo = Vector2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in 0..self.n_verts() {
            let p = self.vertex(v);
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).norm()
    }

    /// Mean rest edge length over all element edges (shared edges counted once).
    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edges();
        let total: f64 = edges.iter().map(|&(u, v, _)| (self.vertex(u) - self.vertex(v)).norm()).sum();
        total / edges.len() as f64
    }

    /// Unique undirected edges as (u, v, incident element count), u < v.
    pub fn edges(&self) -> Vec<(usize, usize, usize)> {
        let mut raw: Vec<(usize, usize)> = Vec::with_capacity(self.elements.len() * 3);
        for tri in &self.elements {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                raw.push((a.min(b), a.max(b)));
            }
        }
        raw.sort_unstable();
        let mut out = Vec::new();
        let mut i = 0;
        while i < raw.len() {
            let e = raw[i];
            let mut cnt = 0;
            while i < raw.len() && raw[i] == e {
                cnt += 1;
                i += 1;
            }
            out.push((e.0, e.1, cnt));
        }
        out
    }

    /// Vertices incident to a boundary edge (an edge with exactly one
    /// incident element).
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut on = vec![false; self.n_verts()];
        for (u, v, cnt) in self.edges() {
            if cnt == 1 {
                on[u] = true;
                on[v] = true;
            }
        }
        on
    }

    /// Vertex → sorted neighbor vertices over element edges.
    pub fn vertex_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_verts()];
        for (u, v, _) in self.edges() {
            adj[u].push(v);
            adj[v].push(u);
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Vertex → sorted incident elements.
    pub fn vertex_elements(&self) -> Vec<Vec<usize>> {
        let mut ve = vec![Vec::new(); self.n_verts()];
        for (e, tri) in self.elements.iter().enumerate() {
            for &v in tri {
                ve[v].push(e);
            }
        }
        ve
    }

    /// Element → elements sharing an edge (face adjacency).
    pub fn element_adjacency(&self) -> Vec<Vec<usize>> {
        use std::collections::HashMap;
        let mut edge_to_els: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (e, tri) in self.elements.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_to_els.entry((a.min(b), a.max(b))).or_default().push(e);
            }
        }
        let mut adj = vec![Vec::new(); self.elements.len()];
        for els in edge_to_els.values() {
            for &a in els {
                for &b in els {
                    if a != b {
                        adj[a].push(b);
                    }
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Connected components of elements through shared vertices; relabels
    /// `object_id` and `n_objects`.
    fn label_objects(&mut self) {
        let ve = self.vertex_elements();
        let n_el = self.elements.len();
        let mut label = vec![usize::MAX; n_el];
        let mut next = 0;
        for start in 0..n_el {
            if label[start] != usize::MAX {
                continue;
            }
            let mut queue = VecDeque::new();
            queue.push_back(start);
            label[start] = next;
            while let Some(e) = queue.pop_front() {
                for &v in &self.elements[e] {
                    for &f in &ve[v] {
                        if label[f] == usize::MAX {
                            label[f] = next;
                            queue.push_back(f);
                        }
                    }
                }
            }
            next += 1;
        }
        self.object_id = label;
        self.n_objects = next;
    }

    /// Per-vertex object label, derived from incident elements.
    pub fn vertex_object(&self) -> Vec<usize> {
        let mut vo = vec![usize::MAX; self.n_verts()];
        for (e, tri) in self.elements.iter().enumerate() {
            for &v in tri {
                vo[v] = self.object_id[e];
            }
        }
        vo
    }

    /// Set the Dirichlet vertex set (sorted, deduplicated).
    pub fn set_dbc(&mut self, mut verts: Vec<usize>) {
        verts.sort_unstable();
        verts.dedup();
        self.dbc_vertices = verts;
    }

    pub fn dbc_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_verts()];
        for &v in &self.dbc_vertices {
            mask[v] = true;
        }
        mask
    }
}

// ---------------------------------------------------------------------------
// Loaders
// ---------------------------------------------------------------------------

/// Parse an OBJ with triangle faces; all vertices must lie in the z = 0
/// plane (this build is 2D-only).
pub fn load_obj_str(src: &str, origin: &str) -> Result<SimMesh> {
    let mut verts: Vec<f64> = Vec::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    for (ln, line) in src.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in coords.iter_mut() {
                    *c = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| SimError::io(origin, format!("line {}: bad vertex", ln + 1)))?;
                }
                if coords[2].abs() > 1e-12 {
                    return Err(SimError::io(
                        origin,
                        format!(
                            "line {}: vertex has z = {} — 3D meshes are unsupported (2D build requires z = 0)",
                            ln + 1,
                            coords[2]
                        ),
                    ));
                }
                verts.push(coords[0]);
                verts.push(coords[1]);
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        head.parse::<usize>()
                            .map_err(|_| SimError::io(origin, format!("line {}: bad face index '{tok}'", ln + 1)))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(SimError::io(
                        origin,
                        format!("line {}: only triangle faces are supported (got {} indices)", ln + 1, idx.len()),
                    ));
                }
                for &i in &idx {
                    if i == 0 {
                        return Err(SimError::io(origin, format!("line {}: OBJ indices are 1-based", ln + 1)));
                    }
                }
                tris.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {} // ignore normals, texcoords, groups
        }
    }
    SimMesh::new(verts, tris)
}

pub fn load_obj(path: &Path) -> Result<SimMesh> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| SimError::io(path.display().to_string(), e.to_string()))?;
    load_obj_str(&src, &path.display().to_string())
}

/// Parse a Triangle-convention `.node`/`.ele` pair given either path; the
/// index base (0 or 1) is auto-detected from the node file.
pub fn load_node_ele(path: &Path) -> Result<SimMesh> {
    let base = path.with_extension("");
    let node_path = base.with_extension("node");
    let ele_path = base.with_extension("ele");
    let node_src = std::fs::read_to_string(&node_path)
        .map_err(|e| SimError::io(node_path.display().to_string(), e.to_string()))?;
    let ele_src = std::fs::read_to_string(&ele_path)
        .map_err(|e| SimError::io(ele_path.display().to_string(), e.to_string()))?;
    load_node_ele_str(&node_src, &ele_src, &base.display().to_string())
}

pub fn load_node_ele_str(node_src: &str, ele_src: &str, origin: &str) -> Result<SimMesh> {
    fn data_lines(src: &str) -> impl Iterator<Item = &str> {
        src.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
    }
    let mut nl = data_lines(node_src);
    let header = nl
        .next()
        .ok_or_else(|| SimError::io(origin, "empty node file"))?;
    let hp: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().unwrap_or(0))
        .collect();
    if hp.len() < 2 {
        return Err(SimError::io(origin, "node header needs at least '<count> <dim>'"));
    }
    let (n, dim) = (hp[0], hp[1]);
    if dim != 2 {
        return Err(SimError::io(
            origin,
            format!("node file declares dimension {dim} — 3D meshes are unsupported (2D build)"),
        ));
    }
    let mut ids = Vec::with_capacity(n);
    let mut coords = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let line = nl.next().ok_or_else(|| SimError::io(origin, "node file truncated"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(SimError::io(origin, format!("short node record: '{line}'")));
        }
        let id: usize = toks[0]
            .parse()
            .map_err(|_| SimError::io(origin, format!("bad node id '{}'", toks[0])))?;
        let x: f64 = toks[1].parse().map_err(|_| SimError::io(origin, "bad node x"))?;
        let y: f64 = toks[2].parse().map_err(|_| SimError::io(origin, "bad node y"))?;
        ids.push(id);
        coords.push(x);
        coords.push(y);
    }
    let index_base = *ids.iter().min().unwrap_or(&0);
    if index_base > 1 {
        return Err(SimError::io(origin, format!("node ids start at {index_base}; expected 0 or 1")));
    }
    // Records may be out of order; place by id.
    let mut rest = vec![f64::NAN; 2 * n];
    for (k, &id) in ids.iter().enumerate() {
        let slot = id - index_base;
        if slot >= n {
            return Err(SimError::io(origin, format!("node id {id} out of range")));
        }
        rest[2 * slot] = coords[2 * k];
        rest[2 * slot + 1] = coords[2 * k + 1];
    }

    let mut el = data_lines(ele_src);
    let eheader = el.next().ok_or_else(|| SimError::io(origin, "empty ele file"))?;
    let ep: Vec<usize> = eheader
        .split_whitespace()
        .map(|t| t.parse().unwrap_or(0))
        .collect();
    if ep.len() < 2 {
        return Err(SimError::io(origin, "ele header needs '<count> <nodes-per-element>'"));
    }
    let (m, npe) = (ep[0], ep[1]);
    if npe != 3 {
        return Err(SimError::io(
            origin,
            format!("elements have {npe} nodes — only triangles are supported (2D build)"),
        ));
    }
    let mut tris = Vec::with_capacity(m);
    for _ in 0..m {
        let line = el.next().ok_or_else(|| SimError::io(origin, "ele file truncated"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 4 {
            return Err(SimError::io(origin, format!("short element record: '{line}'")));
        }
        let mut tri = [0usize; 3];
        for k in 0..3 {
            let id: usize = toks[k + 1]
                .parse()
                .map_err(|_| SimError::io(origin, format!("bad element index '{}'", toks[k + 1])))?;
            if id < index_base {
                return Err(SimError::io(origin, format!("element index {id} below index base {index_base}")));
            }
            tri[k] = id - index_base;
        }
        tris.push(tri);
    }
    SimMesh::new(rest, tris)
}

/// Write deformed positions as an OBJ frame (z = 0). Float formatting uses
/// Rust's shortest round-trip representation, so identical states produce
/// byte-identical files.
pub fn write_obj(mesh: &SimMesh, x: &[f64], out: &mut String) {
    for v in 0..mesh.n_verts() {
        out.push_str(&format!("v {} {} 0\n", x[2 * v], x[2 * v + 1]));
    }
    for tri in &mesh.elements {
        out.push_str(&format!("f {} {} {}\n", tri[0] + 1, tri[1] + 1, tri[2] + 1));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_triangle() -> SimMesh {
        SimMesh::new(vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn unit_right_triangle_area() {
        let m = unit_triangle();
        assert_eq!(m.n_verts(), 3);
        assert_eq!(m.n_elements(), 1);
        assert!((m.signed_area(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_triangle_square_shares_one_edge() {
        let m = SimMesh::new(
            vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let adj = m.element_adjacency();
        assert_eq!(adj[0], vec![1]);
        assert_eq!(adj[1], vec![0]);
        let interior: Vec<_> = m.edges().into_iter().filter(|&(_, _, c)| c == 2).collect();
        assert_eq!(interior.len(), 1);
        assert_eq!((interior[0].0, interior[0].1), (0, 2));
    }

    #[test]
    fn disjoint_squares_get_two_objects() {
        let m = SimMesh::new(
            vec![
                0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, // square A
                3.0, 0.0, 4.0, 0.0, 4.0, 1.0, 3.0, 1.0, // square B
            ],
            vec![[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]],
        )
        .unwrap();
        assert_eq!(m.n_objects, 2);
        assert_eq!(m.object_id[0], m.object_id[1]);
        assert_eq!(m.object_id[2], m.object_id[3]);
        assert_ne!(m.object_id[0], m.object_id[2]);
    }

    #[test]
    fn inverted_element_rejected() {
        let r = SimMesh::new(vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![[0, 2, 1]]);
        assert!(r.is_err());
        let msg = format!("{}", r.unwrap_err());
        assert!(msg.contains("non-positive"), "unexpected message: {msg}");
    }

    #[test]
    fn obj_roundtrip_and_z_check() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        let m = load_obj_str(src, "test").unwrap();
        assert_eq!(m.n_elements(), 1);
        let bad = "v 0 0 0.5\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        let err = load_obj_str(bad, "test").unwrap_err();
        assert!(format!("{err}").contains("3D"), "error should mention 3D: {err}");
    }

    #[test]
    fn node_ele_base_autodetect() {
        // 1-based
        let node = "3 2 0 0\n1 0.0 0.0\n2 1.0 0.0\n3 0.0 1.0\n";
        let ele = "1 3 0\n1 1 2 3\n";
        let m = load_node_ele_str(node, ele, "test").unwrap();
        assert_eq!(m.n_elements(), 1);
        assert!((m.signed_area(0) - 0.5).abs() < 1e-15);
        // 0-based
        let node0 = "3 2 0 0\n0 0.0 0.0\n1 1.0 0.0\n2 0.0 1.0\n";
        let ele0 = "1 3 0\n0 0 1 2\n";
        let m0 = load_node_ele_str(node0, ele0, "test").unwrap();
        assert_eq!(m0.n_elements(), 1);
        assert!((m0.signed_area(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn boundary_vertices_of_square() {
        let m = gen::grid(2, 2, 1.0, 1.0, Vector2::new(0.0, 0.0));
        // 3x3 vertices; only the center (index 4) is interior.
        let b = m.boundary_vertices();
        let interior: Vec<usize> = (0..m.n_verts()).filter(|&v| !b[v]).collect();
        assert_eq!(interior, vec![4]);
    }

    #[test]
    fn unreferenced_vertex_rejected() {
        let r = SimMesh::new(vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 5.0, 5.0], vec![[0, 1, 2]]);
        assert!(r.is_err());
    }
}
