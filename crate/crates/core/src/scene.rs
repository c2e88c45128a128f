//! Declarative scene configuration.
//!
//! A scene is a single TOML file describing geometry, materials, boundary
//! conditions, and every pipeline parameter. Relative paths inside the file
//! resolve against the scene file's directory. Unknown keys are rejected so
//! typos fail loudly instead of silently running defaults.
//!
//! ```toml
//! [mesh]                          # exactly one of `path` / `generate`
//! generate = "jittered-grid"      # jittered-grid | grid | disk | slit-square
//! nx = 16                         #   | h-shape | two-squares
//! ny = 16
//! width = 1.0
//! height = 1.0
//! origin = [0.0, 0.5]
//! jitter = 0.25                   # jittered-grid only; seed = 0 by default
//! # path = "meshes/bar"           # .node/.ele pair (either path) or .obj
//! # disk:        rings, segments, radius, center
//! # slit-square: nx, ny, width, height, origin, slit_frac
//! # h-shape:     nx, ny, width, height, bar_cells, cross_cells
//! # two-squares: n, gap
//!
//! [material]                      # base material (label 0)
//! youngs = 1e6
//! poisson = 0.3
//! density = 1000.0
//! # labels = "meshes/bar.labels"  # per-element indices into [base, table...]
//!
//! [[material.region]]             # assigns by element barycenter; later
//! box = [0.0, 0.0, 1.0, 0.3]      # regions win; omitted properties inherit
//! youngs = 1e9                    # the base material
//!
//! gravity = [0.0, -9.8]
//!
//! [initial]
//! velocity = [0.0, -2.0]          # uniform initial velocity
//!
//! [time]
//! h = 0.01
//! steps = 40
//! integrator = "implicit-euler"   # or "bdf2"
//!
//! [[collider]]
//! kind = "halfplane"              # halfplane | sphere
//! normal = [0.0, 1.0]
//! offset = 0.0
//! dhat = 1e-3
//! # kappa = 1e8                   # default 1e4 · median(E) · dhat
//! # sphere: center = [x, y], radius = r
//!
//! [[dbc]]
//! box = [-0.1, -0.1, 1.1, 0.05]   # rest-position vertex selection
//! velocity = [0.0, 0.0]           # scripted linear motion; default pinned
//!
//! [partition]
//! k = 16                          # initial handle count (pruning may reduce)
//! seed = 0
//! gamma = 0.25                    # jump-penalty factor in (0, 1]
//! # prune_interval = 10, imbalance_ratio = 1.75, n_prune = 5
//!
//! [basis]
//! material_blind = false          # ablation: uniform-stiffness weight solves
//! # dense_cutoff = 2000, pcg_tol = 1e-10
//!
//! [cubature]
//! p = 2
//! tol = 1e-9
//! seed = 0
//! exact = false                   # ablation: integrate over all elements
//!
//! [solver]
//! epsilon = 1e-3
//! pcg_tol = 1e-4
//! refine = "auto"                 # "auto" | "off" | iteration count
//! # lag_window = 3, lag_threshold = 0.2, lag_min_gap = 5, max_newton = 100
//!
//! [reference]                     # compare mode only
//! iterative = false               # Jacobi-PCG baseline, records iterations
//! # max_newton = 200
//!
//! [output]
//! dir = "out"
//! frame_every = 1                 # write every k-th frame (frame 0 always)
//! ```

use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::Deserialize;

use crate::contact::{Collider, ColliderShape};
use crate::cubature::CubatureConfig;
use crate::energy::integrator::{Integrator, TimestepConfig};
use crate::error::{Result, SimError};
use crate::mesh::{gen, load_node_ele, load_obj, Material, MaterialField, SimMesh};
use crate::partition::PruneConfig;
use crate::reference::RefConfig;
use crate::solver::SolverConfig;
use crate::subspace::BasisConfig;

fn err(msg: impl Into<String>) -> SimError {
    SimError::Scene(msg.into())
}

// ---------------------------------------------------------------------------
// Raw TOML shapes (private): everything optional that has a default, strict
// about unknown keys.
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    mesh: RawMesh,
    #[serde(default)]
    material: RawMaterial,
    gravity: Option<[f64; 2]>,
    #[serde(default)]
    initial: RawInitial,
    time: RawTime,
    #[serde(default)]
    collider: Vec<RawCollider>,
    #[serde(default)]
    dbc: Vec<RawDbc>,
    #[serde(default)]
    partition: RawPartition,
    #[serde(default)]
    basis: RawBasis,
    #[serde(default)]
    cubature: RawCubature,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    reference: RawReference,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    path: Option<String>,
    generate: Option<String>,
    nx: Option<usize>,
    ny: Option<usize>,
    width: Option<f64>,
    height: Option<f64>,
    origin: Option<[f64; 2]>,
    rings: Option<usize>,
    segments: Option<usize>,
    radius: Option<f64>,
    center: Option<[f64; 2]>,
    slit_frac: Option<f64>,
    bar_cells: Option<usize>,
    cross_cells: Option<usize>,
    n: Option<usize>,
    gap: Option<f64>,
    jitter: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    youngs: Option<f64>,
    poisson: Option<f64>,
    density: Option<f64>,
    labels: Option<String>,
    #[serde(default)]
    region: Vec<RawRegion>,
    #[serde(default)]
    table: Vec<RawTableEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    youngs: Option<f64>,
    poisson: Option<f64>,
    density: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTableEntry {
    youngs: Option<f64>,
    poisson: Option<f64>,
    density: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    velocity: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    h: f64,
    steps: usize,
    integrator: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCollider {
    kind: String,
    normal: Option<[f64; 2]>,
    offset: Option<f64>,
    center: Option<[f64; 2]>,
    radius: Option<f64>,
    dhat: f64,
    kappa: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDbc {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    velocity: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPartition {
    k: Option<usize>,
    seed: Option<u64>,
    gamma: Option<f64>,
    prune_interval: Option<usize>,
    imbalance_ratio: Option<f64>,
    n_prune: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBasis {
    dense_cutoff: Option<usize>,
    pcg_tol: Option<f64>,
    material_blind: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCubature {
    p: Option<usize>,
    tol: Option<f64>,
    seed: Option<u64>,
    exact: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    epsilon: Option<f64>,
    pcg_tol: Option<f64>,
    refine: Option<toml::Value>,
    lag_window: Option<usize>,
    lag_threshold: Option<f64>,
    lag_min_gap: Option<usize>,
    max_newton: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReference {
    iterative: Option<bool>,
    max_newton: Option<usize>,
    dense_cutoff: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    frame_every: Option<usize>,
}

// ---------------------------------------------------------------------------
// Resolved scene
// ---------------------------------------------------------------------------

/// How many full-space refinement iterations each Newton iteration runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineMode {
    /// Pick 20 or 40 from the partition hop radius at precompute time.
    Auto,
    /// Fixed count; 0 disables refinement (subspace-only ablation).
    Fixed(usize),
}

/// Partitioner parameters.
#[derive(Debug, Clone)]
pub struct PartitionParams {
    pub k: usize,
    pub seed: u64,
    pub gamma: f64,
    pub prune: PruneConfig,
}

/// One scripted Dirichlet group: the selected vertices move linearly from
/// their rest position at the given velocity (zero = pinned).
#[derive(Debug, Clone)]
pub struct DbcScript {
    pub verts: Vec<usize>,
    pub velocity: Vector2<f64>,
}

/// A fully validated scene, ready for precompute and simulation.
#[derive(Debug, Clone)]
pub struct Scene {
    /// Mesh with Dirichlet vertices already set.
    pub mesh: SimMesh,
    pub materials: MaterialField,
    pub colliders: Vec<Collider>,
    pub gravity: Vector2<f64>,
    pub time: TimestepConfig,
    pub n_steps: usize,
    pub initial_velocity: Vector2<f64>,
    pub dbc: Vec<DbcScript>,
    pub partition: PartitionParams,
    pub basis: BasisConfig,
    /// Ablation: solve the weight fields on uniform-stiffness operators.
    pub material_blind: bool,
    pub cubature: CubatureConfig,
    /// Ablation: skip cubature fitting; integrate over all elements.
    pub exact_integration: bool,
    pub solver: SolverConfig,
    pub refine: RefineMode,
    pub reference: RefConfig,
    pub out_dir: PathBuf,
    pub frame_every: usize,
}

/// Parse and validate a scene file.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| SimError::io(path.display().to_string(), e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    scene_from_str(&src, base)
}

/// Parse a scene from a TOML string; `base_dir` anchors relative paths.
pub fn scene_from_str(src: &str, base_dir: &Path) -> Result<Scene> {
    let raw: RawScene = toml::from_str(src).map_err(|e| err(format!("parse error: {e}")))?;
    resolve(raw, base_dir)
}

fn resolve(raw: RawScene, base_dir: &Path) -> Result<Scene> {
    let mut mesh = build_mesh(&raw.mesh, base_dir)?;
    let materials = assign_materials(&mut mesh, &raw.material, base_dir)?;
    materials.validate()?;

    if !(raw.time.h > 0.0) {
        return Err(err(format!("time.h must be > 0, got {}", raw.time.h)));
    }
    let integrator = match raw.time.integrator.as_deref().unwrap_or("implicit-euler") {
        "implicit-euler" => Integrator::ImplicitEuler,
        "bdf2" => Integrator::Bdf2,
        other => {
            return Err(err(format!(
                "time.integrator '{other}' is not one of: implicit-euler, bdf2"
            )))
        }
    };
    let time = TimestepConfig { h: raw.time.h, integrator };

    let kappa_default = 1e4 * materials.median_youngs(&mesh);
    let colliders = raw
        .collider
        .iter()
        .enumerate()
        .map(|(i, c)| build_collider(i, c, kappa_default))
        .collect::<Result<Vec<_>>>()?;

    let dbc = resolve_dbc(&mesh, &raw.dbc)?;
    let mut dbc_verts: Vec<usize> = dbc.iter().flat_map(|d| d.verts.iter().copied()).collect();
    dbc_verts.sort_unstable();
    dbc_verts.dedup();
    mesh.set_dbc(dbc_verts);

    let partition = resolve_partition(&mesh, &raw.partition)?;
    let basis_defaults = BasisConfig::default();
    let basis = BasisConfig {
        dense_cutoff: raw.basis.dense_cutoff.unwrap_or(basis_defaults.dense_cutoff),
        pcg_tol: raw.basis.pcg_tol.unwrap_or(basis_defaults.pcg_tol),
    };
    if !(basis.pcg_tol > 0.0) {
        return Err(err("basis.pcg_tol must be > 0".to_string()));
    }

    let cub_defaults = CubatureConfig::default();
    let cubature = CubatureConfig {
        p: raw.cubature.p.unwrap_or(cub_defaults.p),
        tol: raw.cubature.tol.unwrap_or(cub_defaults.tol),
        seed: raw.cubature.seed.unwrap_or(cub_defaults.seed),
    };
    if cubature.p == 0 {
        return Err(err("cubature.p must be >= 1".to_string()));
    }
    if !(cubature.tol > 0.0) {
        return Err(err("cubature.tol must be > 0".to_string()));
    }

    let (solver, refine) = resolve_solver(&raw.solver)?;

    let ref_defaults = RefConfig::default();
    let reference = RefConfig {
        epsilon: solver.epsilon,
        dense_cutoff: raw.reference.dense_cutoff.unwrap_or(ref_defaults.dense_cutoff),
        pcg_tol: ref_defaults.pcg_tol,
        iterative: raw.reference.iterative.unwrap_or(false),
        iterative_tol: solver.pcg_tol,
        max_newton: raw.reference.max_newton.unwrap_or(ref_defaults.max_newton),
    };

    let frame_every = raw.output.frame_every.unwrap_or(1);
    if frame_every == 0 {
        return Err(err("output.frame_every must be >= 1".to_string()));
    }
    let out_dir = match &raw.output.dir {
        Some(d) => {
            let p = PathBuf::from(d);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        }
        None => base_dir.join("out"),
    };

    Ok(Scene {
        mesh,
        materials,
        colliders,
        gravity: to_vec2(raw.gravity.unwrap_or([0.0, -9.8])),
        time,
        n_steps: raw.time.steps,
        initial_velocity: to_vec2(raw.initial.velocity.unwrap_or([0.0, 0.0])),
        dbc,
        partition,
        basis,
        material_blind: raw.basis.material_blind.unwrap_or(false),
        cubature,
        exact_integration: raw.cubature.exact.unwrap_or(false),
        solver,
        refine,
        reference,
        out_dir,
        frame_every,
    })
}

fn to_vec2(a: [f64; 2]) -> Vector2<f64> {
    Vector2::new(a[0], a[1])
}

fn build_mesh(raw: &RawMesh, base_dir: &Path) -> Result<SimMesh> {
    match (&raw.path, &raw.generate) {
        (Some(_), Some(_)) => Err(err("mesh: give either `path` or `generate`, not both")),
        (None, None) => Err(err("mesh: one of `path` or `generate` is required")),
        (Some(p), None) => {
            let path = resolve_path(base_dir, p);
            match path.extension().and_then(|e| e.to_str()) {
                Some("obj") => load_obj(&path),
                Some("node") | Some("ele") => load_node_ele(&path),
                None => load_node_ele(&path),
                Some(other) => Err(err(format!(
                    "mesh.path: unsupported extension '.{other}' (use .obj or a .node/.ele pair)"
                ))),
            }
        }
        (None, Some(kind)) => generate_mesh(kind, raw),
    }
}

fn generate_mesh(kind: &str, raw: &RawMesh) -> Result<SimMesh> {
    let need = |v: Option<usize>, what: &str| {
        v.ok_or_else(|| err(format!("mesh.generate = \"{kind}\" requires `{what}`")))
    };
    let needf = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| err(format!("mesh.generate = \"{kind}\" requires `{what}`")))
    };
    let origin = to_vec2(raw.origin.unwrap_or([0.0, 0.0]));
    let width = raw.width.unwrap_or(1.0);
    let height = raw.height.unwrap_or(1.0);
    if !(width > 0.0 && height > 0.0) {
        return Err(err(format!("mesh: width/height must be > 0, got {width} x {height}")));
    }
    match kind {
        "grid" => {
            let nx = need(raw.nx, "nx")?;
            let ny = need(raw.ny, "ny")?;
            if nx == 0 || ny == 0 {
                return Err(err("mesh: nx and ny must be >= 1"));
            }
            Ok(gen::grid(nx, ny, width, height, origin))
        }
        "jittered-grid" => {
            let nx = need(raw.nx, "nx")?;
            let ny = need(raw.ny, "ny")?;
            if nx == 0 || ny == 0 {
                return Err(err("mesh: nx and ny must be >= 1"));
            }
            let jitter = raw.jitter.unwrap_or(0.25);
            if !(0.0..=0.3).contains(&jitter) {
                return Err(err(format!("mesh: jitter must be in [0, 0.3], got {jitter}")));
            }
            Ok(gen::jittered_grid(nx, ny, width, height, origin, jitter, raw.seed.unwrap_or(0)))
        }
        "disk" => {
            let rings = need(raw.rings, "rings")?;
            let segments = need(raw.segments, "segments")?;
            let radius = needf(raw.radius, "radius")?;
            if rings < 1 || segments < 3 {
                return Err(err("mesh: disk needs rings >= 1 and segments >= 3"));
            }
            if !(radius > 0.0) {
                return Err(err("mesh: disk radius must be > 0"));
            }
            Ok(gen::disk(rings, segments, radius, to_vec2(raw.center.unwrap_or([0.0, 0.0]))))
        }
        "slit-square" => {
            let nx = need(raw.nx, "nx")?;
            let ny = need(raw.ny, "ny")?;
            let frac = needf(raw.slit_frac, "slit_frac")?;
            if ny % 2 != 0 {
                return Err(err("mesh: slit-square needs even ny (the cut lies on a vertex row)"));
            }
            if !(0.0..1.0).contains(&frac) {
                return Err(err(format!("mesh: slit_frac must be in [0, 1), got {frac}")));
            }
            Ok(gen::slit_square(nx, ny, width, height, origin, frac))
        }
        "h-shape" => {
            let nx = need(raw.nx, "nx")?;
            let ny = need(raw.ny, "ny")?;
            let bar = need(raw.bar_cells, "bar_cells")?;
            let cross = need(raw.cross_cells, "cross_cells")?;
            if !(2 * bar < nx && cross <= ny) {
                return Err(err(format!(
                    "mesh: h-shape needs 2*bar_cells < nx and cross_cells <= ny, got bar_cells={bar}, cross_cells={cross}, nx={nx}, ny={ny}"
                )));
            }
            Ok(gen::h_shape(nx, ny, width, height, bar, cross))
        }
        "two-squares" => {
            let n = need(raw.n, "n")?;
            let gap = needf(raw.gap, "gap")?;
            if n == 0 {
                return Err(err("mesh: two-squares needs n >= 1"));
            }
            if !(gap > 0.0) {
                return Err(err("mesh: two-squares gap must be > 0"));
            }
            Ok(gen::two_squares(n, gap))
        }
        other => Err(err(format!(
            "mesh.generate '{other}' is not one of: grid, jittered-grid, disk, slit-square, h-shape, two-squares"
        ))),
    }
}

fn resolve_path(base_dir: &Path, p: &str) -> PathBuf {
    let path = PathBuf::from(p);
    if path.is_absolute() {
        path
    } else {
        base_dir.join(path)
    }
}

/// Build the material table and stamp per-element labels onto the mesh.
/// Label sources are mutually exclusive: region boxes (barycenter tests,
/// later regions win) or an explicit per-element label file indexing
/// [base, table...].
fn assign_materials(
    mesh: &mut SimMesh,
    raw: &RawMaterial,
    base_dir: &Path,
) -> Result<MaterialField> {
    let base = Material {
        youngs: raw.youngs.unwrap_or(1e6),
        poisson: raw.poisson.unwrap_or(0.3),
        density: raw.density.unwrap_or(1000.0),
    };
    if raw.labels.is_some() && !raw.region.is_empty() {
        return Err(err("material: `labels` and `region` are mutually exclusive"));
    }
    if !raw.table.is_empty() && raw.labels.is_none() {
        return Err(err("material: `table` entries are only used with `labels`"));
    }

    let mut table = vec![base];
    if let Some(labels_path) = &raw.labels {
        for t in &raw.table {
            table.push(Material {
                youngs: t.youngs.unwrap_or(base.youngs),
                poisson: t.poisson.unwrap_or(base.poisson),
                density: t.density.unwrap_or(base.density),
            });
        }
        let path = resolve_path(base_dir, labels_path);
        let src = std::fs::read_to_string(&path)
            .map_err(|e| SimError::io(path.display().to_string(), e.to_string()))?;
        let ids: Vec<usize> = src
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.parse::<usize>()
                    .map_err(|_| err(format!("material labels: bad entry '{l}' in {labels_path}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if ids.len() != mesh.n_elements() {
            return Err(err(format!(
                "material labels: {} entries for {} elements",
                ids.len(),
                mesh.n_elements()
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= table.len()) {
            return Err(err(format!(
                "material labels: id {bad} out of range (table has {} materials)",
                table.len()
            )));
        }
        mesh.material_id = ids;
    } else {
        for (ri, region) in raw.region.iter().enumerate() {
            let b = region.bbox;
            if !(b[0] <= b[2] && b[1] <= b[3]) {
                return Err(err(format!(
                    "material.region {ri}: box must be [x0, y0, x1, y1] with x0 <= x1, y0 <= y1"
                )));
            }
            table.push(Material {
                youngs: region.youngs.unwrap_or(base.youngs),
                poisson: region.poisson.unwrap_or(base.poisson),
                density: region.density.unwrap_or(base.density),
            });
            let label = table.len() - 1;
            for e in 0..mesh.n_elements() {
                let c = mesh.barycenter(e);
                if c.x >= b[0] && c.x <= b[2] && c.y >= b[1] && c.y <= b[3] {
                    mesh.material_id[e] = label;
                }
            }
        }
    }
    Ok(MaterialField { table })
}

fn build_collider(i: usize, raw: &RawCollider, kappa_default_per_dhat: f64) -> Result<Collider> {
    if !(raw.dhat > 0.0) {
        return Err(err(format!("collider {i}: dhat must be > 0, got {}", raw.dhat)));
    }
    let kappa = raw.kappa.unwrap_or(kappa_default_per_dhat * raw.dhat);
    if !(kappa > 0.0) {
        return Err(err(format!("collider {i}: kappa must be > 0, got {kappa}")));
    }
    let shape = match raw.kind.as_str() {
        "halfplane" => {
            let n = to_vec2(
                raw.normal
                    .ok_or_else(|| err(format!("collider {i}: halfplane requires `normal`")))?,
            );
            if n.norm() == 0.0 {
                return Err(err(format!("collider {i}: normal must be nonzero")));
            }
            ColliderShape::HalfPlane {
                normal: n / n.norm(),
                offset: raw.offset.unwrap_or(0.0),
            }
        }
        "sphere" => {
            let c = to_vec2(
                raw.center
                    .ok_or_else(|| err(format!("collider {i}: sphere requires `center`")))?,
            );
            let r = raw
                .radius
                .ok_or_else(|| err(format!("collider {i}: sphere requires `radius`")))?;
            if !(r > 0.0) {
                return Err(err(format!("collider {i}: sphere radius must be > 0, got {r}")));
            }
            ColliderShape::Sphere { center: c, radius: r }
        }
        other => {
            return Err(err(format!(
                "collider {i}: kind '{other}' is not one of: halfplane, sphere"
            )))
        }
    };
    Ok(Collider { shape, dhat: raw.dhat, kappa })
}

fn resolve_dbc(mesh: &SimMesh, raws: &[RawDbc]) -> Result<Vec<DbcScript>> {
    let mut out = Vec::with_capacity(raws.len());
    for (i, raw) in raws.iter().enumerate() {
        let b = raw.bbox;
        if !(b[0] <= b[2] && b[1] <= b[3]) {
            return Err(err(format!(
                "dbc {i}: box must be [x0, y0, x1, y1] with x0 <= x1, y0 <= y1"
            )));
        }
        let verts: Vec<usize> = (0..mesh.n_verts())
            .filter(|&v| {
                let p = mesh.vertex(v);
                p.x >= b[0] && p.x <= b[2] && p.y >= b[1] && p.y <= b[3]
            })
            .collect();
        if verts.is_empty() {
            return Err(err(format!(
                "dbc {i}: box [{}, {}, {}, {}] selects no vertices",
                b[0], b[1], b[2], b[3]
            )));
        }
        out.push(DbcScript {
            verts,
            velocity: to_vec2(raw.velocity.unwrap_or([0.0, 0.0])),
        });
    }
    Ok(out)
}

fn resolve_partition(mesh: &SimMesh, raw: &RawPartition) -> Result<PartitionParams> {
    let k = raw.k.unwrap_or(8);
    if k == 0 || k > mesh.n_elements() {
        return Err(err(format!(
            "partition.k = {k} must be in 1..={} (element count)",
            mesh.n_elements()
        )));
    }
    let gamma = raw.gamma.unwrap_or(0.25);
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(err(format!("partition.gamma = {gamma} outside (0, 1]")));
    }
    let defaults = PruneConfig::default();
    let prune = PruneConfig {
        interval: raw.prune_interval.unwrap_or(defaults.interval),
        imbalance_ratio: raw.imbalance_ratio.unwrap_or(defaults.imbalance_ratio),
        n_prune: raw.n_prune.unwrap_or(defaults.n_prune),
    };
    if prune.interval == 0 {
        return Err(err("partition.prune_interval must be >= 1".to_string()));
    }
    if !(prune.imbalance_ratio >= 1.0) {
        return Err(err(format!(
            "partition.imbalance_ratio = {} must be >= 1",
            prune.imbalance_ratio
        )));
    }
    Ok(PartitionParams { k, seed: raw.seed.unwrap_or(0), gamma, prune })
}

fn resolve_solver(raw: &RawSolver) -> Result<(SolverConfig, RefineMode)> {
    let defaults = SolverConfig::default();
    let refine = match &raw.refine {
        None => RefineMode::Auto,
        Some(toml::Value::String(s)) => match s.as_str() {
            "auto" => RefineMode::Auto,
            "off" => RefineMode::Fixed(0),
            other => {
                return Err(err(format!(
                    "solver.refine '{other}' is not one of: \"auto\", \"off\", or an iteration count"
                )))
            }
        },
        Some(toml::Value::Integer(n)) if *n >= 0 => RefineMode::Fixed(*n as usize),
        Some(v) => {
            return Err(err(format!(
                "solver.refine must be \"auto\", \"off\", or a nonnegative integer, got {v}"
            )))
        }
    };
    let cfg = SolverConfig {
        epsilon: raw.epsilon.unwrap_or(defaults.epsilon),
        pcg_tol: raw.pcg_tol.unwrap_or(defaults.pcg_tol),
        n_refine_cg: match refine {
            RefineMode::Fixed(n) => n,
            RefineMode::Auto => defaults.n_refine_cg,
        },
        lag_window: raw.lag_window.unwrap_or(defaults.lag_window),
        lag_threshold: raw.lag_threshold.unwrap_or(defaults.lag_threshold),
        lag_min_gap: raw.lag_min_gap.unwrap_or(defaults.lag_min_gap),
        max_newton: raw.max_newton.unwrap_or(defaults.max_newton),
    };
    if !(cfg.epsilon > 0.0) {
        return Err(err("solver.epsilon must be > 0".to_string()));
    }
    if !(cfg.pcg_tol > 0.0) {
        return Err(err("solver.pcg_tol must be > 0".to_string()));
    }
    if cfg.max_newton == 0 {
        return Err(err("solver.max_newton must be >= 1".to_string()));
    }
    Ok((cfg, refine))
}
