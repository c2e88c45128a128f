//! Procedural test geometry: structured grids, disks, slit plates, and
//! masked shapes. Scene files can reference these as `generate = "..."`
//! sources, and the tests and demo build their meshes here.

use super::SimMesh;
use nalgebra::Vector2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Structured grid on a `w × h` rectangle with `nx × ny` cells, each split
/// into two triangles along parity-alternating diagonals (avoids a global
/// diagonal bias).
pub fn grid(nx: usize, ny: usize, w: f64, h: f64, origin: Vector2<f64>) -> SimMesh {
    masked_grid(nx, ny, w, h, origin, |_, _| true)
}

/// Grid restricted to cells where `keep(i, j)` is true. Vertices are
/// compacted; panics if the kept region is empty.
pub fn masked_grid(
    nx: usize,
    ny: usize,
    w: f64,
    h: f64,
    origin: Vector2<f64>,
    keep: impl Fn(usize, usize) -> bool,
) -> SimMesh {
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut used = vec![false; (nx + 1) * (ny + 1)];
    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if keep(i, j) {
                cells.push((i, j));
                for (di, dj) in [(0, 0), (1, 0), (1, 1), (0, 1)] {
                    used[vid(i + di, j + dj)] = true;
                }
            }
        }
    }
    assert!(!cells.is_empty(), "masked_grid: empty region");
    let mut remap = vec![usize::MAX; used.len()];
    let mut rest = Vec::new();
    let mut next = 0;
    for j in 0..=ny {
        for i in 0..=nx {
            if used[vid(i, j)] {
                remap[vid(i, j)] = next;
                next += 1;
                rest.push(origin.x + w * i as f64 / nx as f64);
                rest.push(origin.y + h * j as f64 / ny as f64);
            }
        }
    }
    let mut tris = Vec::with_capacity(cells.len() * 2);
    for (i, j) in cells {
        let a = remap[vid(i, j)];
        let b = remap[vid(i + 1, j)];
        let c = remap[vid(i + 1, j + 1)];
        let d = remap[vid(i, j + 1)];
        if (i + j) % 2 == 0 {
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        } else {
            tris.push([a, b, d]);
            tris.push([b, c, d]);
        }
    }
    SimMesh::new(rest, tris).expect("masked_grid produced an invalid mesh")
}

/// Grid with interior vertices jittered deterministically (boundary
/// vertices stay put) and each cell split along a diagonal chosen from the
/// local geometry. Structured grids make kmeans partition borders meet in
/// symmetric four-way crossings whose diagonal partitions share only that
/// vertex — exactly the uncovered-vertex pathology the weight clipping
/// cannot span. Jittered geometry keeps partition borders irregular, so
/// simulation scenes default to this for rectangular domains.
///
/// `jitter` is the maximum offset as a fraction of the cell size, in
/// [0, 0.3]; the split picks the shorter diagonal among those that keep
/// both triangles positively oriented.
pub fn jittered_grid(
    nx: usize,
    ny: usize,
    w: f64,
    h: f64,
    origin: Vector2<f64>,
    jitter: f64,
    seed: u64,
) -> SimMesh {
    assert!(nx >= 1 && ny >= 1);
    assert!(
        (0.0..=0.3).contains(&jitter),
        "jitter {jitter} outside [0, 0.3] risks degenerate cells"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dx, dy) = (w / nx as f64, h / ny as f64);
    let mut rest = Vec::with_capacity(2 * (nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let mut p = Vector2::new(origin.x + i as f64 * dx, origin.y + j as f64 * dy);
            if i > 0 && i < nx && j > 0 && j < ny {
                p.x += rng.random_range(-jitter..jitter) * dx;
                p.y += rng.random_range(-jitter..jitter) * dy;
            }
            rest.push(p.x);
            rest.push(p.y);
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let at = |v: usize| Vector2::new(rest[2 * v], rest[2 * v + 1]);
    let area2 = |a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>| {
        (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
    };
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            // corners counterclockwise: d --- c
            //                           |     |   a=(i,j), b=(i+1,j),
            //                           a --- b   c=(i+1,j+1), d=(i,j+1)
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            let (pa, pb, pc, pd) = (at(a), at(b), at(c), at(d));
            let ac_ok = area2(pa, pb, pc) > 0.0 && area2(pa, pc, pd) > 0.0;
            let bd_ok = area2(pa, pb, pd) > 0.0 && area2(pb, pc, pd) > 0.0;
            let use_ac = match (ac_ok, bd_ok) {
                (true, false) => true,
                (false, true) => false,
                // both valid: shorter diagonal; ties by parity as in `grid`
                _ => {
                    let lac = (pc - pa).norm_squared();
                    let lbd = (pd - pb).norm_squared();
                    if lac != lbd {
                        lac < lbd
                    } else {
                        (i + j) % 2 == 0
                    }
                }
            };
            if use_ac {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            } else {
                tris.push([a, b, d]);
                tris.push([b, c, d]);
            }
        }
    }
    SimMesh::new(rest, tris).expect("jittered_grid produced an invalid mesh")
}

/// Polar-grid disk: a center fan plus `n_rings` concentric rings of
/// `n_seg` segments each.
pub fn disk(n_rings: usize, n_seg: usize, r: f64, center: Vector2<f64>) -> SimMesh {
    assert!(n_rings >= 1 && n_seg >= 3);
    let mut rest = vec![center.x, center.y];
    let ring_vid = |k: usize, s: usize| 1 + (k - 1) * n_seg + (s % n_seg);
    for k in 1..=n_rings {
        let rad = r * k as f64 / n_rings as f64;
        for s in 0..n_seg {
            let th = 2.0 * std::f64::consts::PI * s as f64 / n_seg as f64;
            rest.push(center.x + rad * th.cos());
            rest.push(center.y + rad * th.sin());
        }
    }
    let mut tris = Vec::new();
    for s in 0..n_seg {
        tris.push([0, ring_vid(1, s), ring_vid(1, s + 1)]);
    }
    for k in 1..n_rings {
        for s in 0..n_seg {
            let (a, b) = (ring_vid(k, s), ring_vid(k, s + 1));
            let (c, d) = (ring_vid(k + 1, s), ring_vid(k + 1, s + 1));
            tris.push([a, c, d]);
            tris.push([a, d, b]);
        }
    }
    SimMesh::new(rest, tris).expect("disk produced an invalid mesh")
}

/// Unit-style square plate with an interior horizontal cut.
///
/// The grid covers `w × h`; the cut runs along the vertex row at height
/// `h/2` from the left boundary to `x = slit_frac · w`. Vertices strictly
/// left of the cut tip are duplicated so elements above the cut reference
/// separate copies: geometrically coincident, topologically disconnected.
/// `ny` must be even so the cut lies on a vertex row.
pub fn slit_square(nx: usize, ny: usize, w: f64, h: f64, origin: Vector2<f64>, slit_frac: f64) -> SimMesh {
    assert!(ny % 2 == 0, "slit_square needs even ny");
    assert!((0.0..1.0).contains(&slit_frac));
    let base = grid(nx, ny, w, h, origin);
    let js = ny / 2;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let i_tip = ((slit_frac * nx as f64).round() as usize).min(nx - 1).max(1);
    let y_cut = origin.y + h * js as f64 / ny as f64;

    let mut rest = base.rest.clone();
    let mut elements = base.elements.clone();
    // Duplicate slit vertices (columns 0..i_tip on row js) for the top side.
    let mut top_copy = vec![usize::MAX; nx + 1];
    for i in 0..i_tip {
        top_copy[i] = rest.len() / 2;
        rest.push(base.rest[2 * vid(i, js)]);
        rest.push(base.rest[2 * vid(i, js) + 1]);
    }
    // Elements whose barycenter lies above the cut switch to the copies.
    for (e, tri) in elements.iter_mut().enumerate() {
        let bc = base.barycenter(e);
        if bc.y > y_cut {
            for v in tri.iter_mut() {
                for i in 0..i_tip {
                    if *v == vid(i, js) {
                        *v = top_copy[i];
                    }
                }
            }
        }
    }
    SimMesh::new(rest, elements).expect("slit_square produced an invalid mesh")
}

/// Coincident vertex pairs straddling the slit of [`slit_square`]:
/// `(bottom, top)` index pairs sharing a rest position.
pub fn coincident_pairs(mesh: &SimMesh) -> Vec<(usize, usize)> {
    let n = mesh.n_verts();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let pa = (mesh.rest[2 * a], mesh.rest[2 * a + 1]);
        let pb = (mesh.rest[2 * b], mesh.rest[2 * b + 1]);
        pa.partial_cmp(&pb).unwrap()
    });
    let mut pairs = Vec::new();
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        if mesh.rest[2 * a] == mesh.rest[2 * b] && mesh.rest[2 * a + 1] == mesh.rest[2 * b + 1] {
            pairs.push((a.min(b), a.max(b)));
        }
    }
    pairs
}

/// 'H' plate: two vertical bars joined by a crossbar. Cell (i, j) is kept
/// when it lies in either bar or in the central band. `bar_cells` columns
/// per bar; the crossbar spans `cross_cells` rows around mid-height.
pub fn h_shape(nx: usize, ny: usize, w: f64, h: f64, bar_cells: usize, cross_cells: usize) -> SimMesh {
    assert!(2 * bar_cells < nx && cross_cells <= ny);
    let j_lo = (ny - cross_cells) / 2;
    let j_hi = j_lo + cross_cells;
    masked_grid(nx, ny, w, h, Vector2::new(0.0, 0.0), |i, j| {
        i < bar_cells || i >= nx - bar_cells || (j >= j_lo && j < j_hi)
    })
}

/// Two disjoint unit squares side by side with a gap, in one mesh.
pub fn two_squares(n: usize, gap: f64) -> SimMesh {
    let a = grid(n, n, 1.0, 1.0, Vector2::new(0.0, 0.0));
    let b = grid(n, n, 1.0, 1.0, Vector2::new(1.0 + gap, 0.0));
    merge(&a, &b)
}

/// Concatenate two meshes into one (indices of `b` shifted).
pub fn merge(a: &SimMesh, b: &SimMesh) -> SimMesh {
    let mut rest = a.rest.clone();
    rest.extend_from_slice(&b.rest);
    let off = a.n_verts();
    let mut elements = a.elements.clone();
    elements.extend(b.elements.iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
    let mut m = SimMesh::new(rest, elements).expect("merge produced an invalid mesh");
    let mut mat = a.material_id.clone();
    mat.extend_from_slice(&b.material_id);
    m.material_id = mat;
    m
}
