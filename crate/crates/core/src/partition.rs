//! Material- and geometry-aware mesh partitioning.
//!
//! Elements are clustered by Lloyd relaxation under the stiffness-weighted
//! heat-geodesic metric from [`crate::geodesics`]: kmeans++ seeding, nearest-
//! centroid assignment (an element's distance is the minimum over its
//! vertices), recentering at each cluster's geodesic 1-median, periodic
//! pruning of undersized clusters, and a final connectivity sweep. A jump
//! penalty can soften elements along material interfaces beforehand so the
//! metric — and therefore the clusters — hug those interfaces.

use crate::error::{Result, SimError};
use crate::geodesics::{GeodesicField, HeatContext};
use crate::mesh::{MaterialField, SimMesh};
use crate::operators::{build_operators_raw, DiscreteOperators};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Cadence and thresholds for deleting undersized clusters.
#[derive(Debug, Clone, Copy)]
pub struct PruneConfig {
    /// Prune every this many Lloyd iterations.
    pub interval: usize,
    /// A cluster is undersized when its volume < median volume / this ratio.
    pub imbalance_ratio: f64,
    /// At most this many clusters deleted per prune pass.
    pub n_prune: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig { interval: 10, imbalance_ratio: 1.75, n_prune: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct PartitionSet {
    /// Partition count after pruning.
    pub m: usize,
    /// Per-element partition id in `0..m`.
    pub assignment: Vec<usize>,
    /// Per-partition representative vertex (global id, lies in the partition).
    pub centroid_vertex: Vec<usize>,
    /// Per-partition subdomain: the partition's elements plus those of all
    /// face-adjacent partitions (sorted element ids).
    pub subdomain: Vec<Vec<usize>>,
    /// Per-partition sorted list of face-adjacent partition ids.
    pub neighbor_centroids: Vec<Vec<usize>>,
    /// False when the Lloyd iteration budget ran out before reaching an
    /// assignment fixed point with no prunable clusters.
    pub converged: bool,
}

impl PartitionSet {
    /// Sorted element ids of each partition.
    pub fn partition_elements(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.m];
        for (e, &p) in self.assignment.iter().enumerate() {
            out[p].push(e);
        }
        out
    }
}

/// Subdomain element sets and their internal boundaries.
pub struct Subdomains {
    /// Per-partition sorted element ids of T_i (partition + face neighbors).
    pub elements: Vec<Vec<usize>>,
    /// Per-partition sorted vertices on the boundary of T_i that are *not*
    /// on the mesh boundary.
    pub internal_boundary: Vec<Vec<usize>>,
    /// Per-partition sorted face-adjacent partition ids.
    pub neighbors: Vec<Vec<usize>>,
}

/// Per-element stiffness override that softens material interfaces: any
/// element sharing a vertex with an element of a different material label
/// gets `gamma * min(all stiffnesses)`; everything else keeps its own.
pub fn jump_penalty_stiffness(
    mesh: &SimMesh,
    materials: &MaterialField,
    gamma: f64,
) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(SimError::Partition(format!("jump penalty factor {gamma} outside (0, 1]")));
    }
    materials.validate()?;
    let n_el = mesh.n_elements();
    let base: Vec<f64> = (0..n_el).map(|e| materials.of_element(mesh, e).youngs).collect();
    let min_all = base.iter().cloned().fold(f64::INFINITY, f64::min);
    let ve = mesh.vertex_elements();
    let mut out = base.clone();
    for e in 0..n_el {
        let me = mesh.material_id[e];
        let touches_other = mesh.elements[e]
            .iter()
            .any(|&v| ve[v].iter().any(|&f| mesh.material_id[f] != me));
        if touches_other {
            out[e] = gamma * min_all;
        }
    }
    Ok(out)
}

/// Extract the submesh of `elements` (global ids) from `mesh`. Returns the
/// submesh plus the local→global vertex map. Material and object labels are
/// carried over; Dirichlet vertices are not (callers that need them remap).
pub fn extract_submesh(mesh: &SimMesh, elements: &[usize]) -> Result<(SimMesh, Vec<usize>)> {
    let mut to_local = vec![usize::MAX; mesh.n_verts()];
    let mut to_global: Vec<usize> = Vec::new();
    let mut tris: Vec<[usize; 3]> = Vec::with_capacity(elements.len());
    for &e in elements {
        let mut tri = [0usize; 3];
        for (k, &v) in mesh.elements[e].iter().enumerate() {
            if to_local[v] == usize::MAX {
                to_local[v] = to_global.len();
                to_global.push(v);
            }
            tri[k] = to_local[v];
        }
        tris.push(tri);
    }
    let mut rest = Vec::with_capacity(2 * to_global.len());
    for &v in &to_global {
        rest.push(mesh.rest[2 * v]);
        rest.push(mesh.rest[2 * v + 1]);
    }
    let mut sub = SimMesh::new(rest, tris)?;
    for (le, &ge) in elements.iter().enumerate() {
        sub.material_id[le] = mesh.material_id[ge];
    }
    Ok((sub, to_global))
}

/// Geodesic 1-median of a connected-or-not element set: the vertex
/// minimizing (number of unreachable peers, summed distance to reachable
/// peers, global id). Returns a global vertex id.
fn submesh_one_median(
    mesh: &SimMesh,
    ops: &DiscreteOperators,
    elements: &[usize],
) -> Result<usize> {
    let (sub, to_global) = extract_submesh(mesh, elements)?;
    let stiff: Vec<f64> = elements.iter().map(|&e| ops.stiffness[e]).collect();
    let dens: Vec<f64> = elements.iter().map(|&e| ops.density[e]).collect();
    let sub_ops = build_operators_raw(&sub, stiff, dens);
    let ctx = HeatContext::new(&sub, &sub_ops)?;
    let nv = sub.n_verts();
    let fields: Vec<GeodesicField> =
        (0..nv).into_par_iter().map(|w| ctx.distances(&[w])).collect::<Result<Vec<_>>>()?;
    let mut best: Option<(usize, f64, usize)> = None;
    for v in 0..nv {
        let mut unreachable = 0usize;
        let mut total = 0.0;
        for f in &fields {
            let d = f.dist[v];
            if d.is_finite() {
                total += d;
            } else {
                unreachable += 1;
            }
        }
        let key = (unreachable, total, to_global[v]);
        if best.is_none()
            || (key.0, key.1, key.2)
                < (best.unwrap().0, best.unwrap().1, best.unwrap().2)
        {
            best = Some(key);
        }
    }
    Ok(best.expect("submesh has vertices").2)
}

/// Distance from element `e` to a centroid's field: minimum over the
/// element's vertices.
fn element_distance(field: &GeodesicField, tri: &[usize; 3]) -> f64 {
    tri.iter().map(|&v| field.dist[v]).fold(f64::INFINITY, f64::min)
}

/// Nearest centroid for an element; ties broken toward the smaller index.
fn assign_element(fields: &[GeodesicField], tri: &[usize; 3]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, f) in fields.iter().enumerate() {
        let d = element_distance(f, tri);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Subdomains (partition + face-adjacent partitions) and their internal
/// boundary vertices for an element assignment into `m` partitions.
pub fn subdomains_from_assignment(mesh: &SimMesh, assignment: &[usize], m: usize) -> Subdomains {
    let eadj = mesh.element_adjacency();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); m];
    for e in 0..mesh.n_elements() {
        for &f in &eadj[e] {
            let (p, q) = (assignment[e], assignment[f]);
            if p != q {
                neighbors[p].push(q);
            }
        }
    }
    for nb in &mut neighbors {
        nb.sort_unstable();
        nb.dedup();
    }
    let mut per_partition: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (e, &p) in assignment.iter().enumerate() {
        per_partition[p].push(e);
    }
    let mesh_boundary = mesh.boundary_vertices();
    let mut elements = Vec::with_capacity(m);
    let mut internal_boundary = Vec::with_capacity(m);
    for i in 0..m {
        let mut els: Vec<usize> = per_partition[i].clone();
        for &q in &neighbors[i] {
            els.extend_from_slice(&per_partition[q]);
        }
        els.sort_unstable();
        // Boundary edges of the subdomain: edges with exactly one incident
        // subdomain element.
        let mut edge_count: std::collections::BTreeMap<(usize, usize), usize> =
            std::collections::BTreeMap::new();
        for &e in &els {
            let tri = mesh.elements[e];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut verts: Vec<usize> = Vec::new();
        for (&(a, b), &cnt) in &edge_count {
            if cnt == 1 {
                if !mesh_boundary[a] {
                    verts.push(a);
                }
                if !mesh_boundary[b] {
                    verts.push(b);
                }
            }
        }
        verts.sort_unstable();
        verts.dedup();
        elements.push(els);
        internal_boundary.push(verts);
    }
    Subdomains { elements, internal_boundary, neighbors }
}

/// Subdomains for a finished [`PartitionSet`].
pub fn extract_subdomains(mesh: &SimMesh, parts: &PartitionSet) -> Subdomains {
    subdomains_from_assignment(mesh, &parts.assignment, parts.m)
}

/// Cluster the mesh into at most `k_init` partitions under the heat-geodesic
/// metric of `ops` (pass operators assembled with [`jump_penalty_stiffness`]
/// to make the metric interface-aware). Deterministic for a fixed seed.
pub fn partition_mesh(
    mesh: &SimMesh,
    ops: &DiscreteOperators,
    k_init: usize,
    prune: &PruneConfig,
    seed: u64,
) -> Result<PartitionSet> {
    let n_el = mesh.n_elements();
    let n = mesh.n_verts();
    if k_init == 0 || k_init > n_el {
        return Err(SimError::Partition(format!(
            "k_init = {k_init} must be in 1..={n_el} (element count)"
        )));
    }
    let ctx = HeatContext::new(mesh, ops)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // kmeans++ seeding over vertices: first uniform, then proportional to
    // squared distance; unreached (infinite) vertices are claimed first so
    // every connected component gets a centroid when k allows.
    let mut centroids: Vec<usize> = Vec::with_capacity(k_init);
    let mut fields: Vec<GeodesicField> = Vec::with_capacity(k_init);
    let first = rng.random_range(0..n);
    centroids.push(first);
    fields.push(ctx.distances(&[first])?);
    let mut mindist = fields[0].dist.clone();
    while centroids.len() < k_init.min(n) {
        let unreached: Vec<usize> = (0..n).filter(|&v| mindist[v].is_infinite()).collect();
        let next = if !unreached.is_empty() {
            unreached[rng.random_range(0..unreached.len())]
        } else {
            let total: f64 = mindist.iter().map(|d| d * d).sum();
            if total <= 0.0 {
                match (0..n).find(|v| !centroids.contains(v)) {
                    Some(v) => v,
                    None => break,
                }
            } else {
                let mut t = rng.random::<f64>() * total;
                let mut pick = n - 1;
                for (v, d) in mindist.iter().enumerate() {
                    t -= d * d;
                    if t <= 0.0 {
                        pick = v;
                        break;
                    }
                }
                pick
            }
        };
        centroids.push(next);
        let f = ctx.distances(&[next])?;
        for v in 0..n {
            mindist[v] = mindist[v].min(f.dist[v]);
        }
        fields.push(f);
    }

    // Lloyd relaxation.
    let max_iters = 100usize;
    let mut assignment: Vec<usize> = vec![usize::MAX; n_el];
    let mut converged = false;
    for it in 1..=max_iters {
        let new_assignment: Vec<usize> =
            mesh.elements.par_iter().map(|tri| assign_element(&fields, tri)).collect();
        let stable = new_assignment == assignment && new_assignment.iter().all(|&p| p != usize::MAX);
        assignment = new_assignment;

        // Drop empty clusters outright.
        let mut counts = vec![0usize; centroids.len()];
        for &p in &assignment {
            counts[p] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            let keep: Vec<usize> = (0..centroids.len()).filter(|&i| counts[i] > 0).collect();
            relabel(&mut centroids, &mut fields, &mut assignment, &keep);
        }

        // Prune undersized clusters at the configured cadence, and also when
        // the assignment has stabilized (so we never exit with prunable
        // clusters while budget remains).
        let mut pruned = false;
        if it % prune.interval.max(1) == 0 || stable {
            let m = centroids.len();
            let mut volumes = vec![0.0; m];
            for (e, &p) in assignment.iter().enumerate() {
                volumes[p] += ops.volumes[e];
            }
            let mut sorted = volumes.clone();
            sorted.sort_by(f64::total_cmp);
            let median = crate::mesh::median_of_sorted(&sorted);
            let mut prunable: Vec<usize> =
                (0..m).filter(|&i| volumes[i] < median / prune.imbalance_ratio).collect();
            if stable && prunable.is_empty() {
                converged = true;
                break;
            }
            if !prunable.is_empty() && m > 1 {
                prunable.sort_by(|&a, &b| {
                    volumes[a].total_cmp(&volumes[b]).then(a.cmp(&b))
                });
                let n_del = prune.n_prune.min(prunable.len()).min(m - 1);
                let del: std::collections::BTreeSet<usize> =
                    prunable[..n_del].iter().copied().collect();
                let keep: Vec<usize> = (0..m).filter(|i| !del.contains(i)).collect();
                // Elements of deleted clusters move to the nearest survivor.
                let kept_fields: Vec<&GeodesicField> = keep.iter().map(|&i| &fields[i]).collect();
                for e in 0..n_el {
                    if del.contains(&assignment[e]) {
                        let tri = &mesh.elements[e];
                        let mut best = 0usize;
                        let mut best_d = f64::INFINITY;
                        for (k, f) in kept_fields.iter().enumerate() {
                            let d = element_distance(f, tri);
                            if d < best_d {
                                best_d = d;
                                best = k;
                            }
                        }
                        assignment[e] = keep[best]; // old id; relabel() maps it
                    }
                }
                relabel(&mut centroids, &mut fields, &mut assignment, &keep);
                pruned = true;
            }
        }

        // Recenter at each cluster's geodesic 1-median (computed on the
        // cluster's own submesh).
        let m = centroids.len();
        let mut per_cluster: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (e, &p) in assignment.iter().enumerate() {
            per_cluster[p].push(e);
        }
        let new_centroids: Vec<usize> = per_cluster
            .par_iter()
            .map(|els| submesh_one_median(mesh, ops, els))
            .collect::<Result<Vec<_>>>()?;
        let moved = new_centroids != centroids;
        if moved {
            let changed: Vec<usize> =
                (0..m).filter(|&i| new_centroids[i] != centroids[i]).collect();
            let new_fields: Vec<GeodesicField> = changed
                .par_iter()
                .map(|&i| ctx.distances(&[new_centroids[i]]))
                .collect::<Result<Vec<_>>>()?;
            for (k, &i) in changed.iter().enumerate() {
                fields[i] = new_fields[k].clone();
            }
            centroids = new_centroids;
        }
        if stable && !pruned && !moved {
            converged = true;
            break;
        }
    }

    // Connectivity: split disconnected clusters, keep the largest component,
    // hand the rest to a face-adjacent cluster (nearest centroid among
    // those) or promote an isolated island to its own cluster. Interleaved
    // with junction repair (see repair_degenerate_junctions) until both
    // reach a fixed point.
    let eadj = mesh.element_adjacency();
    let vstar = mesh.vertex_elements();
    let mut moved_from: std::collections::BTreeSet<(usize, usize)> = Default::default();
    for _round in 0..64 {
        enforce_connectivity(mesh, ops, &ctx, &eadj, &mut centroids, &mut fields, &mut assignment)?;
        if !repair_degenerate_junctions(&eadj, &vstar, &mut assignment, centroids.len(), &mut moved_from)
        {
            break;
        }
    }

    // Junction repair may have drained a cluster; drop any that ended empty.
    {
        let m = centroids.len();
        let mut counts = vec![0usize; m];
        for &p in assignment.iter() {
            counts[p] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            let keep: Vec<usize> = (0..m).filter(|&i| counts[i] > 0).collect();
            relabel(&mut centroids, &mut fields, &mut assignment, &keep);
        }
    }

    // A cluster may have lost the component holding its centroid; recenter
    // those so the representative lies inside its own partition.
    let m = centroids.len();
    let mut cluster_verts: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); m];
    for (e, &p) in assignment.iter().enumerate() {
        for &v in &mesh.elements[e] {
            cluster_verts[p].insert(v);
        }
    }
    for i in 0..m {
        if !cluster_verts[i].contains(&centroids[i]) {
            let els: Vec<usize> = (0..n_el).filter(|&e| assignment[e] == i).collect();
            centroids[i] = submesh_one_median(mesh, ops, &els)?;
        }
    }

    let subs = subdomains_from_assignment(mesh, &assignment, m);
    let parts = PartitionSet {
        m,
        assignment,
        centroid_vertex: centroids,
        subdomain: subs.elements,
        neighbor_centroids: subs.neighbors,
        converged,
    };
    debug_assert!(partitions_connected(mesh, &parts.assignment, parts.m, &eadj));
    Ok(parts)
}

/// Split disconnected clusters to a fixed point: keep each cluster's largest
/// component, hand the rest to the face-adjacent cluster with the nearest
/// centroid, or promote an isolated island to a new cluster.
fn enforce_connectivity(
    mesh: &SimMesh,
    ops: &DiscreteOperators,
    ctx: &HeatContext,
    eadj: &[Vec<usize>],
    centroids: &mut Vec<usize>,
    fields: &mut Vec<GeodesicField>,
    assignment: &mut [usize],
) -> Result<()> {
    let n_el = mesh.n_elements();
    loop {
        let mut changed = false;
        let m = centroids.len();
        for i in 0..m {
            let els: Vec<usize> = (0..n_el).filter(|&e| assignment[e] == i).collect();
            if els.is_empty() {
                continue;
            }
            let comps = element_components(&els, eadj, assignment, i);
            if comps.len() <= 1 {
                continue;
            }
            // Keep the component with the most elements (ties: the one
            // containing the smallest element id — components come out
            // sorted by their smallest member already).
            let keep_idx = comps
                .iter()
                .enumerate()
                .max_by(|(ai, a), (bi, b)| a.len().cmp(&b.len()).then(bi.cmp(ai)))
                .map(|(k, _)| k)
                .unwrap();
            for (ci, comp) in comps.iter().enumerate() {
                if ci == keep_idx {
                    continue;
                }
                // Face-adjacent foreign clusters of this component.
                let mut cands: Vec<usize> = comp
                    .iter()
                    .flat_map(|&e| eadj[e].iter().copied())
                    .filter(|&f| assignment[f] != i)
                    .map(|f| assignment[f])
                    .collect();
                cands.sort_unstable();
                cands.dedup();
                if cands.is_empty() {
                    // Isolated island: promote to a new cluster.
                    let new_id = centroids.len();
                    for &e in comp {
                        assignment[e] = new_id;
                    }
                    let c = submesh_one_median(mesh, ops, comp)?;
                    centroids.push(c);
                    fields.push(ctx.distances(&[c])?);
                } else {
                    let mut best = cands[0];
                    let mut best_d = f64::INFINITY;
                    for &q in &cands {
                        let d = comp
                            .iter()
                            .map(|&e| element_distance(&fields[q], &mesh.elements[e]))
                            .fold(f64::INFINITY, f64::min);
                        if d < best_d {
                            best_d = d;
                            best = q;
                        }
                    }
                    for &e in comp {
                        assignment[e] = best;
                    }
                }
                changed = true;
            }
        }
        if !changed {
            return Ok(());
        }
    }
}

/// Absorb degenerate partition crossings so every vertex keeps weight
/// coverage. A vertex whose incident partitions each have another incident
/// partition they never share an element face with (the discrete analogue
/// of two Voronoi borders crossing at a point) lands on the internal
/// boundary of every subdomain covering it, so all clipped weight fields
/// are pinned to zero there. Generic Voronoi junctions are triple points;
/// restore that property by reassigning the smallest incident wedge at such
/// a vertex to a bordering partition. `moved_from` records (element,
/// partition) pairs a repair pulled apart; an element never moves back,
/// which keeps adjacent crossings from undoing each other's fixes and
/// bounds the total number of moves. Returns whether anything changed.
fn repair_degenerate_junctions(
    eadj: &[Vec<usize>],
    vstar: &[Vec<usize>],
    assignment: &mut [usize],
    m: usize,
    moved_from: &mut std::collections::BTreeSet<(usize, usize)>,
) -> bool {
    let mut adjacent: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); m];
    for (e, nb) in eadj.iter().enumerate() {
        for &f in nb {
            let (p, q) = (assignment[e], assignment[f]);
            if p != q {
                adjacent[p].insert(q);
            }
        }
    }
    let mut changed = false;
    for star in vstar {
        let mut incident: Vec<usize> = star.iter().map(|&e| assignment[e]).collect();
        incident.sort_unstable();
        incident.dedup();
        let uncovered = incident.len() >= 4
            && incident
                .iter()
                .all(|&p| incident.iter().any(|&q| q != p && !adjacent[p].contains(&q)));
        if !uncovered {
            continue;
        }
        // Smallest wedge at the vertex (ties: smallest partition id).
        let smallest = incident
            .iter()
            .copied()
            .min_by_key(|&p| (star.iter().filter(|&&e| assignment[e] == p).count(), p))
            .unwrap();
        let wedge: Vec<usize> =
            star.iter().copied().filter(|&e| assignment[e] == smallest).collect();
        // Partitions bordering the wedge through this vertex's edges; a
        // target is admissible only if no wedge element once left it.
        let mut partners: Vec<usize> = wedge
            .iter()
            .flat_map(|&e| eadj[e].iter().copied())
            .filter(|f| star.contains(f))
            .map(|f| assignment[f])
            .filter(|&p| p != smallest)
            .filter(|&p| wedge.iter().all(|&e| !moved_from.contains(&(e, p))))
            .collect();
        partners.sort_unstable();
        partners.dedup();
        let Some(&target) = partners.first() else {
            continue;
        };
        for &e in &wedge {
            assignment[e] = target;
            moved_from.insert((e, smallest));
        }
        // Record adjacencies the move created; stale entries for `smallest`
        // are refreshed on the next round.
        for &e in &wedge {
            for &f in &eadj[e] {
                let (p, q) = (assignment[e], assignment[f]);
                if p != q {
                    adjacent[p].insert(q);
                    adjacent[q].insert(p);
                }
            }
        }
        changed = true;
    }
    changed
}

/// Keep only the clusters in `keep` (old ids, ascending); remap fields,
/// centroids, and the assignment in place.
fn relabel(
    centroids: &mut Vec<usize>,
    fields: &mut Vec<GeodesicField>,
    assignment: &mut [usize],
    keep: &[usize],
) {
    let mut old_to_new = std::collections::BTreeMap::new();
    for (new, &old) in keep.iter().enumerate() {
        old_to_new.insert(old, new);
    }
    let mut kept_c = Vec::with_capacity(keep.len());
    let mut kept_f = Vec::with_capacity(keep.len());
    for &old in keep {
        kept_c.push(centroids[old]);
        kept_f.push(fields[old].clone());
    }
    *centroids = kept_c;
    *fields = kept_f;
    for p in assignment.iter_mut() {
        *p = *old_to_new.get(p).expect("assignment references deleted cluster");
    }
}

/// Connected components (face adjacency) of cluster `i`'s element list.
/// Each component is sorted; components are ordered by smallest member.
fn element_components(
    els: &[usize],
    eadj: &[Vec<usize>],
    assignment: &[usize],
    i: usize,
) -> Vec<Vec<usize>> {
    use std::collections::{BTreeSet, VecDeque};
    let inset: BTreeSet<usize> = els.iter().copied().collect();
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut comps = Vec::new();
    for &start in els {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = Vec::new();
        let mut q = VecDeque::new();
        q.push_back(start);
        seen.insert(start);
        while let Some(e) = q.pop_front() {
            comp.push(e);
            for &f in &eadj[e] {
                if assignment[f] == i && inset.contains(&f) && seen.insert(f) {
                    q.push_back(f);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

fn partitions_connected(
    _mesh: &SimMesh,
    assignment: &[usize],
    m: usize,
    eadj: &[Vec<usize>],
) -> bool {
    for i in 0..m {
        let els: Vec<usize> =
            (0..assignment.len()).filter(|&e| assignment[e] == i).collect();
        if els.is_empty() {
            return false;
        }
        if element_components(&els, eadj, assignment, i).len() != 1 {
            return false;
        }
    }
    true
}
