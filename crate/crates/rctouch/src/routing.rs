//! k-nearest-neighbour voxel graph and serial conduit routing with edge penalties.

use crate::error::{Error, Result};
use crate::geom::{point_segment_dist, polyline_length, Vec3};
use crate::mesh::VoxelGrid;
use crate::selection::{Role, TouchpointSet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_PENALTY: f64 = 300.0;
pub const DEFAULT_DIAMETER: f64 = 5.0;
const NONE: u32 = u32::MAX;

/// Undirected weighted graph in CSR form over occupied voxel centres.
#[derive(Clone, Debug)]
pub struct PathGraph {
    pub positions: Vec<Vec3>,
    /// Linear voxel index of each vertex.
    pub voxels: Vec<usize>,
    pub k: usize,
    pub voxel_size: f64,
    pub dims: [usize; 3],
    pub origin: Vec3,
    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub edges: Vec<(u32, u32)>,
    pub weights: Vec<f64>,
    offsets: Vec<usize>,
    adj: Vec<(u32, u32)>,
    lookup: Vec<u32>,
    pub component: Vec<u32>,
    pub component_count: usize,
}

impl PathGraph {
    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `(neighbour, edge id)` pairs of `v`.
    pub fn neighbors(&self, v: usize) -> &[(u32, u32)] {
        &self.adj[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn vertex_at(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        let l = i + self.dims[0] * (j + self.dims[1] * k);
        let v = self.lookup[l];
        (v != NONE).then_some(v as usize)
    }

    /// Build from an explicit edge list (used for tests and external graphs).
    pub fn from_edges(positions: Vec<Vec3>, edges: &[(u32, u32, f64)]) -> Result<PathGraph> {
        let n = positions.len();
        let mut list: Vec<(u32, u32, f64)> = Vec::with_capacity(edges.len());
        for &(a, b, w) in edges {
            if a as usize >= n || b as usize >= n || a == b || !(w > 0.0) {
                return Err(Error::Invalid(format!("bad edge ({a}, {b}, {w})")));
            }
            list.push((a.min(b), a.max(b), w));
        }
        list.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)).then(x.2.total_cmp(&y.2)));
        list.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
        Ok(assemble(
            positions,
            (0..n).collect(),
            list,
            0,
            1.0,
            [n.max(1), 1, 1],
            Vec3::ZERO,
        ))
    }
}

fn assemble(
    positions: Vec<Vec3>,
    voxels: Vec<usize>,
    list: Vec<(u32, u32, f64)>,
    k: usize,
    voxel_size: f64,
    dims: [usize; 3],
    origin: Vec3,
) -> PathGraph {
    let n = positions.len();
    let mut deg = vec![0usize; n + 1];
    for &(a, b, _) in &list {
        deg[a as usize + 1] += 1;
        deg[b as usize + 1] += 1;
    }
    for i in 1..=n {
        deg[i] += deg[i - 1];
    }
    let offsets = deg.clone();
    let mut fill = deg;
    let mut adj = vec![(0u32, 0u32); offsets[n]];
    for (e, &(a, b, _)) in list.iter().enumerate() {
        adj[fill[a as usize]] = (b, e as u32);
        fill[a as usize] += 1;
        adj[fill[b as usize]] = (a, e as u32);
        fill[b as usize] += 1;
    }
    for v in 0..n {
        adj[offsets[v]..offsets[v + 1]].sort_unstable();
    }
    let mut lookup = vec![NONE; dims.iter().product()];
    for (v, &l) in voxels.iter().enumerate() {
        if l < lookup.len() {
            lookup[l] = v as u32;
        }
    }
    // Union-find over edges for component labels.
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(p: &mut [u32], mut x: u32) -> u32 {
        while p[x as usize] != x {
            p[x as usize] = p[p[x as usize] as usize];
            x = p[x as usize];
        }
        x
    }
    for &(a, b, _) in &list {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb) as usize] = ra.min(rb);
        }
    }
    let mut label = vec![NONE; n];
    let mut component = vec![0u32; n];
    let mut count = 0u32;
    for v in 0..n {
        let r = find(&mut parent, v as u32) as usize;
        if label[r] == NONE {
            label[r] = count;
            count += 1;
        }
        component[v] = label[r];
    }
    PathGraph {
        positions,
        voxels,
        k,
        voxel_size,
        dims,
        origin,
        edges: list.iter().map(|e| (e.0, e.1)).collect(),
        weights: list.iter().map(|e| e.2).collect(),
        offsets,
        adj,
        lookup,
        component,
        component_count: count as usize,
    }
}

/// k-NN graph over occupied voxels, symmetrized by union, weights = centre distances.
///
/// Neighbours are found by expanding lattice shells; ties are broken by
/// squared lattice distance, then vertex index.
pub fn build_graph(grid: &VoxelGrid, k: usize) -> Result<PathGraph> {
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    if grid.is_empty() {
        return Err(Error::Invalid("cannot build a graph on an empty grid".into()));
    }
    let n = grid.len();
    let mut lookup = vec![NONE; grid.cell_count()];
    for (v, &l) in grid.occupied.iter().enumerate() {
        lookup[l] = v as u32;
    }
    let [nx, ny, nz] = grid.dims;
    let max_shell = nx.max(ny).max(nz) as i64;
    let knn: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|v| {
            let [i, j, kk] = grid.ijk(grid.occupied[v]).map(|x| x as i64);
            let mut cand: Vec<(i64, u32)> = Vec::new();
            for s in 1..=max_shell {
                for dz in -s..=s {
                    for dy in -s..=s {
                        for dx in -s..=s {
                            if dx.abs().max(dy.abs()).max(dz.abs()) != s {
                                continue;
                            }
                            let (a, b, c) = (i + dx, j + dy, kk + dz);
                            if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                                continue;
                            }
                            let u = lookup[a as usize + nx * (b as usize + ny * c as usize)];
                            if u != NONE {
                                cand.push((dx * dx + dy * dy + dz * dz, u));
                            }
                        }
                    }
                }
                if cand.len() >= k {
                    cand.sort_unstable();
                    // Unvisited cells are at least (s + 1) lattice units away.
                    if cand[k - 1].0 < (s + 1) * (s + 1) {
                        break;
                    }
                }
            }
            cand.sort_unstable();
            cand.truncate(k);
            cand.into_iter().map(|c| c.1).collect()
        })
        .collect();
    let centers = grid.centers();
    let mut list: Vec<(u32, u32, f64)> = knn
        .iter()
        .enumerate()
        .flat_map(|(v, nb)| {
            let c = &centers;
            nb.iter().map(move |&u| {
                let (a, b) = ((v as u32).min(u), (v as u32).max(u));
                (a, b, c[a as usize].dist(c[b as usize]))
            })
        })
        .collect();
    list.par_sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    list.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
    Ok(assemble(
        centers,
        grid.occupied.clone(),
        list,
        k,
        grid.voxel_size,
        grid.dims,
        grid.origin,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Search {
    Dijkstra,
    AStar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphPath {
    pub vertices: Vec<u32>,
    /// Sum of base edge weights (mm).
    pub length: f64,
    /// Sum of weights including penalties.
    pub cost: f64,
}

#[derive(PartialEq)]
struct Key(f64, u32);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, o: &Self) -> Ordering {
        // Reversed for a min-heap; equal keys pop the smaller vertex first.
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Shortest path under `weights + extra` with deterministic tie-breaking.
pub fn shortest_path_with(
    g: &PathGraph,
    extra: Option<&[f64]>,
    src: usize,
    dst: usize,
    search: Search,
) -> Result<GraphPath> {
    let n = g.vertex_count();
    if src >= n || dst >= n {
        return Err(Error::Invalid(format!("vertex out of range (graph has {n})")));
    }
    let w = |e: u32| g.weights[e as usize] + extra.map_or(0.0, |x| x[e as usize]);
    let h = |v: usize| match search {
        Search::Dijkstra => 0.0,
        Search::AStar => g.positions[v].dist(g.positions[dst]),
    };
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![NONE; n];
    let mut pred_edge = vec![NONE; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Key(h(src), src as u32));
    while let Some(Key(_, u)) = heap.pop() {
        let u = u as usize;
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == dst {
            break;
        }
        for &(v, e) in g.neighbors(u) {
            let v = v as usize;
            if done[v] {
                continue;
            }
            let nd = dist[u] + w(e);
            if nd < dist[v] || (nd == dist[v] && (u as u32) < pred[v]) {
                dist[v] = nd;
                pred[v] = u as u32;
                pred_edge[v] = e;
                heap.push(Key(nd + h(v), v as u32));
            }
        }
    }
    if !dist[dst].is_finite() {
        return Err(Error::NoPath(src, dst));
    }
    let mut vertices = vec![dst as u32];
    let mut length = 0.0;
    let mut v = dst;
    while v != src {
        length += g.weights[pred_edge[v] as usize];
        v = pred[v] as usize;
        vertices.push(v as u32);
    }
    vertices.reverse();
    Ok(GraphPath {
        vertices,
        length,
        cost: dist[dst],
    })
}

pub fn shortest_path(g: &PathGraph, src: usize, dst: usize) -> Result<GraphPath> {
    shortest_path_with(g, None, src, dst, Search::Dijkstra)
}

/// Edge ids along a vertex path.
pub fn path_edges(g: &PathGraph, path: &[u32]) -> Vec<u32> {
    path.windows(2)
        .map(|w| {
            let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
            g.neighbors(a as usize)
                .iter()
                .find(|x| x.0 == b)
                .expect("consecutive path vertices are adjacent")
                .1
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conductivity {
    High,
    Low,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    /// Seeded random touchpoint order, fresh penalties.
    Permute,
    /// Same order, penalties kept from the previous attempt.
    Rerun,
    /// First half of the retries permute, the rest re-run.
    PermuteThenRerun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouteParams {
    pub penalty: f64,
    pub diameter: f64,
    /// Proximity radius for penalties, in conduit diameters.
    pub penalty_radius: f64,
    /// Minimum centerline length per segment (mm); empty disables the check.
    pub min_lengths: Vec<f64>,
    pub max_retries: usize,
    pub fallback: Fallback,
    pub seed: u64,
    pub search: Search,
    /// Straighten legs by line-of-sight shortcuts between graph vertices.
    pub smoothing: bool,
    /// Snap distance (in voxels) above which a warning is emitted.
    pub snap_warn_voxels: f64,
}

impl Default for RouteParams {
    fn default() -> Self {
        RouteParams {
            penalty: DEFAULT_PENALTY,
            diameter: DEFAULT_DIAMETER,
            penalty_radius: 1.0,
            min_lengths: Vec::new(),
            max_retries: 10,
            fallback: Fallback::PermuteThenRerun,
            seed: 0,
            search: Search::Dijkstra,
            smoothing: true,
            snap_warn_voxels: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConduitSegment {
    pub from_id: String,
    pub to_id: String,
    pub centerline: Vec<Vec3>,
    /// Raw graph vertices of the leg before smoothing.
    pub graph_path: Vec<u32>,
    pub diameter: f64,
    pub conductivity: Conductivity,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConduitNetwork {
    pub segments: Vec<ConduitSegment>,
    /// Point ids in series order.
    pub order: Vec<String>,
    /// Touchpoint order used, as indices into the input touchpoints.
    pub permutation: Vec<usize>,
    pub attempts: usize,
    pub warnings: Vec<String>,
}

impl ConduitNetwork {
    pub fn low_segments(&self) -> impl Iterator<Item = (usize, &ConduitSegment)> {
        self.segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.conductivity == Conductivity::Low)
    }

    /// Share of vertex pairs closer than one diameter, per pair of segments,
    /// ignoring pairs near a shared endpoint.
    pub fn overlap_report(&self, graph: &PathGraph) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for a in 0..self.segments.len() {
            for b in a + 1..self.segments.len() {
                let (sa, sb) = (&self.segments[a], &self.segments[b]);
                let d = sa.diameter.max(sb.diameter);
                let shared: Vec<Vec3> = [sa.centerline[0], *sa.centerline.last().unwrap()]
                    .into_iter()
                    .filter(|p| *p == sb.centerline[0] || *p == *sb.centerline.last().unwrap())
                    .collect();
                let pa: Vec<Vec3> = sa.graph_path.iter().map(|&v| graph.positions[v as usize]).collect();
                let pb: Vec<Vec3> = sb.graph_path.iter().map(|&v| graph.positions[v as usize]).collect();
                let near_shared = |p: Vec3| shared.iter().any(|s| s.dist(p) < d);
                let mut close = 0usize;
                let mut total = 0usize;
                for &p in &pa {
                    for &q in &pb {
                        if near_shared(p) && near_shared(q) {
                            continue;
                        }
                        total += 1;
                        if p.dist(q) < d {
                            close += 1;
                        }
                    }
                }
                out.push((a, b, if total == 0 { 0.0 } else { close as f64 / total as f64 }));
            }
        }
        out
    }
}

/// Nearest graph vertex (ties to the smaller index) and its distance.
pub fn snap(g: &PathGraph, p: Vec3) -> Option<(usize, f64)> {
    g.positions
        .par_iter()
        .enumerate()
        .map(|(i, q)| (q.dist2(p), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(d, i)| (i, d.sqrt()))
}

/// Drop interior vertices while the straight shortcut stays in free space.
pub fn smooth_path(points: &[Vec3], step: f64, free: &(dyn Fn(Vec3) -> bool + Sync)) -> Vec<usize> {
    if points.len() <= 2 {
        return (0..points.len()).collect();
    }
    let visible = |a: Vec3, b: Vec3| {
        let n = (a.dist(b) / step).ceil() as usize;
        (1..n).all(|s| free(a.lerp(b, s as f64 / n as f64)))
    };
    let mut keep = vec![0usize];
    let mut i = 0;
    while i + 1 < points.len() {
        let mut j = i + 1;
        while j + 1 < points.len() && visible(points[i], points[j + 1]) {
            j += 1;
        }
        keep.push(j);
        i = j;
    }
    keep
}

struct Attempt {
    segments: Vec<ConduitSegment>,
    extra: Vec<f64>,
}

fn mark_near(g: &PathGraph, line: &[Vec3], radius: f64, marked: &mut [bool]) {
    let h = g.voxel_size;
    let r = (radius / h).ceil() as i64 + 1;
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        let lo = a.min(b) - g.origin;
        let hi = a.max(b) - g.origin;
        let range = |l: f64, u: f64, n: usize| {
            let s = ((l / h).floor() as i64 - r).max(0);
            let e = ((u / h).floor() as i64 + r).min(n as i64 - 1);
            s..=e
        };
        for k in range(lo.z, hi.z, g.dims[2]) {
            for j in range(lo.y, hi.y, g.dims[1]) {
                for i in range(lo.x, hi.x, g.dims[0]) {
                    if let Some(v) = g.vertex_at(i as usize, j as usize, k as usize) {
                        if !marked[v] && point_segment_dist(g.positions[v], a, b) <= radius {
                            marked[v] = true;
                        }
                    }
                }
            }
        }
    }
}

fn route_once(
    g: &PathGraph,
    pts: &[(String, Role, Vec3, usize)],
    params: &RouteParams,
    free: &(dyn Fn(Vec3) -> bool + Sync),
    mut extra: Vec<f64>,
) -> Result<Attempt> {
    let mut segments = Vec::with_capacity(pts.len() - 1);
    let step = g.voxel_size * 0.25;
    for w in pts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let path = shortest_path_with(g, Some(&extra), a.3, b.3, params.search)?;
        let raw: Vec<Vec3> = path.vertices.iter().map(|&v| g.positions[v as usize]).collect();
        let kept = if params.smoothing {
            smooth_path(&raw, step, free)
        } else {
            (0..raw.len()).collect()
        };
        let mut centerline = vec![a.2];
        centerline.extend(kept.iter().map(|&i| raw[i]));
        centerline.push(b.2);
        centerline.dedup();
        let mut marked = vec![false; g.vertex_count()];
        for &v in &path.vertices {
            marked[v as usize] = true;
        }
        mark_near(g, &centerline, params.penalty_radius * params.diameter, &mut marked);
        for e in path_edges(g, &path.vertices) {
            extra[e as usize] += params.penalty;
        }
        for (e, &(x, y)) in g.edges.iter().enumerate() {
            if marked[x as usize] || marked[y as usize] {
                extra[e] += params.penalty;
            }
        }
        let conductivity = if a.1 == Role::Wiring || b.1 == Role::Wiring {
            Conductivity::High
        } else {
            Conductivity::Low
        };
        segments.push(ConduitSegment {
            from_id: a.0.clone(),
            to_id: b.0.clone(),
            length: polyline_length(&centerline),
            centerline,
            graph_path: path.vertices,
            diameter: params.diameter,
            conductivity,
        });
    }
    Ok(Attempt { segments, extra })
}

/// Route the points in series: each leg is a shortest path under the
/// accumulated penalties, then the leg's edges and its neighbourhood are penalized.
pub fn route_serial(
    g: &PathGraph,
    points: &TouchpointSet,
    params: &RouteParams,
    free: &(dyn Fn(Vec3) -> bool + Sync),
) -> Result<ConduitNetwork> {
    points.validate()?;
    if !(params.penalty >= 0.0 && params.diameter > 0.0 && params.penalty_radius >= 0.0) {
        return Err(Error::Invalid("penalty, diameter and radius must be non-negative".into()));
    }
    let mut warnings = Vec::new();
    let mut snapped = |id: &str, c: Vec3| -> Result<usize> {
        let (v, d) = snap(g, c).ok_or_else(|| Error::Invalid("empty graph".into()))?;
        if d > params.snap_warn_voxels * g.voxel_size {
            warnings.push(format!(
                "point '{id}' snapped {d:.2} mm to the interior ({:.1} voxels)",
                d / g.voxel_size
            ));
        }
        Ok(v)
    };
    let resolve = |p: &crate::selection::SelectedPoint| p.centroid();
    let mut base: Vec<(String, Role, Vec3, usize)> = Vec::new();
    for (p, role) in points.ordered() {
        let c = resolve(p)?;
        base.push((p.id.clone(), role, c, snapped(&p.id, c)?));
    }
    let comps: Vec<usize> = base.iter().map(|b| g.component[b.3] as usize).collect();
    if comps.iter().any(|&c| c != comps[0]) {
        return Err(Error::Unroutable {
            points: base.iter().map(|b| b.0.clone()).collect(),
            components: comps,
        });
    }
    let n_seg = base.len() - 1;
    if !params.min_lengths.is_empty() && params.min_lengths.len() != n_seg {
        return Err(Error::Invalid(format!(
            "min_lengths has {} entries for {n_seg} segments",
            params.min_lengths.len()
        )));
    }
    let satisfied = |segs: &[ConduitSegment]| {
        params.min_lengths.is_empty()
            || segs.iter().zip(&params.min_lengths).all(|(s, &m)| s.length >= m)
    };
    let slack = |segs: &[ConduitSegment]| {
        segs.iter()
            .zip(&params.min_lengths)
            .map(|(s, &m)| if m > 0.0 { s.length / m } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min)
    };

    let n_touch = points.touchpoints.len();
    let head = 1;
    let order_with = |perm: &[usize]| -> Vec<(String, Role, Vec3, usize)> {
        let mut v = vec![base[0].clone()];
        v.extend(perm.iter().map(|&i| base[head + i].clone()));
        if base.len() > n_touch + 1 {
            v.push(base[n_touch + 1].clone());
        }
        v
    };
    let identity: Vec<usize> = (0..n_touch).collect();
    let fresh = vec![0.0; g.edge_count()];
    let mut att = route_once(g, &order_with(&identity), params, free, fresh.clone())?;
    let mut perm = identity.clone();
    let mut best = (slack(&att.segments), att.segments.iter().map(|s| s.length).collect::<Vec<_>>());
    let mut attempts = 1;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let permute_budget = match params.fallback {
        Fallback::Permute => params.max_retries,
        Fallback::Rerun => 0,
        Fallback::PermuteThenRerun => params.max_retries.div_ceil(2),
    };
    let mut rerun_state = att.extra.clone();
    while !satisfied(&att.segments) {
        if attempts > params.max_retries {
            return Err(Error::RetriesExhausted {
                retries: params.max_retries,
                best_lengths: best.1,
            });
        }
        if attempts <= permute_budget && n_touch > 1 {
            perm = identity.clone();
            perm.shuffle(&mut rng);
            att = route_once(g, &order_with(&perm), params, free, fresh.clone())?;
        } else {
            perm = identity.clone();
            att = route_once(g, &order_with(&perm), params, free, rerun_state)?;
            rerun_state = att.extra.clone();
        }
        attempts += 1;
        let s = slack(&att.segments);
        if s > best.0 {
            best = (s, att.segments.iter().map(|x| x.length).collect());
        }
    }
    let order = order_with(&perm).into_iter().map(|p| p.0).collect();
    Ok(ConduitNetwork {
        segments: att.segments,
        order,
        permutation: perm,
        attempts,
        warnings,
    })
}

/// Routing result as a document for trace synthesis, export and previews.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolylineDoc {
    pub segments: Vec<PolylineEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolylineEntry {
    pub from_id: String,
    pub to_id: String,
    pub points: Vec<Vec3>,
    pub diameter: f64,
    pub conductivity: Conductivity,
    pub length: f64,
}

impl From<&ConduitNetwork> for PolylineDoc {
    fn from(n: &ConduitNetwork) -> Self {
        PolylineDoc {
            segments: n
                .segments
                .iter()
                .map(|s| PolylineEntry {
                    from_id: s.from_id.clone(),
                    to_id: s.to_id.clone(),
                    points: s.centerline.clone(),
                    diameter: s.diameter,
                    conductivity: s.conductivity,
                    length: s.length,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_prefers_two_hops() {
        let pos = vec![Vec3::ZERO, Vec3::X, Vec3::Y];
        let g = PathGraph::from_edges(pos, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]).unwrap();
        let p = shortest_path(&g, 0, 2).unwrap();
        assert_eq!(p.vertices, vec![0, 1, 2]);
        assert_eq!(p.length, 2.0);
        let p = shortest_path(&g, 1, 1).unwrap();
        assert_eq!(p.vertices, vec![1]);
        assert_eq!(p.length, 0.0);
    }

    #[test]
    fn disconnected_is_no_path() {
        let pos = vec![Vec3::ZERO, Vec3::X, Vec3::Y];
        let g = PathGraph::from_edges(pos, &[(0, 1, 1.0)]).unwrap();
        assert!(matches!(shortest_path(&g, 0, 2), Err(Error::NoPath(0, 2))));
        assert_eq!(g.component_count, 2);
    }
}
