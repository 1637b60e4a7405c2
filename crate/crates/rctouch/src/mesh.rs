//! Triangle meshes: STL I/O, validation, voxelization, shell trimming and point geometry.

use crate::bvh::Bvh;
use crate::error::{Error, Result};
use crate::geom::{closest_point_on_triangle, Aabb, Vec3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const DEFAULT_VOXEL_FRACTION: f64 = 0.005;
pub const DEFAULT_VOXEL_CAP: u64 = 50_000_000;
pub const DEFAULT_CLEARANCE: f64 = 3.0;
pub const SURFACE_EPS: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().position(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::Invalid(format!("triangle {t} references a missing vertex")));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite vertex coordinate".into()));
        }
        Ok(TriangleMesh { vertices, triangles })
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Non-normalized normal; its length is twice the triangle area.
    pub fn area_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(c - a)
    }

    pub fn area(&self, t: usize) -> f64 {
        self.area_normal(t).norm() * 0.5
    }

    /// Signed enclosed volume (positive for outward winding).
    pub fn volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }

    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    pub fn translated(&self, d: Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| v + d).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Concatenate meshes without welding.
    pub fn merge<'a>(parts: impl IntoIterator<Item = &'a TriangleMesh>) -> TriangleMesh {
        let mut out = TriangleMesh::default();
        for m in parts {
            let off = out.vertices.len() as u32;
            out.vertices.extend_from_slice(&m.vertices);
            out.triangles
                .extend(m.triangles.iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
        }
        out
    }

    pub fn triangle_boxes(&self) -> Vec<Aabb> {
        (0..self.triangles.len())
            .map(|t| Aabb::from_points(&self.corners(t)))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// STL

fn weld(tris: Vec<[Vec3; 3]>) -> TriangleMesh {
    let mut map: HashMap<[u64; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(tris.len());
    for t in tris {
        let mut idx = [0u32; 3];
        for (k, v) in t.iter().enumerate() {
            let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
            idx[k] = *map.entry(key).or_insert_with(|| {
                vertices.push(*v);
                (vertices.len() - 1) as u32
            });
        }
        triangles.push(idx);
    }
    TriangleMesh { vertices, triangles }
}

/// Parse binary or ASCII STL, welding bit-identical vertices.
pub fn read_stl(bytes: &[u8]) -> Result<TriangleMesh> {
    if bytes.len() >= 84 {
        let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        if 84 + 50 * count == bytes.len() {
            let mut tris = Vec::with_capacity(count);
            for rec in bytes[84..].chunks_exact(50) {
                let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().unwrap()) as f64;
                let v = |o: usize| Vec3::new(f(o), f(o + 4), f(o + 8));
                tris.push([v(12), v(24), v(36)]);
            }
            let m = weld(tris);
            if m.vertices.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse("non-finite coordinate in binary STL".into()));
            }
            return Ok(m);
        }
    }
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Parse("neither a well-sized binary STL nor UTF-8 ASCII STL".into()))?;
    let mut tokens = text.split_whitespace();
    if tokens.next().map(|t| t.eq_ignore_ascii_case("solid")) != Some(true) {
        return Err(Error::Parse("ASCII STL must start with 'solid'".into()));
    }
    let mut tris = Vec::new();
    let mut cur: Vec<Vec3> = Vec::new();
    while let Some(tok) = tokens.next() {
        if tok == "vertex" {
            let mut c = [0.0; 3];
            for x in &mut c {
                *x = tokens
                    .next()
                    .ok_or_else(|| Error::Parse("truncated vertex".into()))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad vertex coordinate: {e}")))?;
            }
            cur.push(Vec3::from(c));
        } else if tok == "endloop" {
            if cur.len() != 3 {
                return Err(Error::Parse(format!("facet with {} vertices", cur.len())));
            }
            tris.push([cur[0], cur[1], cur[2]]);
            cur.clear();
        }
    }
    if tris.is_empty() {
        return Err(Error::Parse("no facets found".into()));
    }
    let m = weld(tris);
    if m.vertices.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse("non-finite coordinate in ASCII STL".into()));
    }
    Ok(m)
}

pub fn read_stl_file(path: &std::path::Path) -> Result<TriangleMesh> {
    read_stl(&std::fs::read(path)?)
}

/// Binary little-endian STL with computed facet normals.
pub fn write_stl(mesh: &TriangleMesh, name: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.triangles.len());
    let mut header = [b' '; 80];
    let label = format!("rctouch {name}");
    let n = label.len().min(80);
    header[..n].copy_from_slice(&label.as_bytes()[..n]);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.triangles.len() as u32).to_le_bytes());
    for t in 0..mesh.triangles.len() {
        let nrm = mesh.area_normal(t).normalized().unwrap_or(Vec3::ZERO);
        let mut put = |v: Vec3| {
            for c in [v.x, v.y, v.z] {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        };
        put(nrm);
        for v in mesh.corners(t) {
            put(v);
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

pub fn write_stl_ascii(mesh: &TriangleMesh, name: &str) -> String {
    let mut s = format!("solid {name}\n");
    for t in 0..mesh.triangles.len() {
        let n = mesh.area_normal(t).normalized().unwrap_or(Vec3::ZERO);
        s.push_str(&format!("  facet normal {} {} {}\n    outer loop\n", n.x, n.y, n.z));
        for v in mesh.corners(t) {
            s.push_str(&format!("      vertex {} {} {}\n", v.x, v.y, v.z));
        }
        s.push_str("    endloop\n  endfacet\n");
    }
    s.push_str(&format!("endsolid {name}\n"));
    s
}

// ---------------------------------------------------------------------------
// Primitives

pub fn box_mesh(min: Vec3, max: Vec3) -> TriangleMesh {
    let v = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        })
        .collect();
    let t = vec![
        [0, 2, 1], [1, 2, 3], // z-
        [4, 5, 6], [5, 7, 6], // z+
        [0, 1, 4], [1, 5, 4], // y-
        [2, 6, 3], [3, 6, 7], // y+
        [0, 4, 2], [2, 4, 6], // x-
        [1, 3, 5], [3, 7, 5], // x+
    ];
    TriangleMesh { vertices: v, triangles: t }
}

pub fn cube(size: f64) -> TriangleMesh {
    box_mesh(Vec3::ZERO, Vec3::splat(size))
}

/// Subdivided icosahedron projected onto a sphere.
pub fn icosphere(center: Vec3, radius: f64, subdivisions: u32) -> TriangleMesh {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Vec3> = [
        (-1.0, p, 0.0), (1.0, p, 0.0), (-1.0, -p, 0.0), (1.0, -p, 0.0),
        (0.0, -1.0, p), (0.0, 1.0, p), (0.0, -1.0, -p), (0.0, 1.0, -p),
        (p, 0.0, -1.0), (p, 0.0, 1.0), (-p, 0.0, -1.0), (-p, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized().unwrap())
    .collect();
    let mut t: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(t.len() * 4);
        let mut midpoint = |a: u32, b: u32, v: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                v.push(((v[a as usize] + v[b as usize]) * 0.5).normalized().unwrap());
                (v.len() - 1) as u32
            })
        };
        for &[a, b, c] in &t {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        t = next;
    }
    TriangleMesh {
        vertices: v.into_iter().map(|d| center + d * radius).collect(),
        triangles: t,
    }
}

/// Closed surface of revolution-style grid: `f(u, v)` over a periodic `u` and a `v` with poles.
fn lat_long(stacks: usize, slices: usize, f: impl Fn(f64, f64) -> Vec3) -> TriangleMesh {
    use std::f64::consts::PI;
    let mut v = vec![f(0.0, 0.0)];
    for i in 1..stacks {
        let th = PI * i as f64 / stacks as f64;
        for j in 0..slices {
            v.push(f(th, 2.0 * PI * j as f64 / slices as f64));
        }
    }
    v.push(f(PI, 0.0));
    let south = (v.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;
    let mut t = Vec::new();
    for j in 0..slices {
        t.push([0, ring(1, j), ring(1, j + 1)]);
        t.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            t.push([a, c, b]);
            t.push([b, c, d]);
        }
    }
    TriangleMesh { vertices: v, triangles: t }
}

pub fn uv_sphere(center: Vec3, radius: f64, stacks: usize, slices: usize) -> TriangleMesh {
    lat_long(stacks.max(2), slices.max(3), |th, ph| {
        center + Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()) * radius
    })
}

/// Sphere with smooth radial bumps, used as a large organic test input.
pub fn lumpy_sphere(center: Vec3, radius: f64, stacks: usize, slices: usize) -> TriangleMesh {
    lat_long(stacks.max(2), slices.max(3), |th, ph| {
        let bump = 1.0 + 0.12 * (3.0 * ph).sin() * (2.0 * th).sin() + 0.06 * (5.0 * th).cos();
        center + Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()) * (radius * bump)
    })
}

/// Torus around the z axis.
pub fn torus(center: Vec3, major: f64, minor: f64, nu: usize, nv: usize) -> TriangleMesh {
    use std::f64::consts::PI;
    let (nu, nv) = (nu.max(3), nv.max(3));
    let mut v = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let w = 2.0 * PI * j as f64 / nv as f64;
            let r = major + minor * w.cos();
            v.push(center + Vec3::new(r * u.cos(), r * u.sin(), minor * w.sin()));
        }
    }
    let id = |i: usize, j: usize| ((i % nu) * nv + j % nv) as u32;
    let mut t = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriangleMesh { vertices: v, triangles: t }
}

/// Closed cylinder centred at `center` along unit `axis`.
pub fn cylinder(center: Vec3, axis: Vec3, diameter: f64, length: f64, segments: usize) -> TriangleMesh {
    use std::f64::consts::PI;
    let seg = segments.max(3);
    let a = axis.normalized().unwrap_or(Vec3::Z);
    let u = crate::geom::any_orthogonal(a);
    let w = a.cross(u);
    let r = diameter / 2.0;
    let (b0, b1) = (center - a * (length / 2.0), center + a * (length / 2.0));
    let mut v = vec![b0, b1];
    for k in 0..seg {
        let th = 2.0 * PI * k as f64 / seg as f64;
        let d = (u * th.cos() + w * th.sin()) * r;
        v.push(b0 + d);
        v.push(b1 + d);
    }
    let lo = |k: usize| (2 + 2 * (k % seg)) as u32;
    let hi = |k: usize| (3 + 2 * (k % seg)) as u32;
    let mut t = Vec::with_capacity(4 * seg);
    for k in 0..seg {
        t.push([0, lo(k + 1), lo(k)]);
        t.push([1, hi(k), hi(k + 1)]);
        t.push([lo(k), lo(k + 1), hi(k + 1)]);
        t.push([lo(k), hi(k + 1), hi(k)]);
    }
    TriangleMesh { vertices: v, triangles: t }
}

// ---------------------------------------------------------------------------
// Spatial index

/// A mesh with a triangle BVH for distance, closest-point and inside queries.
pub struct MeshIndex<'a> {
    pub mesh: &'a TriangleMesh,
    bvh: Bvh,
}

/// Fixed, generic direction for parity rays.
const PARITY_DIR: Vec3 = Vec3 { x: 0.431_827_3, y: 0.566_174_8, z: 0.702_141_9 };

impl<'a> MeshIndex<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Self {
        MeshIndex {
            mesh,
            bvh: Bvh::build(&mesh.triangle_boxes()),
        }
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    /// Closest surface point and its triangle.
    pub fn closest(&self, p: Vec3) -> Option<(Vec3, usize)> {
        self.bvh
            .nearest(p, |t| {
                let [a, b, c] = self.mesh.corners(t);
                let q = closest_point_on_triangle(p, a, b, c);
                (q.dist2(p), q)
            })
            .map(|(_, t, q)| (q, t))
    }

    pub fn distance(&self, p: Vec3) -> f64 {
        self.closest(p).map_or(f64::INFINITY, |(q, _)| q.dist(p))
    }

    /// Parity of crossings along a fixed generic ray.
    pub fn contains(&self, p: Vec3) -> bool {
        let far = self.bvh.bounds().extent().norm() + self.bvh.bounds().dist2(p).sqrt() + 1.0;
        let mut hits = 0usize;
        self.bvh.for_each_ray(p, PARITY_DIR, far, |t| {
            let [a, b, c] = self.mesh.corners(t);
            if ray_triangle(p, PARITY_DIR, a, b, c).is_some_and(|s| s > 0.0 && s <= far) {
                hits += 1;
            }
        });
        hits % 2 == 1
    }
}

/// Möller–Trumbore; returns the ray parameter of the hit.
pub fn ray_triangle(o: Vec3, d: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let h = d.cross(e2);
    let det = e1.dot(h);
    if det.abs() < 1e-14 * e1.norm() * e2.norm() * d.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(h) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = d.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(q) * inv)
}

/// Brute-force parity test along `dir` over every triangle.
pub fn point_in_mesh_brute(mesh: &TriangleMesh, p: Vec3, dir: Vec3) -> bool {
    (0..mesh.triangles.len())
        .filter(|&t| {
            let [a, b, c] = mesh.corners(t);
            ray_triangle(p, dir, a, b, c).is_some_and(|s| s > 0.0)
        })
        .count()
        % 2
        == 1
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub triangles: usize,
    pub vertices: usize,
    pub watertight: bool,
    pub boundary_edges: Vec<(u32, u32)>,
    pub nonmanifold_edges: Vec<(u32, u32)>,
    pub degenerate_triangles: Vec<usize>,
    pub self_intersection_count: usize,
    /// First intersecting pairs, capped for reporting.
    pub self_intersecting_pairs: Vec<(usize, usize)>,
    pub pairs_tested: usize,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.watertight && self.self_intersection_count == 0
    }

    /// Error for the first failing check.
    pub fn require_valid(&self) -> Result<()> {
        if !self.watertight {
            let mut sample: Vec<(u32, u32)> =
                self.boundary_edges.iter().chain(&self.nonmanifold_edges).copied().collect();
            let count = sample.len();
            sample.truncate(10);
            return Err(Error::NotWatertight { count, sample });
        }
        if self.self_intersection_count > 0 {
            return Err(Error::SelfIntersecting {
                count: self.self_intersection_count,
            });
        }
        Ok(())
    }
}

fn segment_hits_triangle(p: Vec3, q: Vec3, tri: [Vec3; 3]) -> bool {
    ray_triangle(p, q - p, tri[0], tri[1], tri[2]).is_some_and(|s| (0.0..=1.0).contains(&s))
}

/// Non-coplanar triangle pair intersection via edge/triangle crossings.
pub fn triangles_intersect(a: [Vec3; 3], b: [Vec3; 3]) -> bool {
    (0..3).any(|i| segment_hits_triangle(a[i], a[(i + 1) % 3], b))
        || (0..3).any(|i| segment_hits_triangle(b[i], b[(i + 1) % 3], a))
}

pub fn validate_mesh(mesh: &TriangleMesh) -> Result<ValidationReport> {
    if mesh.triangles.len() < 4 {
        return Err(Error::Parse(format!(
            "mesh has {} triangles; a closed solid needs at least 4",
            mesh.triangles.len()
        )));
    }
    let mut edges: Vec<(u32, u32)> = mesh
        .triangles
        .iter()
        .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    edges.par_sort_unstable();
    let mut boundary = Vec::new();
    let mut nonmanifold = Vec::new();
    let mut i = 0;
    while i < edges.len() {
        let mut j = i;
        while j < edges.len() && edges[j] == edges[i] {
            j += 1;
        }
        match j - i {
            2 => {}
            1 => boundary.push(edges[i]),
            _ => nonmanifold.push(edges[i]),
        }
        i = j;
    }
    let scale = mesh.bounding_box().extent().max_component().max(1e-300);
    let degenerate: Vec<usize> = (0..mesh.triangles.len())
        .filter(|&t| {
            let [a, b, c] = mesh.triangles[t];
            a == b || b == c || a == c || mesh.area(t) <= 1e-14 * scale * scale
        })
        .collect();

    let boxes = mesh.triangle_boxes();
    let bvh = Bvh::build(&boxes);
    let per_tri: Vec<(usize, Vec<usize>)> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let ta = mesh.triangles[t];
            let ca = mesh.corners(t);
            let mut tested = 0;
            let mut hits = Vec::new();
            bvh.for_each_overlap(&boxes[t], 0.0, |u| {
                if u <= t {
                    return;
                }
                let tb = mesh.triangles[u];
                if ta.iter().any(|x| tb.contains(x)) {
                    return;
                }
                tested += 1;
                if triangles_intersect(ca, mesh.corners(u)) {
                    hits.push(u);
                }
            });
            hits.sort_unstable();
            (tested, hits)
        })
        .collect();
    let pairs_tested = per_tri.iter().map(|x| x.0).sum();
    let mut pairs = Vec::new();
    let mut count = 0;
    for (t, (_, hits)) in per_tri.iter().enumerate() {
        count += hits.len();
        for &u in hits {
            if pairs.len() < 100 {
                pairs.push((t, u));
            }
        }
    }
    Ok(ValidationReport {
        triangles: mesh.triangles.len(),
        vertices: mesh.vertices.len(),
        watertight: boundary.is_empty() && nonmanifold.is_empty(),
        boundary_edges: boundary,
        nonmanifold_edges: nonmanifold,
        degenerate_triangles: degenerate,
        self_intersection_count: count,
        self_intersecting_pairs: pairs,
        pairs_tested,
    })
}

// ---------------------------------------------------------------------------
// Voxels

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub voxel_size: f64,
    pub dims: [usize; 3],
    /// Sorted linear indices `i + nx (j + ny k)` of occupied voxels.
    pub occupied: Vec<usize>,
    /// Distance from each occupied voxel centre to the nearest triangle (mm).
    pub surface_distance: Vec<f64>,
}

impl VoxelGrid {
    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn ijk(&self, lin: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [lin % nx, (lin / nx) % ny, lin / (nx * ny)]
    }

    pub fn center_ijk(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin
            + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_size
    }

    pub fn center(&self, lin: usize) -> Vec3 {
        let [i, j, k] = self.ijk(lin);
        self.center_ijk(i, j, k)
    }

    /// Position of `lin` in the occupied list.
    pub fn slot(&self, lin: usize) -> Option<usize> {
        self.occupied.binary_search(&lin).ok()
    }

    pub fn is_occupied(&self, lin: usize) -> bool {
        self.slot(lin).is_some()
    }

    /// Voxel containing `p`, if inside the grid bounds.
    pub fn cell_of(&self, p: Vec3) -> Option<[usize; 3]> {
        let r = (p - self.origin) / self.voxel_size;
        let c = [r.x.floor(), r.y.floor(), r.z.floor()];
        if (0..3).all(|a| c[a] >= 0.0 && (c[a] as usize) < self.dims[a]) {
            Some([c[0] as usize, c[1] as usize, c[2] as usize])
        } else {
            None
        }
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        self.cell_of(p)
            .is_some_and(|[i, j, k]| self.is_occupied(self.linear(i, j, k)))
    }

    /// Dense occupancy array.
    pub fn occupancy(&self) -> Vec<bool> {
        let mut v = vec![false; self.cell_count()];
        for &l in &self.occupied {
            v[l] = true;
        }
        v
    }

    pub fn centers(&self) -> Vec<Vec3> {
        self.occupied.iter().map(|&l| self.center(l)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoxelizeParams {
    /// Explicit voxel edge (mm); `None` uses `fraction` of the longest side.
    pub voxel_size: Option<f64>,
    pub fraction: f64,
    pub cap: u64,
}

impl Default for VoxelizeParams {
    fn default() -> Self {
        VoxelizeParams {
            voxel_size: None,
            fraction: DEFAULT_VOXEL_FRACTION,
            cap: DEFAULT_VOXEL_CAP,
        }
    }
}

impl VoxelizeParams {
    pub fn with_size(size: f64) -> Self {
        VoxelizeParams {
            voxel_size: Some(size),
            ..Default::default()
        }
    }

    pub fn resolve(&self, mesh: &TriangleMesh) -> f64 {
        self.voxel_size
            .unwrap_or_else(|| self.fraction * mesh.bounding_box().extent().max_component())
    }
}

/// Signed 2D edge function for the segment `a -> b` evaluated in a canonical
/// vertex order so shared edges give exactly opposite values.
fn edge_fn(mesh: &TriangleMesh, a: u32, b: u32, x: f64, y: f64) -> f64 {
    let (lo, hi, s) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let p = mesh.vertices[lo as usize];
    let q = mesh.vertices[hi as usize];
    s * ((q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x))
}

/// z of every triangle crossing on the vertical line through `(x, y)`;
/// `None` when the line grazes an edge or vertex.
fn column_crossings(mesh: &TriangleMesh, tris: &[u32], x: f64, y: f64) -> Option<Vec<f64>> {
    let mut zs = Vec::new();
    for &t in tris {
        let [a, b, c] = mesh.triangles[t as usize];
        let w = [edge_fn(mesh, b, c, x, y), edge_fn(mesh, c, a, x, y), edge_fn(mesh, a, b, x, y)];
        let pos = w.iter().all(|&e| e > 0.0);
        let neg = w.iter().all(|&e| e < 0.0);
        if pos || neg {
            let s = w[0] + w[1] + w[2];
            let (pa, pb, pc) = (
                mesh.vertices[a as usize],
                mesh.vertices[b as usize],
                mesh.vertices[c as usize],
            );
            zs.push((w[0] * pa.z + w[1] * pb.z + w[2] * pc.z) / s);
        } else if w.iter().any(|&e| e == 0.0)
            && (w.iter().all(|&e| e >= 0.0) || w.iter().all(|&e| e <= 0.0))
        {
            return None;
        }
    }
    zs.sort_by(f64::total_cmp);
    Some(zs)
}

/// Occupancy by vertical-ray parity at voxel centres plus exact surface distance.
pub fn voxelize(mesh: &TriangleMesh, params: &VoxelizeParams) -> Result<VoxelGrid> {
    let size = params.resolve(mesh);
    if !(size > 0.0 && size.is_finite()) {
        return Err(Error::Invalid(format!("voxel size must be positive, got {size}")));
    }
    if mesh.triangles.is_empty() {
        return Err(Error::Invalid("empty mesh".into()));
    }
    let bb = mesh.bounding_box();
    let e = bb.extent();
    let dims = [e.x, e.y, e.z].map(|x| ((x / size).ceil() as usize).max(1));
    let cells = dims.iter().map(|&d| d as u64).product::<u64>();
    if cells > params.cap {
        let suggested = size * (cells as f64 / params.cap as f64).cbrt() * 1.01;
        return Err(Error::TooManyVoxels {
            requested: cells,
            cap: params.cap,
            suggested,
        });
    }
    let origin = bb.min;
    let [nx, ny, nz] = dims;

    // Bucket triangles by the columns whose centres fall inside their xy extent.
    let col_range = |lo: f64, hi: f64, o: f64, n: usize| -> Option<(usize, usize)> {
        let a = ((lo - o) / size - 0.5).ceil().max(0.0);
        let b = ((hi - o) / size - 0.5).floor().min(n as f64 - 1.0);
        (a <= b).then(|| (a as usize, b as usize))
    };
    let mut counts = vec![0u32; nx * ny + 1];
    let ranges: Vec<Option<((usize, usize), (usize, usize))>> = (0..mesh.triangles.len())
        .map(|t| {
            let b = Aabb::from_points(&mesh.corners(t));
            Some((col_range(b.min.x, b.max.x, origin.x, nx)?, col_range(b.min.y, b.max.y, origin.y, ny)?))
        })
        .collect();
    for r in ranges.iter().flatten() {
        for j in r.1 .0..=r.1 .1 {
            for i in r.0 .0..=r.0 .1 {
                counts[i + nx * j + 1] += 1;
            }
        }
    }
    for c in 1..counts.len() {
        counts[c] += counts[c - 1];
    }
    let mut fill = counts.clone();
    let mut bucket = vec![0u32; counts[nx * ny] as usize];
    for (t, r) in ranges.iter().enumerate() {
        if let Some(((i0, i1), (j0, j1))) = r {
            for j in *j0..=*j1 {
                for i in *i0..=*i1 {
                    let c = i + nx * j;
                    bucket[fill[c] as usize] = t as u32;
                    fill[c] += 1;
                }
            }
        }
    }

    let occupied: Vec<usize> = (0..nx * ny)
        .into_par_iter()
        .flat_map_iter(|col| {
            let (i, j) = (col % nx, col / nx);
            let tris = &bucket[counts[col] as usize..counts[col + 1] as usize];
            let base = origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, 0.0) * size;
            let mut zs = None;
            for attempt in 0..16 {
                // Deterministic nudge off grazed edges.
                let d = size * 1e-7 * attempt as f64;
                zs = column_crossings(mesh, tris, base.x + d * 0.754_877_7, base.y + d * 0.569_840_3);
                if zs.is_some() {
                    break;
                }
            }
            let zs = zs.unwrap_or_default();
            let mut out = Vec::new();
            let mut below = 0;
            for k in 0..nz {
                let zc = origin.z + (k as f64 + 0.5) * size;
                while below < zs.len() && zs[below] < zc {
                    below += 1;
                }
                if below % 2 == 1 {
                    out.push(i + nx * (j + ny * k));
                }
            }
            out.into_iter()
        })
        .collect();
    let mut occupied = occupied;
    occupied.par_sort_unstable();

    let index = MeshIndex::new(mesh);
    let grid0 = VoxelGrid {
        origin,
        voxel_size: size,
        dims,
        occupied: Vec::new(),
        surface_distance: Vec::new(),
    };
    let dist: Vec<f64> = occupied
        .par_iter()
        .map(|&l| index.distance(grid0.center(l)))
        .collect();
    let (occupied, surface_distance): (Vec<usize>, Vec<f64>) =
        occupied.into_iter().zip(dist).filter(|(_, d)| *d > 0.0).unzip();
    Ok(VoxelGrid {
        occupied,
        surface_distance,
        ..grid0
    })
}

/// Keep voxels at least `clearance` from the surface.
pub fn trim_shell(grid: &VoxelGrid, clearance: f64) -> Result<VoxelGrid> {
    if !(clearance >= 0.0) {
        return Err(Error::Invalid(format!("clearance must be >= 0, got {clearance}")));
    }
    let (occupied, surface_distance): (Vec<usize>, Vec<f64>) = grid
        .occupied
        .iter()
        .zip(&grid.surface_distance)
        .filter(|(_, &d)| d >= clearance)
        .map(|(&l, &d)| (l, d))
        .unzip();
    if occupied.is_empty() {
        return Err(Error::InsufficientInterior { clearance });
    }
    Ok(VoxelGrid {
        origin: grid.origin,
        voxel_size: grid.voxel_size,
        dims: grid.dims,
        occupied,
        surface_distance,
    })
}
