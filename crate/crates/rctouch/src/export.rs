//! Fabrication bundle: four binary STL parts plus a JSON manifest.

use crate::circuit::{CircuitSpec, DelayProfile, Method, Session, WiringMode};
use crate::error::{Error, Result};
use crate::geom::{any_orthogonal, point_polyline_dist, Aabb, Vec3};
use crate::mesh::{cylinder, icosphere, write_stl, TriangleMesh};
use crate::routing::Conductivity;
use crate::selection::TouchpointSet;
use crate::trace::{Conduit, SegKind, SerpentinePath};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MANIFEST_FORMAT: &str = "rctouch-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const PART_FILES: [&str; 4] = ["body.stl", "traces.stl", "points.stl", "conduits.stl"];
pub const MANIFEST_FILE: &str = "manifest.json";

/// Pull `p` back onto the capsule if it lies outside.
fn clamp_into(conduit: &Conduit, p: Vec3) -> Vec3 {
    let r = conduit.diameter * 0.5;
    let line = &conduit.centerline;
    let mut best = (f64::INFINITY, p);
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ab = b - a;
        let t = if ab.norm2() > 0.0 { ((p - a).dot(ab) / ab.norm2()).clamp(0.0, 1.0) } else { 0.0 };
        let q = a + ab * t;
        let d = q.dist(p);
        if d < best.0 {
            best = (d, q);
        }
    }
    let (d, q) = best;
    if d <= r {
        p
    } else {
        q + (p - q) * (r / d)
    }
}

/// Hexahedron from eight corners indexed `s * 4 + side * 2 + up` (s along the segment).
fn hexahedron(c: [Vec3; 8]) -> TriangleMesh {
    let quads = [
        [0, 1, 5, 4], // side -
        [2, 6, 7, 3], // side +
        [0, 4, 6, 2], // up -
        [1, 3, 7, 5], // up +
        [0, 2, 3, 1], // start cap
        [4, 5, 7, 6], // end cap
    ];
    let mut tris: Vec<[u32; 3]> = Vec::with_capacity(12);
    for q in quads {
        tris.push([q[0], q[1], q[2]]);
        tris.push([q[0], q[2], q[3]]);
    }
    let mut m = TriangleMesh {
        vertices: c.to_vec(),
        triangles: tris,
    };
    if m.volume() < 0.0 {
        m = m.flipped();
    }
    m
}

/// Square-section sweep of a serpentine: in-layer runs are `thickness_xy`
/// wide and one `layer_height` tall, staircase links `thickness_xy` square.
/// Corners beyond the conduit wall are pulled back radially onto it.
pub fn trace_solid(path: &SerpentinePath, conduit: &Conduit, layer_height: f64) -> TriangleMesh {
    let mut parts = Vec::with_capacity(path.kinds.len());
    for (a, b, kind) in path.segments() {
        let Some(d) = (b - a).normalized() else { continue };
        let up = (Vec3::Z - d * d.z).normalized().filter(|_| d.z.abs() < 0.999).unwrap_or_else(|| any_orthogonal(d));
        let side = d.cross(up);
        let (hw, hh) = match kind {
            SegKind::Xy => (path.thickness_xy * 0.5, layer_height * 0.5),
            SegKind::Z => (path.thickness_xy * 0.5, path.thickness_xy * 0.5),
        };
        let mut c = [Vec3::ZERO; 8];
        for (s, base) in [a, b].into_iter().enumerate() {
            for sd in 0..2 {
                for u in 0..2 {
                    let sx = if sd == 0 { -hw } else { hw };
                    let ux = if u == 0 { -hh } else { hh };
                    c[s * 4 + sd * 2 + u] = clamp_into(conduit, base + side * sx + up * ux);
                }
            }
        }
        parts.push(hexahedron(c));
    }
    TriangleMesh::merge(&parts)
}

/// Capsule shell: a cylinder per centerline piece and a ball per vertex, overlapping.
pub fn conduit_shell(conduit: &Conduit, segments: usize) -> TriangleMesh {
    let mut parts = Vec::new();
    let r = conduit.diameter * 0.5;
    for w in conduit.centerline.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = a.dist(b);
        if len > 0.0 {
            parts.push(cylinder((a + b) * 0.5, (b - a) / len, conduit.diameter, len, segments));
        }
    }
    for &p in &conduit.centerline {
        parts.push(icosphere(p, r, 1));
    }
    TriangleMesh::merge(&parts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConduitRecord {
    pub from_id: String,
    pub to_id: String,
    pub conductivity: Conductivity,
    pub diameter: f64,
    pub length: f64,
    pub centerline: Vec<Vec3>,
    /// Target resistance the fill was tuned to (ohm), if any.
    pub target_resistance: Option<f64>,
    /// Model estimate for the emitted serpentine (ohm).
    pub resistance: Option<f64>,
    pub length_xy: Option<f64>,
    pub length_z: Option<f64>,
    pub ray_margin: Option<f64>,
    pub layer_margin: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub file: String,
    pub contents: String,
    pub material: String,
    pub infill: String,
    pub triangles: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub mesh: String,
    pub triangles: usize,
    pub vertices: usize,
    pub bounding_box: Aabb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub mode: WiringMode,
    pub input: InputRecord,
    pub selection: TouchpointSet,
    pub parameters: serde_json::Value,
    pub circuit: CircuitSpec,
    pub conduits: Vec<ConduitRecord>,
    pub delay_profile: DelayProfile,
    pub delay_profile_approx: DelayProfile,
    pub min_separation: Option<f64>,
    pub parts: Vec<PartRecord>,
    pub warnings: Vec<String>,
}

impl Manifest {
    /// Recompute the exact delay profile from the stored circuit and compare.
    pub fn verify_profile(&self, rel_tol: f64) -> Result<()> {
        let fresh = DelayProfile::compute(&self.circuit, Method::Exact);
        for (p, (a, b)) in fresh.times.iter().zip(&self.delay_profile.times).enumerate() {
            let ok = match (a.time(), b.time()) {
                (Some(x), Some(y)) => ((x - y) / y).abs() <= rel_tol,
                _ => a == b,
            };
            if !ok {
                return Err(Error::Export(format!(
                    "touch {} re-simulates to {a:?}, manifest holds {b:?}",
                    p + 1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FabricationBundle {
    pub body: TriangleMesh,
    pub traces: TriangleMesh,
    pub points_solid: TriangleMesh,
    pub conduit_shells: TriangleMesh,
    pub manifest: Manifest,
}

impl FabricationBundle {
    pub fn parts(&self) -> [(&'static str, &TriangleMesh); 4] {
        [
            (PART_FILES[0], &self.body),
            (PART_FILES[1], &self.traces),
            (PART_FILES[2], &self.points_solid),
            (PART_FILES[3], &self.conduit_shells),
        ]
    }

    /// Binary STL bytes per part.
    pub fn stl_bytes(&self) -> Vec<(&'static str, Vec<u8>)> {
        self.parts()
            .iter()
            .map(|(f, m)| (*f, write_stl(m, f.trim_end_matches(".stl"))))
            .collect()
    }

    pub fn manifest_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.manifest)?)
    }
}

pub fn part_records(traces: usize, points: usize, conduits: usize, body: usize) -> Vec<PartRecord> {
    vec![
        PartRecord {
            file: PART_FILES[0].into(),
            contents: "original model".into(),
            material: "non-conductive".into(),
            infill: "5-20% (20% gyroid recommended)".into(),
            triangles: body,
        },
        PartRecord {
            file: PART_FILES[1].into(),
            contents: "serpentine conductive traces".into(),
            material: "conductive".into(),
            infill: "100% rectilinear".into(),
            triangles: traces,
        },
        PartRecord {
            file: PART_FILES[2].into(),
            contents: "touchpoints and wiring connection points".into(),
            material: "conductive".into(),
            infill: "100% rectilinear".into(),
            triangles: points,
        },
        PartRecord {
            file: PART_FILES[3].into(),
            contents: "conduits encasing the traces and wires".into(),
            material: "conductive for high-conductivity conduits".into(),
            infill: "100% rectilinear".into(),
            triangles: conduits,
        },
    ]
}

/// Write the four parts and the manifest into `dir`.
pub fn export_bundle(bundle: &FabricationBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    if bundle.traces.triangles.is_empty() {
        return Err(Error::Export(
            "no trace geometry: the network has no filled low-conductivity conduit".into(),
        ));
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Export(format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for (name, bytes) in bundle.stl_bytes() {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::Export(format!("cannot write {}: {e}", p.display())))?;
        written.push(p);
    }
    let p = dir.join(MANIFEST_FILE);
    std::fs::write(&p, bundle.manifest_json()?)
        .map_err(|e| Error::Export(format!("cannot write {}: {e}", p.display())))?;
    written.push(p);
    Ok(written)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Tab-separated per-touchpoint delays for charting.
pub fn delay_table(exact: &DelayProfile, approx: &DelayProfile) -> String {
    let mut s = String::from("touch\texact_s\tapprox_s\n");
    for (p, (a, b)) in exact.times.iter().zip(&approx.times).enumerate() {
        let f = |t: &crate::circuit::ThresholdTime| match t.time() {
            Some(x) => format!("{x:.9e}"),
            None => format!("{t:?}").to_lowercase(),
        };
        s.push_str(&format!("{}\t{}\t{}\n", p + 1, f(a), f(b)));
    }
    s
}

/// Tab-separated session trace; untouched samples print as `none`.
pub fn session_table(session: &Session) -> String {
    let mut s = String::from("time_s\ttouch\tdelay_s\n");
    for x in &session.samples {
        let touch = x.touch.map_or("none".to_string(), |t| t.to_string());
        let delay = if x.delay.is_finite() { format!("{:.9e}", x.delay) } else { "none".into() };
        s.push_str(&format!("{:.6}\t{touch}\t{delay}\n", x.time));
    }
    s
}

/// Largest distance by which sampled trace-solid points leave the capsule
/// (0 when contained). Samples lie on a `step` lattice inside each hexahedron.
pub fn trace_containment_excess(solid: &TriangleMesh, conduit: &Conduit, step: f64) -> f64 {
    let r = conduit.diameter * 0.5;
    let mut worst: f64 = 0.0;
    for h in 0..solid.triangles.len() / 12 {
        let c: Vec<Vec3> = (0..8).map(|k| solid.vertices[h * 8 + k]).collect();
        let ext = c.iter().map(|p| p.dist(c[0])).fold(0.0, f64::max);
        let n = ((ext / step).ceil() as usize).clamp(1, 64);
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let (u, v, w) = (i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64);
                    let lerp4 = |s: usize| {
                        let a = c[s * 4].lerp(c[s * 4 + 1], w);
                        let b = c[s * 4 + 2].lerp(c[s * 4 + 3], w);
                        a.lerp(b, v)
                    };
                    let p = lerp4(0).lerp(lerp4(1), u);
                    worst = worst.max(point_polyline_dist(p, &conduit.centerline) - r);
                }
            }
        }
    }
    worst
}
