//! Touch spheres clipped to the model and protruding wiring cylinders.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::{cylinder, icosphere, MeshIndex, TriangleMesh, SURFACE_EPS};
use crate::selection::TouchpointSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointParams {
    pub sphere_diameter: f64,
    pub cyl_diameter: f64,
    pub cyl_length: f64,
    pub sphere_subdivisions: u32,
    pub cyl_segments: usize,
    pub surface_eps: f64,
}

impl Default for PointParams {
    fn default() -> Self {
        PointParams {
            sphere_diameter: 12.0,
            cyl_diameter: 4.0,
            cyl_length: 10.0,
            sphere_subdivisions: 4,
            cyl_segments: 32,
            surface_eps: SURFACE_EPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchSolid {
    pub id: String,
    pub center: Vec3,
    pub diameter: f64,
    pub mesh: TriangleMesh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WiringCylinder {
    pub id: String,
    pub center: Vec3,
    pub axis: Vec3,
    pub diameter: f64,
    pub length: f64,
    pub mesh: TriangleMesh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointGeometry {
    pub touch_solids: Vec<TouchSolid>,
    pub wiring_solids: Vec<WiringCylinder>,
    pub warnings: Vec<String>,
}

impl PointGeometry {
    pub fn merged(&self) -> TriangleMesh {
        TriangleMesh::merge(
            self.touch_solids
                .iter()
                .map(|s| &s.mesh)
                .chain(self.wiring_solids.iter().map(|w| &w.mesh)),
        )
    }
}

/// Sphere ∩ model: sphere vertices outside the model are pulled onto the
/// nearest surface point, which keeps the fragment closed.
pub fn clipped_sphere(index: &MeshIndex, center: Vec3, diameter: f64, subdivisions: u32) -> Option<TriangleMesh> {
    let mut s = icosphere(center, diameter / 2.0, subdivisions);
    let moved: Vec<(Vec3, bool)> = s
        .vertices
        .par_iter()
        .map(|&v| {
            if index.contains(v) {
                (v, true)
            } else {
                (index.closest(v).map_or(v, |(q, _)| q), false)
            }
        })
        .collect();
    if !moved.iter().any(|m| m.1) {
        return None;
    }
    s.vertices = moved.into_iter().map(|m| m.0).collect();
    Some(s)
}

/// Outward unit normal at a surface point: flip `n` if stepping along it stays inside.
fn outward(index: &MeshIndex, p: Vec3, n: Vec3, step: f64) -> Vec3 {
    if index.contains(p + n * step) && !index.contains(p - n * step) {
        -n
    } else {
        n
    }
}

pub fn build_point_geometry(
    mesh: &TriangleMesh,
    index: &MeshIndex,
    points: &TouchpointSet,
    params: &PointParams,
) -> Result<PointGeometry> {
    points.validate()?;
    if !(params.sphere_diameter > 0.0 && params.cyl_diameter > 0.0 && params.cyl_length > 0.0) {
        return Err(Error::Invalid("point geometry sizes must be positive".into()));
    }
    let near_surface = |id: &str, c: Vec3| -> Result<(Vec3, usize)> {
        let (q, t) = index
            .closest(c)
            .ok_or_else(|| Error::PointGeometry("empty model".into()))?;
        let d = q.dist(c);
        if d > params.surface_eps {
            return Err(Error::PointGeometry(format!(
                "point '{id}' centroid is {d:.3} mm from the surface (limit {} mm)",
                params.surface_eps
            )));
        }
        Ok((q, t))
    };

    let mut touch_solids = Vec::new();
    for p in &points.touchpoints {
        let c = p.centroid()?;
        near_surface(&p.id, c)?;
        let m = clipped_sphere(index, c, params.sphere_diameter, params.sphere_subdivisions)
            .ok_or_else(|| Error::PointGeometry(format!("touch sphere '{}' lies entirely outside the model", p.id)))?;
        touch_solids.push(TouchSolid {
            id: p.id.clone(),
            center: c,
            diameter: params.sphere_diameter,
            mesh: m,
        });
    }

    let mut warnings = Vec::new();
    for i in 0..touch_solids.len() {
        for j in i + 1..touch_solids.len() {
            let d = touch_solids[i].center.dist(touch_solids[j].center);
            if d < params.sphere_diameter {
                warnings.push(format!(
                    "touch solids '{}' and '{}' overlap (centres {d:.2} mm apart)",
                    touch_solids[i].id, touch_solids[j].id
                ));
            }
        }
    }

    let mut wiring_solids = Vec::new();
    for p in &points.wiring_points {
        let c = p.centroid()?;
        let (_, tri) = near_surface(&p.id, c)?;
        let n = p
            .normal
            .or_else(|| mesh.area_normal(tri).normalized())
            .ok_or_else(|| Error::PointGeometry(format!("point '{}' has no usable normal", p.id)))?;
        let axis = outward(index, c, n, params.cyl_length * 0.25);
        wiring_solids.push(WiringCylinder {
            id: p.id.clone(),
            center: c,
            axis,
            diameter: params.cyl_diameter,
            length: params.cyl_length,
            mesh: cylinder(c, axis, params.cyl_diameter, params.cyl_length, params.cyl_segments),
        });
    }
    Ok(PointGeometry {
        touch_solids,
        wiring_solids,
        warnings,
    })
}
