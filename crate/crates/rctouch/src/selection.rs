//! Touchpoint and wiring-point selections and their JSON document form.

use crate::circuit::WiringMode;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::TriangleMesh;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectedPoint {
    pub id: String,
    /// Lassoed triangle ids of the loaded model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub triangles: Vec<u32>,
    /// Selected surface polygons (each fan-triangulated from its first vertex).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polygons: Vec<Vec<Vec3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<Vec3>,
}

/// Area-weighted centroid and summed area normal of a triangle set.
pub fn area_weighted(tris: impl IntoIterator<Item = [Vec3; 3]>) -> Option<(Vec3, Vec3)> {
    let mut area = 0.0;
    let mut c = Vec3::ZERO;
    let mut n = Vec3::ZERO;
    for [a, b, d] in tris {
        let an = (b - a).cross(d - a);
        let w = an.norm() * 0.5;
        area += w;
        c += (a + b + d) * (w / 3.0);
        n += an;
    }
    (area > 0.0).then(|| (c / area, n))
}

fn fan(poly: &[Vec3]) -> impl Iterator<Item = [Vec3; 3]> + '_ {
    (1..poly.len().saturating_sub(1)).map(move |k| [poly[0], poly[k], poly[k + 1]])
}

impl SelectedPoint {
    pub fn at(id: impl Into<String>, centroid: Vec3) -> Self {
        SelectedPoint {
            id: id.into(),
            centroid: Some(centroid),
            ..Default::default()
        }
    }

    pub fn from_triangles(id: impl Into<String>, mesh: &TriangleMesh, tris: Vec<u32>) -> Result<Self> {
        let mut p = SelectedPoint {
            id: id.into(),
            triangles: tris,
            ..Default::default()
        };
        p.resolve(Some(mesh))?;
        Ok(p)
    }

    /// Centroid and unit normal from triangles (needs the mesh) or polygons.
    fn geometry(&self, mesh: Option<&TriangleMesh>) -> Result<Option<(Vec3, Vec3)>> {
        if !self.triangles.is_empty() {
            if let Some(m) = mesh {
                if let Some(&t) = self.triangles.iter().find(|&&t| t as usize >= m.triangles.len()) {
                    return Err(Error::Selection(format!(
                        "point '{}' references triangle {t}, but the model has {}",
                        self.id,
                        m.triangles.len()
                    )));
                }
                return Ok(area_weighted(self.triangles.iter().map(|&t| m.corners(t as usize))));
            }
        }
        if !self.polygons.is_empty() {
            return Ok(area_weighted(self.polygons.iter().flat_map(|p| fan(p))));
        }
        Ok(None)
    }

    /// Fill in a missing centroid and normal.
    pub fn resolve(&mut self, mesh: Option<&TriangleMesh>) -> Result<()> {
        if self.centroid.is_some() && self.normal.is_some() {
            return Ok(());
        }
        match self.geometry(mesh)? {
            Some((c, n)) => {
                self.centroid.get_or_insert(c);
                if self.normal.is_none() {
                    self.normal = n.normalized();
                }
            }
            None if self.centroid.is_none() && (self.triangles.is_empty() || mesh.is_some()) => {
                return Err(Error::Selection(format!(
                    "point '{}' has no centroid, polygons or triangles",
                    self.id
                )));
            }
            None => {}
        }
        Ok(())
    }

    pub fn centroid(&self) -> Result<Vec3> {
        self.centroid
            .ok_or_else(|| Error::Selection(format!("point '{}' has no resolved centroid", self.id)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchpointSet {
    pub mode: WiringMode,
    pub touchpoints: Vec<SelectedPoint>,
    pub wiring_points: Vec<SelectedPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Touch,
    Wiring,
}

impl TouchpointSet {
    pub fn validate(&self) -> Result<()> {
        let need = self.mode.wiring_points();
        if self.wiring_points.len() != need {
            return Err(Error::Selection(format!(
                "{} mode needs exactly {need} wiring point(s), got {}",
                self.mode.as_str(),
                self.wiring_points.len()
            )));
        }
        if self.touchpoints.is_empty() {
            return Err(Error::Selection("at least one touchpoint is required".into()));
        }
        let mut seen = HashSet::new();
        for p in self.touchpoints.iter().chain(&self.wiring_points) {
            if p.id.is_empty() {
                return Err(Error::Selection("empty point id".into()));
            }
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Selection(format!("duplicate point id '{}'", p.id)));
            }
            if p.centroid.is_none() && p.polygons.is_empty() && p.triangles.is_empty() {
                return Err(Error::Selection(format!(
                    "point '{}' has no centroid, polygons or triangles",
                    p.id
                )));
            }
            if p.centroid.is_some_and(|c| !c.is_finite()) {
                return Err(Error::Selection(format!("point '{}' has a non-finite centroid", p.id)));
            }
        }
        Ok(())
    }

    /// Points in series order: first wiring point, touchpoints, then the second wiring point.
    pub fn ordered(&self) -> Vec<(&SelectedPoint, Role)> {
        let mut v: Vec<(&SelectedPoint, Role)> = Vec::new();
        v.push((&self.wiring_points[0], Role::Wiring));
        v.extend(self.touchpoints.iter().map(|p| (p, Role::Touch)));
        if let Some(w) = self.wiring_points.get(1) {
            v.push((w, Role::Wiring));
        }
        v
    }

    /// Resolve every centroid and normal against the model.
    pub fn resolve(&mut self, mesh: Option<&TriangleMesh>) -> Result<()> {
        for p in self.touchpoints.iter_mut().chain(self.wiring_points.iter_mut()) {
            p.resolve(mesh)?;
        }
        Ok(())
    }

    /// Same set with touchpoints reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> TouchpointSet {
        TouchpointSet {
            mode: self.mode,
            touchpoints: perm.iter().map(|&i| self.touchpoints[i].clone()).collect(),
            wiring_points: self.wiring_points.clone(),
        }
    }
}

/// Parse and validate a selection document; centroids missing from
/// polygon-only entries are computed.
pub fn read_selection(doc: &str) -> Result<TouchpointSet> {
    let mut set: TouchpointSet =
        serde_json::from_str(doc).map_err(|e| Error::Selection(format!("malformed document: {e}")))?;
    set.validate()?;
    set.resolve(None)?;
    Ok(set)
}

pub fn write_selection(set: &TouchpointSet) -> Result<String> {
    set.validate()?;
    Ok(serde_json::to_string_pretty(set)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(mode: WiringMode, wires: usize) -> TouchpointSet {
        TouchpointSet {
            mode,
            touchpoints: (0..5).map(|i| SelectedPoint::at(format!("t{i}"), Vec3::splat(i as f64))).collect(),
            wiring_points: (0..wires).map(|i| SelectedPoint::at(format!("w{i}"), Vec3::X * i as f64)).collect(),
        }
    }

    #[test]
    fn mode_rule() {
        assert!(set(WiringMode::DoubleWire, 2).validate().is_ok());
        assert!(set(WiringMode::SingleWire, 2).validate().is_err());
        assert!(set(WiringMode::SingleWire, 1).validate().is_ok());
    }

    #[test]
    fn duplicate_ids() {
        let mut s = set(WiringMode::SingleWire, 1);
        s.touchpoints[1].id = "t0".into();
        assert!(matches!(s.validate(), Err(Error::Selection(_))));
    }

    #[test]
    fn polygon_centroid() {
        let doc = r#"{"mode":"single-wire","touchpoints":[{"id":"a","polygons":[[[0,0,0],[2,0,0],[2,2,0],[0,2,0]]]}],
            "wiring_points":[{"id":"w","centroid":[9,9,9]}]}"#;
        let s = read_selection(doc).unwrap();
        assert_eq!(s.touchpoints[0].centroid, Some(Vec3::new(1.0, 1.0, 0.0)));
        assert_eq!(s.touchpoints[0].normal, Some(Vec3::Z));
    }
}
