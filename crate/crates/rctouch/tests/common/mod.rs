//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use rctouch::circuit::WiringMode;
use rctouch::geom::Vec3;
use rctouch::mesh::{box_mesh, MeshIndex, TriangleMesh, VoxelizeParams};
use rctouch::pipeline::PipelineConfig;
use rctouch::routing::{Conductivity, ConduitNetwork};
use rctouch::selection::{SelectedPoint, TouchpointSet};

/// 120 x 60 x 40 mm box centred on the origin.
pub fn slab_box() -> TriangleMesh {
    box_mesh(Vec3::new(-60.0, -30.0, -20.0), Vec3::new(60.0, 30.0, 20.0))
}

/// Four touchpoints along the top face, wiring on the end faces.
pub fn box_selection(mode: WiringMode) -> TouchpointSet {
    let mut wiring = vec![SelectedPoint::at("w1", Vec3::new(-60.0, 0.0, 0.0))];
    if mode == WiringMode::DoubleWire {
        wiring.push(SelectedPoint::at("w2", Vec3::new(60.0, 0.0, 0.0)));
    }
    TouchpointSet {
        mode,
        touchpoints: (0..4)
            .map(|i| SelectedPoint::at(format!("t{i}"), Vec3::new(-36.0 + 24.0 * i as f64, 0.0, 20.0)))
            .collect(),
        wiring_points: wiring,
    }
}

/// Default pipeline settings at a coarse, fast voxel size.
pub fn fast_config(voxel: f64) -> PipelineConfig {
    PipelineConfig {
        voxel: VoxelizeParams::with_size(voxel),
        ..Default::default()
    }
}

/// Surface point closest to `center + reach * dir`.
pub fn surface_toward(mesh: &TriangleMesh, center: Vec3, dir: Vec3, reach: f64) -> Vec3 {
    let idx = MeshIndex::new(mesh);
    idx.closest(center + dir.normalized().unwrap() * reach).unwrap().0
}

/// Selection of surface points for any closed fixture.
pub fn selection_from(mode: WiringMode, touches: &[Vec3], wiring: &[Vec3]) -> TouchpointSet {
    TouchpointSet {
        mode,
        touchpoints: touches
            .iter()
            .enumerate()
            .map(|(i, &p)| SelectedPoint::at(format!("t{i}"), p))
            .collect(),
        wiring_points: wiring
            .iter()
            .enumerate()
            .map(|(i, &p)| SelectedPoint::at(format!("w{}", i + 1), p))
            .collect(),
    }
}

/// Smallest surface distance along the routed part of every leg, skipping
/// the straight stubs to the surface points.
pub fn routed_clearance(mesh: &TriangleMesh, net: &ConduitNetwork, step: f64) -> f64 {
    let idx = MeshIndex::new(mesh);
    let mut worst = f64::INFINITY;
    for seg in &net.segments {
        let c = &seg.centerline;
        if c.len() < 3 {
            continue;
        }
        let inner = &c[1..c.len() - 1];
        for w in inner.windows(2).chain(std::iter::once(&inner[..1])) {
            let (a, b) = (w[0], *w.last().unwrap());
            let n = ((a.dist(b) / step).ceil() as usize).max(1);
            for s in 0..=n {
                worst = worst.min(idx.distance(a.lerp(b, s as f64 / n as f64)));
            }
        }
    }
    worst
}

pub fn low_count(net: &ConduitNetwork) -> usize {
    net.segments.iter().filter(|s| s.conductivity == Conductivity::Low).count()
}
