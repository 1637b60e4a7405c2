//! Serpentine conductive traces inside conduits.
//!
//! A conduit is a sphere-swept polyline (capsule chain) of diameter `D`. Each
//! straight piece of the centerline gets a local frame: `s` along the piece,
//! `w` the global z axis projected off `s` (x when the piece is vertical) and
//! `u = w x s`. Layers are planes of constant `w`; inside a layer, rays along
//! `u` are clipped to the capsule wall and joined end to end into a
//! serpentine. Consecutive layers are joined by steps along `w`.
//!
//! Counts follow the margins, positions follow the counts: `m` layers (odd,
//! `m + 1 <= D / layer_margin`) split the diameter into `m + 1` equal gaps,
//! and `n = floor(len / ray_margin) + 1` rays span the usable length evenly.
//! Both spacings therefore stay at or above their margins, and widening the
//! margins can only remove rays or layers, never lengthen the trace.

use crate::error::{Error, Result};
use crate::geom::{point_polyline_dist, polyline_length, Vec3};
use serde::{Deserialize, Serialize};

pub const DEFAULT_MARGIN: f64 = 1.2;
pub const DEFAULT_THICKNESS_XY: f64 = 0.8;
pub const DEFAULT_THICKNESS_Z: f64 = 1.2;
pub const DEFAULT_LAYER_HEIGHT: f64 = 0.24;

/// Measured trace resistance (ohm) for in-plane lengths (mm), averaged over samples.
pub const CALIBRATION_XY: [(f64, f64); 4] =
    [(40.0, 10610.0), (80.0, 23357.0), (120.0, 32927.0), (160.0, 41623.0)];
/// Measured trace resistance (ohm) for vertical lengths (mm).
pub const CALIBRATION_Z: [(f64, f64); 4] =
    [(10.0, 11400.0), (20.0, 24274.0), (30.0, 35023.0), (40.0, 41587.0)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResistivityModel {
    /// Ohm per mm for in-layer trace.
    pub rho_xy: f64,
    /// Ohm per mm for vertical trace.
    pub rho_z: f64,
    #[serde(default)]
    pub intercept_xy: f64,
    #[serde(default)]
    pub intercept_z: f64,
}

impl Default for ResistivityModel {
    fn default() -> Self {
        ResistivityModel {
            rho_xy: 256.0,
            rho_z: 1013.0,
            intercept_xy: 0.0,
            intercept_z: 0.0,
        }
    }
}

impl ResistivityModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_xy > 0.0 && self.rho_z > 0.0) {
            return Err(Error::Invalid("resistivities must be positive".into()));
        }
        Ok(())
    }

    /// Least-squares line `R = a * len + b` through measured samples.
    pub fn fit_line(samples: &[(f64, f64)]) -> (f64, f64) {
        let n = samples.len() as f64;
        let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
        let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
        let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
        let sxx: f64 = samples.iter().map(|s| (s.0 - mx) * (s.0 - mx)).sum();
        let a = sxy / sxx;
        (a, my - a * mx)
    }

    /// Model with slopes and intercepts regressed on the calibration tables.
    pub fn regressed() -> Self {
        let (rho_xy, intercept_xy) = Self::fit_line(&CALIBRATION_XY);
        let (rho_z, intercept_z) = Self::fit_line(&CALIBRATION_Z);
        ResistivityModel {
            rho_xy,
            rho_z,
            intercept_xy,
            intercept_z,
        }
    }

    pub fn resistance(&self, length_xy: f64, length_z: f64) -> f64 {
        let mut r = self.rho_xy * length_xy + self.rho_z * length_z;
        if length_xy > 0.0 {
            r += self.intercept_xy;
        }
        if length_z > 0.0 {
            r += self.intercept_z;
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conduit {
    pub centerline: Vec<Vec3>,
    pub diameter: f64,
}

impl Conduit {
    pub fn straight(a: Vec3, b: Vec3, diameter: f64) -> Self {
        Conduit {
            centerline: vec![a, b],
            diameter,
        }
    }

    pub fn length(&self) -> f64 {
        polyline_length(&self.centerline)
    }

    /// Point-in-capsule test with absolute tolerance `eps`.
    pub fn contains(&self, p: Vec3, eps: f64) -> bool {
        point_polyline_dist(p, &self.centerline) <= self.diameter * 0.5 + eps
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FillParams {
    pub ray_margin: f64,
    pub layer_margin: f64,
    pub thickness_xy: f64,
    pub thickness_z: f64,
    /// Height of in-layer trace solids on export.
    pub layer_height: f64,
}

impl Default for FillParams {
    fn default() -> Self {
        FillParams {
            ray_margin: DEFAULT_MARGIN,
            layer_margin: DEFAULT_MARGIN,
            thickness_xy: DEFAULT_THICKNESS_XY,
            thickness_z: DEFAULT_THICKNESS_Z,
            layer_height: DEFAULT_LAYER_HEIGHT,
        }
    }
}

impl FillParams {
    pub fn scaled(&self, k: f64) -> FillParams {
        FillParams {
            ray_margin: self.ray_margin * k,
            layer_margin: self.layer_margin * k,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegKind {
    Xy,
    Z,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerpentinePath {
    pub points: Vec<Vec3>,
    /// One entry per segment (`points.len() - 1`).
    pub kinds: Vec<SegKind>,
    pub length_xy: f64,
    pub length_z: f64,
    pub ray_margin: f64,
    pub layer_margin: f64,
    pub thickness_xy: f64,
    pub thickness_z: f64,
    pub layers: usize,
    pub rays: usize,
    /// Centerline pieces that held no rays (too short after joint trimming).
    pub skipped_pieces: Vec<usize>,
}

impl SerpentinePath {
    pub fn total_length(&self) -> f64 {
        polyline_length(&self.points)
    }

    /// Segment endpoints with their kind.
    pub fn segments(&self) -> impl Iterator<Item = (Vec3, Vec3, SegKind)> + '_ {
        self.points
            .windows(2)
            .zip(self.kinds.iter())
            .map(|(w, k)| (w[0], w[1], *k))
    }
}

pub fn estimate_resistance(path: &SerpentinePath, model: &ResistivityModel) -> f64 {
    model.resistance(path.length_xy, path.length_z)
}

/// Douglas-Peucker simplification keeping the endpoints.
pub fn simplify_polyline(line: &[Vec3], tol: f64) -> Vec<Vec3> {
    let mut pts: Vec<Vec3> = Vec::with_capacity(line.len());
    for &p in line {
        if pts.last().is_none_or(|q: &Vec3| q.dist(p) > 1e-9) {
            pts.push(p);
        }
    }
    if pts.len() <= 2 {
        return pts;
    }
    let mut keep = vec![false; pts.len()];
    keep[0] = true;
    keep[pts.len() - 1] = true;
    let mut stack = vec![(0usize, pts.len() - 1)];
    while let Some((a, b)) = stack.pop() {
        let mut best = (0.0, 0usize);
        for i in a + 1..b {
            let d = crate::geom::point_segment_dist(pts[i], pts[a], pts[b]);
            if d > best.0 {
                best = (d, i);
            }
        }
        if best.0 > tol {
            keep[best.1] = true;
            stack.push((a, best.1));
            stack.push((best.1, b));
        }
    }
    pts.into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

struct Piece {
    a: Vec3,
    s: Vec3,
    u: Vec3,
    w: Vec3,
    len: f64,
}

impl Piece {
    fn new(a: Vec3, b: Vec3) -> Piece {
        let s = (b - a).normalized().expect("zero-length piece");
        let w = if s.z.abs() < 0.999 {
            (Vec3::Z - s * s.z).normalized().unwrap()
        } else {
            (Vec3::X - s * s.x).normalized().unwrap()
        };
        let u = w.cross(s);
        Piece {
            a,
            s,
            u,
            w,
            len: a.dist(b),
        }
    }

    fn at(&self, s: f64, u: f64, h: f64) -> Vec3 {
        self.a + self.s * s + self.u * u + self.w * h
    }
}

/// Layer offsets along `w` for diameter `d` and layer margin `lm`.
pub fn layer_offsets(d: f64, lm: f64) -> Vec<f64> {
    let max = (d / lm + 1e-9).floor() as i64 - 1;
    let mut m = if max < 1 { 1 } else { max };
    if m % 2 == 0 {
        m -= 1;
    }
    let m = m as usize;
    let gap = d / (m as f64 + 1.0);
    (0..m)
        .map(|i| (i as f64 - (m as f64 - 1.0) / 2.0) * gap)
        .collect()
}

/// Ray positions along `[lo, hi]` for ray margin `rm`.
fn ray_positions(lo: f64, hi: f64, rm: f64) -> Vec<f64> {
    if hi < lo - 1e-12 {
        return Vec::new();
    }
    let span = (hi - lo).max(0.0);
    let n = (span / rm + 1e-9).floor() as usize + 1;
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|k| lo + span * k as f64 / (n - 1) as f64)
        .collect()
}

struct Builder {
    points: Vec<Vec3>,
    kinds: Vec<SegKind>,
}

impl Builder {
    fn push(&mut self, p: Vec3, kind: SegKind) {
        if let Some(last) = self.points.last() {
            if last.dist(p) <= 1e-12 {
                return;
            }
            self.kinds.push(kind);
        }
        self.points.push(p);
    }
}

/// Offset of `p` from the axis of piece `pc`, projected onto the joint's bisector plane.
fn bisector_offset(p: Vec3, pc: &Piece, normal: Vec3) -> Vec3 {
    let along = (p - pc.a).dot(pc.s);
    let off = p - (pc.a + pc.s * along);
    off - normal * off.dot(normal)
}

fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    let lim = max * (1.0 - 1e-9);
    if n > lim {
        v * (lim / n)
    } else {
        v
    }
}

/// Fill a conduit with a serpentine trace at the given margins.
pub fn fill_serpentine(conduit: &Conduit, params: &FillParams) -> Result<SerpentinePath> {
    let required = params.ray_margin + params.thickness_xy;
    if !(conduit.diameter >= required) {
        return Err(Error::Unfillable {
            diameter: conduit.diameter,
            required,
        });
    }
    fill_unchecked(conduit, params)
}

fn fill_unchecked(conduit: &Conduit, params: &FillParams) -> Result<SerpentinePath> {
    if !(params.ray_margin > 0.0 && params.layer_margin > 0.0) {
        return Err(Error::Invalid("margins must be positive".into()));
    }
    let line = simplify_polyline(&conduit.centerline, 1e-6 * conduit.diameter);
    if line.len() < 2 {
        return Err(Error::Invalid("conduit centerline has zero length".into()));
    }
    let r = conduit.diameter * 0.5;
    let rm = params.ray_margin;
    let pieces: Vec<Piece> = line.windows(2).map(|w| Piece::new(w[0], w[1])).collect();

    // Trim ray ranges near joints so rays of neighbouring pieces keep
    // `rm / 2` from the bisector plane on the inside of the bend.
    let mut trim = vec![0.0; pieces.len().saturating_sub(1)];
    for (j, t) in trim.iter_mut().enumerate() {
        let cos = pieces[j].s.dot(pieces[j + 1].s).clamp(-1.0, 1.0);
        let half = 0.5 * cos.acos();
        let ch = half.cos().max(1e-6);
        *t = r * half.tan().min(1e6) + rm / (2.0 * ch);
    }

    let layers = layer_offsets(conduit.diameter, params.layer_margin);
    let m = layers.len();
    let half: Vec<f64> = layers.iter().map(|h| (r * r - h * h).max(0.0).sqrt()).collect();

    let mut b = Builder {
        points: Vec::new(),
        kinds: Vec::new(),
    };
    let mut skipped = Vec::new();
    let mut total_rays = 0usize;
    // Offset (in the bisector plane) carried across pieces without rays.
    let mut pending_link: Option<Vec3> = None;
    let last_piece = pieces.len() - 1;

    for (j, pc) in pieces.iter().enumerate() {
        let lo = if j == 0 { 0.0 } else { trim[j - 1] };
        let hi = if j == last_piece { pc.len } else { pc.len - trim[j] };
        let rays = ray_positions(lo, hi, rm);
        if rays.is_empty() {
            skipped.push(j);
            if j == 0 {
                b.push(pc.a, SegKind::Xy);
                pending_link = Some(Vec3::ZERO);
            } else if pending_link.is_none() {
                let normal = (pieces[j - 1].s + pc.s).normalized().unwrap_or(pc.s);
                let prev = *b.points.last().unwrap();
                let off = clamp_norm(bisector_offset(prev, &pieces[j - 1], normal), r);
                b.push(line[j] + off, SegKind::Xy);
                pending_link = Some(off);
            }
            let off = pending_link.unwrap();
            b.push(line[j + 1] + off, SegKind::Xy);
            continue;
        }
        total_rays += rays.len() * m;

        let ascending = j % 2 == 0;
        let order: Vec<usize> = if ascending {
            (0..m).collect()
        } else {
            (0..m).rev().collect()
        };

        // Pick the starting side that keeps the link from the previous piece short.
        let start_side = if j == 0 || b.points.is_empty() {
            -1.0
        } else {
            let prev = *b.points.last().unwrap();
            let first_s = rays[0];
            let li = order[0];
            let cand = |side: f64| pc.at(first_s, side * half[li], layers[li]);
            if cand(1.0).dist(prev) < cand(-1.0).dist(prev) {
                1.0
            } else {
                -1.0
            }
        };

        let mut seq: Vec<(Vec3, SegKind)> = Vec::new();
        let mut side = start_side;
        for (vi, &li) in order.iter().enumerate() {
            let h = layers[li];
            let y = half[li];
            let y_in = if vi > 0 { y.min(half[order[vi - 1]]) } else { y };
            let y_out = if vi + 1 < m { y.min(half[order[vi + 1]]) } else { y };
            let forward = vi % 2 == 0;
            let idx: Vec<usize> = if forward {
                (0..rays.len()).collect()
            } else {
                (0..rays.len()).rev().collect()
            };
            for (k, &ri) in idx.iter().enumerate() {
                let s = rays[ri];
                let ys = if k == 0 { y_in } else { y };
                let ye = if k + 1 == idx.len() { y_out } else { y };
                let start = pc.at(s, side * ys, h);
                let kind_in = if k == 0 && vi > 0 { SegKind::Z } else { SegKind::Xy };
                seq.push((start, kind_in));
                seq.push((pc.at(s, -side * ye, h), SegKind::Xy));
                side = -side;
            }
        }

        let first = seq[0].0;
        if b.points.is_empty() {
            if rays[0] > 1e-9 {
                let li = order[0];
                b.push(pc.at(0.0, start_side * half[li], layers[li]), SegKind::Xy);
            }
        } else {
            let joint = line[j];
            let normal = (pieces[j - 1].s + pc.s).normalized().unwrap_or(pc.s);
            let arrive = bisector_offset(first, pc, normal);
            let off = match pending_link {
                Some(off) => {
                    b.push(joint + off, SegKind::Xy);
                    clamp_norm(arrive, r)
                }
                None => {
                    let prev = *b.points.last().unwrap();
                    let leave = bisector_offset(prev, &pieces[j - 1], normal);
                    clamp_norm((leave + arrive) * 0.5, r)
                }
            };
            b.push(joint + off, SegKind::Xy);
        }
        pending_link = None;
        for (p, k) in seq {
            b.push(p, k);
        }
        if j == last_piece {
            let last_s = *rays.last().unwrap();
            let end_s = if m % 2 == 1 { last_s } else { rays[0] };
            let target = if m % 2 == 1 { pc.len } else { 0.0 };
            if (end_s - target).abs() > 1e-9 {
                let p = *b.points.last().unwrap();
                let along = (p - pc.a).dot(pc.s);
                b.push(p + pc.s * (target - along), SegKind::Xy);
            }
        }
    }

    let mut length_xy = 0.0;
    let mut length_z = 0.0;
    for (w, k) in b.points.windows(2).zip(&b.kinds) {
        let l = w[0].dist(w[1]);
        match k {
            SegKind::Xy => length_xy += l,
            SegKind::Z => length_z += l,
        }
    }
    Ok(SerpentinePath {
        points: b.points,
        kinds: b.kinds,
        length_xy,
        length_z,
        ray_margin: params.ray_margin,
        layer_margin: params.layer_margin,
        thickness_xy: params.thickness_xy,
        thickness_z: params.thickness_z,
        layers: m,
        rays: total_rays,
        skipped_pieces: skipped,
    })
}

/// Resistance of the fill at margin scale `k`.
pub fn resistance_at_scale(
    conduit: &Conduit,
    params: &FillParams,
    model: &ResistivityModel,
    k: f64,
) -> Result<f64> {
    Ok(estimate_resistance(&fill_unchecked(conduit, &params.scaled(k))?, model))
}

/// Scale factor beyond which every piece holds one ray and one layer.
fn coarsest_scale(conduit: &Conduit, params: &FillParams) -> f64 {
    let longest = conduit
        .centerline
        .windows(2)
        .map(|w| w[0].dist(w[1]))
        .fold(conduit.diameter, f64::max);
    2.0 * longest / params.ray_margin.min(params.layer_margin) + 1.0
}

/// Largest resistance this conduit can hold (minimum margins).
pub fn max_resistance(conduit: &Conduit, params: &FillParams, model: &ResistivityModel) -> Result<f64> {
    Ok(estimate_resistance(&fill_serpentine(conduit, params)?, model))
}

/// Resistance of the fill at explicit margins.
fn resistance_at(conduit: &Conduit, params: &FillParams, model: &ResistivityModel, rm: f64, lm: f64) -> Result<f64> {
    let p = FillParams {
        ray_margin: rm,
        layer_margin: lm,
        ..*params
    };
    Ok(estimate_resistance(&fill_unchecked(conduit, &p)?, model))
}

/// Layer margins that realise each odd layer count from the densest down to one.
fn layer_margin_options(diameter: f64, min_lm: f64) -> Vec<f64> {
    let top = layer_offsets(diameter, min_lm).len();
    let mut out = vec![min_lm];
    let mut m = top;
    while m > 1 {
        m -= 2;
        out.push(diameter / (m as f64 + 1.5));
    }
    out
}

/// Widen the margins until the fill hits `target` ohm.
///
/// For each feasible layer count the ray margin is bisected (resistance is a
/// non-increasing step function of it); the setting closest to the target wins.
pub fn tune_to_target(
    conduit: &Conduit,
    target: f64,
    tolerance: f64,
    params: &FillParams,
    model: &ResistivityModel,
) -> Result<SerpentinePath> {
    let base = fill_serpentine(conduit, params)?;
    let r_max = estimate_resistance(&base, model);
    if target > r_max * (1.0 + tolerance) {
        return Err(Error::TargetTooHigh { target, max: r_max });
    }
    if target >= r_max {
        return Ok(base);
    }
    let rm_hi = coarsest_scale(conduit, params) * params.ray_margin;
    let lms = layer_margin_options(conduit.diameter, params.layer_margin);
    let lm_last = *lms.last().unwrap_or(&params.layer_margin);
    let r_min = resistance_at(conduit, params, model, rm_hi, lm_last)?;
    if target < r_min * (1.0 - tolerance) {
        return Err(Error::TargetTooLow { target, min: r_min });
    }
    let mut best: Option<(f64, f64, f64)> = None;
    let mut consider = |rm: f64, lm: f64| -> Result<()> {
        let err = (resistance_at(conduit, params, model, rm, lm)? - target).abs();
        if best.is_none_or(|b| err < b.0) {
            best = Some((err, rm, lm));
        }
        Ok(())
    };
    for &lm in &lms {
        let (mut lo, mut hi) = (params.ray_margin, rm_hi);
        if resistance_at(conduit, params, model, lo, lm)? <= target {
            consider(lo, lm)?;
            break;
        }
        if resistance_at(conduit, params, model, hi, lm)? > target {
            consider(hi, lm)?;
            continue;
        }
        // Invariant: R(lo) > target >= R(hi).
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if resistance_at(conduit, params, model, mid, lm)? > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * hi {
                break;
            }
        }
        consider(lo, lm)?;
        consider(hi, lm)?;
    }
    let (err, rm, lm) = best.ok_or_else(|| Error::Infeasible("no margin setting available".into()))?;
    let best = fill_unchecked(
        conduit,
        &FillParams {
            ray_margin: rm,
            layer_margin: lm,
            ..*params
        },
    )?;
    if err / target > tolerance {
        return Err(Error::Infeasible(format!(
            "no margin setting lands within {:.1}% of {target:.0} ohm (closest {:.0} ohm)",
            tolerance * 100.0,
            estimate_resistance(&best, model)
        )));
    }
    Ok(best)
}

/// Trace length (mm) per mm of straight conduit, measured on a calibration cylinder.
pub fn packing_ratio(diameter: f64, params: &FillParams) -> Result<f64> {
    let len = 200.0;
    let c = Conduit::straight(Vec3::ZERO, Vec3::new(len, 0.0, 0.0), diameter);
    let p = fill_serpentine(&c, params)?;
    Ok(p.length_xy / len)
}
