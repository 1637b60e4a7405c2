//! Bounding-volume hierarchy over axis-aligned boxes.

use crate::geom::{Aabb, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Clone, Debug)]
struct Node {
    bb: Aabb,
    /// Leaf: first primitive slot. Interior: index of the left child; the right child follows it.
    start: u32,
    /// Primitive count for leaves, 0 for interior nodes.
    count: u32,
}

#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    prims: Vec<u32>,
}

impl Bvh {
    /// Build from per-primitive boxes with median splits on the widest centroid axis.
    pub fn build(boxes: &[Aabb]) -> Bvh {
        let mut prims: Vec<u32> = (0..boxes.len() as u32).collect();
        let centers: Vec<Vec3> = boxes.iter().map(|b| b.center()).collect();
        let mut nodes = vec![Node {
            bb: Aabb::empty(),
            start: 0,
            count: 0,
        }];
        if !boxes.is_empty() {
            let mut stack = vec![(0usize, 0usize, boxes.len())];
            while let Some((ni, lo, hi)) = stack.pop() {
                let mut bb = Aabb::empty();
                let mut cb = Aabb::empty();
                for &p in &prims[lo..hi] {
                    bb = bb.union(&boxes[p as usize]);
                    cb.grow(centers[p as usize]);
                }
                nodes[ni].bb = bb;
                let e = cb.extent();
                if hi - lo <= LEAF_SIZE || e.max_component() <= 0.0 {
                    nodes[ni].start = lo as u32;
                    nodes[ni].count = (hi - lo) as u32;
                    continue;
                }
                let axis = if e.x >= e.y && e.x >= e.z {
                    0
                } else if e.y >= e.z {
                    1
                } else {
                    2
                };
                let mid = (lo + hi) / 2;
                prims[lo..hi].select_nth_unstable_by(mid - lo, |a, b| {
                    centers[*a as usize][axis]
                        .total_cmp(&centers[*b as usize][axis])
                        .then(a.cmp(b))
                });
                let left = nodes.len();
                for _ in 0..2 {
                    nodes.push(Node {
                        bb: Aabb::empty(),
                        start: 0,
                        count: 0,
                    });
                }
                nodes[ni].start = left as u32;
                stack.push((left, lo, mid));
                stack.push((left + 1, mid, hi));
            }
        }
        Bvh { nodes, prims }
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bb
    }

    /// Call `f` for each primitive whose box overlaps `query`.
    pub fn for_each_overlap(&self, query: &Aabb, eps: f64, mut f: impl FnMut(usize)) {
        if self.prims.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let n = &self.nodes[ni];
            if !n.bb.overlaps(query, eps) {
                continue;
            }
            if n.count > 0 {
                for &p in &self.prims[n.start as usize..(n.start + n.count) as usize] {
                    f(p as usize);
                }
            } else {
                stack.push(n.start as usize);
                stack.push(n.start as usize + 1);
            }
        }
    }

    /// Call `f` for each primitive whose box the ray `o + s d`, `0 <= s <= s_max`, passes through.
    pub fn for_each_ray(&self, o: Vec3, d: Vec3, s_max: f64, mut f: impl FnMut(usize)) {
        if self.prims.is_empty() {
            return;
        }
        let inv = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let hit = |bb: &Aabb| {
            let (mut lo, mut hi) = (0.0f64, s_max);
            for a in 0..3 {
                let (t0, t1) = ((bb.min[a] - o[a]) * inv[a], (bb.max[a] - o[a]) * inv[a]);
                let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
                // NaN from 0 * inf means the ray lies in the slab plane; keep it.
                if !t0.is_nan() {
                    lo = lo.max(t0);
                }
                if !t1.is_nan() {
                    hi = hi.min(t1);
                }
            }
            lo <= hi * (1.0 + 1e-12) + 1e-12
        };
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let n = &self.nodes[ni];
            if !hit(&n.bb) {
                continue;
            }
            if n.count > 0 {
                for &p in &self.prims[n.start as usize..(n.start + n.count) as usize] {
                    f(p as usize);
                }
            } else {
                stack.push(n.start as usize);
                stack.push(n.start as usize + 1);
            }
        }
    }

    /// Smallest `dist2(prim)` over all primitives, visiting near boxes first.
    /// Returns `(dist2, prim, payload)` from the best call of `dist2`.
    pub fn nearest<T: Copy>(&self, p: Vec3, mut dist2: impl FnMut(usize) -> (f64, T)) -> Option<(f64, usize, T)> {
        if self.prims.is_empty() {
            return None;
        }
        let mut best: Option<(f64, usize, T)> = None;
        let mut stack = vec![(self.nodes[0].bb.dist2(p), 0usize)];
        while let Some((d, ni)) = stack.pop() {
            if best.as_ref().is_some_and(|b| d >= b.0) {
                continue;
            }
            let n = &self.nodes[ni];
            if n.count > 0 {
                for &pi in &self.prims[n.start as usize..(n.start + n.count) as usize] {
                    let (d2, t) = dist2(pi as usize);
                    let better = match &best {
                        None => true,
                        Some(b) => d2 < b.0 || (d2 == b.0 && (pi as usize) < b.1),
                    };
                    if better {
                        best = Some((d2, pi as usize, t));
                    }
                }
            } else {
                let l = n.start as usize;
                let (dl, dr) = (self.nodes[l].bb.dist2(p), self.nodes[l + 1].bb.dist2(p));
                // Push the farther child first so the nearer one is popped next.
                if dl <= dr {
                    stack.push((dr, l + 1));
                    stack.push((dl, l));
                } else {
                    stack.push((dl, l));
                    stack.push((dr, l + 1));
                }
            }
        }
        best
    }
}
