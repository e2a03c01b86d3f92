//! Exact nearest-neighbour search over unit rays.
//!
//! Besides plain nearest-neighbour queries the tree answers queries restricted
//! to a contiguous range of ray indices, which is how temporal neighbourhoods
//! look once events are time sorted. Every node records the index span of its
//! rays, so subtrees entirely outside the requested range are skipped. With a
//! non-zero order scale the split rule also treats the (scaled) index as a
//! fourth coordinate, which keeps those spans tight.

use std::ops::Range;

use nalgebra::Vector3;

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
struct Node {
    min: [f64; 3],
    max: [f64; 3],
    id_min: u32,
    id_max: u32,
    /// Leaf: slot range. Inner: `children` holds the node ids.
    start: u32,
    end: u32,
    children: Option<(u32, u32)>,
}

/// kd-tree over unit 3-vectors. Ties are resolved towards the smallest index.
#[derive(Clone, Debug)]
pub struct RayIndex {
    points: Vec<[f64; 3]>,
    ids: Vec<u32>,
    /// Rays in their original order.
    by_id: Vec<[f64; 3]>,
    nodes: Vec<Node>,
    order_scale: f64,
}

#[derive(Clone, Copy, Debug)]
struct Best {
    d2: f64,
    id: u32,
}

impl Best {
    fn accepts(&self, d2: f64, id: u32) -> bool {
        d2 < self.d2 || (d2 == self.d2 && id < self.id)
    }
}

#[inline]
fn dist2(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    let dz = p[2] - q[2];
    dx * dx + dy * dy + dz * dz
}

impl RayIndex {
    /// Purely spatial tree.
    pub fn build(rays: &[Vector3<f64>]) -> Result<Self> {
        Self::build_with_order_scale(rays, 0.0)
    }

    /// Tree whose splits also consider `index · order_scale` as a coordinate.
    pub fn build_with_order_scale(rays: &[Vector3<f64>], order_scale: f64) -> Result<Self> {
        if rays.is_empty() {
            return Err(Error::InsufficientData("cannot index an empty ray set".into()));
        }
        if rays.len() > u32::MAX as usize {
            return Err(Error::Data("too many rays for a single index".into()));
        }
        let points: Vec<[f64; 3]> = rays.iter().map(|r| [r.x, r.y, r.z]).collect();
        let ids: Vec<u32> = (0..rays.len() as u32).collect();
        let mut index = RayIndex {
            by_id: points.clone(),
            points,
            ids,
            nodes: Vec::with_capacity(2 * rays.len() / LEAF_SIZE + 1),
            order_scale,
        };
        index.build_node(0, rays.len());
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, start: usize, end: usize) -> u32 {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        let mut id_min = u32::MAX;
        let mut id_max = 0;
        for s in start..end {
            let p = &self.points[s];
            for d in 0..3 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
            id_min = id_min.min(self.ids[s]);
            id_max = id_max.max(self.ids[s]);
        }
        let node_id = self.nodes.len() as u32;
        self.nodes.push(Node {
            min,
            max,
            id_min,
            id_max,
            start: start as u32,
            end: end as u32,
            children: None,
        });
        if end - start <= LEAF_SIZE {
            return node_id;
        }

        let mut dim = 0;
        let mut spread = max[0] - min[0];
        for d in 1..3 {
            if max[d] - min[d] > spread {
                spread = max[d] - min[d];
                dim = d;
            }
        }
        let order_spread = (id_max - id_min) as f64 * self.order_scale;
        let mid = start + (end - start) / 2;
        {
            let mut slots: Vec<([f64; 3], u32)> = (start..end)
                .map(|s| (self.points[s], self.ids[s]))
                .collect();
            let k = mid - start;
            if order_spread > spread {
                slots.select_nth_unstable_by_key(k, |s| s.1);
            } else {
                slots.select_nth_unstable_by(k, |a, b| {
                    a.0[dim].total_cmp(&b.0[dim]).then(a.1.cmp(&b.1))
                });
            }
            for (i, (p, id)) in slots.into_iter().enumerate() {
                self.points[start + i] = p;
                self.ids[start + i] = id;
            }
        }
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[node_id as usize].children = Some((left, right));
        node_id
    }

    fn box_dist2(node: &Node, q: &[f64; 3]) -> f64 {
        let mut acc = 0.0;
        for d in 0..3 {
            let gap = if q[d] < node.min[d] {
                node.min[d] - q[d]
            } else if q[d] > node.max[d] {
                q[d] - node.max[d]
            } else {
                0.0
            };
            acc += gap * gap;
        }
        acc
    }

    /// Nearest ray and its Euclidean distance.
    pub fn nearest(&self, q: &Vector3<f64>) -> (usize, f64) {
        self.nearest_in(q, 0..self.len(), None)
            .expect("index is non-empty")
    }

    /// Nearest ray among indices in `range`, or `None` when the range holds
    /// no rays. `hint` is an index whose distance seeds the search bound; it
    /// only speeds things up and never changes the answer.
    pub fn nearest_in(
        &self,
        q: &Vector3<f64>,
        range: Range<usize>,
        hint: Option<usize>,
    ) -> Option<(usize, f64)> {
        let hi = range.end.min(self.len());
        if range.start >= hi {
            return None;
        }
        let (lo, hi) = (range.start as u32, (hi - 1) as u32);
        let q = [q.x, q.y, q.z];
        let mut best = Best {
            d2: f64::INFINITY,
            id: u32::MAX,
        };
        if let Some(h) = hint {
            if h >= lo as usize && h <= hi as usize {
                best = Best {
                    d2: dist2(&self.by_id[h], &q),
                    id: h as u32,
                };
            }
        }
        self.search(0, &q, lo, hi, &mut best);
        if best.id == u32::MAX {
            None
        } else {
            Some((best.id as usize, best.d2.sqrt()))
        }
    }

    /// Appends `(index, distance)` of every ray with index in `range` within
    /// `radius` of `q`, in no particular order.
    pub fn within_in(&self, q: &Vector3<f64>, range: Range<usize>, radius: f64, out: &mut Vec<(u32, f64)>) {
        let hi = range.end.min(self.len());
        if range.start >= hi {
            return;
        }
        let q = [q.x, q.y, q.z];
        self.collect(0, &q, range.start as u32, (hi - 1) as u32, radius * radius, out);
    }

    fn collect(&self, node_id: u32, q: &[f64; 3], lo: u32, hi: u32, r2: f64, out: &mut Vec<(u32, f64)>) {
        let node = &self.nodes[node_id as usize];
        if node.id_max < lo || node.id_min > hi || Self::box_dist2(node, q) > r2 {
            return;
        }
        match node.children {
            None => {
                for s in node.start as usize..node.end as usize {
                    let id = self.ids[s];
                    if id < lo || id > hi {
                        continue;
                    }
                    let d2 = dist2(&self.points[s], q);
                    if d2 <= r2 {
                        out.push((id, d2.sqrt()));
                    }
                }
            }
            Some((l, r)) => {
                self.collect(l, q, lo, hi, r2, out);
                self.collect(r, q, lo, hi, r2, out);
            }
        }
    }

    fn search(&self, node_id: u32, q: &[f64; 3], lo: u32, hi: u32, best: &mut Best) {
        let node = &self.nodes[node_id as usize];
        if node.id_max < lo || node.id_min > hi {
            return;
        }
        if Self::box_dist2(node, q) > best.d2 {
            return;
        }
        match node.children {
            None => {
                let inside = node.id_min >= lo && node.id_max <= hi;
                for s in node.start as usize..node.end as usize {
                    let id = self.ids[s];
                    if !inside && (id < lo || id > hi) {
                        continue;
                    }
                    let d2 = dist2(&self.points[s], q);
                    if best.accepts(d2, id) {
                        *best = Best { d2, id };
                    }
                }
            }
            Some((l, r)) => {
                let dl = Self::box_dist2(&self.nodes[l as usize], q);
                let dr = Self::box_dist2(&self.nodes[r as usize], q);
                if dl <= dr {
                    self.search(l, q, lo, hi, best);
                    self.search(r, q, lo, hi, best);
                } else {
                    self.search(r, q, lo, hi, best);
                    self.search(l, q, lo, hi, best);
                }
            }
        }
    }
}

pub fn build_ray_index(rays: &[Vector3<f64>]) -> Result<RayIndex> {
    RayIndex::build(rays)
}

pub fn nearest_ray(index: &RayIndex, q: &Vector3<f64>) -> (usize, f64) {
    index.nearest(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ray(rng: &mut impl Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    }

    fn scan(rays: &[Vector3<f64>], q: &Vector3<f64>, range: Range<usize>) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for k in range {
            let d = rays[k] - q;
            let d2 = d.x * d.x + d.y * d.y + d.z * d.z;
            if best.map_or(true, |(_, b)| d2 < b) {
                best = Some((k, d2));
            }
        }
        best.map(|(k, d2)| (k, d2.sqrt()))
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(RayIndex::build(&[]).is_err());
    }

    #[test]
    fn single_ray_always_returned() {
        let idx = RayIndex::build(&[Vector3::new(0.0, 0.6, 0.8)]).unwrap();
        assert_eq!(idx.nearest(&Vector3::new(1.0, 0.0, 0.0)).0, 0);
        assert_eq!(idx.nearest(&Vector3::new(0.0, 0.6, 0.8)), (0, 0.0));
    }

    #[test]
    fn antipodal_pair() {
        let idx = RayIndex::build(&[Vector3::z(), -Vector3::z()]).unwrap();
        let a = 1f64.to_radians();
        let q = Vector3::new(a.sin(), 0.0, a.cos());
        assert_eq!(idx.nearest(&q).0, 0);
    }

    #[test]
    fn ties_go_to_the_smallest_index() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let rays = vec![
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(s, 0.0, s),
            Vector3::new(-s, 0.0, s),
            Vector3::new(s, 0.0, s),
        ];
        let idx = RayIndex::build(&rays).unwrap();
        assert_eq!(idx.nearest(&Vector3::x()).0, 1);
        assert_eq!(idx.nearest_in(&Vector3::x(), 2..4, None).unwrap().0, 3);
        // equidistant from rays 1 and 2
        let q = Vector3::new(0.0, 1.0, 0.0);
        let many: Vec<_> = (0..40).map(|i| rays[i % 4]).collect();
        let idx = RayIndex::build(&many).unwrap();
        assert_eq!(idx.nearest(&q).0, scan(&many, &q, 0..40).unwrap().0);
        assert_eq!(idx.nearest(&q).0, 0);
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rays: Vec<_> = (0..2000).map(|_| random_ray(&mut rng)).collect();
        for scale in [0.0, 1e-4, 1e-2] {
            let idx = RayIndex::build_with_order_scale(&rays, scale).unwrap();
            for _ in 0..300 {
                let q = random_ray(&mut rng);
                assert_eq!(idx.nearest_in(&q, 0..rays.len(), None), scan(&rays, &q, 0..rays.len()));
                let a = rng.gen_range(0..rays.len());
                let b = rng.gen_range(a..=rays.len());
                let hint = (a < b).then(|| rng.gen_range(a..b));
                assert_eq!(idx.nearest_in(&q, a..b, hint), scan(&rays, &q, a..b));
                let radius = rng.gen_range(0.0..0.5);
                let mut got = Vec::new();
                idx.within_in(&q, a..b, radius, &mut got);
                got.sort_by_key(|x| x.0);
                let want: Vec<u32> = (a..b).filter(|&k| (rays[k] - q).norm() <= radius).map(|k| k as u32).collect();
                assert_eq!(got.iter().map(|x| x.0).collect::<Vec<_>>(), want);
            }
        }
    }
}
