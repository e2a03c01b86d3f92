//! Uniform 3D cell grid over unit rays for exact small-radius gathers.
//!
//! Each cell lists its rays in ascending index order, so a gather can be
//! restricted to an index range with a binary search per cell. A ball of
//! radius at most half the cell side touches at most two cells per axis,
//! hence at most eight cells per query.

use std::ops::Range;

use nalgebra::Vector3;

/// Upper bound on the number of cells; the side grows to respect it.
const MAX_CELLS: usize = 1 << 22;

#[derive(Clone, Debug)]
pub struct RayGrid {
    points: Vec<[f64; 3]>,
    min: [f64; 3],
    side: f64,
    dims: [usize; 3],
    /// CSR layout: rays of cell `c` are `entries[starts[c]..starts[c + 1]]`.
    starts: Vec<u32>,
    entries: Vec<u32>,
}

impl RayGrid {
    /// `side` is the requested cell side; it may be enlarged to bound memory.
    pub fn build(rays: &[Vector3<f64>], side: f64) -> Self {
        assert!(side > 0.0 && side.is_finite(), "cell side must be positive");
        let points: Vec<[f64; 3]> = rays.iter().map(|r| [r.x, r.y, r.z]).collect();
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in &points {
            for d in 0..3 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        if points.is_empty() {
            min = [0.0; 3];
            max = [0.0; 3];
        }
        let mut side = side;
        let dims = loop {
            let dims = [0, 1, 2].map(|d| ((max[d] - min[d]) / side).floor() as usize + 1);
            if dims.iter().product::<usize>() <= MAX_CELLS {
                break dims;
            }
            side *= 2.0;
        };
        let cells = dims.iter().product::<usize>();
        let mut grid = RayGrid {
            points,
            min,
            side,
            dims,
            starts: vec![0; cells + 1],
            entries: Vec::new(),
        };
        let cell_of: Vec<usize> = grid
            .points
            .iter()
            .map(|p| {
                let c = [0, 1, 2].map(|d| (((p[d] - min[d]) / side).floor() as usize).min(dims[d] - 1));
                grid.flat(c)
            })
            .collect();
        for &c in &cell_of {
            grid.starts[c + 1] += 1;
        }
        for c in 0..cells {
            grid.starts[c + 1] += grid.starts[c];
        }
        let mut fill = grid.starts.clone();
        grid.entries = vec![0; grid.points.len()];
        for (k, &c) in cell_of.iter().enumerate() {
            grid.entries[fill[c] as usize] = k as u32;
            fill[c] += 1;
        }
        grid
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    /// Largest radius a single [`gather`](Self::gather) answers exactly.
    pub fn reach(&self) -> f64 {
        0.5 * self.side
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Appends `(index, distance)` of every ray with index in `range` and
    /// distance to `q` at most `radius` (`radius ≤ reach()`), ascending index
    /// within each cell.
    pub fn gather(&self, q: &Vector3<f64>, range: Range<usize>, radius: f64, out: &mut Vec<(u32, f64)>) {
        debug_assert!(radius <= self.reach() * (1.0 + 1e-12));
        let q = [q.x, q.y, q.z];
        let mut axes = [[usize::MAX; 2]; 3];
        for d in 0..3 {
            let f = (q[d] - self.min[d]) / self.side;
            if !f.is_finite() {
                return;
            }
            let i = f.floor();
            let other = if f - i < 0.5 { i - 1.0 } else { i + 1.0 };
            let n = self.dims[d] as f64;
            for (slot, v) in [i, other].into_iter().enumerate() {
                if v >= 0.0 && v < n {
                    axes[d][slot] = v as usize;
                }
            }
        }
        let (lo, hi) = (range.start as u32, range.end as u32);
        let r2 = radius * radius;
        for &z in &axes[2] {
            if z == usize::MAX {
                continue;
            }
            for &y in &axes[1] {
                if y == usize::MAX {
                    continue;
                }
                for &x in &axes[0] {
                    if x == usize::MAX {
                        continue;
                    }
                    let c = self.flat([x, y, z]);
                    let cell = &self.entries[self.starts[c] as usize..self.starts[c + 1] as usize];
                    let first = cell.partition_point(|&k| k < lo);
                    for &k in &cell[first..] {
                        if k >= hi {
                            break;
                        }
                        let p = &self.points[k as usize];
                        let (dx, dy, dz) = (p[0] - q[0], p[1] - q[1], p[2] - q[2]);
                        let d2 = dx * dx + dy * dy + dz * dz;
                        if d2 <= r2 {
                            out.push((k, d2.sqrt()));
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gather_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rays: Vec<Vector3<f64>> = (0..3000)
            .map(|_| {
                Vector3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.4..0.4), 1.0).normalize()
            })
            .collect();
        for side in [0.02, 0.07, 0.3] {
            let grid = RayGrid::build(&rays, side);
            for _ in 0..500 {
                let q = Vector3::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.6..0.6), 1.0).normalize();
                let a = rng.gen_range(0..rays.len());
                let b = rng.gen_range(a..=rays.len());
                let radius = rng.gen_range(0.0..=grid.reach());
                let mut got = Vec::new();
                grid.gather(&q, a..b, radius, &mut got);
                got.sort_by_key(|x| x.0);
                let want: Vec<(u32, f64)> = (a..b)
                    .filter_map(|k| {
                        let d = (rays[k] - q).norm();
                        (d <= radius).then_some((k as u32, d))
                    })
                    .collect();
                assert_eq!(got.len(), want.len());
                for (g, w) in got.iter().zip(&want) {
                    assert_eq!(g.0, w.0);
                    assert!((g.1 - w.1).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn far_queries_and_empty_grids() {
        let grid = RayGrid::build(&[Vector3::z()], 0.1);
        let mut out = Vec::new();
        grid.gather(&-Vector3::z(), 0..1, 0.05, &mut out);
        assert!(out.is_empty());
        grid.gather(&Vector3::z(), 0..1, 0.05, &mut out);
        assert_eq!(out, vec![(0, 0.0)]);
        let empty = RayGrid::build(&[], 0.1);
        empty.gather(&Vector3::z(), 0..0, 0.05, &mut out);
        assert_eq!(out.len(), 1);
    }
}
