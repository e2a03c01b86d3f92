//! Temporal neighbourhood search.
//!
//! For an event `e_j` of the first half, its temporal neighbours are the
//! second-half events with `|t_k − t_j − Δ| ≤ ε_T`. Rearranged, `t_j` must stab
//! the interval `[t_k − Δ − ε_T, t_k − Δ + ε_T]`, which is what the interval
//! tree indexes.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::event::EventBatch;

/// Static augmented interval tree over closed intervals.
///
/// Intervals are kept sorted by start and arranged as an implicit balanced
/// binary tree (the root of `lo..hi` is its midpoint); each node stores the
/// largest end point in its subtree.
#[derive(Clone, Debug, Default)]
pub struct IntervalTree {
    starts: Vec<f64>,
    ends: Vec<f64>,
    ids: Vec<usize>,
    max_end: Vec<f64>,
}

impl IntervalTree {
    /// Builds from `(start, end, id)` triples in `O(n log n)`.
    pub fn new(mut intervals: Vec<(f64, f64, usize)>) -> Self {
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let starts: Vec<f64> = intervals.iter().map(|i| i.0).collect();
        let ends: Vec<f64> = intervals.iter().map(|i| i.1).collect();
        let ids = intervals.iter().map(|i| i.2).collect();
        let mut max_end = vec![f64::NEG_INFINITY; starts.len()];
        fill_max_end(&ends, &mut max_end, 0, starts.len());
        IntervalTree {
            starts,
            ends,
            ids,
            max_end,
        }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Appends the ids of all intervals containing `x`, in `O(log n + m)`.
    pub fn stab(&self, x: f64, out: &mut Vec<usize>) {
        self.stab_range(x, 0, self.starts.len(), out);
    }

    fn stab_range(&self, x: f64, lo: usize, hi: usize, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        if self.max_end[mid] < x {
            return;
        }
        self.stab_range(x, lo, mid, out);
        if self.starts[mid] <= x {
            if self.ends[mid] >= x {
                out.push(self.ids[mid]);
            }
            self.stab_range(x, mid + 1, hi, out);
        }
    }
}

fn fill_max_end(ends: &[f64], max_end: &mut [f64], lo: usize, hi: usize) -> f64 {
    if lo >= hi {
        return f64::NEG_INFINITY;
    }
    let mid = lo + (hi - lo) / 2;
    let left = fill_max_end(ends, max_end, lo, mid);
    let right = fill_max_end(ends, max_end, mid + 1, hi);
    let m = ends[mid].max(left).max(right);
    max_end[mid] = m;
    m
}

/// Index over the second half `I_β` of a batch answering
/// `L_j = { k ∈ I_β : |t_k − t_j − Δ| ≤ ε_T }`.
#[derive(Clone, Debug)]
pub struct IntervalIndex {
    tree: Option<IntervalTree>,
    times: Vec<f64>,
    offset: usize,
    delta: f64,
    eps: f64,
}

impl IntervalIndex {
    pub fn build(batch: &EventBatch, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Config(format!(
                "temporal threshold must be positive, got {eps}"
            )));
        }
        let delta = batch.window().half();
        let offset = batch.split_index();
        let times: Vec<f64> = batch.events()[offset..].iter().map(|e| e.t).collect();
        // Intervals are widened by a hair so rounding in the rearranged bounds
        // can only add candidates; `neighbours` re-checks the exact predicate.
        let intervals = times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let slack = 1e-12 * (1.0 + t.abs() + delta + eps);
                (
                    t - delta - eps - slack,
                    t - delta + eps + slack,
                    offset + i,
                )
            })
            .collect();
        Ok(IntervalIndex {
            tree: Some(IntervalTree::new(intervals)),
            times,
            offset,
            delta,
            eps,
        })
    }

    /// Span-only index over already sorted times; `neighbours` then falls
    /// back to the binary-search path. Local indices start at zero.
    pub(crate) fn from_sorted_times(times: Vec<f64>, delta: f64, eps: f64) -> Self {
        debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        IntervalIndex {
            tree: None,
            times,
            offset: 0,
            delta,
            eps,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    fn is_neighbour(&self, tk: f64, tj: f64) -> bool {
        (tk - tj - self.delta).abs() <= self.eps
    }

    /// Batch indices of the temporal neighbours of a first-half event at `t_j`,
    /// ascending. Uses the interval tree.
    pub fn neighbours(&self, tj: f64) -> Vec<usize> {
        let Some(tree) = &self.tree else {
            return self.neighbour_span(tj).collect();
        };
        let mut out = Vec::new();
        tree.stab(tj, &mut out);
        out.retain(|&k| self.is_neighbour(self.times[k - self.offset], tj));
        out.sort_unstable();
        out
    }

    /// Same set as [`neighbours`](Self::neighbours) as a contiguous range of
    /// batch indices. Second-half timestamps are sorted and `t ↦ t − t_j − Δ`
    /// is monotone under rounding, so the set is always an index range found
    /// with two binary searches.
    pub fn neighbour_span(&self, tj: f64) -> Range<usize> {
        let (delta, eps) = (self.delta, self.eps);
        let lo = self.times.partition_point(|&tk| tk - tj - delta < -eps);
        let hi = self.times.partition_point(|&tk| tk - tj - delta <= eps);
        let hi = hi.max(lo);
        (self.offset + lo)..(self.offset + hi)
    }
}

pub fn build_interval_index(batch: &EventBatch, eps: f64) -> Result<IntervalIndex> {
    IntervalIndex::build(batch, eps)
}

pub fn temporal_neighbours(index: &IntervalIndex, tj: f64) -> Vec<usize> {
    index.neighbours(tj)
}
