//! Spatiotemporal registration (STR).
//!
//! A batch over `[α, β]` is split at its midpoint. Under constant angular
//! velocity, a first-half ray `û_j` observed again `Δ` later is `R_Δ û_j`, so
//! `R_Δ` is estimated by trimmed ICP: assign each first-half event to the
//! nearest rotated second-half ray among its temporal neighbours, keep the
//! `K` smallest residuals and solve Wahba's problem on them, until the
//! rotation stops moving.

use std::cmp::Ordering;
use std::ops::Range;

use nalgebra::{Matrix3, Vector3};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::event::{EventBatch, Polarity, Window};
use crate::indexing::{IntervalIndex, RayGrid, RayIndex};
use crate::so3::{AngularVelocity, Rotation};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrConfig {
    /// `ε_T` in seconds; `None` uses `0.02 (β − α)`.
    pub temporal_threshold: Option<f64>,
    /// Fraction of matched events kept in the objective.
    pub trim_fraction: f64,
    /// Explicit `K`, overriding `trim_fraction`.
    pub trim_count: Option<usize>,
    pub max_iterations: usize,
    /// Stop once successive estimates are closer than this (rad).
    pub tolerance: f64,
    /// Only match events of equal polarity.
    pub match_polarity: bool,
}

impl Default for StrConfig {
    fn default() -> Self {
        StrConfig {
            temporal_threshold: None,
            trim_fraction: 0.8,
            trim_count: None,
            max_iterations: 30,
            tolerance: 1e-6,
            match_polarity: false,
        }
    }
}

impl StrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.trim_fraction > 0.0 && self.trim_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "trim fraction {} outside (0, 1]",
                self.trim_fraction
            )));
        }
        if let Some(eps) = self.temporal_threshold {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(Error::Config(format!("temporal threshold must be positive, got {eps}")));
            }
        }
        if self.trim_count == Some(0) {
            return Err(Error::Config("trim count must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("need at least one iteration".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config(format!("invalid tolerance {}", self.tolerance)));
        }
        Ok(())
    }

    pub fn threshold_for(&self, window: &Window) -> f64 {
        self.temporal_threshold
            .unwrap_or(0.02 * window.duration())
    }
}

/// First-half event `j` matched to second-half event `n` (batch indices).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub j: usize,
    pub n: usize,
    /// Chord distance `‖û_n − R_Δ û_j‖`.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct StrResult {
    pub window: Window,
    pub r_delta: Rotation,
    /// `r̃ = log R̃_Δ`.
    pub rotvec: Vector3<f64>,
    pub omega: AngularVelocity,
    pub r_alpha_beta: Rotation,
    /// The `K` selected correspondences, ascending residual.
    pub correspondences: Vec<Correspondence>,
    pub iterations: usize,
    pub converged: bool,
    /// Trimmed sum of squared residuals after the initial assignment and after
    /// every update; non-increasing.
    pub objective_history: Vec<f64>,
    /// Trimmed sum of residuals at the returned estimate.
    pub objective: f64,
    /// First-half events with at least one temporal neighbour.
    pub matched: usize,
    pub trim_count: usize,
    /// The requested `K` exceeded the matched count.
    pub degraded: bool,
}

/// Split of a batch into `I_α = 0..M` and `I_β = M..N`.
pub fn split(batch: &EventBatch) -> Result<(Range<usize>, Range<usize>)> {
    let m = batch.split_index();
    if m == 0 || m == batch.len() {
        return Err(Error::InsufficientData(format!(
            "batch of {} events has an empty half (M = {m})",
            batch.len()
        )));
    }
    Ok((0..m, m..batch.len()))
}

/// Residual of one event: nearest of the candidate rays to `R û_j`, ties to
/// the smallest index. `None` when there are no candidates.
pub fn event_residual(
    u_j: &Vector3<f64>,
    r: &Rotation,
    candidates: &[usize],
    rays: &[Vector3<f64>],
) -> Option<(usize, f64)> {
    if candidates.is_empty() {
        return None;
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    let pts: Vec<_> = sorted.iter().map(|&k| rays[k]).collect();
    let index = RayIndex::build(&pts).ok()?;
    let (i, d) = index.nearest(&(*r * *u_j));
    Some((sorted[i], d))
}

/// Indices of the `k` smallest residuals (unmatched entries are `None`),
/// ascending by residual then index. The flag reports `k` exceeding the
/// matched count, in which case every matched entry is returned.
pub fn trimmed_selection(residuals: &[Option<f64>], k: usize) -> (Vec<usize>, bool) {
    let mut matched: Vec<(f64, usize)> = residuals
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (r, i)))
        .collect();
    let degraded = k > matched.len();
    let k = k.min(matched.len());
    select_smallest(&mut matched, k);
    matched.truncate(k);
    matched.sort_unstable_by(by_residual);
    (matched.into_iter().map(|(_, i)| i).collect(), degraded)
}

fn by_residual(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Moves the `k` smallest entries to the front (unordered).
fn select_smallest(v: &mut [(f64, usize)], k: usize) {
    if k > 0 && k < v.len() {
        v.select_nth_unstable_by(k - 1, by_residual);
    }
}

/// Rotation minimising `Σ ‖b_i − R a_i‖²` over pairs `(a_i, b_i)`.
pub fn wahba_update(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Result<Rotation> {
    let mut b = Matrix3::zeros();
    for (a, t) in pairs {
        b += t * a.transpose();
    }
    wahba_from_covariance(&b, pairs.len())
}

fn wahba_from_covariance(b: &Matrix3<f64>, count: usize) -> Result<Rotation> {
    if count < 2 {
        return Err(Error::DegenerateGeometry(format!(
            "need at least two ray pairs, got {count}"
        )));
    }
    let svd = b.svd(true, true);
    let s = svd.singular_values;
    if !(s[0] > 0.0) || !(s[1] > 1e-10 * s[0]) {
        return Err(Error::DegenerateGeometry(
            "ray pairs are collinear; rotation is not determined".into(),
        ));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let d = (u * v_t).determinant().signum();
    let r = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;
    Ok(Rotation::from_matrix_unchecked(r).renormalized())
}

/// Wahba's problem with trimming: repeatedly solve on the `⌈trim · n⌉`
/// best-fitting pairs until the selection stops changing.
pub fn trimmed_wahba(pairs: &[(Vector3<f64>, Vector3<f64>)], trim: f64) -> Result<Rotation> {
    let mut r = wahba_update(pairs)?;
    let k = ((trim * pairs.len() as f64).floor() as usize).clamp(2, pairs.len());
    if k == pairs.len() {
        return Ok(r);
    }
    let mut prev: Vec<usize> = Vec::new();
    for _ in 0..20 {
        let mut res: Vec<(f64, usize)> = pairs
            .iter()
            .enumerate()
            .map(|(i, (a, b))| ((b - r * *a).norm(), i))
            .collect();
        select_smallest(&mut res, k);
        let mut sel: Vec<usize> = res[..k].iter().map(|x| x.1).collect();
        sel.sort_unstable();
        if sel == prev {
            break;
        }
        let subset: Vec<_> = sel.iter().map(|&i| pairs[i]).collect();
        r = wahba_update(&subset)?;
        prev = sel;
    }
    Ok(r)
}

/// `ω̃ = 2 r̃ / (β − α)` and `R̃_{α,β} = exp(2 r̃)` from `R̃_Δ`.
pub fn recover_velocity(r_delta: &Rotation, window: &Window) -> (AngularVelocity, Rotation) {
    let r = r_delta.log();
    let d = window.duration();
    let omega = if d > 0.0 {
        AngularVelocity(r * (2.0 / d))
    } else {
        AngularVelocity::zero()
    };
    (omega, Rotation::exp(&(2.0 * r)))
}

/// Second-half events that may be matched: sorted times, a cell grid for
/// short-range gathers and a tree for the rest. Ids map local positions back
/// to batch indices.
struct Candidates {
    ids: Vec<usize>,
    times: IntervalIndex,
    points: Vec<Vector3<f64>>,
    grid: RayGrid,
    tree: RayIndex,
}

impl Candidates {
    fn build(ids: Vec<usize>, batch: &EventBatch, rays: &[Vector3<f64>], eps: f64) -> Option<Self> {
        if ids.is_empty() {
            return None;
        }
        let events = batch.events();
        let delta = batch.window().half();
        let times = IntervalIndex::from_sorted_times(ids.iter().map(|&k| events[k].t).collect(), delta, eps);
        let points: Vec<Vector3<f64>> = ids.iter().map(|&k| rays[k]).collect();
        let (extent, area) = spread(&points);
        let span = mean_span(&times, events[..batch.split_index()].iter().map(|e| e.t));
        let scale = if span >= 1.0 && extent > 0.0 { extent / span } else { 0.0 };
        let tree = RayIndex::build_with_order_scale(&points, scale).ok()?;
        // a dozen or so neighbourhood rays per gather ball
        let side = if span >= 1.0 && area > 0.0 {
            (4.0 * (area / span).sqrt()).clamp(1e-3, 0.5)
        } else {
            0.5
        };
        let grid = RayGrid::build(&points, side);
        Some(Candidates {
            ids,
            times,
            points,
            grid,
            tree,
        })
    }
}

/// Largest bounding-box side of the rays and the area of its two largest sides.
fn spread(pts: &[Vector3<f64>]) -> (f64, f64) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let mut sides = [hi.x - lo.x, hi.y - lo.y, hi.z - lo.z];
    sides.sort_by(|a, b| b.total_cmp(a));
    (sides[0], sides[0] * sides[1])
}

fn mean_span(times: &IntervalIndex, query_times: impl Iterator<Item = f64>) -> f64 {
    let q: Vec<f64> = query_times.collect();
    let step = (q.len() / 64).max(1);
    let (mut total, mut count) = (0usize, 0usize);
    for &t in q.iter().step_by(step) {
        total += times.neighbour_span(t).len();
        count += 1;
    }
    if count > 0 {
        total as f64 / count as f64
    } else {
        0.0
    }
}

/// Rays of every event of the batch (undistorted, unit norm).
pub fn batch_rays(batch: &EventBatch, intr: &CameraIntrinsics) -> Result<Vec<Vector3<f64>>> {
    batch.events().iter().map(|e| intr.ray(&e.pixel())).collect()
}

pub fn str_solve(batch: &EventBatch, intr: &CameraIntrinsics, cfg: &StrConfig) -> Result<StrResult> {
    split(batch)?;
    let rays = batch_rays(batch, intr)?;
    solve_with_rays(batch, &rays, cfg)
}

/// [`str_solve`] with precomputed rays (`rays[i]` belongs to event `i`).
pub fn solve_with_rays(batch: &EventBatch, rays: &[Vector3<f64>], cfg: &StrConfig) -> Result<StrResult> {
    solve_from(batch, rays, cfg, Rotation::identity())
}

/// [`solve_with_rays`] starting from `initial` instead of the identity,
/// e.g. the previous batch's motion.
pub fn solve_from(batch: &EventBatch, rays: &[Vector3<f64>], cfg: &StrConfig, initial: Rotation) -> Result<StrResult> {
    cfg.validate()?;
    let (first, second) = split(batch)?;
    if rays.len() != batch.len() {
        return Err(Error::Data(format!(
            "{} rays for {} events",
            rays.len(),
            batch.len()
        )));
    }
    let window = batch.window();
    let eps = cfg.threshold_for(&window);
    let events = batch.events();

    // One candidate set, or one per polarity.
    let groups: Vec<Option<Candidates>> = if cfg.match_polarity {
        [Polarity::Negative, Polarity::Positive]
            .iter()
            .map(|&p| {
                let ids = second.clone().filter(|&k| events[k].polarity == p).collect();
                Candidates::build(ids, batch, rays, eps)
            })
            .collect()
    } else {
        vec![Candidates::build(second.clone().collect(), batch, rays, eps)]
    };
    let group_of = |j: usize| -> usize {
        if cfg.match_polarity && events[j].polarity == Polarity::Positive {
            1
        } else {
            0
        }
    };

    // Temporal neighbourhoods are fixed across iterations.
    let spans: Vec<(usize, Range<usize>)> = first
        .clone()
        .filter_map(|j| {
            let g = group_of(j);
            let c = groups[g].as_ref()?;
            let span = c.times.neighbour_span(events[j].t);
            (!span.is_empty()).then_some((j, span))
        })
        .collect();
    let matched = spans.len();
    if matched < 2 {
        return Err(Error::InsufficientData(format!(
            "only {matched} first-half events have temporal neighbours"
        )));
    }
    let requested = cfg
        .trim_count
        .unwrap_or(((cfg.trim_fraction * matched as f64).floor() as usize).max(1));
    let degraded = requested > matched;
    let k = requested.clamp(2.min(matched), matched);

    let mut solver = Solver {
        cache: vec![Cache::default(); spans.len()],
        events_j: spans,
        groups: &groups,
        group_of: &group_of,
        rays,
        pool: Vec::new(),
        gathered: Vec::new(),
        scratch: Vec::with_capacity(matched),
        k,
    };

    let mut r = initial;
    let mut objective = solver.assign(&r);
    let mut history = vec![objective];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        let next = solver.wahba()?;
        let step = next.geodesic_distance(&r);
        r = next;
        iterations += 1;
        let value = solver.assign(&r);
        debug_assert!(
            value <= objective * (1.0 + 1e-9) + 1e-15,
            "trimmed objective increased: {objective} -> {value}"
        );
        objective = value;
        history.push(value);
        if step < cfg.tolerance {
            converged = true;
            break;
        }
    }

    let correspondences = solver.selection();
    let trimmed_sum = correspondences.iter().map(|c| c.residual).sum();
    let (omega, r_alpha_beta) = recover_velocity(&r, &window);
    Ok(StrResult {
        window,
        r_delta: r,
        rotvec: r.log(),
        omega,
        r_alpha_beta,
        correspondences,
        iterations,
        converged,
        objective_history: history,
        objective: trimmed_sum,
        matched,
        trim_count: k,
        degraded,
    })
}

/// Per-event candidate list: every neighbourhood ray within `radius` of
/// `anchor`. Moving the query to `q` changes any distance by at most
/// `φ = ‖q − anchor‖`, so the list stays exact while its best ray is within
/// `radius − φ`; and the anchor's best ray stays the nearest while it beats
/// the anchor's runner-up distance minus `φ`.
#[derive(Clone, Debug)]
struct Cache {
    anchor: Vector3<f64>,
    radius: f64,
    list: Range<usize>,
    /// Nearest ray at the anchor and the second smallest distance there
    /// (capped at `radius`).
    anchor_best: u32,
    runner_up: f64,
    /// Current nearest neighbour (local index) and its distance.
    best: (u32, f64),
}

impl Default for Cache {
    fn default() -> Self {
        Cache {
            anchor: Vector3::repeat(f64::NAN),
            radius: f64::NEG_INFINITY,
            list: 0..0,
            anchor_best: u32::MAX,
            runner_up: f64::NEG_INFINITY,
            best: (u32::MAX, f64::INFINITY),
        }
    }
}

struct Solver<'a, G: Fn(usize) -> usize> {
    /// Matched first-half events and their neighbourhoods (local indices).
    events_j: Vec<(usize, Range<usize>)>,
    groups: &'a [Option<Candidates>],
    group_of: &'a G,
    rays: &'a [Vector3<f64>],
    cache: Vec<Cache>,
    /// Backing store of the candidate lists (local indices).
    pool: Vec<u32>,
    gathered: Vec<(u32, f64)>,
    /// `(residual, position in events_j)` of the current assignment.
    scratch: Vec<(f64, usize)>,
    k: usize,
}

/// Nearest listed ray to `q` (ties to the smaller index) and the second
/// smallest distance.
fn two_closest(list: &[u32], points: &[Vector3<f64>], q: &Vector3<f64>) -> ((u32, f64), f64) {
    let mut best = (u32::MAX, f64::INFINITY);
    let mut second = f64::INFINITY;
    for &k in list {
        let d = (points[k as usize] - q).norm_squared();
        if d < best.1 || (d == best.1 && k < best.0) {
            second = best.1;
            best = (k, d);
        } else if d < second {
            second = d;
        }
    }
    ((best.0, best.1.sqrt()), second.sqrt())
}

impl<G: Fn(usize) -> usize> Solver<'_, G> {
    /// Nearest-neighbour assignment under `r` followed by trimming; returns
    /// the trimmed sum of squared residuals.
    fn assign(&mut self, r: &Rotation) -> f64 {
        self.scratch.clear();
        if self.pool.len() > 64 * self.cache.len() + 4096 {
            self.compact();
        }
        for i in 0..self.events_j.len() {
            let (j, ref span) = self.events_j[i];
            let c = self.groups[(self.group_of)(j)].as_ref().expect("matched events have candidates");
            let q = *r * self.rays[j];
            let entry = &mut self.cache[i];
            let moved = (q - entry.anchor).norm() + 1e-12;
            if entry.anchor_best != u32::MAX {
                let d = (c.points[entry.anchor_best as usize] - q).norm();
                if d < entry.runner_up - moved {
                    entry.best = (entry.anchor_best, d);
                    self.scratch.push((d, i));
                    continue;
                }
            }
            let (best, second) = two_closest(&self.pool[entry.list.clone()], &c.points, &q);
            let radius = entry.radius - moved;
            if best.0 == u32::MAX || best.1 > radius {
                // Rebuild the list around the current query.
                self.gathered.clear();
                let reach = c.grid.reach();
                c.grid.gather(&q, span.clone(), reach, &mut self.gathered);
                let near = self.gathered.iter().fold(f64::INFINITY, |b, &(_, d)| b.min(d));
                let radius = if near <= 0.5 * reach {
                    reach
                } else {
                    let hint = (entry.best.0 != u32::MAX).then_some(entry.best.0 as usize);
                    let (_, d) = c.tree.nearest_in(&q, span.clone(), hint).expect("non-empty neighbourhood");
                    let radius = d + reach;
                    self.gathered.clear();
                    c.tree.within_in(&q, span.clone(), radius, &mut self.gathered);
                    radius
                };
                let start = self.pool.len();
                self.pool.extend(self.gathered.iter().map(|x| x.0));
                entry.list = start..self.pool.len();
                let (best, second) = two_closest(&self.pool[entry.list.clone()], &c.points, &q);
                debug_assert!(best.0 != u32::MAX && best.1 <= radius);
                entry.anchor = q;
                entry.radius = radius;
                entry.anchor_best = best.0;
                entry.runner_up = second.min(radius);
                entry.best = best;
            } else {
                // Still exact: re-anchor at the current query.
                entry.anchor = q;
                entry.radius = radius;
                entry.anchor_best = best.0;
                entry.runner_up = second.min(radius);
                entry.best = best;
            }
            self.scratch.push((entry.best.1, i));
        }
        select_smallest(&mut self.scratch, self.k);
        self.scratch[..self.k].iter().map(|(d, _)| d * d).sum()
    }

    /// Drops candidate lists orphaned by rebuilds.
    fn compact(&mut self) {
        let mut pool = Vec::with_capacity(self.pool.len() / 2);
        for entry in &mut self.cache {
            let start = pool.len();
            pool.extend_from_slice(&self.pool[entry.list.clone()]);
            entry.list = start..pool.len();
        }
        self.pool = pool;
    }

    fn target(&self, i: usize) -> usize {
        let (j, _) = &self.events_j[i];
        let c = self.groups[(self.group_of)(*j)].as_ref().expect("candidates");
        c.ids[self.cache[i].best.0 as usize]
    }

    fn wahba(&self) -> Result<Rotation> {
        let mut b = Matrix3::zeros();
        for &(_, i) in &self.scratch[..self.k] {
            let a = &self.rays[self.events_j[i].0];
            let t = &self.rays[self.target(i)];
            b += t * a.transpose();
        }
        wahba_from_covariance(&b, self.k)
    }

    fn selection(&self) -> Vec<Correspondence> {
        let mut out: Vec<Correspondence> = self.scratch[..self.k]
            .iter()
            .map(|&(d, i)| Correspondence {
                j: self.events_j[i].0,
                n: self.target(i),
                residual: d,
            })
            .collect();
        out.sort_unstable_by(|a, b| a.residual.total_cmp(&b.residual).then(a.j.cmp(&b.j)));
        out
    }
}
