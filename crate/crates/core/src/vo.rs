//! Rotational visual odometry over overlapping batches.
//!
//! Batches of `N` events advance by `N/2`. A key batch is registered in
//! full; each following batch keeps only the previous correspondences that
//! fall in the overlap (`Ē`) plus the new half. Correspondences are chained
//! into feature tracks; when too few tracks survive, the segment's pose
//! graph is averaged and a new key batch starts.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use nalgebra::Vector3;

use crate::averaging::{chain, rotation_averaging, AveragingConfig, Edge};
use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::event::{Event, EventBatch, Window};
use crate::io::TrajectoryRecord;
use crate::registration::{solve_from, trimmed_wahba, StrConfig, StrResult};
#[cfg(test)]
use crate::registration::solve_with_rays;
use crate::so3::{AngularVelocity, Rotation};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoConfig {
    pub batch_size: usize,
    /// `ε_k`: fewer surviving tracks than this forces a key batch.
    pub key_threshold: usize,
    pub str_cfg: StrConfig,
    /// Continuation batches keep `⌊track_trim · |Ē|⌋` correspondences.
    pub track_trim: f64,
    /// Key batches keep `⌊key_trim · N⌋` correspondences.
    pub key_trim: f64,
    /// Trim fraction for pairwise edge estimation.
    pub edge_trim: f64,
    pub averaging: AveragingConfig,
    /// Weight edges by their number of shared tracks.
    pub weight_edges: bool,
}

impl Default for VoConfig {
    fn default() -> Self {
        VoConfig {
            batch_size: 30_000,
            key_threshold: 2_000,
            str_cfg: StrConfig::default(),
            track_trim: 0.8,
            key_trim: 0.4,
            edge_trim: 0.8,
            averaging: AveragingConfig::default(),
            weight_edges: false,
        }
    }
}

impl VoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 4 || self.batch_size % 2 != 0 {
            return Err(Error::Config(format!(
                "batch size must be even and at least 4, got {}",
                self.batch_size
            )));
        }
        let key_k = self.key_count();
        if self.key_threshold >= key_k {
            return Err(Error::Config(format!(
                "key threshold {} must be below 0.4 N = {key_k}",
                self.key_threshold
            )));
        }
        for (name, f) in [("track", self.track_trim), ("key", self.key_trim), ("edge", self.edge_trim)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("{name} trim {f} outside (0, 1]")));
            }
        }
        self.str_cfg.validate()
    }

    fn key_count(&self) -> usize {
        ((self.key_trim * self.batch_size as f64).floor() as usize).max(1)
    }
}

/// Index ranges of the overlapping batches: length `n`, stride `n / 2`.
pub fn batch_ranges(len: usize, n: usize) -> Vec<Range<usize>> {
    if n == 0 || len < n {
        return Vec::new();
    }
    let stride = (n / 2).max(1);
    (0..)
        .map(|k| k * stride)
        .take_while(|&s| s + n <= len)
        .map(|s| s..s + n)
        .collect()
}

/// Overlapping batches of `n` events with stride `n / 2`; empty when the
/// stream is shorter than `n`.
pub fn stream_batches(stream: &[Event], n: usize) -> Result<Vec<EventBatch>> {
    batch_ranges(stream.len(), n)
        .into_iter()
        .map(|r| EventBatch::from_events(stream[r].to_vec()))
        .collect()
}

/// `true` iff fewer than `eps_k` tracks survive.
pub fn key_batch_decision(surviving: usize, eps_k: usize) -> bool {
    surviving < eps_k
}

/// Stream indices of one tracked landmark, one per linked batch boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTrack {
    /// Stream event indices, strictly increasing in time.
    pub events: Vec<usize>,
    /// Batch whose correspondence created the track.
    pub birth: usize,
    /// Batch that last extended the track.
    pub last: usize,
}

impl FeatureTrack {
    /// Event of the track lying in the second half of `batch`.
    pub fn event_for(&self, batch: usize) -> Option<usize> {
        if batch < self.birth || batch > self.last {
            return None;
        }
        self.events.get(batch - self.birth + 1).copied()
    }
}

/// Tracks of one key-batch segment.
#[derive(Clone, Debug, Default)]
pub struct TrackSet {
    pub tracks: Vec<FeatureTrack>,
    /// Last event of each live track → track index.
    frontier: HashMap<usize, usize>,
}

impl TrackSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Links correspondences `(j, n)` (stream indices, best first) solved in
    /// `batch`. A pair whose `j` ends a live track extends it; otherwise it
    /// starts a new track. When several pairs reach the same `n`, the first
    /// claim wins and the others end there.
    pub fn link(&mut self, batch: usize, pairs: &[(usize, usize)]) {
        let mut next: HashMap<usize, usize> = HashMap::with_capacity(pairs.len());
        for &(j, n) in pairs {
            if next.contains_key(&n) {
                continue;
            }
            let id = match self.frontier.remove(&j) {
                Some(id) if self.tracks[id].last + 1 == batch => {
                    let t = &mut self.tracks[id];
                    t.events.push(n);
                    t.last = batch;
                    id
                }
                _ => {
                    self.tracks.push(FeatureTrack {
                        events: vec![j, n],
                        birth: batch,
                        last: batch,
                    });
                    self.tracks.len() - 1
                }
            };
            next.insert(n, id);
        }
        self.frontier = next;
    }

    pub fn live(&self) -> usize {
        self.frontier.len()
    }
}

/// A registered batch: stream indices of its events and the solve.
#[derive(Clone, Debug)]
pub struct SolvedBatch {
    pub index: usize,
    /// `ids[i]` is the stream index of batch event `i`.
    pub ids: Vec<usize>,
    pub result: StrResult,
    pub key: bool,
}

impl SolvedBatch {
    /// Selected correspondences as stream indices, best first.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.result
            .correspondences
            .iter()
            .map(|c| (self.ids[c.j], self.ids[c.n]))
            .collect()
    }
}

/// Links `prev`'s correspondences onto `tracks` and returns the reduced
/// batch `Ē′ = (Ē ∩ overlap) ∪ new_half` as sorted stream indices, together
/// with `|Ē|`.
pub fn extend_tracks(
    prev: &SolvedBatch,
    overlap: Range<usize>,
    new_half: Range<usize>,
    tracks: &mut TrackSet,
) -> (Vec<usize>, usize) {
    let pairs = prev.pairs();
    tracks.link(prev.index, &pairs);
    let mut kept: Vec<usize> = pairs
        .iter()
        .flat_map(|&(j, n)| [j, n])
        .filter(|i| overlap.contains(i))
        .collect();
    kept.sort_unstable();
    kept.dedup();
    let tracked = kept.len();
    kept.extend(new_half);
    (kept, tracked)
}

/// Relative rotations between batches sharing tracks.
///
/// For batches `u < v`, each track alive in both contributes the pair of its
/// events in the second halves of `u` and `v`. A trimmed Wahba fit gives the
/// rotation over the mean event time gap, which is rescaled to `β_v − β_u`
/// (`ends[b]` is the window end of batch `b`). Degenerate pairs are skipped.
/// Edge weights are the shared-track counts.
pub fn estimate_pairwise(
    tracks: &[FeatureTrack],
    ends: &BTreeMap<usize, f64>,
    stream: &[Event],
    rays: &[Vector3<f64>],
    trim: f64,
) -> Vec<Edge> {
    let mut shared: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for track in tracks {
        let batches: Vec<(usize, usize)> = (track.birth..=track.last)
            .filter(|b| ends.contains_key(b))
            .filter_map(|b| track.event_for(b).map(|e| (b, e)))
            .collect();
        for (i, &(u, eu)) in batches.iter().enumerate() {
            for &(v, ev) in &batches[i + 1..] {
                shared.entry((u, v)).or_default().push((eu, ev));
            }
        }
    }
    let mut edges = Vec::new();
    for ((u, v), links) in shared {
        if links.len() < 2 {
            continue;
        }
        let pairs: Vec<_> = links.iter().map(|&(a, b)| (rays[a], rays[b])).collect();
        let Ok(r) = trimmed_wahba(&pairs, trim) else {
            continue;
        };
        let gap = links.iter().map(|&(a, b)| stream[b].t - stream[a].t).sum::<f64>() / links.len() as f64;
        let span = ends[&v] - ends[&u];
        if !(gap > 0.0) || !(span > 0.0) {
            continue;
        }
        let mut edge = Edge::new(u, v, Rotation::exp(&(r.log() * (span / gap))));
        edge.weight = links.len() as f64;
        edges.push(edge);
    }
    edges
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchReport {
    pub index: usize,
    pub window: Window,
    pub key: bool,
    pub events: usize,
    /// `|Ē|` carried into this batch (0 for key batches).
    pub tracked: usize,
    pub correspondences: usize,
    pub iterations: usize,
    pub omega: AngularVelocity,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct VoOutput {
    /// Rotation-averaged orientations `R_t`, starting with `(α₀, I)`.
    pub averaged: Vec<TrajectoryRecord>,
    /// Orientations from integrating each batch's `ω̃`, same timestamps.
    pub chained: Vec<TrajectoryRecord>,
    pub batches: Vec<BatchReport>,
    pub warnings: Vec<String>,
}

struct Node {
    batch: usize,
    end: f64,
    /// Velocity from the rotation and the mean time gap of its
    /// correspondences.
    velocity: Vector3<f64>,
}

#[derive(Default)]
struct Segment {
    nodes: Vec<Node>,
    tracks: TrackSet,
}

/// Averages a segment anchored at `anchor` and appends its orientations.
fn flush(
    segment: &mut Segment,
    anchor: &mut TrajectoryRecord,
    stream: &[Event],
    rays: &[Vector3<f64>],
    cfg: &VoConfig,
    out: &mut VoOutput,
) -> Result<()> {
    let seg = std::mem::take(segment);
    if seg.nodes.is_empty() {
        return Ok(());
    }
    let ends: BTreeMap<usize, f64> = seg.nodes.iter().map(|n| (n.batch, n.end)).collect();
    let local: HashMap<usize, usize> = seg.nodes.iter().enumerate().map(|(i, n)| (n.batch, i + 1)).collect();
    let mut edges: Vec<Edge> = estimate_pairwise(&seg.tracks.tracks, &ends, stream, rays, cfg.edge_trim)
        .into_iter()
        .map(|e| Edge {
            u: local[&e.u],
            v: local[&e.v],
            ..e
        })
        .collect();
    // Node 0 is the anchor; consecutive nodes without a track edge are
    // joined by their integrated velocity.
    let mut times = vec![anchor.t];
    times.extend(seg.nodes.iter().map(|n| n.end));
    let mut chain_edges = Vec::new();
    for (i, node) in seg.nodes.iter().enumerate() {
        let (u, v) = (i, i + 1);
        let r = Rotation::exp(&(node.velocity * (times[v] - times[u])));
        let e = Edge::new(u, v, r);
        if !edges.iter().any(|x| x.u == u && x.v == v) {
            edges.push(e);
        }
        chain_edges.push(e);
    }
    let n = times.len();
    let fallback: Vec<Rotation> = chain(n, &chain_edges, 0, anchor.orientation)
        .into_iter()
        .map(|r| r.expect("chain edges connect the segment"))
        .collect();
    let mut acfg = cfg.averaging;
    acfg.use_weights = cfg.weight_edges;
    let avg = rotation_averaging(n, &edges, &[(0, anchor.orientation)], &fallback, &acfg)?;
    if !avg.connected {
        out.warnings.push(format!(
            "pose graph of segment ending at t = {:.6} is disconnected",
            times[n - 1]
        ));
    }
    for (i, r) in avg.orientations.iter().enumerate().skip(1) {
        out.averaged.push(TrajectoryRecord::new(times[i], *r));
    }
    *anchor = *out.averaged.last().expect("segment has nodes");
    Ok(())
}

/// Runs the odometry over a time-ordered stream.
pub fn vo_run(stream: &[Event], intr: &CameraIntrinsics, cfg: &VoConfig) -> Result<VoOutput> {
    cfg.validate()?;
    let ranges = batch_ranges(stream.len(), cfg.batch_size);
    if ranges.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} events, need at least one batch of {}",
            stream.len(),
            cfg.batch_size
        )));
    }
    if stream.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::Data("event stream is not time-ordered".into()));
    }
    let rays: Vec<Vector3<f64>> = stream.iter().map(|e| intr.ray(&e.pixel())).collect::<Result<_>>()?;
    let half = cfg.batch_size / 2;
    let start = TrajectoryRecord::new(stream[0].t, Rotation::identity());
    let mut out = VoOutput {
        averaged: vec![start],
        chained: vec![start],
        batches: Vec::with_capacity(ranges.len()),
        warnings: Vec::new(),
    };
    let mut anchor = start;
    let mut segment = Segment::default();
    let mut prev: Option<SolvedBatch> = None;

    for (b, range) in ranges.into_iter().enumerate() {
        let new_half = range.start + half..range.end;
        let continuation = prev
            .as_ref()
            .map(|p| extend_tracks(p, range.start..range.start + half, new_half.clone(), &mut segment.tracks));
        let key = match &continuation {
            None => true,
            Some((_, tracked)) => key_batch_decision(*tracked, cfg.key_threshold),
        };
        if key {
            flush(&mut segment, &mut anchor, stream, &rays, cfg, &mut out)?;
        }
        let (ids, tracked, k) = match continuation {
            Some((ids, tracked)) if !key => {
                let k = ((cfg.track_trim * tracked as f64).floor() as usize).max(1);
                (ids, tracked, k)
            }
            _ => (range.clone().collect::<Vec<_>>(), 0, cfg.key_count()),
        };
        let events: Vec<Event> = ids.iter().map(|&i| stream[i]).collect();
        let batch_rays: Vec<Vector3<f64>> = ids.iter().map(|&i| rays[i]).collect();
        let scfg = StrConfig {
            trim_count: Some(k),
            ..cfg.str_cfg
        };
        // Warm start from the previous batch's velocity.
        let previous = prev.as_ref().map(|p| p.result.omega);
        let solved = EventBatch::from_events(events).and_then(|batch| {
            let window = batch.window();
            let initial = previous.map_or(Rotation::identity(), |w| w.rotation_over(window.half()));
            solve_from(&batch, &batch_rays, &scfg, initial).map(|r| (window, r))
        });
        let mut report = BatchReport {
            index: b,
            window: Window::new(stream[range.start].t, stream[range.end - 1].t),
            key,
            events: ids.len(),
            tracked,
            correspondences: 0,
            iterations: 0,
            omega: AngularVelocity::zero(),
            failure: None,
        };
        match solved {
            Ok((window, result)) if !result.correspondences.is_empty() => {
                report.window = window;
                report.correspondences = result.correspondences.len();
                report.iterations = result.iterations;
                report.omega = result.omega;
                let gap = result
                    .correspondences
                    .iter()
                    .map(|c| stream[ids[c.n]].t - stream[ids[c.j]].t)
                    .sum::<f64>()
                    / result.correspondences.len() as f64;
                let velocity = if gap > 0.0 { result.rotvec / gap } else { result.omega.0 };
                let last = out.chained.last().expect("trajectory starts with the origin");
                let r = result.omega.rotation_over(window.beta - last.t) * last.orientation;
                out.chained.push(TrajectoryRecord::new(window.beta, r.renormalized()));
                segment.nodes.push(Node {
                    batch: b,
                    end: window.beta,
                    velocity,
                });
                prev = Some(SolvedBatch {
                    index: b,
                    ids,
                    result,
                    key,
                });
            }
            Ok(_) => {
                report.failure = Some("no correspondences".into());
                prev = None;
            }
            Err(e) => {
                report.failure = Some(e.to_string());
                prev = None;
            }
        }
        if prev.is_none() {
            // The next batch starts a fresh segment.
            flush(&mut segment, &mut anchor, stream, &rays, cfg, &mut out)?;
        }
        out.batches.push(report);
    }
    flush(&mut segment, &mut anchor, stream, &rays, cfg, &mut out)?;
    Ok(out)
}
