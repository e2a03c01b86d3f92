//! Per-batch estimation, error/runtime sweeps and CSV reports.
//!
//! Batches here are non-overlapping and consecutive; the odometry in
//! [`crate::vo`] uses its own overlapping batches.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use crate::camera::CameraIntrinsics;
use crate::contrast::{cm_solve, CmConfig};
use crate::error::{Error, Result};
use crate::event::{Event, EventBatch, Window};
use crate::io::{Trajectory, TrajectoryRecord};
use crate::metrics::rms_velocity_error;
use crate::registration::{str_solve, StrConfig};
use crate::so3::{AngularVelocity, Rotation};

/// Batch sizes of the default sweep.
pub const DEFAULT_SIZES: [usize; 5] = [10_000, 15_000, 20_000, 25_000, 30_000];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Str,
    Cm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Str => "str",
            Method::Cm => "cm",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "str" => Ok(Method::Str),
            "cm" => Ok(Method::Cm),
            other => Err(Error::Config(format!("unknown method {other:?} (expected str or cm)"))),
        }
    }
}

/// How a stream is cut into batches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Batching {
    /// Fixed event count.
    Count(usize),
    /// Fixed duration in seconds.
    Duration(f64),
}

/// Consecutive non-overlapping batches; a trailing partial batch is dropped.
pub fn batch_ranges(events: &[Event], batching: Batching) -> Result<Vec<Range<usize>>> {
    match batching {
        Batching::Count(0) => Err(Error::Config("batch size must be positive".into())),
        Batching::Count(n) => Ok((0..events.len() / n).map(|k| k * n..(k + 1) * n).collect()),
        Batching::Duration(d) if !(d > 0.0) || !d.is_finite() => {
            Err(Error::Config(format!("batch duration must be positive, got {d}")))
        }
        Batching::Duration(d) => {
            let Some(first) = events.first() else {
                return Ok(Vec::new());
            };
            let last = events[events.len() - 1].t;
            let mut out = Vec::new();
            let mut start = 0;
            let mut k = 1;
            while first.t + k as f64 * d <= last {
                let end_t = first.t + k as f64 * d;
                let end = start + events[start..].partition_point(|e| e.t < end_t);
                if end > start {
                    out.push(start..end);
                }
                start = end;
                k += 1;
            }
            Ok(out)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchEstimate {
    pub index: usize,
    pub window: Window,
    pub events: usize,
    pub omega: AngularVelocity,
    pub r_alpha_beta: Rotation,
    /// Mean and largest selected residual (STR) or `NaN` (CM).
    pub residual_mean: f64,
    pub residual_max: f64,
    pub iterations: usize,
    pub converged: bool,
    pub runtime_ms: f64,
}

impl BatchEstimate {
    /// Rotation over the half window, `exp(ω̃ Δ)`.
    pub fn r_delta(&self) -> Rotation {
        self.omega.rotation_over(self.window.half())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateConfig {
    pub str_cfg: StrConfig,
    pub cm_cfg: CmConfig,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            str_cfg: StrConfig::default(),
            cm_cfg: CmConfig::default(),
        }
    }
}

/// Estimates every batch. CM starts each batch from the previous estimate
/// (zero for the first); its image matches the sensor resolution.
pub fn estimate_batches(
    events: &[Event],
    intr: &CameraIntrinsics,
    method: Method,
    batching: Batching,
    cfg: &EstimateConfig,
) -> Result<Vec<BatchEstimate>> {
    let ranges = batch_ranges(events, batching)?;
    let mut out = Vec::with_capacity(ranges.len());
    let mut previous = AngularVelocity::zero();
    for (index, range) in ranges.into_iter().enumerate() {
        let batch = EventBatch::from_events(events[range].to_vec())?;
        let window = batch.window();
        let start = Instant::now();
        let estimate = match method {
            Method::Str => {
                let r = str_solve(&batch, intr, &cfg.str_cfg)?;
                let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
                let n = r.correspondences.len().max(1) as f64;
                BatchEstimate {
                    index,
                    window,
                    events: batch.len(),
                    omega: r.omega,
                    r_alpha_beta: r.r_alpha_beta,
                    residual_mean: r.correspondences.iter().map(|c| c.residual).sum::<f64>() / n,
                    residual_max: r.correspondences.last().map_or(0.0, |c| c.residual),
                    iterations: r.iterations,
                    converged: r.converged,
                    runtime_ms,
                }
            }
            Method::Cm => {
                let r = cm_solve(&batch, intr, &cfg.cm_cfg, (intr.width, intr.height), previous)?;
                let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
                BatchEstimate {
                    index,
                    window,
                    events: batch.len(),
                    omega: r.omega,
                    r_alpha_beta: r.omega.rotation_over(window.duration()),
                    residual_mean: f64::NAN,
                    residual_max: f64::NAN,
                    iterations: r.iterations,
                    converged: r.converged,
                    runtime_ms,
                }
            }
        };
        previous = estimate.omega;
        out.push(estimate);
    }
    Ok(out)
}

/// Ground-truth rotation over the half window of `w`: half the rotation over
/// the whole window, i.e. the window-averaged velocity times `Δ`.
pub fn truth_r_delta(gt: &Trajectory, w: &Window) -> Result<Rotation> {
    let full = gt.relative_rotation(w.alpha, w.beta)?;
    Ok(Rotation::exp(&(full.log() * 0.5)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub sequence: String,
    pub batch_size: usize,
    /// Mean batch duration (ms).
    pub duration_ms: f64,
    pub method: Method,
    /// RMS error normalised by the half window `Δ` (deg/s).
    pub rms_deg_s: f64,
    /// RMS error normalised by the whole window `2Δ` (deg/s).
    pub rms_window_deg_s: f64,
    /// Mean runtime per batch (ms).
    pub runtime_ms: f64,
    pub batches: usize,
}

/// Evaluates estimates against ground truth; batches outside the
/// ground-truth span are skipped.
pub fn bench_row(sequence: &str, batch_size: usize, method: Method, estimates: &[BatchEstimate], gt: &Trajectory) -> Result<BenchRow> {
    let mut est = Vec::new();
    let mut truth = Vec::new();
    let mut halves = Vec::new();
    let mut runtime = 0.0;
    let mut duration = 0.0;
    for e in estimates.iter().filter(|e| gt.contains(e.window.alpha) && gt.contains(e.window.beta)) {
        est.push(e.r_delta());
        truth.push(truth_r_delta(gt, &e.window)?);
        halves.push(e.window.half());
        runtime += e.runtime_ms;
        duration += e.window.duration() * 1e3;
    }
    let n = est.len();
    let rms = rms_velocity_error(&est, &truth, &halves)?;
    let fulls: Vec<f64> = halves.iter().map(|h| 2.0 * h).collect();
    Ok(BenchRow {
        sequence: sequence.to_string(),
        batch_size,
        duration_ms: duration / n as f64,
        method,
        rms_deg_s: rms,
        rms_window_deg_s: rms_velocity_error(&est, &truth, &fulls)?,
        runtime_ms: runtime / n as f64,
        batches: n,
    })
}

/// One row per (size, method), sizes outermost.
pub fn bench(
    sequence: &str,
    events: &[Event],
    intr: &CameraIntrinsics,
    gt: &Trajectory,
    sizes: &[usize],
    methods: &[Method],
    cfg: &EstimateConfig,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(sizes.len() * methods.len());
    for &n in sizes {
        for &method in methods {
            let estimates = estimate_batches(events, intr, method, Batching::Count(n), cfg)?;
            if estimates.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "{} events cannot fill one batch of {n}",
                    events.len()
                )));
            }
            rows.push(bench_row(sequence, n, method, &estimates, gt)?);
        }
    }
    Ok(rows)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: "<csv output>".into(),
            source,
        },
        other => Error::Data(format!("csv: {other:?}")),
    }
}

pub fn write_estimates_csv(w: impl Write, method: Method, rows: &[BatchEstimate]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "batch", "method", "alpha", "beta", "events", "wx", "wy", "wz", "rx", "ry", "rz", "residual_mean",
        "residual_max", "iterations", "converged", "runtime_ms",
    ])
    .map_err(csv_error)?;
    for r in rows {
        let rv = r.r_alpha_beta.log();
        out.write_record([
            r.index.to_string(),
            method.to_string(),
            r.window.alpha.to_string(),
            r.window.beta.to_string(),
            r.events.to_string(),
            r.omega.0.x.to_string(),
            r.omega.0.y.to_string(),
            r.omega.0.z.to_string(),
            rv.x.to_string(),
            rv.y.to_string(),
            rv.z.to_string(),
            r.residual_mean.to_string(),
            r.residual_max.to_string(),
            r.iterations.to_string(),
            r.converged.to_string(),
            format!("{:.3}", r.runtime_ms),
        ])
        .map_err(csv_error)?;
    }
    out.flush().map_err(|e| Error::io("<csv output>", e))
}

pub fn write_bench_csv(w: impl Write, rows: &[BenchRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "sequence",
        "batch_size",
        "duration_ms",
        "method",
        "rms_deg_s",
        "rms_window_deg_s",
        "runtime_ms",
        "batches",
    ])
    .map_err(csv_error)?;
    for r in rows {
        out.write_record([
            r.sequence.clone(),
            r.batch_size.to_string(),
            format!("{:.3}", r.duration_ms),
            r.method.to_string(),
            r.rms_deg_s.to_string(),
            r.rms_window_deg_s.to_string(),
            format!("{:.3}", r.runtime_ms),
            r.batches.to_string(),
        ])
        .map_err(csv_error)?;
    }
    out.flush().map_err(|e| Error::io("<csv output>", e))
}

/// Trajectory rows `t,qx,qy,qz,qw` (camera-to-world, as in trajectory
/// files), plus `error_deg` when per-sample errors are given.
pub fn write_trajectory_csv(w: impl Write, records: &[TrajectoryRecord], errors: Option<&[f64]>) -> Result<()> {
    if let Some(e) = errors {
        if e.len() != records.len() {
            return Err(Error::Data(format!("{} errors for {} poses", e.len(), records.len())));
        }
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t", "qx", "qy", "qz", "qw"];
    if errors.is_some() {
        header.push("error_deg");
    }
    out.write_record(&header).map_err(csv_error)?;
    for (i, r) in records.iter().enumerate() {
        let (qw, q) = r.orientation.inverse().quaternion();
        let mut row = vec![r.t.to_string(), q.x.to_string(), q.y.to_string(), q.z.to_string(), qw.to_string()];
        if let Some(e) = errors {
            row.push(e[i].to_string());
        }
        out.write_record(&row).map_err(csv_error)?;
    }
    out.flush().map_err(|e| Error::io("<csv output>", e))
}
