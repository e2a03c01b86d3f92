//! Text formats for events, calibration and trajectories.
//!
//! * events: one `t x y p` per line, polarity `0`/`1`;
//! * calibration: a single line `fx fy cx cy k1 k2 width height`;
//! * trajectory: `t qx qy qz qw` per line (an 8-column `t px py pz qx qy qz qw`
//!   pose file is accepted too, positions are ignored).
//!
//! Blank lines and lines starting with `#` are skipped everywhere.
//!
//! Trajectory quaternions follow the usual dataset convention and store the
//! camera orientation in the world (camera-to-world). In memory a
//! [`TrajectoryRecord`] holds the world-to-camera rotation `R_t`, for which
//! `R_{a,b} = R_b R_aᵀ`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::event::{Event, Polarity};
use crate::so3::Rotation;

const QUATERNION_NORM_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub orientation: Rotation,
}

impl TrajectoryRecord {
    pub fn new(t: f64, orientation: Rotation) -> Self {
        TrajectoryRecord { t, orientation }
    }
}

/// Time-sorted orientations with geodesic interpolation.
#[derive(Clone, Debug)]
pub struct Trajectory {
    records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn new(records: Vec<TrajectoryRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InsufficientData("empty trajectory".into()));
        }
        if records.windows(2).any(|w| !(w[0].t <= w[1].t)) {
            return Err(Error::Data("trajectory records are not time sorted".into()));
        }
        Ok(Trajectory { records })
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn start(&self) -> f64 {
        self.records[0].t
    }

    pub fn end(&self) -> f64 {
        self.records[self.records.len() - 1].t
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start() && t <= self.end()
    }

    /// Orientation at `t`, interpolated along the geodesic between the
    /// neighbouring samples (quaternion slerp).
    pub fn orientation_at(&self, t: f64) -> Result<Rotation> {
        if !self.contains(t) {
            return Err(Error::Data(format!(
                "time {t} outside trajectory span [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        let i = self.records.partition_point(|r| r.t <= t);
        if i == 0 {
            return Ok(self.records[0].orientation);
        }
        let a = &self.records[i - 1];
        if a.t == t || i == self.records.len() {
            return Ok(a.orientation);
        }
        let b = &self.records[i];
        let s = (t - a.t) / (b.t - a.t);
        Ok(a.orientation.interpolate(&b.orientation, s))
    }

    /// Ground-truth relative rotation `R_{a,b} = R_b R_aᵀ`.
    pub fn relative_rotation(&self, a: f64, b: f64) -> Result<Rotation> {
        let ra = self.orientation_at(a)?;
        let rb = self.orientation_at(b)?;
        Ok(rb * ra.inverse())
    }
}

pub fn gt_relative_rotation(traj: &Trajectory, a: f64, b: f64) -> Result<Rotation> {
    traj.relative_rotation(a, b)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Calls `f(line_number, fields)` for every non-blank, non-comment line.
fn for_each_record(
    path: &Path,
    mut f: impl FnMut(usize, &[&str]) -> Result<()>,
) -> Result<()> {
    let reader = open(path)?;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_ascii_whitespace().collect();
        f(i + 1, &fields)?;
    }
    Ok(())
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_error(path, line, format!("invalid {name} '{s}'")))
}

fn finite(path: &Path, line: usize, name: &str, s: &str) -> Result<f64> {
    let v: f64 = field(path, line, name, s)?;
    if !v.is_finite() {
        return Err(parse_error(path, line, format!("non-finite {name} '{s}'")));
    }
    Ok(v)
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    let path = path.as_ref();
    let mut events = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for_each_record(path, |line, f| {
        if f.len() != 4 {
            return Err(parse_error(
                path,
                line,
                format!("expected 't x y p', found {} fields", f.len()),
            ));
        }
        let t = finite(path, line, "timestamp", f[0])?;
        let x = finite(path, line, "x", f[1])?;
        let y = finite(path, line, "y", f[2])?;
        let polarity = match f[3] {
            "0" => Polarity::Negative,
            "1" => Polarity::Positive,
            other => {
                return Err(parse_error(
                    path,
                    line,
                    format!("polarity must be 0 or 1, found '{other}'"),
                ))
            }
        };
        if t < 0.0 {
            return Err(parse_error(path, line, format!("negative timestamp {t}")));
        }
        if t < prev {
            return Err(Error::Ordering {
                path: path.to_path_buf(),
                line,
                t,
                prev,
            });
        }
        prev = t;
        events.push(Event::new(x, y, t, polarity));
        Ok(())
    })?;
    Ok(events)
}

pub fn write_events(path: impl AsRef<Path>, events: &[Event]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for e in events {
        let p = match e.polarity {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        };
        writeln!(w, "{} {} {} {}", e.t, e.x, e.y, p).map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

pub fn read_calibration(path: impl AsRef<Path>) -> Result<CameraIntrinsics> {
    let path = path.as_ref();
    let mut out = None;
    for_each_record(path, |line, f| {
        if out.is_some() {
            return Err(parse_error(path, line, "calibration has more than one record"));
        }
        if f.len() != 8 {
            return Err(parse_error(
                path,
                line,
                format!(
                    "expected 'fx fy cx cy k1 k2 width height', found {} fields",
                    f.len()
                ),
            ));
        }
        let names = ["fx", "fy", "cx", "cy", "k1", "k2"];
        let mut v = [0.0; 6];
        for (k, name) in names.iter().enumerate() {
            v[k] = finite(path, line, name, f[k])?;
        }
        let width: u32 = field(path, line, "width", f[6])?;
        let height: u32 = field(path, line, "height", f[7])?;
        let intr =
            CameraIntrinsics::with_distortion(v[0], v[1], v[2], v[3], v[4], v[5], width, height)?;
        out = Some(intr);
        Ok(())
    })?;
    out.ok_or_else(|| parse_error(path, 0, "calibration file has no record"))
}

pub fn write_calibration(path: impl AsRef<Path>, intr: &CameraIntrinsics) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    writeln!(
        w,
        "{} {} {} {} {} {} {} {}",
        intr.fx, intr.fy, intr.cx, intr.cy, intr.k1, intr.k2, intr.width, intr.height
    )
    .and_then(|_| w.flush())
    .map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRecord>> {
    let path = path.as_ref();
    let mut records = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for_each_record(path, |line, f| {
        let q = match f.len() {
            5 => &f[1..5],
            8 => &f[4..8],
            n => {
                return Err(parse_error(
                    path,
                    line,
                    format!("expected 't qx qy qz qw', found {n} fields"),
                ))
            }
        };
        let t = finite(path, line, "timestamp", f[0])?;
        let qx = finite(path, line, "qx", q[0])?;
        let qy = finite(path, line, "qy", q[1])?;
        let qz = finite(path, line, "qz", q[2])?;
        let qw = finite(path, line, "qw", q[3])?;
        let norm = (qx * qx + qy * qy + qz * qz + qw * qw).sqrt();
        if (norm - 1.0).abs() > QUATERNION_NORM_TOL {
            return Err(Error::Data(format!(
                "{}:{line}: quaternion norm {norm} deviates from 1 by more than {QUATERNION_NORM_TOL}",
                path.display()
            )));
        }
        if t < prev {
            return Err(Error::Ordering {
                path: path.to_path_buf(),
                line,
                t,
                prev,
            });
        }
        prev = t;
        let camera_to_world = Rotation::from_quaternion(qw, Vector3::new(qx, qy, qz));
        records.push(TrajectoryRecord::new(t, camera_to_world.inverse()));
        Ok(())
    })?;
    Ok(records)
}

pub fn write_trajectory(path: impl AsRef<Path>, records: &[TrajectoryRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for r in records {
        let (qw, q) = r.orientation.inverse().quaternion();
        writeln!(w, "{} {} {} {} {}", r.t, q.x, q.y, q.z, qw).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
