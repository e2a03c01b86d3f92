//! Synthetic event streams with exact ground truth.
//!
//! The scene is a set of bearing vectors (a pure-rotation scene needs no
//! depth). A landmark observed at time `t` appears along `R_t X`; events are
//! its projections at sampled firing times plus optional pixel noise,
//! timestamp jitter and uniformly scattered outliers.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::event::{Event, EventBatch, Polarity, Window};
use crate::io::TrajectoryRecord;
use crate::so3::{relative_rotation, AngularVelocity, Rotation};

/// Ground-truth sampling rate of generated trajectories (Hz).
pub const TRAJECTORY_RATE: f64 = 125.0;

#[derive(Clone, Debug)]
pub struct SceneModel {
    landmarks: Vec<Vector3<f64>>,
    pub seed: u64,
}

impl SceneModel {
    /// `count` landmarks drawn uniformly from the spherical cap of
    /// `half_angle` radians around the optical axis (`π` covers the sphere).
    pub fn random(count: usize, half_angle: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cos_max = half_angle.min(std::f64::consts::PI).cos();
        let landmarks = (0..count)
            .map(|_| {
                let z: f64 = rng.gen_range(cos_max..=1.0);
                let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).max(0.0).sqrt();
                Vector3::new(r * phi.cos(), r * phi.sin(), z)
            })
            .collect();
        SceneModel { landmarks, seed }
    }

    pub fn from_landmarks(landmarks: Vec<Vector3<f64>>, seed: u64) -> Self {
        let landmarks = landmarks.into_iter().map(|l| l.normalize()).collect();
        SceneModel { landmarks, seed }
    }

    pub fn landmarks(&self) -> &[Vector3<f64>] {
        &self.landmarks
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionSegment {
    pub duration: f64,
    pub omega: AngularVelocity,
}

/// Piecewise-constant angular velocity starting from an initial orientation.
#[derive(Clone, Debug)]
pub struct MotionScript {
    segments: Vec<MotionSegment>,
    initial: Rotation,
    /// Orientation and start time of each segment.
    starts: Vec<(f64, Rotation)>,
}

impl MotionScript {
    pub fn new(segments: Vec<MotionSegment>, initial: Rotation) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Config("motion script has no segments".into()));
        }
        let mut starts = Vec::with_capacity(segments.len());
        let (mut t, mut r) = (0.0, initial);
        for s in &segments {
            if !(s.duration > 0.0) || !s.duration.is_finite() || !s.omega.is_finite() {
                return Err(Error::Config(format!(
                    "invalid motion segment (duration {}, omega {:?})",
                    s.duration, s.omega.0
                )));
            }
            starts.push((t, r));
            r = (relative_rotation(&s.omega, s.duration) * r).renormalized();
            t += s.duration;
        }
        Ok(MotionScript {
            segments,
            initial,
            starts,
        })
    }

    pub fn constant(omega: AngularVelocity, duration: f64) -> Result<Self> {
        Self::new(vec![MotionSegment { duration, omega }], Rotation::identity())
    }

    /// Deterministic tour of `duration` seconds: constant velocity over
    /// `segment`-second pieces, each axis below `peak` rad/s, changing
    /// direction from piece to piece.
    pub fn tour(duration: f64, segment: f64, peak: f64) -> Result<Self> {
        if !(duration > 0.0 && segment > 0.0) || !duration.is_finite() || !segment.is_finite() {
            return Err(Error::Config(format!("invalid tour ({duration} s in {segment} s pieces)")));
        }
        let count = (duration / segment).ceil() as usize;
        let segments = (0..count)
            .map(|k| {
                let a = k as f64;
                let d = segment.min(duration - a * segment);
                MotionSegment {
                    duration: d,
                    omega: AngularVelocity::new(
                        0.75 * peak * (1.3 * a).sin(),
                        peak * (0.7 * a).cos(),
                        0.5 * peak * (2.1 * a).sin(),
                    ),
                }
            })
            .filter(|s| s.duration > 1e-12)
            .collect();
        Self::new(segments, Rotation::identity())
    }

    pub fn segments(&self) -> &[MotionSegment] {
        &self.segments
    }

    pub fn initial(&self) -> Rotation {
        self.initial
    }

    pub fn duration(&self) -> f64 {
        let (t, _) = self.starts[self.starts.len() - 1];
        t + self.segments[self.segments.len() - 1].duration
    }

    fn segment_at(&self, t: f64) -> usize {
        self.starts
            .partition_point(|(s, _)| *s <= t)
            .saturating_sub(1)
    }

    pub fn angular_velocity_at(&self, t: f64) -> AngularVelocity {
        self.segments[self.segment_at(t)].omega
    }

    /// `R_t`, extrapolating the last segment beyond the script's end.
    pub fn orientation_at(&self, t: f64) -> Rotation {
        let i = self.segment_at(t);
        let (t0, r0) = self.starts[i];
        relative_rotation(&self.segments[i].omega, t - t0) * r0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    /// Standard deviation of isotropic pixel noise.
    pub pixel_sigma: f64,
    /// Timestamp jitter, uniform in `[-jitter, jitter]` seconds.
    pub jitter: f64,
    /// Fraction of events replaced by uniformly scattered outliers.
    pub outlier_fraction: f64,
    /// Round pixel positions to the sensor grid.
    pub quantize: bool,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel {
            pixel_sigma: 0.0,
            jitter: 0.0,
            outlier_fraction: 0.0,
            quantize: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.pixel_sigma >= 0.0 && self.pixel_sigma.is_finite()) {
            return Err(Error::Config(format!("invalid pixel noise {}", self.pixel_sigma)));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Config(format!("invalid jitter {}", self.jitter)));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::Config(format!(
                "outlier fraction {} outside [0, 1)",
                self.outlier_fraction
            )));
        }
        Ok(())
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::noiseless()
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticBatch {
    pub batch: EventBatch,
    /// `R*_Δ`, rotation over the first half of the window.
    pub r_delta: Rotation,
    pub omega: AngularVelocity,
    /// For every inlier pair, batch indices of its first- and second-half event.
    pub pairs: Vec<(usize, usize)>,
}

struct Observer<'a> {
    intr: &'a CameraIntrinsics,
    sigma: Option<Normal<f64>>,
    quantize: bool,
}

impl Observer<'_> {
    fn pixel(&self, ray: &Vector3<f64>) -> Option<Vector2<f64>> {
        self.intr.project(ray).filter(|p| self.intr.contains(p))
    }

    fn observe(&self, ray: &Vector3<f64>, rng: &mut ChaCha8Rng) -> Vector2<f64> {
        let mut px = self.intr.project(ray).expect("visible landmark");
        if let Some(n) = &self.sigma {
            px += Vector2::new(n.sample(rng), n.sample(rng));
        }
        if self.quantize {
            px = px.map(f64::round);
        }
        if self.intr.has_distortion() {
            px = self.intr.distort(&px);
        }
        px
    }

    fn outlier(&self, t: f64, rng: &mut ChaCha8Rng) -> Event {
        let mut x = rng.gen_range(0.0..self.intr.width as f64);
        let mut y = rng.gen_range(0.0..self.intr.height as f64);
        if self.quantize {
            x = x.floor();
            y = y.floor();
        }
        Event::new(x, y, t, random_polarity(rng))
    }
}

fn random_polarity(rng: &mut impl Rng) -> Polarity {
    if rng.gen_bool(0.5) {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

fn sort_events(events: &mut [Event]) {
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
}

/// One batch of `count` events over `window` under constant angular velocity.
///
/// The camera frame at `α` is the scene frame. Inlier events come in pairs
/// `(t, t + Δ)` of the same landmark, so every first-half inlier has an exact
/// partner under `R*_Δ = exp(Δ ω)` before noise is added.
#[allow(clippy::too_many_arguments)]
pub fn generate_batch(
    scene: &SceneModel,
    omega: AngularVelocity,
    window: Window,
    intr: &CameraIntrinsics,
    count: usize,
    noise: &NoiseModel,
    seed: u64,
) -> Result<SyntheticBatch> {
    noise.validate()?;
    let delta = window.half();
    if !(delta > 0.0) {
        return Err(Error::Config("window must have positive duration".into()));
    }
    if noise.jitter * 2.0 >= delta {
        return Err(Error::Config(format!(
            "jitter {} too large for half window {delta}",
            noise.jitter
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observer = Observer {
        intr,
        sigma: (noise.pixel_sigma > 0.0).then(|| Normal::new(0.0, noise.pixel_sigma).unwrap()),
        quantize: noise.quantize,
    };
    let at = |t: f64, x: &Vector3<f64>| relative_rotation(&omega, t - window.alpha) * *x;
    let visible: Vec<usize> = (0..scene.landmarks.len())
        .filter(|&i| {
            let x = &scene.landmarks[i];
            [window.alpha, window.midpoint(), window.beta]
                .iter()
                .all(|&t| observer.pixel(&at(t, x)).is_some())
        })
        .collect();

    let inlier_pairs = ((count as f64 * (1.0 - noise.outlier_fraction)) / 2.0).round() as usize;
    let inlier_pairs = inlier_pairs.min(count / 2);
    if inlier_pairs > 0 && visible.is_empty() {
        return Err(Error::InsufficientData(
            "no landmark stays in view for the whole window".into(),
        ));
    }

    // (event, pair id, is first of pair)
    let mut tagged: Vec<(Event, Option<(usize, bool)>)> = Vec::with_capacity(count);
    for p in 0..inlier_pairs {
        let x = &scene.landmarks[visible[rng.gen_range(0..visible.len())]];
        let t = rng.gen_range(window.alpha + noise.jitter..=window.midpoint() - noise.jitter);
        for (k, tn) in [t, t + delta].into_iter().enumerate() {
            let px = observer.observe(&at(tn, x), &mut rng);
            let jitter = if noise.jitter > 0.0 {
                rng.gen_range(-noise.jitter..=noise.jitter)
            } else {
                0.0
            };
            let ts = (tn + jitter).clamp(window.alpha, window.beta);
            let e = Event::new(px.x, px.y, ts, random_polarity(&mut rng));
            tagged.push((e, Some((p, k == 0))));
        }
    }
    while tagged.len() < count {
        let t = rng.gen_range(window.alpha..=window.beta);
        tagged.push((observer.outlier(t, &mut rng), None));
    }
    tagged.sort_by(|a, b| a.0.t.total_cmp(&b.0.t));

    let mut pairs = vec![(usize::MAX, usize::MAX); inlier_pairs];
    for (i, (_, tag)) in tagged.iter().enumerate() {
        if let Some((p, first)) = tag {
            if *first {
                pairs[*p].0 = i;
            } else {
                pairs[*p].1 = i;
            }
        }
    }
    let events = tagged.into_iter().map(|(e, _)| e).collect();
    let batch = EventBatch::new(events, window)?;
    Ok(SyntheticBatch {
        batch,
        r_delta: relative_rotation(&omega, delta),
        omega,
        pairs,
    })
}

#[derive(Clone, Debug)]
pub struct SyntheticStream {
    pub events: Vec<Event>,
    /// Ground truth `R_t` sampled at [`TRAJECTORY_RATE`].
    pub trajectory: Vec<TrajectoryRecord>,
}

/// Event stream at a constant `rate` (events/s) along a motion script.
///
/// Firing ticks are evenly spaced; each tick either emits an outlier or the
/// next in-view landmark in round-robin order, so every visible landmark
/// fires at a regular period.
pub fn generate_stream(
    scene: &SceneModel,
    script: &MotionScript,
    intr: &CameraIntrinsics,
    rate: f64,
    noise: &NoiseModel,
    seed: u64,
) -> Result<SyntheticStream> {
    noise.validate()?;
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::Config(format!("invalid event rate {rate}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observer = Observer {
        intr,
        sigma: (noise.pixel_sigma > 0.0).then(|| Normal::new(0.0, noise.pixel_sigma).unwrap()),
        quantize: noise.quantize,
    };
    let duration = script.duration();
    let ticks = (duration * rate).floor() as usize + 1;

    // Candidate landmarks are refreshed periodically with a margin covering
    // the largest motion possible before the next refresh.
    let refresh = 0.01;
    let max_rate = script
        .segments()
        .iter()
        .map(|s| s.omega.norm())
        .fold(0.0, f64::max);
    let focal = intr.fx.max(intr.fy);
    let margin = 2.0 * max_rate * refresh * focal + 2.0;
    let near_view = |r: &Rotation, x: &Vector3<f64>| {
        let ray = *r * *x;
        intr.project(&ray).is_some_and(|p| {
            p.x >= -margin
                && p.y >= -margin
                && p.x < intr.width as f64 + margin
                && p.y < intr.height as f64 + margin
        })
    };

    let mut events = Vec::with_capacity(ticks);
    let mut candidates: Vec<usize> = Vec::new();
    let mut next_refresh = f64::NEG_INFINITY;
    let mut cursor = 0usize;
    for k in 0..ticks {
        let t = k as f64 / rate;
        if t >= next_refresh {
            let r = script.orientation_at(t);
            candidates.clear();
            candidates.extend((0..scene.landmarks.len()).filter(|&i| near_view(&r, &scene.landmarks[i])));
            next_refresh = t + refresh;
            cursor = 0;
        }
        let ts = |rng: &mut ChaCha8Rng| {
            let j = if noise.jitter > 0.0 {
                rng.gen_range(-noise.jitter..=noise.jitter)
            } else {
                0.0
            };
            (t + j).clamp(0.0, duration)
        };
        if noise.outlier_fraction > 0.0 && rng.gen_bool(noise.outlier_fraction) {
            let tj = ts(&mut rng);
            events.push(observer.outlier(tj, &mut rng));
            continue;
        }
        let r = script.orientation_at(t);
        let mut emitted = false;
        for _ in 0..candidates.len() {
            let i = candidates[cursor % candidates.len()];
            cursor = (cursor + 1) % candidates.len();
            let ray = r * scene.landmarks[i];
            if observer.pixel(&ray).is_some() {
                let px = observer.observe(&ray, &mut rng);
                let tj = ts(&mut rng);
                events.push(Event::new(px.x, px.y, tj, random_polarity(&mut rng)));
                emitted = true;
                break;
            }
        }
        if !emitted {
            // Nothing in view: keep the event count by emitting background noise.
            let tj = ts(&mut rng);
            events.push(observer.outlier(tj, &mut rng));
        }
    }
    sort_events(&mut events);

    let samples = (duration * TRAJECTORY_RATE).floor() as usize + 1;
    let trajectory = (0..samples)
        .map(|i| {
            let t = i as f64 / TRAJECTORY_RATE;
            TrajectoryRecord::new(t, script.orientation_at(t))
        })
        .collect();
    Ok(SyntheticStream { events, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::exp_so3;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 200.0, 120.0, 90.0, 240, 180).unwrap()
    }

    fn ray(intr: &CameraIntrinsics, e: &Event) -> Vector3<f64> {
        intr.backproject(&e.pixel())
    }

    #[test]
    fn tour_spans_duration_with_bounded_velocity() {
        let t = MotionScript::tour(12.5, 5.0, 0.2).unwrap();
        assert_eq!(t.segments().len(), 3);
        assert!((t.duration() - 12.5).abs() < 1e-12);
        for s in t.segments() {
            assert!(s.omega.0.amax() <= 0.2);
        }
        assert_ne!(t.angular_velocity_at(1.0), t.angular_velocity_at(6.0));
        assert!(MotionScript::tour(0.0, 5.0, 0.2).is_err());
    }

    #[test]
    fn zero_motion_pairs_share_pixels() {
        let scene = SceneModel::random(300, 0.6, 1);
        let out = generate_batch(
            &scene,
            AngularVelocity::zero(),
            Window::new(0.0, 0.05),
            &camera(),
            2000,
            &NoiseModel::noiseless(),
            5,
        )
        .unwrap();
        assert_eq!(out.batch.len(), 2000);
        for &(a, b) in &out.pairs {
            let (ea, eb) = (out.batch.events()[a], out.batch.events()[b]);
            assert_eq!((ea.x, ea.y), (eb.x, eb.y));
            assert!((eb.t - ea.t - 0.025).abs() < 1e-15);
        }
    }

    #[test]
    fn noiseless_pairs_are_consistent_with_ground_truth() {
        let intr = camera();
        let scene = SceneModel::random(500, 0.6, 2);
        let omega = AngularVelocity::new(0.4, -0.7, 0.6);
        let out = generate_batch(
            &scene,
            omega,
            Window::new(1.0, 1.05),
            &intr,
            4000,
            &NoiseModel::noiseless(),
            9,
        )
        .unwrap();
        let m = out.batch.split_index();
        for &(a, b) in &out.pairs {
            assert!(a < m && b >= m);
            let (ua, ub) = (ray(&intr, &out.batch.events()[a]), ray(&intr, &out.batch.events()[b]));
            assert!((ub - out.r_delta * ua).norm() <= 1e-12);
        }
    }

    #[test]
    fn pixel_noise_gives_expected_chord_spread() {
        let intr = camera();
        let scene = SceneModel::random(800, 0.5, 3);
        let noise = NoiseModel {
            pixel_sigma: 0.5,
            ..NoiseModel::noiseless()
        };
        let mut sum_sq = 0.0;
        let mut n = 0usize;
        for seed in 0..10 {
            let out = generate_batch(
                &scene,
                AngularVelocity::new(0.0, 0.5, 0.0),
                Window::new(0.0, 0.05),
                &intr,
                20_000,
                &noise,
                seed,
            )
            .unwrap();
            for &(a, b) in &out.pairs {
                let ua = ray(&intr, &out.batch.events()[a]);
                let ub = ray(&intr, &out.batch.events()[b]);
                sum_sq += (ub - out.r_delta * ua).norm_squared();
                n += 1;
            }
        }
        assert!(n >= 100_000);
        // per-axis RMS of the chord between two independently perturbed rays
        let per_axis = (sum_sq / n as f64 / 2.0).sqrt();
        let expected = 2f64.sqrt() * 0.5 / 200.0;
        assert!((per_axis / expected - 1.0).abs() < 0.2, "{per_axis} vs {expected}");
    }

    #[test]
    fn outliers_fill_the_requested_fraction() {
        let out = generate_batch(
            &SceneModel::random(500, 0.6, 2),
            AngularVelocity::new(0.0, 1.0, 0.0),
            Window::new(0.0, 0.05),
            &camera(),
            10_000,
            &NoiseModel {
                outlier_fraction: 0.2,
                ..NoiseModel::noiseless()
            },
            1,
        )
        .unwrap();
        assert_eq!(out.batch.len(), 10_000);
        assert_eq!(out.pairs.len(), 4000);
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let scene = SceneModel::random(400, 0.6, 4);
        let noise = NoiseModel {
            pixel_sigma: 0.3,
            jitter: 1e-4,
            outlier_fraction: 0.1,
            quantize: false,
        };
        let gen = |seed| {
            generate_batch(
                &scene,
                AngularVelocity::new(0.1, 0.2, 0.3),
                Window::new(0.0, 0.04),
                &camera(),
                3000,
                &noise,
                seed,
            )
            .unwrap()
            .batch
            .into_events()
        };
        assert_eq!(gen(8), gen(8));
        assert_ne!(gen(8), gen(9));
    }

    #[test]
    fn script_endpoints_compose_segments() {
        let segs = vec![
            MotionSegment {
                duration: 0.7,
                omega: AngularVelocity::new(0.3, 0.0, -0.2),
            },
            MotionSegment {
                duration: 1.1,
                omega: AngularVelocity::new(-0.1, 0.5, 0.0),
            },
        ];
        let initial = exp_so3(&Vector3::new(0.1, 0.2, 0.3));
        let script = MotionScript::new(segs.clone(), initial).unwrap();
        let closed = relative_rotation(&segs[1].omega, 1.1)
            * relative_rotation(&segs[0].omega, 0.7)
            * initial;
        let end = script.orientation_at(1.8);
        assert!((end.matrix() - closed.matrix()).amax() <= 1e-12);
        assert_eq!(script.orientation_at(0.0), initial);
        assert!(MotionScript::new(vec![], Rotation::identity()).is_err());
    }

    #[test]
    fn stream_length_follows_rate() {
        let scene = SceneModel::random(3000, std::f64::consts::PI, 5);
        let script = MotionScript::constant(AngularVelocity::new(0.0, 0.3, 0.0), 0.5).unwrap();
        let noise = NoiseModel::noiseless();
        let a = generate_stream(&scene, &script, &camera(), 20_000.0, &noise, 1).unwrap();
        let b = generate_stream(&scene, &script, &camera(), 40_000.0, &noise, 1).unwrap();
        let diff = b.events.len() as i64 - 2 * a.events.len() as i64;
        assert!(diff.abs() <= 1, "{} vs {}", a.events.len(), b.events.len());
        assert_eq!(a.trajectory.len(), 63);
        assert!(a.events.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn stream_trajectory_matches_script() {
        let scene = SceneModel::random(1000, std::f64::consts::PI, 5);
        let omega = AngularVelocity::new(0.2, -0.1, 0.4);
        let script = MotionScript::constant(omega, 1.0).unwrap();
        let s = generate_stream(&scene, &script, &camera(), 5_000.0, &NoiseModel::noiseless(), 2)
            .unwrap();
        let last = s.trajectory.last().unwrap();
        assert_eq!(last.t, 1.0);
        let closed = relative_rotation(&omega, 1.0);
        assert!((last.orientation.matrix() - closed.matrix()).amax() <= 1e-12);
    }

    #[test]
    fn stream_events_lie_on_landmark_tracks() {
        let intr = camera();
        let scene = SceneModel::random(2000, std::f64::consts::PI, 6);
        let script = MotionScript::constant(AngularVelocity::new(0.0, 0.5, 0.1), 0.2).unwrap();
        let s = generate_stream(&scene, &script, &intr, 10_000.0, &NoiseModel::noiseless(), 3)
            .unwrap();
        for e in s.events.iter().step_by(97) {
            let r = script.orientation_at(e.t);
            let u = r.inverse() * intr.backproject(&e.pixel());
            let best = scene
                .landmarks()
                .iter()
                .map(|x| (x - u).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9);
        }
    }
}
