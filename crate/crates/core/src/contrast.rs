//! Contrast maximisation (CM) baseline.
//!
//! Events are warped back to the batch start under a candidate angular
//! velocity and accumulated into an image of warped events (IWE); the
//! velocity that maximises the image variance is the estimate.

use nalgebra::{Vector2, Vector3};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::event::{Event, EventBatch};
use crate::so3::AngularVelocity;

/// Image of warped events.
#[derive(Clone, Debug, PartialEq)]
pub struct Iwe {
    width: usize,
    height: usize,
    delta: f64,
    data: Vec<f64>,
}

impl Iwe {
    pub fn new(width: usize, height: usize, delta: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config("image must have at least one pixel".into()));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Config(format!("kernel bandwidth must be positive, got {delta}")));
        }
        Ok(Iwe {
            width,
            height,
            delta,
            data: vec![0.0; width * height],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn pixel_count(&self) -> usize {
        self.data.len()
    }

    /// Row-major pixel values.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mass(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `exp(−‖x − c‖² / 2δ²)` to every pixel `x` with `|x − c| ≤ 3δ` per
    /// axis.
    pub fn splat(&mut self, c: &Vector2<f64>) {
        let reach = 3.0 * self.delta;
        let (x0, x1) = ((c.x - reach).ceil().max(0.0), (c.x + reach).floor().min(self.width as f64 - 1.0));
        let (y0, y1) = ((c.y - reach).ceil().max(0.0), (c.y + reach).floor().min(self.height as f64 - 1.0));
        if !(x0 <= x1 && y0 <= y1) {
            return;
        }
        let (x0, x1, y0, y1) = (x0 as usize, x1 as usize, y0 as usize, y1 as usize);
        let inv = 1.0 / (2.0 * self.delta * self.delta);
        let nx = x1 - x0 + 1;
        let mut gx = [0.0; 64];
        let gx: &mut [f64] = if nx <= 64 { &mut gx[..nx] } else { &mut vec![0.0; nx] };
        gaussian_row(x0 as f64 - c.x, inv, gx);
        let ny = y1 - y0 + 1;
        let mut gy = [0.0; 64];
        let gy: &mut [f64] = if ny <= 64 { &mut gy[..ny] } else { &mut vec![0.0; ny] };
        gaussian_row(y0 as f64 - c.y, inv, gy);
        for (y, wy) in (y0..=y1).zip(gy.iter()) {
            let row = &mut self.data[y * self.width + x0..y * self.width + x0 + nx];
            for (v, g) in row.iter_mut().zip(gx.iter()) {
                *v += g * wy;
            }
        }
    }
}

/// `out[i] = exp(−(d0 + i)² · inv)`, using
/// `g(d + 1) = g(d) · exp(−(2d + 1) · inv)` so only three exponentials are
/// evaluated per row.
fn gaussian_row(d0: f64, inv: f64, out: &mut [f64]) {
    let mut g = (-d0 * d0 * inv).exp();
    let mut ratio = (-(2.0 * d0 + 1.0) * inv).exp();
    let step = (-2.0 * inv).exp();
    for v in out.iter_mut() {
        *v = g;
        g *= ratio;
        ratio *= step;
    }
}

/// Position of an event after undoing the rotation `ω` between `α` and its
/// timestamp, or `None` when the warped ray points away from the image plane.
pub fn warp_event(e: &Event, omega: &AngularVelocity, alpha: f64, intr: &CameraIntrinsics) -> Result<Option<Vector2<f64>>> {
    let ray = intr.ray(&e.pixel())?;
    Ok(warp_ray(&ray, e.t - alpha, omega, intr))
}

fn warp_ray(ray: &Vector3<f64>, dt: f64, omega: &AngularVelocity, intr: &CameraIntrinsics) -> Option<Vector2<f64>> {
    let v = rotate(ray, &(-dt * omega.0));
    if v.z <= 0.0 {
        return None;
    }
    Some(Vector2::new(intr.fx * v.x / v.z + intr.cx, intr.fy * v.y / v.z + intr.cy))
}

/// `exp(r) v` by Rodrigues' formula.
fn rotate(v: &Vector3<f64>, r: &Vector3<f64>) -> Vector3<f64> {
    let theta = r.norm();
    if theta < 1e-12 {
        return v + r.cross(v);
    }
    let k = r / theta;
    let (s, c) = theta.sin_cos();
    v * c + k.cross(v) * s + k * (k.dot(v) * (1.0 - c))
}

/// Rays and time offsets of a batch, cached across objective evaluations.
struct Warper<'a> {
    rays: Vec<Vector3<f64>>,
    dts: Vec<f64>,
    intr: &'a CameraIntrinsics,
}

impl<'a> Warper<'a> {
    fn new(batch: &EventBatch, intr: &'a CameraIntrinsics) -> Result<Self> {
        let alpha = batch.window().alpha;
        let rays = batch
            .events()
            .iter()
            .map(|e| intr.ray(&e.pixel()))
            .collect::<Result<Vec<_>>>()?;
        let dts = batch.events().iter().map(|e| e.t - alpha).collect();
        Ok(Warper { rays, dts, intr })
    }

    fn accumulate(&self, omega: &AngularVelocity, iwe: &mut Iwe) {
        iwe.clear();
        for (ray, &dt) in self.rays.iter().zip(&self.dts) {
            if let Some(p) = warp_ray(ray, dt, omega, self.intr) {
                iwe.splat(&p);
            }
        }
    }
}

/// Accumulates the IWE of `batch` under `omega` on a `resolution` grid.
pub fn accumulate_iwe(
    batch: &EventBatch,
    omega: &AngularVelocity,
    intr: &CameraIntrinsics,
    delta: f64,
    resolution: (u32, u32),
) -> Result<Iwe> {
    let mut iwe = Iwe::new(resolution.0 as usize, resolution.1 as usize, delta)?;
    Warper::new(batch, intr)?.accumulate(omega, &mut iwe);
    Ok(iwe)
}

/// Variance of the image over all its pixels (two-pass).
pub fn contrast(h: &Iwe) -> f64 {
    let p = h.data.len() as f64;
    let mean = h.data.iter().sum::<f64>() / p;
    h.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / p
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmConfig {
    /// Kernel bandwidth `δ` (pixels).
    pub delta: f64,
    /// Central-difference step (rad/s).
    pub fd_step: f64,
    pub max_iterations: usize,
    /// Stop when the relative objective change falls below this.
    pub tolerance: f64,
    /// Reset the search direction to the gradient every this many iterations.
    pub restart: usize,
}

impl Default for CmConfig {
    fn default() -> Self {
        CmConfig {
            delta: 1.0,
            fd_step: 1e-4,
            max_iterations: 100,
            tolerance: 1e-6,
            restart: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmResult {
    pub omega: AngularVelocity,
    pub contrast: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Contrast objective with evaluation counting.
pub struct Objective<'a> {
    warper: Warper<'a>,
    iwe: Iwe,
    evaluations: usize,
}

impl<'a> Objective<'a> {
    pub fn new(batch: &EventBatch, intr: &'a CameraIntrinsics, delta: f64, resolution: (u32, u32)) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::InsufficientData("empty batch".into()));
        }
        Ok(Objective {
            warper: Warper::new(batch, intr)?,
            iwe: Iwe::new(resolution.0 as usize, resolution.1 as usize, delta)?,
            evaluations: 0,
        })
    }

    pub fn value(&mut self, omega: &Vector3<f64>) -> Result<f64> {
        self.evaluations += 1;
        self.warper.accumulate(&AngularVelocity(*omega), &mut self.iwe);
        let c = contrast(&self.iwe);
        if !c.is_finite() {
            return Err(Error::Optimisation(format!("non-finite contrast at ω = {omega:?}")));
        }
        Ok(c)
    }

    /// Central finite-difference gradient.
    pub fn gradient(&mut self, omega: &Vector3<f64>, h: f64) -> Result<Vector3<f64>> {
        let mut g = Vector3::zeros();
        for i in 0..3 {
            let mut a = *omega;
            let mut b = *omega;
            a[i] += h;
            b[i] -= h;
            g[i] = (self.value(&a)? - self.value(&b)?) / (2.0 * h);
        }
        Ok(g)
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }
}

/// Maximises the contrast from `omega0` by nonlinear conjugate gradient.
pub fn cm_solve(
    batch: &EventBatch,
    intr: &CameraIntrinsics,
    cfg: &CmConfig,
    resolution: (u32, u32),
    omega0: AngularVelocity,
) -> Result<CmResult> {
    if !(cfg.fd_step > 0.0) || cfg.max_iterations == 0 || cfg.restart == 0 {
        return Err(Error::Config("invalid contrast-maximisation settings".into()));
    }
    if !omega0.is_finite() {
        return Err(Error::Config("initial angular velocity must be finite".into()));
    }
    let mut f = Objective::new(batch, intr, cfg.delta, resolution)?;
    let mut x = omega0.0;
    let mut fx = f.value(&x)?;
    let mut g = f.gradient(&x, cfg.fd_step)?;
    let mut d = g;
    let mut step = 0.02;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        if d.dot(&g) <= 0.0 {
            d = g;
        }
        let norm = d.norm();
        if norm == 0.0 {
            converged = true;
            break;
        }
        let dir = d / norm;
        let (s, fs) = line_search(&mut f, &x, fx, &dir, step)?;
        if s == 0.0 {
            converged = true;
            break;
        }
        step = s;
        x += dir * s;
        let change = (fs - fx).abs() / fx.abs().max(f64::MIN_POSITIVE);
        fx = fs;
        if change <= cfg.tolerance {
            converged = true;
            break;
        }
        let g_new = f.gradient(&x, cfg.fd_step)?;
        d = if iterations % cfg.restart == 0 {
            g_new
        } else {
            let beta = (g_new.dot(&(g_new - g)) / g.dot(&g)).max(0.0);
            g_new + d * beta
        };
        g = g_new;
    }
    Ok(CmResult {
        omega: AngularVelocity(x),
        contrast: fx,
        iterations,
        evaluations: f.evaluations(),
        converged,
    })
}

/// Maximises `f(x + s·dir)` over `s ≥ 0`: bracket by doubling or halving the
/// trial step, then golden-section refinement. Returns `(0, f(x))` when no
/// improving step exists above a tiny threshold.
fn line_search(f: &mut Objective, x: &Vector3<f64>, fx: f64, dir: &Vector3<f64>, step: f64) -> Result<(f64, f64)> {
    const MIN_STEP: f64 = 1e-7;
    let mut eval = |s: f64| f.value(&(x + dir * s));
    let (mut a, mut fa) = (0.0, fx);
    let (mut b, mut fb) = (step, eval(step)?);
    while fb <= fx {
        b *= 0.5;
        if b < MIN_STEP {
            return Ok((0.0, fx));
        }
        fb = eval(b)?;
    }
    // Expand until the objective drops again.
    let mut c = 2.0 * b;
    let mut fc = eval(c)?;
    let mut expansions = 0;
    while fc > fb && expansions < 30 {
        a = b;
        fa = fb;
        b = c;
        fb = fc;
        c *= 2.0;
        fc = eval(c)?;
        expansions += 1;
    }
    let _ = fa;
    // Golden-section search on [a, c] around the interior maximum b.
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let tol = 1e-3 * b + 1e-6;
    let mut best = (b, fb);
    let (mut lo, mut hi) = (a, c);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = eval(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = eval(x2)?;
        }
    }
    for (s, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 {
            best = (s, v);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Polarity, Window};
    use crate::synth::{generate_batch, NoiseModel, SceneModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 200.0, 120.0, 90.0, 240, 180).unwrap()
    }

    fn single(x: f64, y: f64, t: f64) -> EventBatch {
        EventBatch::new(vec![Event::new(x, y, t, Polarity::Positive)], Window::new(0.0, 0.05)).unwrap()
    }

    #[test]
    fn warp_fixed_points() {
        let intr = camera();
        let e = Event::new(37.5, 140.25, 0.03, Polarity::Negative);
        let p = warp_event(&e, &AngularVelocity::zero(), 0.0, &intr).unwrap().unwrap();
        assert!((p - e.pixel()).norm() < 1e-12);
        let e0 = Event::new(37.5, 140.25, 0.0, Polarity::Negative);
        let w = AngularVelocity::new(1.0, -2.0, 0.5);
        let p = warp_event(&e0, &w, 0.0, &intr).unwrap().unwrap();
        assert!((p - e0.pixel()).norm() < 1e-12);
        let c = Event::new(120.0, 90.0, 0.04, Polarity::Positive);
        let p = warp_event(&c, &AngularVelocity::new(0.0, 0.0, 3.0), 0.0, &intr).unwrap().unwrap();
        assert!((p - c.pixel()).norm() < 1e-12);
    }

    #[test]
    fn warp_undoes_generated_motion() {
        // A ray seen at t is R_t X; warping must bring it back to X.
        let intr = camera();
        let omega = AngularVelocity::new(0.3, -0.4, 0.2);
        let x = Vector3::new(0.1, -0.05, 1.0).normalize();
        let seen = crate::so3::relative_rotation(&omega, 0.04) * x;
        let px = intr.project(&seen).unwrap();
        let e = Event::new(px.x, px.y, 1.04, Polarity::Positive);
        let back = warp_event(&e, &omega, 1.0, &intr).unwrap().unwrap();
        assert!((back - intr.project(&x).unwrap()).norm() < 1e-9);
    }

    #[test]
    fn gaussian_recurrence_matches_direct() {
        let mut out = [0.0; 7];
        for d0 in [-3.0, -2.4, -0.01] {
            for inv in [0.5, 0.125, 2.0] {
                gaussian_row(d0, inv, &mut out);
                for (i, v) in out.iter().enumerate() {
                    let d = d0 + i as f64;
                    assert!((v - (-d * d * inv).exp()).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn single_event_peaks_at_one() {
        let iwe = accumulate_iwe(&single(50.0, 60.0, 0.0), &AngularVelocity::zero(), &camera(), 1.0, (240, 180)).unwrap();
        assert!((iwe.get(50, 60) - 1.0).abs() < 1e-12);
        assert!(iwe.data().iter().all(|&v| v <= 1.0 + 1e-12 && v >= 0.0));
        assert!((iwe.get(51, 60) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(iwe.get(54, 60), 0.0);
    }

    #[test]
    fn accumulation_is_linear() {
        let one = accumulate_iwe(&single(50.3, 60.7, 0.0), &AngularVelocity::zero(), &camera(), 1.0, (240, 180)).unwrap();
        let two = EventBatch::new(
            vec![
                Event::new(50.3, 60.7, 0.0, Polarity::Positive),
                Event::new(50.3, 60.7, 0.0, Polarity::Negative),
            ],
            Window::new(0.0, 0.05),
        )
        .unwrap();
        let two = accumulate_iwe(&two, &AngularVelocity::zero(), &camera(), 1.0, (240, 180)).unwrap();
        for (a, b) in one.data().iter().zip(two.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn truncated_mass_close_to_untruncated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let intr = camera();
        for delta in [0.7, 1.0, 1.8] {
            let (cx, cy) = (rng.gen_range(20.0..200.0), rng.gen_range(20.0..150.0));
            let iwe = accumulate_iwe(&single(cx, cy, 0.0), &AngularVelocity::zero(), &intr, delta, (240, 180)).unwrap();
            let mut full = 0.0;
            for y in 0..180 {
                for x in 0..240 {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    full += (-d2 / (2.0 * delta * delta)).exp();
                }
            }
            assert!((iwe.mass() / full - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn contrast_values() {
        let mut h = Iwe::new(2, 1, 1.0).unwrap();
        h.data_mut().copy_from_slice(&[0.0, 2.0]);
        assert_eq!(contrast(&h), 1.0);
        let mut h = Iwe::new(7, 3, 1.0).unwrap();
        h.data_mut().iter_mut().for_each(|v| *v = 4.25);
        assert_eq!(contrast(&h), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut h = Iwe::new(64, 48, 1.0).unwrap();
        h.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(0.0..5.0));
        let n = h.data().len() as f64;
        let mean = h.data().iter().sum::<f64>() / n;
        let var = h.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((contrast(&h) - var).abs() <= 1e-12 * var);
        let shifted_var = {
            let mut s = h.clone();
            s.data_mut().iter_mut().for_each(|v| *v += 3.0);
            contrast(&s)
        };
        assert!((shifted_var - var).abs() <= 1e-12 * var);
    }

    fn synthetic(omega: AngularVelocity, seed: u64) -> EventBatch {
        let scene = SceneModel::random(300, 0.6, seed);
        generate_batch(&scene, omega, Window::new(0.0, 0.05), &camera(), 8000, &NoiseModel::noiseless(), seed)
            .unwrap()
            .batch
    }

    #[test]
    fn contrast_peaks_at_true_motion() {
        let omega = AngularVelocity::new(0.5, -1.0, 0.3);
        let b = synthetic(omega, 3);
        let intr = camera();
        let at = |w: &Vector3<f64>| contrast(&accumulate_iwe(&b, &AngularVelocity(*w), &intr, 1.0, (240, 180)).unwrap());
        assert!(at(&omega.0) > at(&(omega.0 + Vector3::new(1.0, 0.0, 0.0))));
        assert!(at(&omega.0) > at(&(omega.0 + Vector3::new(0.0, 0.0, 1.0))));
    }

    #[test]
    fn finite_difference_matches_five_point_stencil() {
        let intr = camera();
        // A few events, so no kernel edge is crossed within the stencils.
        let events: Vec<Event> = (0..6)
            .map(|i| Event::new(60.0 + 23.7 * i as f64, 40.0 + 17.3 * i as f64, 0.008 * i as f64, Polarity::Positive))
            .collect();
        let b = EventBatch::new(events, Window::new(0.0, 0.05)).unwrap();
        let mut f = Objective::new(&b, &intr, 2.0, (240, 180)).unwrap();
        let x = Vector3::new(0.1, 0.3, 0.0);
        let h = 1e-4;
        let g = f.gradient(&x, h).unwrap();
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = 1.0;
            let h5 = 1e-4;
            let v = |f: &mut Objective, s: f64| f.value(&(x + e * s)).unwrap();
            let five = (-v(&mut f, 2.0 * h5) + 8.0 * v(&mut f, h5) - 8.0 * v(&mut f, -h5) + v(&mut f, -2.0 * h5)) / (12.0 * h5);
            assert!((g[i] - five).abs() <= 1e-4 * g.norm(), "{i}: {} vs {five}", g[i]);
        }
    }

    #[test]
    fn zero_motion_stays_at_zero() {
        let b = synthetic(AngularVelocity::zero(), 5);
        let res = cm_solve(&b, &camera(), &CmConfig::default(), (240, 180), AngularVelocity::zero()).unwrap();
        assert!(res.omega.norm() < 1e-2);
    }

    #[test]
    fn converges_from_perturbed_start() {
        let omega = AngularVelocity::new(0.4, -0.8, 0.5);
        let b = synthetic(omega, 6);
        let start = AngularVelocity(omega.0 + Vector3::new(0.05, -0.03, 0.02).normalize() * 0.05);
        let res = cm_solve(&b, &camera(), &CmConfig::default(), (240, 180), start).unwrap();
        assert!((res.omega.0 - omega.0).norm() < 5e-2, "{:?}", res);
    }
}
