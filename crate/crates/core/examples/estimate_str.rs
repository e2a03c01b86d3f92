//! Angular velocity of one batch by spatio-temporal registration.
use evrot::camera::CameraIntrinsics;
use evrot::event::Window;
use evrot::registration::{str_solve, StrConfig};
use evrot::so3::AngularVelocity;
use evrot::synth::{generate_batch, NoiseModel, SceneModel};

fn main() -> evrot::error::Result<()> {
    let intr = CameraIntrinsics::from_fov(240, 180, 1.2)?;
    let truth = AngularVelocity::new(0.4, -0.8, 0.3);
    let noise = NoiseModel { pixel_sigma: 0.5, outlier_fraction: 0.1, ..NoiseModel::noiseless() };
    let b = generate_batch(&SceneModel::random(400, 0.7, 5), truth, Window::new(0.0, 0.05), &intr, 15_000, &noise, 5)?;

    let r = str_solve(&b.batch, &intr, &StrConfig::default())?;
    println!("truth     ω = {:?}", truth.0.as_slice());
    println!("estimated ω = {:?}", r.omega.0.as_slice());
    println!(
        "{} iterations (converged: {}), {} of {} first-half events kept, objective {:.4}",
        r.iterations, r.converged, r.trim_count, r.matched, r.objective
    );
    Ok(())
}
