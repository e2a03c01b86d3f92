//! Angular velocity of one batch by contrast maximisation.
use evrot::camera::CameraIntrinsics;
use evrot::contrast::{accumulate_iwe, cm_solve, contrast, CmConfig};
use evrot::event::Window;
use evrot::so3::AngularVelocity;
use evrot::synth::{generate_batch, NoiseModel, SceneModel};

fn main() -> evrot::error::Result<()> {
    let intr = CameraIntrinsics::from_fov(240, 180, 1.2)?;
    let truth = AngularVelocity::new(0.4, -0.8, 0.3);
    let b = generate_batch(&SceneModel::random(300, 0.7, 9), truth, Window::new(0.0, 0.05), &intr, 15_000, &NoiseModel::noiseless(), 9)?;
    let res = (intr.width, intr.height);

    let blurred = contrast(&accumulate_iwe(&b.batch, &AngularVelocity::zero(), &intr, 1.0, res)?);
    let sharp = contrast(&accumulate_iwe(&b.batch, &truth, &intr, 1.0, res)?);
    println!("contrast: unwarped {blurred:.4e}, warped with truth {sharp:.4e}");

    let r = cm_solve(&b.batch, &intr, &CmConfig::default(), res, AngularVelocity::zero())?;
    println!("estimated ω = {:?} after {} iterations ({} evaluations)", r.omega.0.as_slice(), r.iterations, r.evaluations);
    Ok(())
}
