//! Orientation tracking over a long stream with feature tracks and averaging.
use evrot::camera::CameraIntrinsics;
use evrot::io::Trajectory;
use evrot::metrics::absolute_orientation_error;
use evrot::synth::{generate_stream, MotionScript, NoiseModel, SceneModel};
use evrot::vo::{vo_run, VoConfig};

fn main() -> evrot::error::Result<()> {
    let intr = CameraIntrinsics::from_fov(240, 180, 1.2)?;
    let scene = SceneModel::random(4000, std::f64::consts::PI, 7);
    let noise = NoiseModel { pixel_sigma: 0.5, outlier_fraction: 0.1, ..NoiseModel::noiseless() };
    let s = generate_stream(&scene, &MotionScript::tour(20.0, 5.0, 0.2)?, &intr, 100_000.0, &noise, 3)?;
    let gt = Trajectory::new(s.trajectory)?;

    let out = vo_run(&s.events, &intr, &VoConfig { batch_size: 20_000, ..VoConfig::default() })?;
    let keys = out.batches.iter().filter(|b| b.key).count();
    println!("{} batches, {keys} key batches", out.batches.len());
    println!("averaged mean error {:.3}°", absolute_orientation_error(&out.averaged, &gt)?.mean);
    println!("chained  mean error {:.3}°", absolute_orientation_error(&out.chained, &gt)?.mean);
    for w in &out.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
