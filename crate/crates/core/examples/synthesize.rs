//! Synthetic stream with ground truth, written in the dataset text formats.
use evrot::camera::CameraIntrinsics;
use evrot::io::{write_calibration, write_events, write_trajectory};
use evrot::synth::{generate_stream, MotionScript, NoiseModel, SceneModel};

fn main() -> evrot::error::Result<()> {
    let intr = CameraIntrinsics::from_fov(240, 180, 1.2)?;
    let scene = SceneModel::random(4000, std::f64::consts::PI, 1);
    let script = MotionScript::tour(10.0, 5.0, 0.2)?;
    let noise = NoiseModel { pixel_sigma: 0.5, outlier_fraction: 0.1, jitter: 1e-5, quantize: false };
    let s = generate_stream(&scene, &script, &intr, 100_000.0, &noise, 2)?;

    let dir = std::env::temp_dir().join("evrot_synth");
    std::fs::create_dir_all(&dir).map_err(|e| evrot::error::Error::io(&dir, e))?;
    write_events(dir.join("events.txt"), &s.events)?;
    write_trajectory(dir.join("groundtruth.txt"), &s.trajectory)?;
    write_calibration(dir.join("calib.txt"), &intr)?;
    println!("{} events, {} poses -> {}", s.events.len(), s.trajectory.len(), dir.display());
    Ok(())
}
