//! RMS velocity error and runtime against batch size for both estimators.
use evrot::bench::{bench, write_bench_csv, EstimateConfig, Method};
use evrot::camera::CameraIntrinsics;
use evrot::io::Trajectory;
use evrot::so3::AngularVelocity;
use evrot::synth::{generate_stream, MotionScript, NoiseModel, SceneModel};

fn main() -> evrot::error::Result<()> {
    let intr = CameraIntrinsics::from_fov(240, 180, 1.2)?;
    let scene = SceneModel::random(4000, std::f64::consts::PI, 11);
    let script = MotionScript::constant(AngularVelocity::new(0.06, -0.07, 0.04), 1.0)?;
    let noise = NoiseModel { outlier_fraction: 0.2, jitter: 1e-3, ..NoiseModel::noiseless() };
    let s = generate_stream(&scene, &script, &intr, 100_000.0, &noise, 12)?;
    let gt = Trajectory::new(s.trajectory)?;

    let rows = bench("synthetic", &s.events, &intr, &gt, &[10_000, 20_000], &[Method::Str, Method::Cm], &EstimateConfig::default())?;
    write_bench_csv(std::io::stdout().lock(), &rows)
}
