//! Reading and writing events, calibration and trajectories.
use evrot::camera::CameraIntrinsics;
use evrot::event::{Event, Polarity};
use evrot::io::{read_calibration, read_events, read_trajectory, write_calibration, write_events, write_trajectory, Trajectory, TrajectoryRecord};
use evrot::so3::AngularVelocity;

fn main() -> evrot::error::Result<()> {
    let dir = std::env::temp_dir().join("evrot_io");
    std::fs::create_dir_all(&dir).map_err(|e| evrot::error::Error::io(&dir, e))?;

    let events: Vec<Event> = (0..5)
        .map(|i| Event::new(10.0 + i as f64, 20.0, 0.001 * i as f64, if i % 2 == 0 { Polarity::Positive } else { Polarity::Negative }))
        .collect();
    write_events(dir.join("events.txt"), &events)?;
    println!("events: {:?}", read_events(dir.join("events.txt"))?);

    write_calibration(dir.join("calib.txt"), &CameraIntrinsics::from_fov(240, 180, 1.2)?)?;
    println!("calibration: {:?}", read_calibration(dir.join("calib.txt"))?);

    let omega = AngularVelocity::new(0.0, 0.0, 0.5);
    let records: Vec<_> = (0..=10).map(|i| TrajectoryRecord::new(0.1 * i as f64, omega.rotation_over(0.1 * i as f64))).collect();
    write_trajectory(dir.join("groundtruth.txt"), &records)?;
    let gt = Trajectory::new(read_trajectory(dir.join("groundtruth.txt"))?)?;
    println!("interpolated R(0.25) angle = {:.6} rad", gt.orientation_at(0.25)?.angle());
    Ok(())
}
