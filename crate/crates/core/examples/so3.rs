//! Exponential/log maps and angular velocity over an interval.
use evrot::so3::{exp_so3, geodesic_distance, log_so3, AngularVelocity, Rotation};
use nalgebra::Vector3;

fn main() {
    let r = exp_so3(&Vector3::new(0.3, -0.2, 0.9));
    println!("R =\n{}", r.matrix());
    println!("log R = {:?}", log_so3(&r).as_slice());
    println!("angle = {:.6} rad", r.angle());

    // near π the log is still well defined
    let half_turn = exp_so3(&Vector3::new(0.0, 0.0, std::f64::consts::PI - 1e-9));
    println!("log(≈π about z) = {:?}", half_turn.log().as_slice());

    let omega = AngularVelocity::new(0.1, -0.15, 0.08);
    let over_1s = omega.rotation_over(1.0);
    let mid = Rotation::identity().interpolate(&over_1s, 0.5);
    println!("d(R(0.5), omega·0.5) = {:.2e}", geodesic_distance(&mid, &omega.rotation_over(0.5)));
    let (w, v) = over_1s.quaternion();
    println!("quaternion w={w:.6} v={:?}", v.as_slice());
}
