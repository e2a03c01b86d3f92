//! Pixel ↔ bearing conversion with and without radial distortion.
use evrot::camera::CameraIntrinsics;
use nalgebra::Vector2;

fn main() -> evrot::error::Result<()> {
    let pinhole = CameraIntrinsics::from_fov(240, 180, 1.2)?;
    let px = Vector2::new(200.0, 40.0);
    let ray = pinhole.ray(&px)?;
    println!("pixel {:?} -> ray {:?}", px.as_slice(), ray.as_slice());
    println!("reprojected {:?}", pinhole.project(&ray).map(|p| p.as_slice().to_vec()));

    let lens = CameraIntrinsics::with_distortion(199.1, 198.8, 132.2, 110.0, -0.36, 0.15, 240, 180)?;
    let distorted = lens.distort(&px);
    let undistorted = lens.undistort(&distorted)?;
    println!("distort {:?} -> undistort {:?}", distorted.as_slice(), undistorted.as_slice());
    Ok(())
}
