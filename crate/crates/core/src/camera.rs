//! Pinhole intrinsics with a two-coefficient radial distortion model.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

const UNDISTORT_ITERATIONS: usize = 10;
const UNDISTORT_TOL_PX: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        Self::with_distortion(fx, fy, cx, cy, 0.0, 0.0, width, height)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_distortion(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        k1: f64,
        k2: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let intr = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            k1,
            k2,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    fn validate(&self) -> Result<()> {
        let values = [self.fx, self.fy, self.cx, self.cy, self.k1, self.k2];
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Data("intrinsics must be finite".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Data(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Data("sensor resolution must be non-zero".into()));
        }
        if !(0.0..=self.width as f64).contains(&self.cx)
            || !(0.0..=self.height as f64).contains(&self.cy)
        {
            return Err(Error::Data(format!(
                "principal point ({}, {}) lies outside the {}x{} sensor",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Camera matching a resolution, with the focal length chosen so the
    /// horizontal field of view is `hfov` radians.
    pub fn from_fov(width: u32, height: u32, hfov: f64) -> Result<Self> {
        let f = 0.5 * width as f64 / (0.5 * hfov).tan();
        Self::new(f, f, 0.5 * width as f64, 0.5 * height as f64, width, height)
    }

    #[rustfmt::skip]
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0,     self.cx,
            0.0,     self.fy, self.cy,
            0.0,     0.0,     1.0,
        )
    }

    pub fn has_distortion(&self) -> bool {
        self.k1 != 0.0 || self.k2 != 0.0
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x < self.width as f64 && px.y < self.height as f64
    }

    /// Unit ray `normalise(K⁻¹ [u; 1])`.
    pub fn backproject(&self, px: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy, 1.0).normalize()
    }

    /// Pinhole projection; `None` behind the camera.
    pub fn project(&self, ray: &Vector3<f64>) -> Option<Vector2<f64>> {
        if ray.z <= 0.0 {
            return None;
        }
        Some(Vector2::new(
            self.fx * ray.x / ray.z + self.cx,
            self.fy * ray.y / ray.z + self.cy,
        ))
    }

    /// Forward radial model applied to an undistorted pixel.
    pub fn distort(&self, px: &Vector2<f64>) -> Vector2<f64> {
        let x = (px.x - self.cx) / self.fx;
        let y = (px.y - self.cy) / self.fy;
        let r2 = x * x + y * y;
        let g = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        Vector2::new(self.fx * x * g + self.cx, self.fy * y * g + self.cy)
    }

    /// Inverts [`distort`](Self::distort) by fixed-point iteration.
    pub fn undistort(&self, px: &Vector2<f64>) -> Result<Vector2<f64>> {
        if !self.has_distortion() {
            return Ok(*px);
        }
        let xd = (px.x - self.cx) / self.fx;
        let yd = (px.y - self.cy) / self.fy;
        let (mut x, mut y) = (xd, yd);
        for _ in 0..UNDISTORT_ITERATIONS {
            let r2 = x * x + y * y;
            let g = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
            x = xd / g;
            y = yd / g;
        }
        let out = Vector2::new(self.fx * x + self.cx, self.fy * y + self.cy);
        let err = (self.distort(&out) - px).norm();
        if !(err <= UNDISTORT_TOL_PX) {
            return Err(Error::DegenerateInput(format!(
                "undistortion of ({:.3}, {:.3}) did not converge (residual {err:.3e} px)",
                px.x, px.y
            )));
        }
        Ok(out)
    }

    /// Undistorted, backprojected ray of a raw sensor pixel.
    pub fn ray(&self, px: &Vector2<f64>) -> Result<Vector3<f64>> {
        Ok(self.backproject(&self.undistort(px)?))
    }
}

pub fn backproject(px: &Vector2<f64>, intr: &CameraIntrinsics) -> Vector3<f64> {
    intr.backproject(px)
}

pub fn undistort(px: &Vector2<f64>, intr: &CameraIntrinsics) -> Result<Vector2<f64>> {
    intr.undistort(px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn davis() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 200.0, 120.0, 90.0, 240, 180).unwrap()
    }

    #[test]
    fn identity_intrinsics_optical_axis() {
        let intr = CameraIntrinsics {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            k1: 0.0,
            k2: 0.0,
            width: 1,
            height: 1,
        };
        assert_eq!(
            intr.backproject(&Vector2::zeros()),
            Vector3::new(0.0, 0.0, 1.0)
        );
    }

    #[test]
    fn backproject_examples() {
        let intr = davis();
        assert_eq!(
            intr.backproject(&Vector2::new(120.0, 90.0)),
            Vector3::new(0.0, 0.0, 1.0)
        );
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(
            intr.backproject(&Vector2::new(320.0, 90.0)),
            Vector3::new(s, 0.0, s),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rejects_bad_focals_and_principal_point() {
        assert!(CameraIntrinsics::new(0.0, 200.0, 120.0, 90.0, 240, 180).is_err());
        assert!(CameraIntrinsics::new(200.0, -1.0, 120.0, 90.0, 240, 180).is_err());
        assert!(CameraIntrinsics::new(200.0, 200.0, 300.0, 90.0, 240, 180).is_err());
    }

    #[test]
    fn undistort_without_distortion_is_identity() {
        let px = Vector2::new(17.25, 160.5);
        assert_eq!(davis().undistort(&px).unwrap(), px);
    }

    #[test]
    fn undistort_principal_point_is_fixed() {
        let intr =
            CameraIntrinsics::with_distortion(200.0, 200.0, 120.0, 90.0, -0.3, 0.1, 240, 180)
                .unwrap();
        let c = Vector2::new(120.0, 90.0);
        assert_eq!(intr.undistort(&c).unwrap(), c);
    }

    #[test]
    fn undistort_inverts_forward_model() {
        let intr =
            CameraIntrinsics::with_distortion(200.0, 200.0, 120.0, 90.0, -0.1, 0.0, 240, 180)
                .unwrap();
        // normalised radius 0.5
        let raw = Vector2::new(120.0 + 0.5 * 200.0 * 0.6, 90.0 + 0.5 * 200.0 * 0.8);
        let und = intr.undistort(&raw).unwrap();
        assert!((intr.distort(&und) - raw).norm() <= 1e-6);
        assert!(((und - Vector2::new(120.0, 90.0)).norm() - 100.0).abs() > 0.5);
    }

    #[test]
    fn undistort_reports_divergence() {
        let intr =
            CameraIntrinsics::with_distortion(100.0, 100.0, 120.0, 90.0, -2.0, 0.0, 240, 180)
                .unwrap();
        let err = intr.undistort(&Vector2::new(239.0, 179.0)).unwrap_err();
        assert_eq!(err.category(), "degenerate-input");
    }

    #[test]
    fn project_inverts_backproject() {
        let intr = davis();
        let px = Vector2::new(13.5, 101.25);
        let back = intr.project(&intr.backproject(&px)).unwrap();
        assert_abs_diff_eq!(back, px, epsilon = 1e-12);
        assert!(intr.project(&Vector3::new(0.0, 0.0, -1.0)).is_none());
    }

    proptest! {
        #[test]
        fn backprojected_rays_are_unit(x in -1e4f64..1e4, y in -1e4f64..1e4) {
            let r = davis().backproject(&Vector2::new(x, y));
            prop_assert!((r.norm() - 1.0).abs() <= 1e-12);
            prop_assert!(r.z > 0.0);
        }
    }
}
