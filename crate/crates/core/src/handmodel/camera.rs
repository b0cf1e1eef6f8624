use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole camera. Extrinsics map world to camera coordinates:
/// `x_cam = rotation * x_world + translation` (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub focal: [f64; 2],
    pub principal_point: [f64; 2],
    /// Row-major 3x3.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Camera {
    /// Camera at the world origin looking down +z.
    pub fn new(focal: [f64; 2], principal_point: [f64; 2]) -> Self {
        Camera {
            focal,
            principal_point,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn with_extrinsics(mut self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        for i in 0..3 {
            for j in 0..3 {
                self.rotation[i][j] = rotation[(i, j)];
            }
        }
        self.translation = [translation.x, translation.y, translation.z];
        self
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal[0] > 0.0 && self.focal[1] > 0.0) {
            return Err(Error::Config(format!("focal must be positive, got {:?}", self.focal)));
        }
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "extrinsic rotation is not orthonormal (error {err:e})"
            )));
        }
        Ok(())
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * p + self.translation_vector()
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix().transpose() * (p - self.translation_vector())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation_matrix().transpose() * self.translation_vector())
    }

    /// `u = fx x/z + cx`, `v = fy y/z + cy` for a camera-frame point.
    pub fn project(&self, p: &Vector3<f64>) -> Result<[f64; 2]> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera(p.z));
        }
        Ok([
            self.focal[0] * p.x / p.z + self.principal_point[0],
            self.focal[1] * p.y / p.z + self.principal_point[1],
        ])
    }

    pub fn project_all(&self, points: &[Vector3<f64>]) -> Result<Vec<[f64; 2]>> {
        points.iter().map(|p| self.project(p)).collect()
    }

    /// Camera-frame point at `depth` whose projection is `pixel`.
    pub fn backproject(&self, pixel: [f64; 2], depth: f64) -> Vector3<f64> {
        Vector3::new(
            (pixel[0] - self.principal_point[0]) * depth / self.focal[0],
            (pixel[1] - self.principal_point[1]) * depth / self.focal[1],
            depth,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projects_example_point() {
        let cam = Camera::new([1000.0, 1000.0], [112.0, 112.0]);
        let uv = cam.project(&Vector3::new(0.1, 0.2, 1.0)).unwrap();
        assert!((uv[0] - 212.0).abs() < 1e-12 && (uv[1] - 312.0).abs() < 1e-12);
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let cam = Camera::new([500.0, 400.0], [100.0, 80.0]);
        assert_eq!(cam.project(&Vector3::new(0.0, 0.0, 7.0)).unwrap(), [100.0, 80.0]);
    }

    #[test]
    fn doubling_depth_halves_offset() {
        let cam = Camera::new([500.0, 500.0], [100.0, 100.0]);
        let near = cam.project(&Vector3::new(10.0, -5.0, 100.0)).unwrap();
        let far = cam.project(&Vector3::new(10.0, -5.0, 200.0)).unwrap();
        assert!(((far[0] - 100.0) * 2.0 - (near[0] - 100.0)).abs() < 1e-12);
        assert!(((far[1] - 100.0) * 2.0 - (near[1] - 100.0)).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let cam = Camera::new([500.0, 500.0], [100.0, 100.0]);
        assert!(matches!(
            cam.project(&Vector3::new(0.0, 0.0, 0.0)),
            Err(Error::BehindCamera(_))
        ));
        assert!(cam.project(&Vector3::new(1.0, 0.0, -3.0)).is_err());
    }

    #[test]
    fn backprojection_inverts_projection() {
        let cam = Camera::new([300.0, 310.0], [112.0, 110.0]);
        let p = cam.backproject([150.0, 60.0], 480.0);
        let uv = cam.project(&p).unwrap();
        assert!((uv[0] - 150.0).abs() < 1e-12 && (uv[1] - 60.0).abs() < 1e-12);
    }

    #[test]
    fn extrinsics_roundtrip_and_validation() {
        let r = nalgebra::Rotation3::from_euler_angles(0.1, -0.4, 0.7).into_inner();
        let cam = Camera::new([300.0, 300.0], [0.0, 0.0]).with_extrinsics(&r, &Vector3::new(1.0, 2.0, 3.0));
        assert!(cam.validate().is_ok());
        let p = Vector3::new(5.0, -4.0, 9.0);
        assert!((cam.camera_to_world(&cam.world_to_camera(&p)) - p).norm() < 1e-12);
        assert!(cam.world_to_camera(&cam.center()).norm() < 1e-12);
        let mut bad = cam.clone();
        bad.rotation[0][0] *= 1.01;
        assert!(bad.validate().is_err());
        bad = cam;
        bad.focal[1] = 0.0;
        assert!(bad.validate().is_err());
    }
}
