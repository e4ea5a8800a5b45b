//! Pinhole cameras: x right, y down, z forward.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector4};

use crate::error::{data_err, Result};
use crate::Vec3;

/// Projected point: pixel coordinates plus camera-space depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub z: f64,
    /// `z <= 0`: the point is at or behind the camera plane.
    pub behind: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub intrinsics: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        intrinsics: Matrix3<f64>,
        world_to_camera: Matrix3x4<f64>,
        width: usize,
        height: usize,
    ) -> Self {
        Self {
            intrinsics,
            rotation: world_to_camera.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: world_to_camera.column(3).into_owned(),
            width,
            height,
        }
    }

    /// Camera at `eye` looking at `target`. `up` is the world direction that
    /// should appear toward the top of the image.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, focal: f64, width: usize, height: usize) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        let intrinsics = Matrix3::new(
            focal,
            0.0,
            width as f64 / 2.0,
            0.0,
            focal,
            height as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        );
        Self {
            intrinsics,
            rotation,
            translation,
            width,
            height,
        }
    }

    pub fn fx(&self) -> f64 {
        self.intrinsics[(0, 0)]
    }
    pub fn fy(&self) -> f64 {
        self.intrinsics[(1, 1)]
    }
    pub fn cx(&self) -> f64 {
        self.intrinsics[(0, 2)]
    }
    pub fn cy(&self) -> f64 {
        self.intrinsics[(1, 2)]
    }

    pub fn world_to_camera(&self) -> Matrix3x4<f64> {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.set_column(3, &self.translation);
        m
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// World-space viewing direction (optical axis).
    pub fn forward(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    #[inline]
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn project(&self, p: &Vec3) -> Projection {
        let x = self.to_camera(p);
        let z = x.z;
        if z <= 0.0 {
            return Projection {
                u: f64::NAN,
                v: f64::NAN,
                z,
                behind: true,
            };
        }
        Projection {
            u: self.fx() * x.x / z + self.cx(),
            v: self.fy() * x.y / z + self.cy(),
            z,
            behind: false,
        }
    }

    /// Jacobian of `(u, v, z)` wrt the world point (rows u, v, z).
    pub fn project_jacobian(&self, p: &Vec3) -> Matrix3<f64> {
        let x = self.to_camera(p);
        let iz = 1.0 / x.z;
        let (fx, fy) = (self.fx(), self.fy());
        // d(u,v,z)/d(x_cam)
        let dc = Matrix3::new(
            fx * iz,
            0.0,
            -fx * x.x * iz * iz,
            0.0,
            fy * iz,
            -fy * x.y * iz * iz,
            0.0,
            0.0,
            1.0,
        );
        dc * self.rotation
    }

    /// Unit world-space direction of the ray through pixel coordinates `(u, v)`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vec3 {
        let d = Vec3::new((u - self.cx()) / self.fx(), (v - self.cy()) / self.fy(), 1.0);
        (self.rotation.transpose() * d).normalize()
    }

    /// Same camera rendering at `factor` times the resolution.
    pub fn scaled(&self, factor: usize) -> Camera {
        let s = factor as f64;
        let mut k = self.intrinsics;
        k[(0, 0)] *= s;
        k[(1, 1)] *= s;
        k[(0, 2)] *= s;
        k[(1, 2)] *= s;
        Camera {
            intrinsics: k,
            rotation: self.rotation,
            translation: self.translation,
            width: self.width * factor,
            height: self.height * factor,
        }
    }

    /// Full 4x4 homogeneous projection `[K 0; 0 1] * [R t; 0 1]`.
    pub fn homogeneous(&self) -> Matrix4<f64> {
        let mut k = Matrix4::identity();
        k.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.intrinsics);
        let mut rt = Matrix4::identity();
        rt.fixed_view_mut::<3, 4>(0, 0).copy_from(&self.world_to_camera());
        k * rt
    }

    pub fn validate(&self, rotation_tol: f64) -> Result<()> {
        if !(self.fx() > 0.0 && self.fy() > 0.0) {
            return data_err("intrinsics must have positive focal lengths");
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        if !(err < rotation_tol) || self.rotation.determinant() <= 0.0 {
            return data_err(format!(
                "rotation is not orthonormal (|R^T R - I| = {err:.3e}, det = {:.6})",
                self.rotation.determinant()
            ));
        }
        if self.width == 0 || self.height == 0 {
            return data_err("camera has zero image size");
        }
        Ok(())
    }
}

/// Evaluates the projection through the 4x4 homogeneous matrix; used as an
/// independent check of [`Camera::project`].
pub fn project_homogeneous(m: &Matrix4<f64>, p: &Vec3) -> (f64, f64, f64) {
    let h = m * Vector4::new(p.x, p.y, p.z, 1.0);
    (h.x / h.z, h.y / h.z, h.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_camera() -> Camera {
        Camera {
            intrinsics: Matrix3::identity(),
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
            width: 1,
            height: 1,
        }
    }

    fn random_camera(rng: &mut ChaCha8Rng) -> Camera {
        let axis = Unit::new_normalize(Vec3::new(rng.gen(), rng.gen(), rng.gen::<f64>() + 0.1));
        let rot = Rotation3::from_axis_angle(&axis, rng.gen_range(-3.0..3.0));
        Camera {
            intrinsics: Matrix3::new(
                rng.gen_range(100.0..500.0),
                0.0,
                rng.gen_range(50.0..150.0),
                0.0,
                rng.gen_range(100.0..500.0),
                rng.gen_range(50.0..150.0),
                0.0,
                0.0,
                1.0,
            ),
            rotation: *rot.matrix(),
            translation: Vec3::new(rng.gen(), rng.gen(), rng.gen_range(3.0..5.0)),
            width: 200,
            height: 200,
        }
    }

    #[test]
    fn optical_axis() {
        let p = identity_camera().project(&Vec3::new(0.0, 0.0, 1.0));
        assert_eq!((p.u, p.v, p.z, p.behind), (0.0, 0.0, 1.0, false));
    }

    #[test]
    fn camera_center_is_behind() {
        let cam = identity_camera();
        assert!(cam.project(&cam.center()).behind);
    }

    #[test]
    fn matches_homogeneous_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let cam = random_camera(&mut rng);
            let p = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let a = cam.project(&p);
            if a.behind {
                continue;
            }
            let (u, v, z) = project_homogeneous(&cam.homogeneous(), &p);
            assert!((a.u - u).abs() < 1e-9 * u.abs().max(1.0));
            assert!((a.v - v).abs() < 1e-9 * v.abs().max(1.0));
            assert!((a.z - z).abs() < 1e-12 * z.abs().max(1.0));
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let cam = random_camera(&mut rng);
            let p = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            let j = cam.project_jacobian(&p);
            let h = 1e-6;
            for a in 0..3 {
                let mut pp = p;
                let mut pm = p;
                pp[a] += h;
                pm[a] -= h;
                let (fp, fm) = (cam.project(&pp), cam.project(&pm));
                let fd = [(fp.u - fm.u) / (2.0 * h), (fp.v - fm.v) / (2.0 * h), (fp.z - fm.z) / (2.0 * h)];
                for r in 0..3 {
                    let scale = j[(r, a)].abs().max(1e-3);
                    assert!((fd[r] - j[(r, a)]).abs() / scale < 1e-6, "row {r} col {a}: fd {} vs {}", fd[r], j[(r, a)]);
                }
            }
        }
    }

    #[test]
    fn look_at_points_at_target() {
        let eye = Vec3::new(3.0, 1.0, -2.0);
        let cam = Camera::look_at(eye, Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), 100.0, 64, 48);
        cam.validate(1e-9).unwrap();
        let p = cam.project(&Vec3::zeros());
        assert!((p.u - 32.0).abs() < 1e-9 && (p.v - 24.0).abs() < 1e-9);
        assert!((cam.center() - eye).norm() < 1e-12);
        // World up projects above the target.
        assert!(cam.project(&Vec3::new(0.0, 0.5, 0.0)).v < 24.0);
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let mut cam = identity_camera();
        cam.rotation[(0, 0)] = 1.0 + 2e-4;
        assert!(cam.validate(1e-4).is_err());
        cam.rotation[(0, 0)] = 1.0 + 1e-7;
        assert!(cam.validate(1e-4).is_ok());
    }
}
