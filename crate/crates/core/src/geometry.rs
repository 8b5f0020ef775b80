//! Camera model, rigid poses and axis-aligned boxes shared by every stage.
//!
//! Camera frame convention: +z is the optical axis, +x points right in the
//! image and +y points down. Pixel `(u, v)` has its center at image
//! coordinate `(u, v)`.

use nalgebra::{Matrix3, Matrix3x4, Point3, Vector3};

use crate::error::{NbvError, Result};

const ORTHO_TOL: f64 = 1e-9;

/// Pinhole intrinsics plus the range limits of the simulated sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Optimal standoff distance `d_c` in meters.
    pub working_distance: f64,
    /// Returns beyond this range are dropped.
    pub max_range: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fx: 525.0,
            fy: 525.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
            working_distance: 0.4,
            max_range: 3.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64
            && self.max_range > 0.0
            && self.working_distance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NbvError::InvalidArgument(format!(
                "invalid camera intrinsics {self:?}"
            )))
        }
    }

    pub fn k_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Unit direction, in the camera frame, of the ray through pixel `(u, v)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }

    /// Projects a camera-frame point; `None` when it is not in front of the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that are not proper orthonormal.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
        };
        if !pose.is_valid() {
            return Err(NbvError::InvalidArgument(
                "rotation is not a proper orthonormal matrix".into(),
            ));
        }
        Ok(pose)
    }

    pub fn is_valid(&self) -> bool {
        let r = &self.rotation;
        (r.transpose() * r - Matrix3::identity()).amax() <= ORTHO_TOL
            && (r.determinant() - 1.0).abs() <= ORTHO_TOL
            && self.translation.iter().all(|v| v.is_finite())
    }

    /// Camera placed at `eye` looking at `target`.
    ///
    /// The image "up" direction is the projection of `up` onto the image
    /// plane; when the optical axis is parallel to `up`, world +x (or +y)
    /// pins the roll instead.
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        let dist = forward.norm();
        if !(dist > 0.0) || !dist.is_finite() {
            return Err(NbvError::InvalidArgument(
                "look_at eye and target coincide".into(),
            ));
        }
        let z = forward / dist;
        let mut img_up = up - z * up.dot(&z);
        if img_up.norm() < 1e-9 {
            let fallback = if z.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            img_up = fallback - z * fallback.dot(&z);
        }
        let y = -img_up.normalize();
        let x = y.cross(&z);
        let rotation = Matrix3::from_columns(&[x, y, z]);
        Ok(Self {
            rotation,
            translation: eye.coords,
        })
    }

    pub fn position(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }

    /// Optical axis in world coordinates.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    pub fn camera_to_world(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn world_to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transpose() * (p.coords - self.translation))
    }

    /// `[R | t]` mapping homogeneous world points into the camera frame.
    pub fn extrinsic(&self) -> Matrix3x4<f64> {
        let rt = self.rotation.transpose();
        let t = -(rt * self.translation);
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        m
    }

    /// Full camera matrix `K [R | t]`.
    pub fn projection_matrix(&self, intrinsics: &CameraIntrinsics) -> Matrix3x4<f64> {
        intrinsics.k_matrix() * self.extrinsic()
    }
}

/// Axis-aligned box in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    pub fn from_center_half(center: Point3<f64>, half: Vector3<f64>) -> Self {
        Self {
            min: center - half,
            max: center + half,
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Aabb::new(first, first);
        for p in it {
            b.grow_point(p);
        }
        Some(b)
    }

    pub fn grow_point(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    /// Parametric interval `[t0, t1]` of `origin + t * dir` inside the box.
    pub fn ray_interval(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for k in 0..3 {
            if dir[k] == 0.0 {
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return None;
                }
            } else {
                let inv = 1.0 / dir[k];
                let mut a = (self.min[k] - origin[k]) * inv;
                let mut b = (self.max[k] - origin[k]) * inv;
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                t0 = t0.max(a);
                t1 = t1.min(b);
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = Point3::new(1.0, 2.0, 0.5);
        let target = Point3::new(-0.3, 0.1, 0.2);
        let pose = Pose::look_at(eye, target, Vector3::z()).unwrap();
        assert!(pose.is_valid());
        let dir = (target - eye).normalize();
        assert_relative_eq!(pose.optical_axis(), dir, epsilon = 1e-12);
        let cam = pose.world_to_camera(&target);
        assert_relative_eq!(cam.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(cam.y, 0.0, epsilon = 1e-12);
        // world up projects to image "up" (negative v)
        let above = pose.world_to_camera(&(target + Vector3::z() * 0.1));
        assert!(above.y < 0.0);
    }

    #[test]
    fn look_at_straight_down_uses_fallback_roll() {
        let pose =
            Pose::look_at(Point3::new(0.0, 0.0, 1.0), Point3::origin(), Vector3::z()).unwrap();
        assert!(pose.is_valid());
        assert_relative_eq!(pose.optical_axis(), -Vector3::z(), epsilon = 1e-12);
    }

    #[test]
    fn pose_round_trip() {
        let pose =
            Pose::look_at(Point3::new(0.3, -0.7, 0.2), Point3::origin(), Vector3::z()).unwrap();
        let p = Point3::new(0.1, 0.2, 0.3);
        assert_relative_eq!(
            pose.camera_to_world(&pose.world_to_camera(&p)),
            p,
            epsilon = 1e-12
        );
        let h = p.to_homogeneous();
        let via_matrix = pose.extrinsic() * h;
        assert_relative_eq!(via_matrix, pose.world_to_camera(&p).coords, epsilon = 1e-12);
    }

    #[test]
    fn rejects_reflection() {
        let r = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(r, Vector3::zeros()).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::default().validate().is_ok());
        let bad = CameraIntrinsics {
            cx: 640.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ray_interval_through_unit_box() {
        let b = Aabb::new(Point3::origin(), Point3::new(1.0, 1.0, 1.0));
        let (t0, t1) = b
            .ray_interval(&Point3::new(-1.0, 0.5, 0.5), &Vector3::x())
            .unwrap();
        assert_relative_eq!(t0, 1.0);
        assert_relative_eq!(t1, 2.0);
        assert!(b
            .ray_interval(&Point3::new(-1.0, 2.0, 0.5), &Vector3::x())
            .is_none());
    }
}
