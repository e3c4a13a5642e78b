//! Small geometric value types shared by every module.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Rigid transform stored as a unit quaternion plus translation.
///
/// Skeleton transforms are global: `apply(v) = R v + t` maps a rest-pose
/// point to its current-pose location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Quat::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Quat, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    #[inline]
    pub fn linear(&self) -> Mat3 {
        *self.rotation.to_rotation_matrix().matrix()
    }

    #[inline]
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.rotation * v + self.translation
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Rotation by `rotation` about the fixed point `pivot`.
    pub fn about(rotation: Quat, pivot: &Vec3) -> Transform {
        Transform {
            rotation,
            translation: pivot - rotation * pivot,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Quat::identity() && self.translation == Vec3::zeros()
    }
}

/// General affine map `x -> linear * x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub linear: Mat3,
    pub translation: Vec3,
}

impl Affine {
    pub fn identity() -> Self {
        Self {
            linear: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(linear: Mat3, translation: Vec3) -> Self {
        Self {
            linear,
            translation,
        }
    }

    pub fn from_transform(t: &Transform) -> Self {
        Self {
            linear: t.linear(),
            translation: t.translation,
        }
    }

    /// Anisotropic scale about `center`.
    pub fn scale_about(scale: Vec3, center: &Vec3) -> Self {
        let linear = Mat3::from_diagonal(&scale);
        Self {
            linear,
            translation: center - linear * center,
        }
    }

    #[inline]
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.linear * v + self.translation
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().all(|x| x.is_finite()) && self.translation.iter().all(|x| x.is_finite())
    }
}

/// Axis-aligned bounds of a point set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points(points: &[Vec3]) -> Option<Aabb> {
        let first = points.first()?;
        let mut min = *first;
        let mut max = *first;
        for p in &points[1..] {
            min = min.inf(p);
            max = max.sup(p);
        }
        Some(Aabb { min, max })
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }
}

/// Length of the bounding-box diagonal, or 1 for empty/degenerate sets so it
/// can always be used as a tolerance scale.
pub fn bbox_scale(points: &[Vec3]) -> f64 {
    match Aabb::from_points(points) {
        Some(b) if b.diagonal() > 0.0 => b.diagonal(),
        _ => 1.0,
    }
}

pub fn max_deviation(a: &[Vec3], b: &[Vec3]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Rotation of `angle` radians about `axis` (normalized internally).
pub fn axis_angle(axis: Vec3, angle: f64) -> Quat {
    match nalgebra::Unit::try_new(axis, 1e-300) {
        Some(unit) => Quat::from_axis_angle(&unit, angle),
        None => Quat::identity(),
    }
}

/// Quaternion from `(w, x, y, z)` components, normalized.
pub fn quat_wxyz(w: f64, x: f64, y: f64, z: f64) -> Quat {
    Quat::from_quaternion(nalgebra::Quaternion::new(w, x, y, z))
}

pub fn quat_to_wxyz(q: &Quat) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn about_keeps_pivot_fixed() {
        let pivot = Vec3::new(1.0, 2.0, 3.0);
        let t = Transform::about(axis_angle(Vec3::z(), FRAC_PI_2), &pivot);
        assert!((t.apply(&pivot) - pivot).norm() < 1e-15);
        assert!((t.linear().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quaternion_stays_unit() {
        let q = quat_wxyz(2.0, 0.0, 0.0, 2.0);
        assert!((q.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_bbox_has_unit_scale() {
        assert_eq!(bbox_scale(&[]), 1.0);
        assert_eq!(bbox_scale(&[Vec3::new(1.0, 1.0, 1.0)]), 1.0);
    }
}
