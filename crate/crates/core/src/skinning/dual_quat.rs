//! Dual quaternions for rigid-transform blending.

use std::ops::{Add, Mul};

use nalgebra::Quaternion;

use crate::model::{Quat, Transform, Vec3};

/// `real + ε dual`. Unit dual quaternions encode rigid transforms with the
/// rotation in `real` and `dual = ½ (0, t) real`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualQuat {
    pub real: Quaternion<f64>,
    pub dual: Quaternion<f64>,
}

impl DualQuat {
    pub fn zero() -> Self {
        Self {
            real: Quaternion::new(0.0, 0.0, 0.0, 0.0),
            dual: Quaternion::new(0.0, 0.0, 0.0, 0.0),
        }
    }

    pub fn from_transform(t: &Transform) -> Self {
        let real = *t.rotation.quaternion();
        let pure = Quaternion::new(0.0, t.translation.x, t.translation.y, t.translation.z);
        Self {
            real,
            dual: pure * real * 0.5,
        }
    }

    pub fn real_norm(&self) -> f64 {
        self.real.norm()
    }

    pub fn negated(&self) -> Self {
        Self {
            real: -self.real,
            dual: -self.dual,
        }
    }

    /// Rigid transform of the normalized dual quaternion. The translation
    /// uses the vector part of `2 dual real*`, which discards the component
    /// of `dual` that is not orthogonal to `real` after blending.
    pub fn to_transform(&self) -> Option<Transform> {
        let n = self.real.norm();
        if !(n > 0.0) {
            return None;
        }
        let real = self.real / n;
        let dual = self.dual / n;
        let t = dual * real.conjugate() * 2.0;
        Some(Transform {
            rotation: Quat::new_unchecked(real),
            translation: Vec3::new(t.i, t.j, t.k),
        })
    }
}

impl Add for DualQuat {
    type Output = DualQuat;
    fn add(self, rhs: DualQuat) -> DualQuat {
        DualQuat {
            real: self.real + rhs.real,
            dual: self.dual + rhs.dual,
        }
    }
}

impl Mul<f64> for DualQuat {
    type Output = DualQuat;
    fn mul(self, s: f64) -> DualQuat {
        DualQuat {
            real: self.real * s,
            dual: self.dual * s,
        }
    }
}
