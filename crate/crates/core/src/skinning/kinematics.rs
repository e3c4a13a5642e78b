//! Forward kinematics on global joint transforms.

use crate::model::{Quat, Skeleton, Transform, Vec3};

/// Rotates the subtree below joint `j` by `delta` about the joint's current
/// articulation `T_j a_j`. Ancestors are untouched and every transform in
/// the subtree is composed with the same rigid motion, so the hierarchy
/// stays attached.
pub fn apply_joint_rotation(skeleton: &mut Skeleton, j: usize, delta: Quat) {
    if delta == Quat::identity() {
        return;
    }
    let pivot: Vec3 = skeleton.transforms[j].apply(&skeleton.joints[j].rest_position);
    let motion = Transform::about(delta, &pivot);
    for k in skeleton.subtree(j) {
        let t = motion.compose(&skeleton.transforms[k]);
        skeleton.transforms[k] = Transform::new(renormalize(t.rotation), t.translation);
    }
}

/// Sets every joint's global rotation and derives the translations that keep
/// the skeleton connected.
pub fn pose_from_rotations(skeleton: &mut Skeleton, rotations: &[Quat]) {
    for (t, r) in skeleton.transforms.iter_mut().zip(rotations) {
        t.rotation = renormalize(*r);
    }
    skeleton.refresh_translations();
}

fn renormalize(q: Quat) -> Quat {
    Quat::new_normalize(*q.quaternion())
}
