//! Skeleton-driven skin deformation.

pub mod blend;
pub mod cor;
pub mod dual_quat;
pub mod kinematics;

pub use blend::{cor_skin, cor_skin_with, dqs, lbs, lbs_split, lbs_subset, skin, SkinningMethod};
pub use cor::{cor_precompute, reposition_cors, CoRData, DEFAULT_SIGMA};
pub use dual_quat::DualQuat;
pub use kinematics::{apply_joint_rotation, pose_from_rotations};
