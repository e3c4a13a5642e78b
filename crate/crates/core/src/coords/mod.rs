//! Generalized barycentric coordinates: mean value coordinates of skin
//! points in the cage, and maximum-entropy coordinates of the skeleton
//! joints.

pub mod joints;
pub mod mec;
pub mod mvc;

pub use joints::{
    clamp_masses, joint_coords, joint_localization, JointLocalization,
    DEFAULT_LOCALIZATION_EXPONENT,
};
pub use mec::{entropy_objective, mec_project, MecProblem, MecSolution};
pub use mvc::{mvc_matrix, mvc_weights};
