//! Geometric value types, validation and file IO for skins, cages,
//! skeletons and weight matrices.

pub mod geom;
pub mod io;
pub mod mesh;
pub mod rig;
pub mod skeleton;
pub mod weights;

pub use geom::{axis_angle, bbox_scale, max_deviation, Aabb, Affine, Mat3, Quat, Transform, Vec3};
pub use mesh::TriMesh;
pub use rig::{load_rig, save_rig, validate_rest_consensus, Rig, RigFiles};
pub use skeleton::{Joint, Skeleton};
pub use weights::{WeightMatrix, WeightRole};
