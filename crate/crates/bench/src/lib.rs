//! Fixtures shared by the benchmarks.

use deform_core::model::{axis_angle, Vec3};
use deform_core::rigs;
use deform_core::skinning::SkinningMethod;
use deform_core::sync::{EditDelta, SessionConfig, SyncSession};

/// Session on a bundled rig with every joint slightly rotated, so the
/// per-frame work is not the identity shortcut.
pub fn posed_session(rig: &str, method: SkinningMethod) -> SyncSession {
    let rig = rigs::bundled(rig).expect("bundled rig");
    let mut session = SyncSession::new(
        &rig,
        SessionConfig {
            method,
            ..SessionConfig::default()
        },
    )
    .expect("session setup");
    for j in 0..session.skeleton().len() {
        let axis = Vec3::new(0.3, 1.0, (j % 3) as f64);
        session
            .edit(&EditDelta::SkelRotate {
                joint: j,
                rotation: axis_angle(axis, 0.05),
            })
            .expect("rotation");
    }
    session
}

/// One small current-cage drag on vertex 0.
pub fn drag(session: &SyncSession) -> Vec<Vec3> {
    let mut delta = vec![Vec3::zeros(); session.cage_rest().len()];
    delta[0] = Vec3::new(1e-3, 0.0, 0.0) * session.scale();
    delta
}
