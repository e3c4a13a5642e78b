use super::geom::{Transform, Vec3};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Rest articulation `a_j`.
    pub rest_position: Vec3,
}

/// Joint hierarchy with one global transform per joint handle.
///
/// Transform `j` rotates the subtree rooted at joint `j` about that joint.
/// The translations are always the ones implied by the rotations and the
/// rest articulations (see [`Skeleton::refresh_translations`]), so the
/// current skeleton stays connected.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    pub joints: Vec<Joint>,
    pub transforms: Vec<Transform>,
    order: Vec<usize>,
    children: Vec<Vec<usize>>,
}

impl Skeleton {
    /// Builds a skeleton at rest pose (identity transforms).
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        let order = topological_order(&joints)?;
        let mut children = vec![Vec::new(); joints.len()];
        for (j, joint) in joints.iter().enumerate() {
            if let Some(p) = joint.parent {
                children[p].push(j);
            }
        }
        let transforms = vec![Transform::identity(); joints.len()];
        Ok(Self {
            joints,
            transforms,
            order,
            children,
        })
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// Joints ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn children(&self, j: usize) -> &[usize] {
        &self.children[j]
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.joints[j].parent
    }

    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&j| self.joints[j].parent.is_none())
    }

    /// `j` followed by all its descendants, parents before children.
    pub fn subtree(&self, j: usize) -> Vec<usize> {
        let mut out = vec![j];
        let mut k = 0;
        while k < out.len() {
            out.extend_from_slice(&self.children[out[k]]);
            k += 1;
        }
        out
    }

    pub fn rest_positions(&self) -> Vec<Vec3> {
        self.joints.iter().map(|j| j.rest_position).collect()
    }

    pub fn set_rest_positions(&mut self, positions: &[Vec3]) {
        debug_assert_eq!(positions.len(), self.joints.len());
        for (joint, p) in self.joints.iter_mut().zip(positions) {
            joint.rest_position = *p;
        }
    }

    /// Current articulations `T_j a_j`.
    pub fn current_positions(&self) -> Vec<Vec3> {
        self.joints
            .iter()
            .zip(&self.transforms)
            .map(|(j, t)| t.apply(&j.rest_position))
            .collect()
    }

    pub fn is_rest_pose(&self) -> bool {
        self.transforms.iter().all(Transform::is_identity)
    }

    pub fn reset_pose(&mut self) {
        self.transforms.fill(Transform::identity());
    }

    /// Recomputes every translation from the rotations and the rest
    /// articulations, roots first:
    ///
    /// * root: the articulation stays in place, `R a + t = a`;
    /// * child of `f`: both handles agree on the joint,
    ///   `R_j a_j + t_j = R_f a_j + t_f`.
    pub fn refresh_translations(&mut self) {
        for &j in &self.order {
            let a = self.joints[j].rest_position;
            let rot = self.transforms[j].rotation;
            self.transforms[j].translation = match self.joints[j].parent {
                None => a - rot * a,
                Some(f) => {
                    let parent = self.transforms[f];
                    parent.rotation * a + parent.translation - rot * a
                }
            };
        }
    }

    /// Largest violation of the connectivity relations above.
    pub fn connectivity_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for (j, joint) in self.joints.iter().enumerate() {
            let a = joint.rest_position;
            let here = self.transforms[j].apply(&a);
            let target = match joint.parent {
                None => a,
                Some(f) => self.transforms[f].apply(&a),
            };
            err = err.max((here - target).norm());
        }
        err
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }
}

fn topological_order(joints: &[Joint]) -> Result<Vec<usize>> {
    let s = joints.len();
    let mut children = vec![Vec::new(); s];
    for (j, joint) in joints.iter().enumerate() {
        match joint.parent {
            Some(p) if p >= s => {
                return Err(Error::Validation(format!(
                    "joint {j} ({}) has orphan parent index {p}",
                    joint.name
                )))
            }
            Some(p) if p == j => {
                return Err(Error::Validation(format!("joint {j} is its own parent")))
            }
            Some(p) => children[p].push(j),
            None => {}
        }
    }
    let mut order: Vec<usize> = (0..s).filter(|&j| joints[j].parent.is_none()).collect();
    if order.is_empty() && s > 0 {
        return Err(Error::Validation("skeleton has no root joint".into()));
    }
    let mut k = 0;
    while k < order.len() {
        let j = order[k];
        order.extend_from_slice(&children[j]);
        k += 1;
    }
    if order.len() != s {
        return Err(Error::Validation(
            "skeleton parent links contain a cycle".into(),
        ));
    }
    Ok(order)
}
