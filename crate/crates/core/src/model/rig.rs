use std::path::{Path, PathBuf};

use super::geom::{bbox_scale, Vec3};
use super::io;
use super::mesh::TriMesh;
use super::skeleton::Skeleton;
use super::weights::{WeightMatrix, WeightRole, LOAD_ROW_SUM_TOL};
use crate::error::{Error, Result};

/// Skin, skeleton, skinning weights and deformation cage, validated
/// together.
#[derive(Clone, Debug)]
pub struct Rig {
    pub skin: TriMesh,
    pub skeleton: Skeleton,
    pub weights: WeightMatrix,
    pub cage: TriMesh,
}

impl Rig {
    pub fn new(skin: TriMesh, skeleton: Skeleton, weights: WeightMatrix, cage: TriMesh) -> Result<Self> {
        skin.validate()?;
        cage.validate_closed()?;
        if skeleton.is_empty() {
            return Err(Error::Validation("skeleton has no joints".into()));
        }
        if !skeleton.is_rest_pose() {
            return Err(Error::Validation("rig skeleton must be at rest pose".into()));
        }
        if weights.rows() != skin.vertex_count() {
            return Err(Error::Dimension {
                what: "skinning weight rows",
                expected: skin.vertex_count(),
                found: weights.rows(),
            });
        }
        if weights.cols() != skeleton.len() {
            return Err(Error::Dimension {
                what: "skinning weight columns",
                expected: skeleton.len(),
                found: weights.cols(),
            });
        }
        let mut weights = weights;
        weights.role = WeightRole::SkinWeights;
        weights.validate(LOAD_ROW_SUM_TOL)?;
        Ok(Self {
            skin,
            skeleton,
            weights,
            cage,
        })
    }

    /// Diagonal of the rest skin bounding box; the scale all relative
    /// tolerances refer to.
    pub fn scale(&self) -> f64 {
        bbox_scale(&self.skin.vertices)
    }
}

/// Loads and validates the four rig files.
pub fn load_rig(mesh: &Path, skeleton: &Path, weights: &Path, cage: &Path) -> Result<Rig> {
    let skin = io::read_obj(mesh)?;
    let skeleton = io::read_skel(skeleton)?;
    let weights = io::read_wgt(
        weights,
        skin.vertex_count(),
        skeleton.len(),
        WeightRole::SkinWeights,
    )?;
    let cage = io::read_obj(cage)?;
    Rig::new(skin, skeleton, weights, cage)
}

/// Paths of the four rig files, as listed by a `.rig` manifest:
///
/// ```text
/// deform-rig 1
/// mesh bar.obj
/// skeleton bar.skel
/// weights bar.wgt
/// cage bar_cage.obj
/// ```
///
/// Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RigFiles {
    pub mesh: PathBuf,
    pub skeleton: PathBuf,
    pub weights: PathBuf,
    pub cage: PathBuf,
}

pub const RIG_HEADER: &str = "deform-rig 1";

impl RigFiles {
    pub fn in_dir(dir: &Path, name: &str) -> Self {
        Self {
            mesh: dir.join(format!("{name}.obj")),
            skeleton: dir.join(format!("{name}.skel")),
            weights: dir.join(format!("{name}.wgt")),
            cage: dir.join(format!("{name}_cage.obj")),
        }
    }

    pub fn parse_manifest(text: &str, src: &str, base: &Path) -> Result<Self> {
        let mut lines = io::content_lines(text);
        match lines.next() {
            Some((_, h)) if h == RIG_HEADER => {}
            Some((line, _)) => return Err(Error::parse(src, line, format!("expected '{RIG_HEADER}'"))),
            None => return Err(Error::parse(src, 1, "empty rig manifest")),
        }
        let (mut mesh, mut skeleton, mut weights, mut cage) = (None, None, None, None);
        for (line, content) in lines {
            let (key, value) = content
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::parse(src, line, "expected '<key> <path>'"))?;
            let path = base.join(value.trim());
            let slot = match key {
                "mesh" => &mut mesh,
                "skeleton" => &mut skeleton,
                "weights" => &mut weights,
                "cage" => &mut cage,
                other => return Err(Error::parse(src, line, format!("unknown key '{other}'"))),
            };
            *slot = Some(path);
        }
        let need = |p: Option<PathBuf>, k: &str| {
            p.ok_or_else(|| Error::Validation(format!("{src}: missing '{k}' entry")))
        };
        Ok(Self {
            mesh: need(mesh, "mesh")?,
            skeleton: need(skeleton, "skeleton")?,
            weights: need(weights, "weights")?,
            cage: need(cage, "cage")?,
        })
    }

    pub fn read_manifest(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_manifest(&io::read_text(path)?, &path.display().to_string(), base)
    }

    pub fn load(&self) -> Result<Rig> {
        load_rig(&self.mesh, &self.skeleton, &self.weights, &self.cage)
    }
}

/// Writes `<name>.obj/.skel/.wgt`, `<name>_cage.obj` and `<name>.rig` into
/// `dir` and returns the manifest path.
pub fn save_rig(rig: &Rig, dir: &Path, name: &str) -> Result<PathBuf> {
    let files = RigFiles::in_dir(dir, name);
    io::write_obj(&files.mesh, &rig.skin)?;
    io::write_skel(&files.skeleton, &rig.skeleton)?;
    io::write_wgt(&files.weights, &rig.weights)?;
    io::write_obj(&files.cage, &rig.cage)?;
    let manifest = dir.join(format!("{name}.rig"));
    let text = format!(
        "{RIG_HEADER}\nmesh {name}.obj\nskeleton {name}.skel\nweights {name}.wgt\ncage {name}_cage.obj\n"
    );
    io::write_text(&manifest, &text)?;
    Ok(manifest)
}

/// Largest `|v_i − Σ_k φ_ik c_k|` over skin vertices.
pub fn validate_rest_consensus(rig: &Rig, phi: &WeightMatrix) -> Result<f64> {
    rest_consensus_deviation(&rig.skin.vertices, phi, &rig.cage.vertices)
}

pub fn rest_consensus_deviation(skin: &[Vec3], phi: &WeightMatrix, cage: &[Vec3]) -> Result<f64> {
    if phi.rows() != skin.len() {
        return Err(Error::Dimension {
            what: "cage coordinate rows",
            expected: skin.len(),
            found: phi.rows(),
        });
    }
    let reproduced = phi.apply(cage)?;
    Ok(super::geom::max_deviation(skin, &reproduced))
}
