//! Procedural test rigs: a bendable bar, an arm-like tube, a long
//! many-joint tube at production scale, and a small voxel biped.
//!
//! Skinning weights fall off smoothly with the distance to each handle's
//! bone segments.

pub mod tube;
pub mod voxel;

use crate::error::{Error, Result};
use crate::model::{Joint, Rig, Skeleton, TriMesh, Vec3, WeightMatrix, WeightRole};
use tube::{tube, uniform_sections, Cap, Section};
use voxel::{extrude, Mask};

/// Names accepted by [`bundled`].
pub const BUNDLED: [&str; 4] = ["bar", "arm", "biped", "warrok"];

pub fn bundled(name: &str) -> Result<Rig> {
    match name {
        "bar" => bent_bar(),
        "arm" => arm(),
        "biped" => toy_biped(),
        "warrok" => warrok_scale(),
        other => Err(Error::Validation(format!(
            "unknown bundled rig '{other}' (expected one of {})",
            BUNDLED.join(", ")
        ))),
    }
}

const FALLOFF_POWER: i32 = 4;
const MAX_INFLUENCES: usize = 4;
const MIN_WEIGHT: f64 = 1e-3;

fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

/// Bone segments of each handle: one per child, plus `tips` for leaves.
pub fn bone_segments(skeleton: &Skeleton, tips: &[(usize, Vec3)]) -> Vec<Vec<(Vec3, Vec3)>> {
    let rest = skeleton.rest_positions();
    let mut segments: Vec<Vec<(Vec3, Vec3)>> = (0..skeleton.len())
        .map(|j| skeleton.children(j).iter().map(|&c| (rest[j], rest[c])).collect())
        .collect();
    for &(j, tip) in tips {
        segments[j].push((rest[j], tip));
    }
    for (j, segs) in segments.iter_mut().enumerate() {
        if segs.is_empty() {
            segs.push((rest[j], rest[j]));
        }
    }
    segments
}

/// Inverse-distance weights to bone segments: `(d + ε)^-4`, strongest four
/// kept, tiny ones dropped, renormalized.
pub fn falloff_weights(points: &[Vec3], segments: &[Vec<(Vec3, Vec3)>], softness: f64) -> WeightMatrix {
    let s = segments.len();
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let mut raw: Vec<(usize, f64)> = segments
                .iter()
                .enumerate()
                .map(|(j, segs)| {
                    let d = segs
                        .iter()
                        .map(|(a, b)| segment_distance(p, a, b))
                        .fold(f64::INFINITY, f64::min);
                    (j, (d + softness).powi(-FALLOFF_POWER))
                })
                .collect();
            raw.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            raw.truncate(MAX_INFLUENCES);
            let total: f64 = raw.iter().map(|(_, w)| w).sum();
            raw.retain(|(_, w)| w / total >= MIN_WEIGHT);
            let total: f64 = raw.iter().map(|(_, w)| w).sum();
            let mut row = vec![0.0; s];
            for (j, w) in raw {
                row[j] = w / total;
            }
            row
        })
        .collect();
    WeightMatrix::from_rows(s, &rows, WeightRole::SkinWeights)
}

fn chain(name: &str, positions: &[Vec3]) -> Result<Skeleton> {
    Skeleton::new(
        positions
            .iter()
            .enumerate()
            .map(|(k, p)| Joint {
                name: format!("{name}{k}"),
                parent: k.checked_sub(1),
                rest_position: *p,
            })
            .collect(),
    )
}

fn box_cage(xs: &[f64], half: f64) -> TriMesh {
    let sections: Vec<Section> = xs.iter().map(|&x| Section::square(x, half)).collect();
    tube(&sections, Cap::Flat, Cap::Flat)
}

/// Pivot of the bar: the "elbow" joint, off-center along the bar.
pub const BAR_PIVOT: f64 = 1.25;
pub const BAR_LENGTH: f64 = 2.0;

/// Square-ish bar on `x ∈ [0, 2]` with a base joint and an elbow at
/// `x = 1.25`. Rings are twice as dense along the axis as around it, so a
/// 2× axial stretch leaves the tessellation well shaped.
pub fn bent_bar() -> Result<Rig> {
    let radius = 0.2;
    let skin = tube(
        &uniform_sections(0.0, BAR_LENGTH, 51, radius, 16),
        Cap::Pole(0.0),
        Cap::Pole(BAR_LENGTH),
    );
    let skeleton = Skeleton::new(vec![
        Joint {
            name: "base".into(),
            parent: None,
            rest_position: Vec3::new(0.1, 0.0, 0.0),
        },
        Joint {
            name: "elbow".into(),
            parent: Some(0),
            rest_position: Vec3::new(BAR_PIVOT, 0.0, 0.0),
        },
    ])?;
    let segments = bone_segments(&skeleton, &[(1, Vec3::new(BAR_LENGTH, 0.0, 0.0))]);
    let weights = falloff_weights(&skin.vertices, &segments, 0.05);
    let cage = box_cage(&[-0.15, 0.5, 1.0, 1.5, 2.15], 0.35);
    Rig::new(skin, skeleton, weights, cage)
}

/// 2089-vertex tube with rounded ends, a 24-joint chain and a 28-vertex cage.
pub fn arm() -> Result<Rig> {
    let (length, radius) = (6.0, 0.4);
    let mut sections = vec![
        Section::new(0.04, 0.45 * radius, 9),
        Section::new(0.14, 0.8 * radius, 18),
    ];
    sections.extend(uniform_sections(0.3, length - 0.3, 85, radius, 24));
    sections.push(Section::new(length - 0.14, 0.8 * radius, 12));
    sections.push(Section::new(length - 0.04, 0.45 * radius, 8));
    let skin = tube(&sections, Cap::Pole(0.0), Cap::Pole(length));
    let joints: Vec<Vec3> = (0..24).map(|k| Vec3::new(0.2 + 0.24 * k as f64, 0.0, 0.0)).collect();
    let skeleton = chain("arm", &joints)?;
    let segments = bone_segments(&skeleton, &[(23, Vec3::new(length - 0.1, 0.0, 0.0))]);
    let weights = falloff_weights(&skin.vertices, &segments, 0.05);
    let cage = box_cage(&[-0.2, 0.9, 2.0, 3.0, 4.0, 5.1, length + 0.2], 0.6);
    Rig::new(skin, skeleton, weights, cage)
}

/// About 6.5k vertices, 64 joints, 104 cage vertices.
pub fn warrok_scale() -> Result<Rig> {
    let (length, radius) = (16.0, 0.5);
    let mut sections = vec![Section::new(0.06, 0.6 * radius, 16)];
    sections.extend(uniform_sections(0.25, length - 0.25, 202, radius, 32));
    sections.push(Section::new(length - 0.06, 0.6 * radius, 16));
    let skin = tube(&sections, Cap::Pole(0.0), Cap::Pole(length));
    let joints: Vec<Vec3> = (0..64).map(|k| Vec3::new(0.2 + 0.245 * k as f64, 0.0, 0.0)).collect();
    let skeleton = chain("spine", &joints)?;
    let segments = bone_segments(&skeleton, &[(63, Vec3::new(length - 0.1, 0.0, 0.0))]);
    let weights = falloff_weights(&skin.vertices, &segments, 0.05);
    let xs: Vec<f64> = (0..26).map(|k| -0.2 + (length + 0.4) * k as f64 / 25.0).collect();
    let cage = box_cage(&xs, 0.8);
    Rig::new(skin, skeleton, weights, cage)
}

const BIPED_ART: [&str; 16] = [
    "......##......",
    "......##......",
    "##############",
    "##############",
    "....######....",
    "....######....",
    "....######....",
    "....######....",
    "....######....",
    "....##..##....",
    "....##..##....",
    "....##..##....",
    "....##..##....",
    "....##..##....",
    "....##..##....",
    "....##..##....",
];

/// T-posed biped from a 14×16 cell silhouette. The cage is the extruded
/// silhouette; the skin is a finer, eroded and thinner extrusion inside it.
pub fn toy_biped() -> Result<Rig> {
    let coarse = Mask::from_art(&BIPED_ART);
    let cage = extrude(&coarse, 1.0, (0.0, 0.0), (-1.0, 1.0), 1);
    let fine = coarse.upsample(4).erode();
    let skin = extrude(&fine, 0.25, (0.0, 0.0), (-0.6, 0.6), 3);

    let spec: [(&str, Option<usize>, (f64, f64)); 17] = [
        ("pelvis", None, (7.0, 7.5)),
        ("spine", Some(0), (7.0, 10.0)),
        ("chest", Some(1), (7.0, 12.5)),
        ("neck", Some(2), (7.0, 14.2)),
        ("head", Some(3), (7.0, 15.3)),
        ("l_shoulder", Some(2), (4.5, 13.0)),
        ("l_elbow", Some(5), (2.3, 13.0)),
        ("l_hand", Some(6), (0.8, 13.0)),
        ("r_shoulder", Some(2), (9.5, 13.0)),
        ("r_elbow", Some(8), (11.7, 13.0)),
        ("r_hand", Some(9), (13.2, 13.0)),
        ("l_hip", Some(0), (5.0, 6.3)),
        ("l_knee", Some(11), (5.0, 3.5)),
        ("l_foot", Some(12), (5.0, 0.8)),
        ("r_hip", Some(0), (9.0, 6.3)),
        ("r_knee", Some(14), (9.0, 3.5)),
        ("r_foot", Some(15), (9.0, 0.8)),
    ];
    let skeleton = Skeleton::new(
        spec.iter()
            .map(|&(name, parent, (x, y))| Joint {
                name: name.into(),
                parent,
                rest_position: Vec3::new(x, y, 0.0),
            })
            .collect(),
    )?;
    let tips = [
        (4, Vec3::new(7.0, 15.8, 0.0)),
        (7, Vec3::new(0.3, 13.0, 0.0)),
        (10, Vec3::new(13.7, 13.0, 0.0)),
        (13, Vec3::new(5.0, 0.3, 0.0)),
        (16, Vec3::new(9.0, 0.3, 0.0)),
    ];
    let segments = bone_segments(&skeleton, &tips);
    let weights = falloff_weights(&skin.vertices, &segments, 0.1);
    Rig::new(skin, skeleton, weights, cage)
}
