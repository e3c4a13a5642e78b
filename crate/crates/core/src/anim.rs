//! Keyframed hybrid animation: joint rotations and rest-cage shapes are
//! keyed on independent tracks and sampled together.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::geom::{quat_to_wxyz, quat_wxyz};
use crate::model::io::{content_lines, fmt_f64, parse_f64, parse_usize, read_text};
use crate::model::{Quat, Vec3};
use crate::sync::{Snapshot, SyncSession};

pub const TRACK_HEADER: &str = "deform-track 1";

#[derive(Clone, Debug, PartialEq)]
pub struct SkelKey {
    pub time: f64,
    /// Global rotation per joint.
    pub rotations: Vec<Quat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CageKey {
    pub time: f64,
    pub cage_rest: Vec<Vec3>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyframeTrack {
    pub skel: Vec<SkelKey>,
    pub cage: Vec<CageKey>,
}

/// One sample of a track. `None` where the track has no keys.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub rotations: Option<Vec<Quat>>,
    pub cage_rest: Option<Vec<Vec3>>,
}

/// Shortest-arc Slerp: `b` is flipped to a nonnegative dot with `a`.
pub fn slerp_shortest(a: &Quat, b: &Quat, t: f64) -> Quat {
    let b = if a.coords.dot(&b.coords) < 0.0 {
        Quat::new_unchecked(-b.into_inner())
    } else {
        *b
    };
    a.try_slerp(&b, t, 1e-12).unwrap_or(*a)
}

/// Index of the segment containing `t` and the local parameter, with `t`
/// clamped to the key range. Exact key hits return parameter 0.
fn locate(times: &[f64], t: f64) -> (usize, f64) {
    if t <= times[0] || times.len() == 1 {
        return (0, 0.0);
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return (last, 0.0);
    }
    let k = times.partition_point(|&x| x <= t) - 1;
    if t == times[k] {
        return (k, 0.0);
    }
    (k, (t - times[k]) / (times[k + 1] - times[k]))
}

impl KeyframeTrack {
    pub fn validate(&self, joints: usize, cage: usize) -> Result<()> {
        let increasing = |times: Vec<f64>, what: &str| -> Result<()> {
            if times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Validation(format!("{what} key times must increase strictly")));
            }
            Ok(())
        };
        increasing(self.skel.iter().map(|k| k.time).collect(), "skeleton")?;
        increasing(self.cage.iter().map(|k| k.time).collect(), "cage")?;
        for k in &self.skel {
            if k.rotations.len() != joints {
                return Err(Error::Dimension {
                    what: "skeleton key rotations",
                    expected: joints,
                    found: k.rotations.len(),
                });
            }
        }
        for k in &self.cage {
            if k.cage_rest.len() != cage {
                return Err(Error::Dimension {
                    what: "cage key vertices",
                    expected: cage,
                    found: k.cage_rest.len(),
                });
            }
        }
        Ok(())
    }

    /// Time span covered by either track.
    pub fn span(&self) -> Option<(f64, f64)> {
        let times: Vec<f64> = self
            .skel
            .iter()
            .map(|k| k.time)
            .chain(self.cage.iter().map(|k| k.time))
            .collect();
        let lo = times.iter().cloned().reduce(f64::min)?;
        let hi = times.iter().cloned().reduce(f64::max)?;
        Some((lo, hi))
    }

    /// Samples both tracks at `t` (clamped per track).
    pub fn interpolate(&self, t: f64) -> Sample {
        let rotations = (!self.skel.is_empty()).then(|| {
            let times: Vec<f64> = self.skel.iter().map(|k| k.time).collect();
            let (k, u) = locate(&times, t);
            if u == 0.0 {
                self.skel[k].rotations.clone()
            } else {
                self.skel[k]
                    .rotations
                    .iter()
                    .zip(&self.skel[k + 1].rotations)
                    .map(|(a, b)| slerp_shortest(a, b, u))
                    .collect()
            }
        });
        let cage_rest = (!self.cage.is_empty()).then(|| {
            let times: Vec<f64> = self.cage.iter().map(|k| k.time).collect();
            let (k, u) = locate(&times, t);
            if u == 0.0 {
                self.cage[k].cage_rest.clone()
            } else {
                self.cage[k]
                    .cage_rest
                    .iter()
                    .zip(&self.cage[k + 1].cage_rest)
                    .map(|(a, b)| a + (b - a) * u)
                    .collect()
            }
        });
        Sample {
            rotations,
            cage_rest,
        }
    }
}

/// Sample times `t0 + k / fps` covering the track span.
pub fn sample_times(track: &KeyframeTrack, fps: f64) -> Vec<f64> {
    let Some((t0, t1)) = track.span() else {
        return Vec::new();
    };
    if !(fps > 0.0) {
        return vec![t0];
    }
    let frames = ((t1 - t0) * fps + 1e-9).floor() as usize;
    (0..=frames).map(|k| t0 + k as f64 / fps).collect()
}

/// Feeds one sample to the session as a fresh state. Missing tracks fall
/// back to `base_cage` and identity rotations.
pub fn apply_sample(session: &mut SyncSession, sample: &Sample, base_cage: &[Vec3]) -> Result<Arc<Snapshot>> {
    let rotations = sample
        .rotations
        .clone()
        .unwrap_or_else(|| vec![Quat::identity(); session.skeleton().len()]);
    let cage = sample.cage_rest.as_deref().unwrap_or(base_cage);
    session.set_pose(cage, &rotations)
}

/// Plays the track at `fps`, calling `on_frame(index, time, session)` after
/// each sampled pose.
pub fn play(
    session: &mut SyncSession,
    track: &KeyframeTrack,
    fps: f64,
    mut on_frame: impl FnMut(usize, f64, &SyncSession) -> Result<()>,
) -> Result<usize> {
    track.validate(session.skeleton().len(), session.cage_rest().len())?;
    let base_cage = session.cage_rest().to_vec();
    let times = sample_times(track, fps);
    for (k, &t) in times.iter().enumerate() {
        apply_sample(session, &track.interpolate(t), &base_cage)?;
        on_frame(k, t, session)?;
    }
    Ok(times.len())
}

/// Parses a track. Joints not listed in a skeleton key keep the identity.
pub fn parse_track(text: &str, src: &str, joints: usize) -> Result<KeyframeTrack> {
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, header)) if header == TRACK_HEADER => {}
        Some((n, _)) => return Err(Error::parse(src, n, format!("expected header '{TRACK_HEADER}'"))),
        None => return Err(Error::parse(src, 1, "empty track file")),
    }
    enum Open {
        None,
        Skel,
        Cage,
    }
    let mut track = KeyframeTrack::default();
    let mut open = Open::None;
    for (n, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let number = |k: usize| parse_f64(fields.get(k).copied(), src, n, "value");
        match fields[0] {
            "skel_key" => {
                track.skel.push(SkelKey {
                    time: number(1)?,
                    rotations: vec![Quat::identity(); joints],
                });
                open = Open::Skel;
            }
            "cage_key" => {
                track.cage.push(CageKey {
                    time: number(1)?,
                    cage_rest: Vec::new(),
                });
                open = Open::Cage;
            }
            "rot" => {
                let (Open::Skel, Some(key)) = (&open, track.skel.last_mut()) else {
                    return Err(Error::parse(src, n, "'rot' outside a skeleton key"));
                };
                let j = parse_usize(fields.get(1).copied(), src, n, "joint index")?;
                if j >= joints {
                    return Err(Error::parse(src, n, format!("joint {j} out of range")));
                }
                let q = [number(2)?, number(3)?, number(4)?, number(5)?];
                let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::parse(src, n, format!("rotation is not unit length (norm {norm})")));
                }
                key.rotations[j] = quat_wxyz(q[0], q[1], q[2], q[3]);
            }
            "v" => {
                let (Open::Cage, Some(key)) = (&open, track.cage.last_mut()) else {
                    return Err(Error::parse(src, n, "'v' outside a cage key"));
                };
                key.cage_rest.push(Vec3::new(number(1)?, number(2)?, number(3)?));
            }
            other => return Err(Error::parse(src, n, format!("unknown record '{other}'"))),
        }
        if fields.len() > expected_fields(fields[0]) {
            return Err(Error::parse(src, n, "trailing fields"));
        }
    }
    Ok(track)
}

fn expected_fields(record: &str) -> usize {
    match record {
        "skel_key" | "cage_key" => 2,
        "rot" => 6,
        _ => 4,
    }
}

pub fn read_track(path: &Path, joints: usize) -> Result<KeyframeTrack> {
    parse_track(&read_text(path)?, &path.display().to_string(), joints)
}

pub fn format_track(track: &KeyframeTrack) -> String {
    let mut out = format!("{TRACK_HEADER}\n");
    for key in &track.skel {
        out.push_str(&format!("skel_key {}\n", fmt_f64(key.time)));
        for (j, q) in key.rotations.iter().enumerate() {
            if *q != Quat::identity() {
                let [w, x, y, z] = quat_to_wxyz(q);
                out.push_str(&format!("rot {j} {} {} {} {}\n", fmt_f64(w), fmt_f64(x), fmt_f64(y), fmt_f64(z)));
            }
        }
    }
    for key in &track.cage {
        out.push_str(&format!("cage_key {}\n", fmt_f64(key.time)));
        for v in &key.cage_rest {
            out.push_str(&format!("v {} {} {}\n", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::axis_angle;
    use std::f64::consts::FRAC_PI_2;

    fn track() -> KeyframeTrack {
        KeyframeTrack {
            skel: vec![
                SkelKey {
                    time: 0.0,
                    rotations: vec![Quat::identity(), Quat::identity()],
                },
                SkelKey {
                    time: 1.0,
                    rotations: vec![Quat::identity(), axis_angle(Vec3::z(), FRAC_PI_2)],
                },
            ],
            cage: vec![
                CageKey {
                    time: 0.0,
                    cage_rest: vec![Vec3::zeros(), Vec3::x()],
                },
                CageKey {
                    time: 2.0,
                    cage_rest: vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(1.0, 4.0, 0.0)],
                },
            ],
        }
    }

    #[test]
    fn keys_are_reproduced_verbatim() {
        let tr = track();
        let s = tr.interpolate(1.0);
        assert_eq!(s.rotations.unwrap(), tr.skel[1].rotations);
        let s = tr.interpolate(2.0);
        assert_eq!(s.cage_rest.unwrap(), tr.cage[1].cage_rest);
        assert_eq!(tr.interpolate(0.0).cage_rest.unwrap(), tr.cage[0].cage_rest);
    }

    #[test]
    fn coaxial_midpoint_is_half_angle() {
        let s = track().interpolate(0.5);
        let q = s.rotations.unwrap()[1];
        assert!(q.angle_to(&axis_angle(Vec3::z(), FRAC_PI_2 / 2.0)) < 1e-14);
    }

    #[test]
    fn cage_midpoint_is_mean() {
        let s = track().interpolate(1.0);
        let c = s.cage_rest.unwrap();
        assert_eq!(c[0], Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(c[1], Vec3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn sampling_clamps_outside_the_keys() {
        let tr = track();
        assert_eq!(tr.interpolate(-3.0), tr.interpolate(0.0));
        assert_eq!(tr.interpolate(9.0).rotations, tr.interpolate(1.0).rotations);
    }

    #[test]
    fn slerp_takes_the_short_way() {
        let a = axis_angle(Vec3::z(), 0.1);
        let b = Quat::new_unchecked(-axis_angle(Vec3::z(), 0.3).into_inner());
        let mid = slerp_shortest(&a, &b, 0.5);
        assert!(mid.angle_to(&axis_angle(Vec3::z(), 0.2)) < 1e-14);
    }

    #[test]
    fn samples_hit_keys_on_the_frame_grid() {
        let t = sample_times(&track(), 4.0);
        assert_eq!(t.len(), 9);
        assert_eq!(t[4], 1.0);
        assert_eq!(t[8], 2.0);
        assert!(sample_times(&KeyframeTrack::default(), 4.0).is_empty());
    }

    #[test]
    fn text_round_trip() {
        let tr = track();
        let back = parse_track(&format_track(&tr), "t", 2).unwrap();
        assert_eq!(back, tr);
        back.validate(2, 2).unwrap();
        assert!(parse_track("deform-track 1\nrot 0 1 0 0 0\n", "t", 2).is_err());
        assert!(parse_track("deform-track 1\nskel_key 0\nrot 0 2 0 0 0\n", "t", 2).is_err());
    }
}
