//! Line-oriented edit scripts.
//!
//! ```text
//! deform-script 1
//! rig bar                     # bundled rig name or path to a .rig manifest
//! skinning lbs
//! ghost on
//! rotate elbow 0 0 1 90       # joint (name or index), axis, degrees
//! cage_rest_scale 2 1 1 1.25 0 0
//! snapshot bent
//! ```
//!
//! Header keys (`rig`, `skinning`, `ghost`, `s_exp`, `sigma`, `tolerance`,
//! `consensus`, `step_cap`, `skel_up`, `seed`, `timing_frames`) must come
//! before the first step.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::geom::{quat_to_wxyz, quat_wxyz};
use crate::model::io::{content_lines, fmt_f64, format_obj_points, format_skel, parse_f64, parse_usize, read_text, write_text};
use crate::model::rig::RigFiles;
use crate::model::{axis_angle, Affine, Mat3, Quat, Rig, Vec3};
use crate::report::{report_timings, TimingTable};
use crate::rigs;
use crate::sync::{Audit, EditDelta, SessionConfig, SyncSession};

pub const SCRIPT_HEADER: &str = "deform-script 1";

#[derive(Clone, Debug, PartialEq)]
pub enum RigSource {
    Bundled(String),
    Manifest(PathBuf),
}

impl RigSource {
    /// A bundled name when it is one, otherwise a manifest path relative to
    /// `base`.
    pub fn resolve(value: &str, base: &Path) -> Self {
        if rigs::BUNDLED.contains(&value) {
            RigSource::Bundled(value.to_string())
        } else {
            RigSource::Manifest(base.join(value))
        }
    }

    pub fn load(&self) -> Result<Rig> {
        match self {
            RigSource::Bundled(name) => rigs::bundled(name),
            RigSource::Manifest(path) => RigFiles::read_manifest(path)?.load(),
        }
    }
}

/// Joint given by index or by name.
#[derive(Clone, Debug, PartialEq)]
pub enum JointRef {
    Index(usize),
    Name(String),
}

impl JointRef {
    fn parse(tok: &str) -> Self {
        tok.parse().map_or_else(|_| JointRef::Name(tok.to_string()), JointRef::Index)
    }

    pub fn resolve(&self, session: &SyncSession) -> Result<usize> {
        match self {
            JointRef::Index(j) => Ok(*j),
            JointRef::Name(name) => session
                .skeleton()
                .index_of(name)
                .ok_or_else(|| Error::Edit(format!("no joint named '{name}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Rotate { joint: JointRef, rotation: Quat },
    CageRest(Vec<(usize, Vec3)>),
    CageCurr(Vec<(usize, Vec3)>),
    /// Affine map applied to the whole rest cage.
    CageRestAffine(Affine),
    /// `count` single-vertex current-cage drags, each at most
    /// `magnitude × bbox`, drawn from the script seed.
    RandomCageCurr { count: usize, magnitude: f64 },
    /// All transforms back to identity.
    ResetPose,
    Snapshot(String),
    Timer(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EditScript {
    pub rig: RigSource,
    pub config: SessionConfig,
    pub seed: u64,
    pub timing_frames: usize,
    /// `(line, step)`.
    pub steps: Vec<(usize, Step)>,
}

fn parse_flag(tok: Option<&str>, src: &str, line: usize) -> Result<bool> {
    match tok {
        Some("on" | "true" | "1") => Ok(true),
        Some("off" | "false" | "0") => Ok(false),
        other => Err(Error::parse(src, line, format!("expected on|off, got {other:?}"))),
    }
}

fn parse_offsets<'a>(toks: impl Iterator<Item = &'a str>, src: &str, line: usize) -> Result<Vec<(usize, Vec3)>> {
    let toks: Vec<&str> = toks.collect();
    if toks.is_empty() || toks.len() % 4 != 0 {
        return Err(Error::parse(src, line, "expected groups of '<vertex> <dx> <dy> <dz>'"));
    }
    toks.chunks(4)
        .map(|g| {
            Ok((
                parse_usize(Some(g[0]), src, line, "cage vertex")?,
                Vec3::new(
                    parse_f64(Some(g[1]), src, line, "dx")?,
                    parse_f64(Some(g[2]), src, line, "dy")?,
                    parse_f64(Some(g[3]), src, line, "dz")?,
                ),
            ))
        })
        .collect()
}

impl EditScript {
    /// Parses a script; relative rig paths resolve against `base`.
    pub fn parse(text: &str, src: &str, base: &Path) -> Result<Self> {
        let mut lines = content_lines(text);
        match lines.next() {
            Some((_, h)) if h == SCRIPT_HEADER => {}
            Some((n, _)) => return Err(Error::parse(src, n, format!("expected header '{SCRIPT_HEADER}'"))),
            None => return Err(Error::parse(src, 1, "empty script")),
        }
        let mut rig = None;
        let mut config = SessionConfig::default();
        let mut seed = 0;
        let mut timing_frames = 10;
        let mut steps = Vec::new();
        for (n, line) in lines {
            let mut toks = line.split_whitespace();
            let key = toks.next().unwrap_or_default();
            let header = |steps: &Vec<(usize, Step)>| {
                if steps.is_empty() {
                    Ok(())
                } else {
                    Err(Error::parse(src, n, format!("header key '{key}' after the first step")))
                }
            };
            let num = |toks: &mut std::str::SplitWhitespace, what| parse_f64(toks.next(), src, n, what);
            match key {
                "rig" => {
                    header(&steps)?;
                    let value = line[3..].trim();
                    if value.is_empty() {
                        return Err(Error::parse(src, n, "missing rig"));
                    }
                    rig = Some(RigSource::resolve(value, base));
                    continue;
                }
                "skinning" => {
                    header(&steps)?;
                    let v = toks.next().unwrap_or_default();
                    config.method = v.parse().map_err(|e: Error| Error::parse(src, n, e.to_string()))?;
                }
                "ghost" => {
                    header(&steps)?;
                    config.ghost = parse_flag(toks.next(), src, n)?;
                }
                "skel_up" => {
                    header(&steps)?;
                    config.skel_up = parse_flag(toks.next(), src, n)?;
                }
                "s_exp" => {
                    header(&steps)?;
                    config.s_exp = num(&mut toks, "s_exp")?;
                }
                "sigma" => {
                    header(&steps)?;
                    config.sigma = num(&mut toks, "sigma")?;
                }
                "tolerance" => {
                    header(&steps)?;
                    config.audit_tol = num(&mut toks, "tolerance")?;
                }
                "consensus" => {
                    header(&steps)?;
                    config.consensus_tol = num(&mut toks, "consensus tolerance")?;
                }
                "step_cap" => {
                    header(&steps)?;
                    config.step_cap = num(&mut toks, "step cap")?;
                }
                "seed" => {
                    header(&steps)?;
                    seed = parse_usize(toks.next(), src, n, "seed")? as u64;
                }
                "timing_frames" => {
                    header(&steps)?;
                    timing_frames = parse_usize(toks.next(), src, n, "frame count")?;
                }
                "rotate" => {
                    let joint = JointRef::parse(toks.next().ok_or_else(|| Error::parse(src, n, "missing joint"))?);
                    let axis = Vec3::new(num(&mut toks, "axis x")?, num(&mut toks, "axis y")?, num(&mut toks, "axis z")?);
                    let degrees = num(&mut toks, "angle")?;
                    if axis.norm() == 0.0 {
                        return Err(Error::parse(src, n, "zero rotation axis"));
                    }
                    steps.push((n, Step::Rotate {
                        joint,
                        rotation: axis_angle(axis, degrees.to_radians()),
                    }));
                }
                "rotate_q" => {
                    let joint = JointRef::parse(toks.next().ok_or_else(|| Error::parse(src, n, "missing joint"))?);
                    let q = [num(&mut toks, "w")?, num(&mut toks, "x")?, num(&mut toks, "y")?, num(&mut toks, "z")?];
                    if q.iter().all(|x| *x == 0.0) {
                        return Err(Error::parse(src, n, "zero quaternion"));
                    }
                    steps.push((n, Step::Rotate {
                        joint,
                        rotation: quat_wxyz(q[0], q[1], q[2], q[3]),
                    }));
                }
                "cage_rest" => {
                    steps.push((n, Step::CageRest(parse_offsets(toks.by_ref(), src, n)?)));
                }
                "cage_curr" => {
                    steps.push((n, Step::CageCurr(parse_offsets(toks.by_ref(), src, n)?)));
                }
                "cage_rest_affine" => {
                    let mut v = [0.0; 12];
                    for (k, slot) in v.iter_mut().enumerate() {
                        *slot = parse_f64(toks.next(), src, n, if k < 9 { "matrix entry" } else { "translation" })?;
                    }
                    let linear = Mat3::from_row_slice(&v[..9]);
                    steps.push((n, Step::CageRestAffine(Affine::new(linear, Vec3::new(v[9], v[10], v[11])))));
                }
                "cage_rest_scale" => {
                    let s = Vec3::new(num(&mut toks, "sx")?, num(&mut toks, "sy")?, num(&mut toks, "sz")?);
                    let c = Vec3::new(num(&mut toks, "cx")?, num(&mut toks, "cy")?, num(&mut toks, "cz")?);
                    steps.push((n, Step::CageRestAffine(Affine::scale_about(s, &c))));
                }
                "random_cage_curr" => {
                    let count = parse_usize(toks.next(), src, n, "edit count")?;
                    let magnitude = num(&mut toks, "magnitude")?;
                    steps.push((n, Step::RandomCageCurr { count, magnitude }));
                }
                "reset_pose" => steps.push((n, Step::ResetPose)),
                "snapshot" | "timer" => {
                    let name = toks.next().ok_or_else(|| Error::parse(src, n, format!("missing {key} name")))?;
                    if key == "snapshot" && !name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
                        return Err(Error::parse(src, n, format!("snapshot name '{name}' is not a plain file name")));
                    }
                    steps.push((
                        n,
                        if key == "snapshot" {
                            Step::Snapshot(name.to_string())
                        } else {
                            Step::Timer(name.to_string())
                        },
                    ));
                }
                other => return Err(Error::parse(src, n, format!("unknown record '{other}'"))),
            }
            if let Some(extra) = toks.next() {
                return Err(Error::parse(src, n, format!("unexpected '{extra}'")));
            }
        }
        let rig = rig.ok_or_else(|| Error::Validation(format!("{src}: no 'rig' line")))?;
        Ok(Self {
            rig,
            config,
            seed,
            timing_frames,
            steps,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&read_text(path)?, &path.display().to_string(), base)
    }
}

/// Script line for one engine edit, exact under a parse round trip.
pub fn format_edit(delta: &EditDelta) -> String {
    let offsets = |name: &str, o: &[(usize, Vec3)]| {
        let mut line = name.to_string();
        for (k, d) in o {
            line.push_str(&format!(" {k} {} {} {}", fmt_f64(d.x), fmt_f64(d.y), fmt_f64(d.z)));
        }
        line
    };
    match delta {
        EditDelta::SkelRotate { joint, rotation } => {
            let [w, x, y, z] = quat_to_wxyz(rotation);
            format!("rotate_q {joint} {} {} {} {}", fmt_f64(w), fmt_f64(x), fmt_f64(y), fmt_f64(z))
        }
        EditDelta::CageRest(o) => offsets("cage_rest", o),
        EditDelta::CageCurr(o) => offsets("cage_curr", o),
    }
}

/// Writes `<name>.obj` (current skin), `<name>_cage_rest.obj`,
/// `<name>_cage_curr.obj`, `<name>.skel` (current articulations) and
/// `<name>_rest.skel`.
pub fn export_snapshot(session: &SyncSession, dir: &Path, name: &str) -> Result<()> {
    let snap = session.snapshot();
    let skeleton = session.skeleton();
    write_text(&dir.join(format!("{name}.obj")), &format_obj_points(&snap.skin, session.skin_triangles()))?;
    write_text(
        &dir.join(format!("{name}_cage_rest.obj")),
        &format_obj_points(&snap.cage_rest, session.cage_triangles()),
    )?;
    write_text(
        &dir.join(format!("{name}_cage_curr.obj")),
        &format_obj_points(&snap.cage_curr, session.cage_triangles()),
    )?;
    write_text(&dir.join(format!("{name}.skel")), &format_skel(skeleton, &snap.joints_curr))?;
    write_text(&dir.join(format!("{name}_rest.skel")), &format_skel(skeleton, &snap.joints_rest))
}

/// Single-vertex current-cage drag of length at most `magnitude × scale`.
pub fn random_drag(rng: &mut impl Rng, cage: usize, magnitude: f64, scale: f64) -> EditDelta {
    let k = rng.random_range(0..cage);
    let dir = loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break v / n;
        }
    };
    let length = rng.random_range(0.0..=1.0) * magnitude * scale;
    EditDelta::CageCurr(vec![(k, dir * length)])
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub line: usize,
    pub kind: &'static str,
    pub frame: u64,
    pub audit: Audit,
}

#[derive(Debug)]
pub struct ScriptOutcome {
    pub steps: Vec<StepRecord>,
    pub timers: Vec<(String, Duration)>,
    pub timings: TimingTable,
    /// Worst audit deviation over all steps, relative to the bounding box.
    pub worst_relative_audit: f64,
}

/// Failure of one script step, after partial artifacts were written.
#[derive(Debug, thiserror::Error)]
#[error("step {step} (line {line}): {source}")]
pub struct StepError {
    pub step: usize,
    pub line: usize,
    #[source]
    pub source: Error,
}

fn audit_lines(records: &[StepRecord], scale: f64) -> String {
    let mut out = String::from("# step line kind frame max_abs max_rel\n");
    for (i, r) in records.iter().enumerate() {
        let m = r.audit.max();
        out.push_str(&format!(
            "{i} {} {} {} {:e} {:e}\n",
            r.line,
            r.kind,
            r.frame,
            m,
            m / scale
        ));
    }
    out
}

/// Replays a script into `out_dir`: snapshots, `audit.txt` with one line per
/// step, `timings.txt`, and a `final` snapshot. A failing step stops the run
/// after flushing the audit gathered so far.
pub fn run_script(script: &EditScript, out_dir: &Path) -> std::result::Result<ScriptOutcome, StepError> {
    let setup_err = |source| StepError {
        step: 0,
        line: 0,
        source,
    };
    let rig = script.rig.load().map_err(setup_err)?;
    let mut session = SyncSession::new(&rig, script.config.clone()).map_err(setup_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let scale = session.scale();
    let mut records = Vec::new();
    let mut timers = Vec::new();
    let mut clock = Instant::now();

    for (index, (line, step)) in script.steps.iter().enumerate() {
        let fail = |source| StepError {
            step: index,
            line: *line,
            source,
        };
        let result = run_step(&mut session, step, &mut rng, out_dir, &mut timers, &mut clock);
        if let Err(source) = result.and_then(|kind| {
            let audit = session.audit()?;
            records.push(StepRecord {
                line: *line,
                kind,
                frame: session.frame(),
                audit,
            });
            Ok(())
        }) {
            let _ = write_text(&out_dir.join("audit.txt"), &audit_lines(&records, scale));
            return Err(fail(source));
        }
    }
    let finish = || -> Result<ScriptOutcome> {
        write_text(&out_dir.join("audit.txt"), &audit_lines(&records, scale))?;
        export_snapshot(&session, out_dir, "final")?;
        let timings = report_timings(&session, script.timing_frames)?;
        let mut text = timings.to_string();
        for (label, d) in &timers {
            text.push_str(&format!("timer {label} {:.4} ms\n", d.as_secs_f64() * 1e3));
        }
        write_text(&out_dir.join("timings.txt"), &text)?;
        let worst = records.iter().map(|r| r.audit.max()).fold(0.0, f64::max) / scale;
        Ok(ScriptOutcome {
            steps: records.clone(),
            timers: timers.clone(),
            timings,
            worst_relative_audit: worst,
        })
    };
    finish().map_err(|source| StepError {
        step: script.steps.len(),
        line: 0,
        source,
    })
}

fn run_step(
    session: &mut SyncSession,
    step: &Step,
    rng: &mut ChaCha8Rng,
    out_dir: &Path,
    timers: &mut Vec<(String, Duration)>,
    clock: &mut Instant,
) -> Result<&'static str> {
    match step {
        Step::Rotate { joint, rotation } => {
            let joint = joint.resolve(session)?;
            session.edit(&EditDelta::SkelRotate {
                joint,
                rotation: *rotation,
            })?;
            Ok("rotate")
        }
        Step::CageRest(o) => {
            session.edit(&EditDelta::CageRest(o.clone()))?;
            Ok("cage_rest")
        }
        Step::CageCurr(o) => {
            session.edit(&EditDelta::CageCurr(o.clone()))?;
            Ok("cage_curr")
        }
        Step::CageRestAffine(map) => {
            if !map.is_finite() {
                return Err(Error::Edit("affine map is not finite".into()));
            }
            let offsets = session
                .cage_rest()
                .iter()
                .enumerate()
                .map(|(k, c)| (k, map.apply(c) - c))
                .collect();
            session.edit(&EditDelta::CageRest(offsets))?;
            Ok("cage_rest_affine")
        }
        Step::RandomCageCurr { count, magnitude } => {
            let c = session.cage_rest().len();
            for _ in 0..*count {
                session.edit(&random_drag(rng, c, *magnitude, session.scale()))?;
            }
            Ok("random_cage_curr")
        }
        Step::ResetPose => {
            session.reset_pose()?;
            Ok("reset_pose")
        }
        Step::Snapshot(name) => {
            export_snapshot(session, out_dir, name)?;
            Ok("snapshot")
        }
        Step::Timer(label) => {
            timers.push((label.clone(), clock.elapsed()));
            *clock = Instant::now();
            Ok("timer")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<EditScript> {
        EditScript::parse(text, "test", Path::new("/base"))
    }

    #[test]
    fn header_and_steps() {
        let s = parse(
            "deform-script 1\nrig bar\nskinning dqs\nghost off\nseed 9\n\
             rotate elbow 0 0 1 90\ncage_curr 3 0.01 0 0 4 0 0.01 0\nsnapshot a\ntimer t\n",
        )
        .unwrap();
        assert_eq!(s.rig, RigSource::Bundled("bar".into()));
        assert_eq!(s.config.method, crate::skinning::SkinningMethod::Dqs);
        assert!(!s.config.ghost);
        assert_eq!(s.seed, 9);
        assert_eq!(s.steps.len(), 4);
        assert!(matches!(&s.steps[1].1, Step::CageCurr(o) if o.len() == 2));
    }

    #[test]
    fn manifest_paths_are_relative_to_the_script() {
        let s = parse("deform-script 1\nrig rigs/my.rig\n").unwrap();
        assert_eq!(s.rig, RigSource::Manifest(PathBuf::from("/base/rigs/my.rig")));
    }

    #[test]
    fn malformed_scripts_report_lines() {
        let e = parse("deform-script 1\nrig bar\ncage_curr 1 2 3\n").unwrap_err().to_string();
        assert!(e.contains("test:3"), "{e}");
        let e = parse("deform-script 1\nrig bar\nrotate 0 0 0 1 5\nseed 3\n").unwrap_err().to_string();
        assert!(e.contains("test:4"), "{e}");
        assert!(parse("deform-script 2\n").is_err());
        assert!(parse("deform-script 1\nrotate 0 0 0 1 5\n").is_err());
        assert!(parse("deform-script 1\nrig bar\nsnapshot ../x\n").is_err());
    }

    #[test]
    fn formatted_edits_parse_back_exactly() {
        let edits = [
            EditDelta::SkelRotate {
                joint: 1,
                rotation: axis_angle(Vec3::new(0.3, -1.0, 0.2), 0.7),
            },
            EditDelta::CageCurr(vec![(2, Vec3::new(1e-3, -2.5e-4, 1.0 / 3.0))]),
            EditDelta::CageRest(vec![(0, Vec3::new(0.1, 0.2, 0.3)), (5, Vec3::zeros())]),
        ];
        let mut text = String::from("deform-script 1\nrig bar\n");
        for e in &edits {
            text.push_str(&format_edit(e));
            text.push('\n');
        }
        let s = parse(&text).unwrap();
        match &s.steps[0].1 {
            Step::Rotate { joint, rotation } => {
                assert_eq!(*joint, JointRef::Index(1));
                assert!(rotation.angle_to(&axis_angle(Vec3::new(0.3, -1.0, 0.2), 0.7)) < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(s.steps[1].1, Step::CageCurr(vec![(2, Vec3::new(1e-3, -2.5e-4, 1.0 / 3.0))]));
        assert!(matches!(&s.steps[2].1, Step::CageRest(o) if o.len() == 2));
    }

    #[test]
    fn random_drags_respect_the_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let EditDelta::CageCurr(o) = random_drag(&mut rng, 10, 0.01, 3.0) else {
                unreachable!()
            };
            assert!(o[0].0 < 10 && o[0].1.norm() <= 0.03);
        }
    }
}
