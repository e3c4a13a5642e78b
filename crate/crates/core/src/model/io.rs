//! Plain-text formats: OBJ subset for meshes, `.skel` for skeletons and
//! `.wgt` sparse triplets for weight/coordinate matrices.
//!
//! Floats are written with 17 significant digits so a save/load cycle is
//! bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::geom::Vec3;
use super::mesh::{fan_triangulate, TriMesh};
use super::skeleton::{Joint, Skeleton};
use super::weights::{WeightMatrix, WeightRole};
use crate::error::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

pub(crate) fn parse_f64(tok: Option<&str>, src: &str, line: usize, what: &str) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::parse(src, line, format!("missing {what}")))?;
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(src, line, format!("bad {what} '{tok}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(src, line, format!("{what} is not finite")));
    }
    Ok(v)
}

pub(crate) fn parse_usize(tok: Option<&str>, src: &str, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse(src, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::parse(src, line, format!("bad {what} '{tok}'")))
}

pub(crate) fn parse_vec3<'a>(
    toks: &mut impl Iterator<Item = &'a str>,
    src: &str,
    line: usize,
) -> Result<Vec3> {
    let x = parse_f64(toks.next(), src, line, "x coordinate")?;
    let y = parse_f64(toks.next(), src, line, "y coordinate")?;
    let z = parse_f64(toks.next(), src, line, "z coordinate")?;
    Ok(Vec3::new(x, y, z))
}

/// Parses `v` and `f` records; other records are ignored. Polygons are
/// fan-triangulated, `f` tokens may carry `/vt/vn` suffixes and negative
/// (relative) indices.
pub fn parse_obj(text: &str, src: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (line, content) in content_lines(text) {
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => vertices.push(parse_vec3(&mut toks, src, line)?),
            Some("f") => {
                let mut poly = Vec::new();
                for tok in toks {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| Error::parse(src, line, format!("bad face index '{tok}'")))?;
                    let resolved = match idx {
                        0 => None,
                        i if i > 0 => Some(i as usize - 1),
                        i => vertices.len().checked_sub(i.unsigned_abs() as usize),
                    };
                    let resolved = resolved
                        .ok_or_else(|| Error::parse(src, line, format!("face index {idx} out of range")))?;
                    poly.push(resolved);
                }
                if poly.len() < 3 {
                    return Err(Error::parse(src, line, "face with fewer than 3 vertices"));
                }
                triangles.extend(fan_triangulate(&poly));
            }
            _ => {}
        }
    }
    let mesh = TriMesh::new(vertices, triangles);
    mesh.validate()?;
    Ok(mesh)
}

pub fn read_obj(path: &Path) -> Result<TriMesh> {
    parse_obj(&read_text(path)?, &path.display().to_string())
}

pub fn format_obj(mesh: &TriMesh) -> String {
    format_obj_points(&mesh.vertices, &mesh.triangles)
}

pub fn format_obj_points(vertices: &[Vec3], triangles: &[[usize; 3]]) -> String {
    let mut out = String::with_capacity(vertices.len() * 72 + triangles.len() * 24);
    for v in vertices {
        let _ = writeln!(out, "v {} {} {}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z));
    }
    for t in triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    write_text(path, &format_obj(mesh))
}

/// `j <index> <name> <parent|-1> <x> <y> <z>` per joint.
pub fn parse_skel(text: &str, src: &str) -> Result<Skeleton> {
    let mut slots: Vec<Option<Joint>> = Vec::new();
    for (line, content) in content_lines(text) {
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("j") => {}
            Some(other) => return Err(Error::parse(src, line, format!("unknown record '{other}'"))),
            None => continue,
        }
        let index = parse_usize(toks.next(), src, line, "joint index")?;
        let name = toks
            .next()
            .ok_or_else(|| Error::parse(src, line, "missing joint name"))?
            .to_string();
        let parent_tok = toks
            .next()
            .ok_or_else(|| Error::parse(src, line, "missing parent index"))?;
        let parent: i64 = parent_tok
            .parse()
            .map_err(|_| Error::parse(src, line, format!("bad parent index '{parent_tok}'")))?;
        let parent = match parent {
            -1 => None,
            p if p >= 0 => Some(p as usize),
            p => return Err(Error::parse(src, line, format!("bad parent index {p}"))),
        };
        let rest_position = parse_vec3(&mut toks, src, line)?;
        if toks.next().is_some() {
            return Err(Error::parse(src, line, "trailing tokens"));
        }
        if slots.len() <= index {
            slots.resize(index + 1, None);
        }
        if slots[index].is_some() {
            return Err(Error::parse(src, line, format!("duplicate joint index {index}")));
        }
        slots[index] = Some(Joint {
            name,
            parent,
            rest_position,
        });
    }
    let joints = slots
        .into_iter()
        .enumerate()
        .map(|(i, j)| j.ok_or_else(|| Error::Validation(format!("{src}: joint index {i} missing"))))
        .collect::<Result<Vec<_>>>()?;
    Skeleton::new(joints)
}

pub fn read_skel(path: &Path) -> Result<Skeleton> {
    parse_skel(&read_text(path)?, &path.display().to_string())
}

/// Writes one `.skel` record per joint using the given positions (rest or
/// current articulations).
pub fn format_skel(skeleton: &Skeleton, positions: &[Vec3]) -> String {
    let mut out = String::new();
    for (j, (joint, p)) in skeleton.joints.iter().zip(positions).enumerate() {
        let parent = joint.parent.map_or(-1, |p| p as i64);
        let _ = writeln!(
            out,
            "j {j} {} {parent} {} {} {}",
            joint.name,
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(p.z)
        );
    }
    out
}

pub fn write_skel(path: &Path, skeleton: &Skeleton) -> Result<()> {
    write_text(path, &format_skel(skeleton, &skeleton.rest_positions()))
}

/// `<row> <col> <value>` triplets. The shape comes from the rig, not the
/// file; out-of-range indices are reported with their line.
pub fn parse_wgt(text: &str, src: &str, rows: usize, cols: usize, role: WeightRole) -> Result<WeightMatrix> {
    let mut triplets = Vec::new();
    for (line, content) in content_lines(text) {
        let mut toks = content.split_whitespace();
        let r = parse_usize(toks.next(), src, line, "row index")?;
        let c = parse_usize(toks.next(), src, line, "column index")?;
        let v = parse_f64(toks.next(), src, line, "weight")?;
        if toks.next().is_some() {
            return Err(Error::parse(src, line, "trailing tokens"));
        }
        if r >= rows {
            return Err(Error::parse(src, line, format!("row index {r} out of range (< {rows})")));
        }
        if c >= cols {
            return Err(Error::parse(src, line, format!("column index {c} out of range (< {cols})")));
        }
        triplets.push((r, c, v));
    }
    WeightMatrix::from_triplets(rows, cols, triplets, role)
}

pub fn read_wgt(path: &Path, rows: usize, cols: usize, role: WeightRole) -> Result<WeightMatrix> {
    parse_wgt(&read_text(path)?, &path.display().to_string(), rows, cols, role)
}

pub fn format_wgt(m: &WeightMatrix) -> String {
    let mut out = String::with_capacity(m.nnz() * 32);
    for (r, c, v) in m.triplets() {
        let _ = writeln!(out, "{r} {c} {}", fmt_f64(v));
    }
    out
}

pub fn write_wgt(path: &Path, m: &WeightMatrix) -> Result<()> {
    write_text(path, &format_wgt(m))
}
