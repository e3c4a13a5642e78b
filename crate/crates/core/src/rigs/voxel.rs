//! Closed surfaces of 2D cell masks extruded along z.

use std::collections::HashMap;

use crate::model::{TriMesh, Vec3};

/// Filled cells, indexed `[row][col]` with row = y and col = x.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    cells: Vec<Vec<bool>>,
}

impl Mask {
    /// Parses rows top-down from text art (`#` = filled).
    pub fn from_art(rows: &[&str]) -> Self {
        let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let cells = rows
            .iter()
            .rev()
            .map(|r| {
                let mut row: Vec<bool> = r.bytes().map(|b| b == b'#').collect();
                row.resize(width, false);
                row
            })
            .collect();
        Self { cells }
    }

    pub fn height(&self) -> usize {
        self.cells.len()
    }

    pub fn width(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }

    pub fn get(&self, x: isize, y: isize) -> bool {
        if x < 0 || y < 0 {
            return false;
        }
        self.cells
            .get(y as usize)
            .and_then(|r| r.get(x as usize))
            .copied()
            .unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.cells.iter().flatten().filter(|c| **c).count()
    }

    /// Every cell split into `factor × factor` cells.
    pub fn upsample(&self, factor: usize) -> Self {
        let cells = (0..self.height() * factor)
            .map(|y| (0..self.width() * factor).map(|x| self.cells[y / factor][x / factor]).collect())
            .collect();
        Self { cells }
    }

    /// Keeps cells whose 8 neighbors are all filled.
    pub fn erode(&self) -> Self {
        let cells = (0..self.height())
            .map(|y| {
                (0..self.width())
                    .map(|x| {
                        let (x, y) = (x as isize, y as isize);
                        (-1..=1).all(|dy| (-1..=1).all(|dx| self.get(x + dx, y + dy)))
                    })
                    .collect()
            })
            .collect();
        Self { cells }
    }
}

/// Boundary of the union of boxes `cell × [z0, z1]`, with side walls split
/// into `layers` rows. Cell `(x, y)` spans `origin + cell·[x, x+1] × [y, y+1]`.
pub fn extrude(mask: &Mask, cell: f64, origin: (f64, f64), z: (f64, f64), layers: usize) -> TriMesh {
    let layers = layers.max(1);
    let mut ids: HashMap<(isize, isize, usize), usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vid = |gx: isize, gy: isize, layer: usize, vertices: &mut Vec<Vec3>| -> usize {
        *ids.entry((gx, gy, layer)).or_insert_with(|| {
            vertices.push(Vec3::new(
                origin.0 + cell * gx as f64,
                origin.1 + cell * gy as f64,
                z.0 + (z.1 - z.0) * layer as f64 / layers as f64,
            ));
            vertices.len() - 1
        })
    };
    let mut quads: Vec<([usize; 4], Vec3)> = Vec::new();
    for y in 0..mask.height() as isize {
        for x in 0..mask.width() as isize {
            if !mask.get(x, y) {
                continue;
            }
            let corners = [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)];
            let top = corners.map(|(gx, gy)| vid(gx, gy, layers, &mut vertices));
            quads.push((top, Vec3::z()));
            let bottom = corners.map(|(gx, gy)| vid(gx, gy, 0, &mut vertices));
            quads.push((bottom, -Vec3::z()));
            // Walls: (neighbor offset, edge endpoints, outward normal).
            let walls = [
                ((-1, 0), (x, y), (x, y + 1), -Vec3::x()),
                ((1, 0), (x + 1, y), (x + 1, y + 1), Vec3::x()),
                ((0, -1), (x, y), (x + 1, y), -Vec3::y()),
                ((0, 1), (x, y + 1), (x + 1, y + 1), Vec3::y()),
            ];
            for ((dx, dy), p, q, normal) in walls {
                if mask.get(x + dx, y + dy) {
                    continue;
                }
                for l in 0..layers {
                    let quad = [
                        vid(p.0, p.1, l, &mut vertices),
                        vid(q.0, q.1, l, &mut vertices),
                        vid(q.0, q.1, l + 1, &mut vertices),
                        vid(p.0, p.1, l + 1, &mut vertices),
                    ];
                    quads.push((quad, normal));
                }
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * quads.len());
    for (q, normal) in quads {
        let n = (vertices[q[1]] - vertices[q[0]]).cross(&(vertices[q[2]] - vertices[q[0]]));
        let q = if n.dot(&normal) >= 0.0 { q } else { [q[0], q[3], q[2], q[1]] };
        triangles.push([q[0], q[1], q[2]]);
        triangles.push([q[0], q[2], q[3]]);
    }
    TriMesh::new(vertices, triangles)
}
