//! Voxel casting geometry, boundary faces and wall-domain decomposition.

mod faces;
mod kmeans;

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

pub use faces::{extract_boundary_faces, BoundaryFace, Normal};
pub use kmeans::{
    decompose_wall, kmeans, kmeans_restarts, KMeansFit, WallDecomposition, KMEANS_RESTARTS, MAX_KMEANS_ITERS,
};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("geometry has no filled cells")]
    EmptyMask,
    #[error("filled region is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("{faces} boundary faces cannot form {domains} domains")]
    TooFewFaces { faces: usize, domains: usize },
}

/// Uniform Cartesian voxel grid with a fill mask.
///
/// Cells are indexed `i + nx * (j + ny * k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGeometry {
    dims: [usize; 3],
    spacing: f64,
    mask: Vec<bool>,
}

impl VoxelGeometry {
    /// Builds a geometry and checks that it is non-empty and face-connected.
    pub fn new(dims: [usize; 3], spacing: f64, mask: Vec<bool>) -> Result<Self, GeometryError> {
        if dims.contains(&0) {
            return Err(GeometryError::Parse {
                line: 1,
                msg: format!("dims must be positive, got {dims:?}"),
            });
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(GeometryError::Parse {
                line: 2,
                msg: format!("spacing must be finite and positive, got {spacing}"),
            });
        }
        assert_eq!(mask.len(), dims[0] * dims[1] * dims[2], "mask length");
        let geom = Self { dims, spacing, mask };
        match geom.count_components() {
            0 => Err(GeometryError::EmptyMask),
            1 => Ok(geom),
            components => Err(GeometryError::Disconnected { components }),
        }
    }

    /// Fully filled box.
    pub fn filled_box(dims: [usize; 3], spacing: f64) -> Self {
        Self::new(dims, spacing, vec![true; dims[0] * dims[1] * dims[2]]).expect("a full box is valid")
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn filled_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    #[inline]
    pub fn is_filled(&self, i: usize, j: usize, k: usize) -> bool {
        self.mask[self.index(i, j, k)]
    }

    /// Filled flag of the neighbour across `normal`, `false` outside the grid.
    pub fn neighbor_filled(&self, cell: [usize; 3], normal: Normal) -> bool {
        self.neighbor(cell, normal)
            .map(|c| self.is_filled(c[0], c[1], c[2]))
            .unwrap_or(false)
    }

    pub fn neighbor(&self, cell: [usize; 3], normal: Normal) -> Option<[usize; 3]> {
        let (axis, dir) = normal.axis_dir();
        let mut c = cell;
        if dir < 0 {
            c[axis] = c[axis].checked_sub(1)?;
        } else {
            c[axis] += 1;
            if c[axis] >= self.dims[axis] {
                return None;
            }
        }
        Some(c)
    }

    /// Cell centre in metres.
    pub fn cell_center(&self, cell: [usize; 3]) -> [f64; 3] {
        let s = self.spacing;
        [
            (cell[0] as f64 + 0.5) * s,
            (cell[1] as f64 + 0.5) * s,
            (cell[2] as f64 + 0.5) * s,
        ]
    }

    fn count_components(&self) -> usize {
        let mut seen = vec![false; self.mask.len()];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.mask.len() {
            if !self.mask[start] || seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(idx) = queue.pop_front() {
                let c = self.coords(idx);
                for n in Normal::ALL {
                    if let Some(nc) = self.neighbor(c, n) {
                        let ni = self.index(nc[0], nc[1], nc[2]);
                        if self.mask[ni] && !seen[ni] {
                            seen[ni] = true;
                            queue.push_back(ni);
                        }
                    }
                }
            }
        }
        components
    }

    /// Parses the text voxel format:
    ///
    /// ```text
    /// dims nx ny nz
    /// spacing s_meters
    /// <nz blocks of ny rows of nx '0'/'1' characters, blank line between blocks>
    /// ```
    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l.trim()));
        let mut next_content = |what: &str| -> Result<(usize, &str), GeometryError> {
            lines.by_ref().find(|(_, l)| !l.is_empty()).ok_or(GeometryError::Parse {
                line: 0,
                msg: format!("unexpected end of file, expected {what}"),
            })
        };

        let (ln, dims_line) = next_content("dims header")?;
        let dims = parse_header(ln, dims_line, "dims", 3)?;
        let dims: Vec<usize> = dims
            .iter()
            .map(|t| {
                t.parse::<usize>().map_err(|e| GeometryError::Parse {
                    line: ln,
                    msg: format!("bad dimension {t:?}: {e}"),
                })
            })
            .collect::<Result<_, _>>()?;
        let dims = [dims[0], dims[1], dims[2]];

        let (ln, sp_line) = next_content("spacing header")?;
        let sp = parse_header(ln, sp_line, "spacing", 1)?;
        let spacing: f64 = sp[0].parse().map_err(|e| GeometryError::Parse {
            line: ln,
            msg: format!("bad spacing {:?}: {e}", sp[0]),
        })?;

        let [nx, ny, nz] = dims;
        let mut mask = vec![false; nx * ny * nz];
        for k in 0..nz {
            for j in 0..ny {
                let (ln, row) = next_content("voxel row")?;
                if row.len() != nx {
                    return Err(GeometryError::Parse {
                        line: ln,
                        msg: format!("expected {nx} cells in row, found {}", row.len()),
                    });
                }
                for (i, ch) in row.chars().enumerate() {
                    mask[i + nx * (j + ny * k)] = match ch {
                        '1' => true,
                        '0' => false,
                        other => {
                            return Err(GeometryError::Parse {
                                line: ln,
                                msg: format!("invalid cell character {other:?}"),
                            })
                        }
                    };
                }
            }
        }
        if let Ok((ln, extra)) = next_content("") {
            return Err(GeometryError::Parse {
                line: ln,
                msg: format!("trailing content {extra:?}"),
            });
        }
        Self::new(dims, spacing, mask)
    }

    pub fn to_text(&self) -> String {
        let [nx, ny, nz] = self.dims;
        let mut out = String::new();
        writeln!(out, "dims {nx} {ny} {nz}").unwrap();
        writeln!(out, "spacing {}", self.spacing).unwrap();
        for k in 0..nz {
            out.push('\n');
            for j in 0..ny {
                for i in 0..nx {
                    out.push(if self.is_filled(i, j, k) { '1' } else { '0' });
                }
                out.push('\n');
            }
        }
        out
    }
}

fn parse_header<'a>(line: usize, text: &'a str, key: &str, n: usize) -> Result<Vec<&'a str>, GeometryError> {
    let mut tokens = text.split_whitespace();
    if tokens.next() != Some(key) {
        return Err(GeometryError::Parse {
            line,
            msg: format!("expected `{key}` header"),
        });
    }
    let values: Vec<&str> = tokens.collect();
    if values.len() != n {
        return Err(GeometryError::Parse {
            line,
            msg: format!("`{key}` expects {n} values, found {}", values.len()),
        });
    }
    Ok(values)
}

/// Reads and validates a voxel geometry file.
pub fn load_geometry(path: impl AsRef<Path>) -> Result<VoxelGeometry, GeometryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GeometryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    VoxelGeometry::parse(&text)
}

/// Asymmetric L-bracket standing in for a clamp casting: a base plate, an
/// upright leg at one end, a short flange and a thin rib, 40x24x12 cells.
pub fn l_bracket(spacing: f64) -> VoxelGeometry {
    let dims = [40, 24, 12];
    let [nx, ny, nz] = dims;
    let mut mask = vec![false; nx * ny * nz];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let base = j < 8;
                let leg = i < 10 && k < 12;
                let flange = (30..40).contains(&i) && (8..14).contains(&j) && k < 6;
                let rib = (10..30).contains(&i) && (8..11).contains(&j) && (4..7).contains(&k);
                // lightening hole through the base plate
                let hole = (18..24).contains(&i) && (2..6).contains(&j);
                mask[i + nx * (j + ny * k)] = (base && !hole) || leg || flange || rib;
            }
        }
    }
    VoxelGeometry::new(dims, spacing, mask).expect("L-bracket is connected")
}

/// Default cell edge length of the bundled L-bracket, in metres.
pub const L_BRACKET_SPACING: f64 = 0.0025;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_full_cube() {
        let text = "dims 2 2 2\nspacing 0.01\n11\n11\n\n11\n11\n";
        let g = VoxelGeometry::parse(text).unwrap();
        assert_eq!(g.filled_count(), 8);
        assert_eq!(extract_boundary_faces(&g).len(), 24);
    }

    #[test]
    fn disconnected_bar_is_rejected() {
        let text = "dims 3 1 1\nspacing 0.01\n101\n";
        match VoxelGeometry::parse(text) {
            Err(GeometryError::Disconnected { components: 2 }) => {}
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn empty_mask_is_rejected() {
        let text = "dims 2 1 1\nspacing 0.01\n00\n";
        assert!(matches!(VoxelGeometry::parse(text), Err(GeometryError::EmptyMask)));
    }

    #[test]
    fn malformed_rows_are_parse_errors() {
        for text in [
            "dims 2 1 1\nspacing 0.01\n1\n",
            "dims 2 1 1\nspacing 0.01\n1x\n",
            "dim 2 1 1\nspacing 0.01\n11\n",
            "dims 2 1 1\nspacing -1\n11\n",
            "dims 2 1 1\nspacing 0.01\n11\n11\n",
        ] {
            assert!(
                matches!(VoxelGeometry::parse(text), Err(GeometryError::Parse { .. })),
                "{text:?}"
            );
        }
    }

    #[test]
    fn text_round_trip() {
        let g = l_bracket(L_BRACKET_SPACING);
        assert_eq!(VoxelGeometry::parse(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn bundled_fixture_matches_builder() {
        let text = include_str!("../../data/l_bracket.vox");
        assert_eq!(VoxelGeometry::parse(text).unwrap(), l_bracket(L_BRACKET_SPACING));
    }
}
