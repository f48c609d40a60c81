use std::fmt;

use super::VoxelGeometry;

/// Outward face normal of a voxel face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Normal {
    NegX,
    PosX,
    NegY,
    PosY,
    NegZ,
    PosZ,
}

impl Normal {
    pub const ALL: [Normal; 6] = [
        Normal::NegX,
        Normal::PosX,
        Normal::NegY,
        Normal::PosY,
        Normal::NegZ,
        Normal::PosZ,
    ];

    /// Axis index and sign.
    pub fn axis_dir(self) -> (usize, i32) {
        match self {
            Normal::NegX => (0, -1),
            Normal::PosX => (0, 1),
            Normal::NegY => (1, -1),
            Normal::PosY => (1, 1),
            Normal::NegZ => (2, -1),
            Normal::PosZ => (2, 1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Normal::NegX => "-x",
            Normal::PosX => "+x",
            Normal::NegY => "-y",
            Normal::PosY => "+y",
            Normal::NegZ => "-z",
            Normal::PosZ => "+z",
        }
    }
}

impl fmt::Display for Normal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A cell face separating a filled cell from an empty cell or the grid edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub cell: [usize; 3],
    pub normal: Normal,
    pub centroid: [f64; 3],
    pub domain: usize,
}

/// Enumerates boundary faces in cell-index order, normals in
/// `-x, +x, -y, +y, -z, +z` order. Domain ids are left at 0.
pub fn extract_boundary_faces(geom: &VoxelGeometry) -> Vec<BoundaryFace> {
    let half = 0.5 * geom.spacing();
    let mut faces = Vec::new();
    for idx in 0..geom.len() {
        if !geom.mask()[idx] {
            continue;
        }
        let cell = geom.coords(idx);
        for normal in Normal::ALL {
            if geom.neighbor_filled(cell, normal) {
                continue;
            }
            let (axis, dir) = normal.axis_dir();
            let mut centroid = geom.cell_center(cell);
            centroid[axis] += f64::from(dir) * half;
            faces.push(BoundaryFace {
                cell,
                normal,
                centroid,
                domain: 0,
            });
        }
    }
    faces
}
