use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the four faces of a Cartesian cell, in the fixed order E, W, N, S.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    East,
    West,
    North,
    South,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::East, Face::West, Face::North, Face::South];

    pub fn index(self) -> usize {
        self as usize
    }

    /// 0 for faces normal to x, 1 for faces normal to y.
    pub fn axis(self) -> usize {
        match self {
            Face::East | Face::West => 0,
            Face::North | Face::South => 1,
        }
    }

    /// Sign of the outward normal along [`Face::axis`].
    pub fn sign(self) -> f64 {
        match self {
            Face::East | Face::North => 1.0,
            Face::West | Face::South => -1.0,
        }
    }

    pub fn opposite(self) -> Face {
        match self {
            Face::East => Face::West,
            Face::West => Face::East,
            Face::North => Face::South,
            Face::South => Face::North,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighbor {
    Cell(usize),
    /// Homogeneous Dirichlet boundary face.
    Dirichlet,
}

/// Uniform 2D Cartesian cell layout. Cells are numbered `p = j * nx + i`
/// with `i` along x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dx: f64,
    pub dy: f64,
    pub cell_volume: f64,
    /// Area of faces normal to x (`dy`) and to y (`dx`).
    pub face_area: [f64; 2],
    /// Per cell, the E, W, N, S neighbours.
    pub neighbors: Vec<[Neighbor; 4]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    dx: Option<f64>,
    dy: Option<f64>,
    cell_volume: Option<f64>,
    face_area: Option<[f64; 2]>,
    neighbors: Option<Vec<[Neighbor; 4]>>,
}

impl TryFrom<RawGrid> for Grid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Grid> {
        let grid = build_grid(raw.nx, raw.ny, raw.lx, raw.ly)?;
        let consistent = raw.dx.map_or(true, |v| v == grid.dx)
            && raw.dy.map_or(true, |v| v == grid.dy)
            && raw.cell_volume.map_or(true, |v| v == grid.cell_volume)
            && raw.face_area.map_or(true, |v| v == grid.face_area)
            && raw.neighbors.as_ref().map_or(true, |v| *v == grid.neighbors);
        if consistent {
            Ok(grid)
        } else {
            Err(Error::invalid("grid document is inconsistent with nx, ny, lx, ly"))
        }
    }
}

/// Builds a uniform grid with every boundary face marked Dirichlet.
pub fn build_grid(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Grid> {
    if nx < 2 || ny < 2 {
        return Err(Error::invalid(format!("grid needs at least 2x2 cells, got {nx}x{ny}")));
    }
    if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
        return Err(Error::invalid(format!("domain lengths must be positive, got {lx} x {ly}")));
    }
    let dx = lx / nx as f64;
    let dy = ly / ny as f64;
    let mut neighbors = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cell = |ii: usize, jj: usize| Neighbor::Cell(jj * nx + ii);
            neighbors.push([
                if i + 1 < nx { cell(i + 1, j) } else { Neighbor::Dirichlet },
                if i > 0 { cell(i - 1, j) } else { Neighbor::Dirichlet },
                if j + 1 < ny { cell(i, j + 1) } else { Neighbor::Dirichlet },
                if j > 0 { cell(i, j - 1) } else { Neighbor::Dirichlet },
            ]);
        }
    }
    Ok(Grid {
        nx,
        ny,
        lx,
        ly,
        dx,
        dy,
        cell_volume: dx * dy,
        face_area: [dy, dx],
        neighbors,
    })
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_ij(&self, p: usize) -> (usize, usize) {
        (p % self.nx, p / self.nx)
    }

    pub fn centroid(&self, p: usize) -> (f64, f64) {
        let (i, j) = self.cell_ij(p);
        (
            (i as f64 + 0.5) * self.lx / self.nx as f64,
            (j as f64 + 0.5) * self.ly / self.ny as f64,
        )
    }

    pub fn neighbor(&self, p: usize, face: Face) -> Neighbor {
        self.neighbors[p][face.index()]
    }

    pub fn area(&self, face: Face) -> f64 {
        self.face_area[face.axis()]
    }

    /// Centroid-to-centroid distance across a face.
    pub fn spacing(&self, face: Face) -> f64 {
        match face.axis() {
            0 => self.dx,
            _ => self.dy,
        }
    }

    /// Outward area vector of a face.
    pub fn area_vector(&self, face: Face) -> [f64; 2] {
        let mut v = [0.0; 2];
        v[face.axis()] = face.sign() * self.area(face);
        v
    }

    /// Cells whose index offsets from `p` are at most `radius` along each axis.
    pub fn cells_near(&self, p: usize, radius: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.cell_ij(p);
        let (i0, i1) = (i.saturating_sub(radius), (i + radius).min(self.nx - 1));
        let (j0, j1) = (j.saturating_sub(radius), (j + radius).min(self.ny - 1));
        (j0..=j1).flat_map(move |jj| (i0..=i1).map(move |ii| jj * self.nx + ii))
    }

    /// Short stable identifier of the grid geometry.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let doc = format!("{}x{};{:e}x{:e}", self.nx, self.ny, self.lx, self.ly);
        let digest = Sha256::digest(doc.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
