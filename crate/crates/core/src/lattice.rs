//! Periodic lattices hosting the fields, measures and fractals.
//!
//! The bulk domain is an `n × n` torus and the boundary domain a periodic
//! interval of `n` cells. Cells are indexed row-major, `index = y * n + x`.

use serde::{Deserialize, Serialize};

use crate::error::{KpzError, Result};

/// Bulk (2d torus) or boundary (1d periodic interval).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    Bulk,
    Boundary,
}

impl Geometry {
    pub fn dimension(self) -> usize {
        match self {
            Geometry::Bulk => 2,
            Geometry::Boundary => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Geometry::Bulk => "bulk",
            Geometry::Boundary => "boundary",
        }
    }
}

/// A periodic lattice with `n` cells per side and physical spacing `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    geometry: Geometry,
    n: usize,
    spacing: f64,
}

impl Lattice {
    pub fn new(geometry: Geometry, n: usize, spacing: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(KpzError::invalid(
                "n",
                format!("{n} is not a power of two >= 8"),
            ));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(KpzError::invalid("spacing", format!("{spacing} is not > 0")));
        }
        if geometry == Geometry::Bulk && n > 1 << 15 {
            return Err(KpzError::invalid("n", format!("{n} too large for a torus")));
        }
        Ok(Self {
            geometry,
            n,
            spacing,
        })
    }

    /// Bulk `n × n` torus.
    pub fn torus(n: usize, spacing: f64) -> Result<Self> {
        Self::new(Geometry::Bulk, n, spacing)
    }

    /// Boundary periodic interval of `n` cells.
    pub fn boundary(n: usize, spacing: f64) -> Result<Self> {
        Self::new(Geometry::Boundary, n, spacing)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Physical side length `L = n a`.
    pub fn side(&self) -> f64 {
        self.n as f64 * self.spacing
    }

    pub fn cells(&self) -> usize {
        match self.geometry {
            Geometry::Bulk => self.n * self.n,
            Geometry::Boundary => self.n,
        }
    }

    /// Classical volume of one cell: `a²` in the bulk, `a` on the boundary.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.geometry.dimension() as i32)
    }

    /// Total classical volume `L^d`.
    pub fn volume(&self) -> f64 {
        self.cell_volume() * self.cells() as f64
    }

    /// Integer coordinates of a cell (`y = 0` on the boundary).
    #[inline]
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        match self.geometry {
            Geometry::Bulk => (cell % self.n, cell / self.n),
            Geometry::Boundary => (cell, 0),
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        match self.geometry {
            Geometry::Bulk => y * self.n + x,
            Geometry::Boundary => x,
        }
    }

    /// Signed minimum-image separation along one axis, in cells.
    #[inline]
    pub fn wrap_delta(&self, from: usize, to: usize) -> i64 {
        let n = self.n as i64;
        let mut d = (to as i64 - from as i64).rem_euclid(n);
        if d > n / 2 {
            d -= n;
        }
        d
    }

    /// Minimum-image Euclidean distance between two cells, in cells.
    pub fn cell_distance(&self, a: usize, b: usize) -> f64 {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        let dx = self.wrap_delta(ax, bx) as f64;
        let dy = self.wrap_delta(ay, by) as f64;
        (dx * dx + dy * dy).sqrt()
    }

    /// Cell displaced by `(dx, dy)` with periodic wrap.
    #[inline]
    pub fn shifted(&self, cell: usize, dx: i64, dy: i64) -> usize {
        let n = self.n as i64;
        let (x, y) = self.coords(cell);
        let nx = (x as i64 + dx).rem_euclid(n) as usize;
        match self.geometry {
            Geometry::Bulk => {
                let ny = (y as i64 + dy).rem_euclid(n) as usize;
                ny * self.n + nx
            }
            Geometry::Boundary => nx,
        }
    }

    /// Nearest neighbours of a cell: 4 in the bulk, 2 on the boundary.
    pub fn neighbors(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        let offsets: &[(i64, i64)] = match self.geometry {
            Geometry::Bulk => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Geometry::Boundary => &[(1, 0), (-1, 0)],
        };
        offsets
            .iter()
            .map(move |&(dx, dy)| self.shifted(cell, dx, dy))
    }

    /// Number of nearest neighbours per cell.
    pub fn coordination(&self) -> usize {
        2 * self.geometry.dimension()
    }

    pub(crate) fn ensure_same(&self, other: &Lattice) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(KpzError::MismatchedLattice(format!(
                "{} n={} a={} vs {} n={} a={}",
                self.geometry.as_str(),
                self.n,
                self.spacing,
                other.geometry.as_str(),
                other.n,
                other.spacing
            )))
        }
    }
}
