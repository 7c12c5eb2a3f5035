//! The covariant Laplacian `L = -W⁻¹A` of the random metric.
//!
//! `A` is a weighted graph Laplacian, `(A u)_i = Σ_j c_ij (u_i - u_j)`, and
//! `W` the quantum cell masses. `L` is self-adjoint in `L²(W)` and kills
//! constants. At `γ = 0` it is the standard nearest-neighbour Laplacian.

use serde::{Deserialize, Serialize};

use crate::error::{KpzError, Result};
use crate::lattice::{Geometry, Lattice};
use crate::measure::{metric_q, QuantumMeasure};

/// Discretisation of the boundary operator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryConvention {
    /// `(D_u)² = e^{-γφ/2} ∂ e^{-γφ/2} ∂`: bond conductance
    /// `1/((W_i + W_{i+1})/2)`, i.e. the flat Laplacian in quantum-length
    /// coordinates.
    #[default]
    QuantumLength,
    /// Time change `W̃⁻¹A₁` with uniform bond conductance `1/a`.
    TimeChange,
}

impl BoundaryConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::QuantumLength => "quantum-length",
            Self::TimeChange => "time-change",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricLaplacian {
    lattice: Lattice,
    masses: Vec<f64>,
    /// Conductance of the bond from cell `i` to its `+x` neighbour.
    cx: Vec<f64>,
    /// Conductance of the bond from cell `i` to its `+y` neighbour (bulk).
    cy: Vec<f64>,
    convention: Option<BoundaryConvention>,
    flat: bool,
}

/// Heat-kernel density (w.r.t. `W`) at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatState {
    pub density: Vec<f64>,
    pub time: f64,
}

impl HeatState {
    /// `Σ p_i W_i`.
    pub fn mass(&self, op: &MetricLaplacian) -> f64 {
        self.density.iter().zip(op.masses()).map(|(p, w)| p * w).sum()
    }

    /// Write the density as a flat binary grid with the time in the header.
    pub fn dump(&self, op: &MetricLaplacian, path: &std::path::Path) -> Result<()> {
        crate::grid_io::write_grid(path, op.lattice(), 0, [self.time, 0.0], &self.density)
    }
}

pub fn build_operator(measure: &QuantumMeasure) -> Result<MetricLaplacian> {
    build_operator_with(measure, BoundaryConvention::default())
}

pub fn build_operator_with(measure: &QuantumMeasure, convention: BoundaryConvention) -> Result<MetricLaplacian> {
    let lat = measure.lattice;
    let expect_q = metric_q(lat.geometry());
    if measure.params.gamma != 0.0 && (measure.params.q - expect_q).abs() > 1e-12 {
        return Err(KpzError::invalid(
            "measure",
            format!("operator needs the metric measure q = {expect_q}, got q = {}", measure.params.q),
        ));
    }
    MetricLaplacian::from_masses(lat, measure.weights.clone(), convention)
}

impl MetricLaplacian {
    /// Operator for arbitrary positive masses.
    pub fn from_masses(lattice: Lattice, masses: Vec<f64>, convention: BoundaryConvention) -> Result<Self> {
        if masses.len() != lattice.cells() {
            return Err(KpzError::MismatchedLattice(format!(
                "{} masses for {} cells",
                masses.len(),
                lattice.cells()
            )));
        }
        if let Some(w) = masses.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(KpzError::invalid("masses", format!("non-positive or non-finite mass {w}")));
        }
        let a = lattice.spacing();
        let uniform_mass = masses.iter().all(|&w| w == masses[0]);
        let (cx, cy, convention) = match lattice.geometry() {
            // Unit conductances: 1/a² times the a² cell volume.
            Geometry::Bulk => (vec![1.0; masses.len()], vec![1.0; masses.len()], None),
            Geometry::Boundary => {
                let cx = match convention {
                    BoundaryConvention::TimeChange => vec![1.0 / a; masses.len()],
                    BoundaryConvention::QuantumLength => {
                        let n = masses.len();
                        (0..n).map(|i| 2.0 / (masses[i] + masses[(i + 1) % n])).collect()
                    }
                };
                (cx, Vec::new(), Some(convention))
            }
        };
        let flat = uniform_mass && cx.iter().all(|&c| c == cx[0]);
        Ok(Self {
            lattice,
            masses,
            cx,
            cy,
            convention,
            flat,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn convention(&self) -> Option<BoundaryConvention> {
        self.convention
    }

    /// Tag recorded in experiment output.
    pub fn convention_tag(&self) -> &'static str {
        match self.convention {
            None => "bulk-time-change",
            Some(c) => c.as_str(),
        }
    }

    /// Uniform masses and conductances: diagonalised by the FFT.
    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub(crate) fn conductance_x(&self) -> &[f64] {
        &self.cx
    }

    /// Neighbours of `cell` with bond conductances, in the fixed order
    /// `+x, -x, +y, -y`.
    #[inline]
    pub fn bonds(&self, cell: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lat = &self.lattice;
        let xm = lat.shifted(cell, -1, 0);
        let mut out = [(lat.shifted(cell, 1, 0), self.cx[cell]), (xm, self.cx[xm]), (0, 0.0), (0, 0.0)];
        let k = if lat.geometry() == Geometry::Bulk {
            let ym = lat.shifted(cell, 0, -1);
            out[2] = (lat.shifted(cell, 0, 1), self.cy[cell]);
            out[3] = (ym, self.cy[ym]);
            4
        } else {
            2
        };
        out.into_iter().take(k)
    }

    /// Total conductance `Σ_j c_ij` out of a cell.
    #[inline]
    pub fn degree(&self, cell: usize) -> f64 {
        self.bonds(cell).map(|(_, c)| c).sum()
    }

    /// `|L_ii|`, the jump rate of the random walk at `cell`.
    pub fn rate(&self, cell: usize) -> f64 {
        self.degree(cell) / self.masses[cell]
    }

    /// `y = A u`.
    pub fn apply_a(&self, u: &[f64], y: &mut [f64]) {
        let lat = &self.lattice;
        let n = lat.n();
        match lat.geometry() {
            Geometry::Boundary => {
                for i in 0..n {
                    let (l, r) = ((i + n - 1) % n, (i + 1) % n);
                    y[i] = self.cx[i] * (u[i] - u[r]) + self.cx[l] * (u[i] - u[l]);
                }
            }
            Geometry::Bulk => {
                for yy in 0..n {
                    let row = yy * n;
                    let up = ((yy + 1) % n) * n;
                    let down = ((yy + n - 1) % n) * n;
                    for x in 0..n {
                        let i = row + x;
                        let r = row + (x + 1) % n;
                        let l = row + (x + n - 1) % n;
                        let u_ = up + x;
                        let d = down + x;
                        y[i] = self.cx[i] * (u[i] - u[r])
                            + self.cx[l] * (u[i] - u[l])
                            + self.cy[i] * (u[i] - u[u_])
                            + self.cy[d] * (u[i] - u[d]);
                    }
                }
            }
        }
    }

    /// `y = L u = -W⁻¹ A u`.
    pub fn apply(&self, u: &[f64], y: &mut [f64]) {
        self.apply_a(u, y);
        for (v, w) in y.iter_mut().zip(&self.masses) {
            *v = -*v / w;
        }
    }

    /// Dense `L` (row-major), for small lattices.
    pub fn dense(&self) -> Vec<f64> {
        let m = self.lattice.cells();
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for (j, c) in self.bonds(i) {
                out[i * m + j] += c / self.masses[i];
                out[i * m + i] -= c / self.masses[i];
            }
        }
        out
    }
}
