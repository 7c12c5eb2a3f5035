//! Deterministic self-similar fractals with known scaling exponents.
//!
//! A generator with base `b` and a set of kept sub-cells is iterated
//! `generations` times inside a block of `b^g · scale` lattice cells anchored
//! at the origin; each finest-level square (or interval) covers
//! `scale × scale` lattice cells. The lattice only needs to be large enough
//! to contain the block, so triadic fractals fit on power-of-two lattices.
//!
//! The bulk exponent is `x = 1 - d_H/2`, the boundary one `x̃ = 1 - d̃_H`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KpzError, Result};
use crate::lattice::{Geometry, Lattice};
use crate::scaling::{fit_line, ScalingEstimate};

/// Kept intervals of a 1d Cantor construction: `keep ⊂ {0, .., base-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CantorPattern {
    pub base: usize,
    pub keep: Vec<usize>,
}

impl CantorPattern {
    pub fn new(base: usize, mut keep: Vec<usize>) -> Result<Self> {
        keep.sort_unstable();
        keep.dedup();
        if base < 2 {
            return Err(KpzError::invalid("base", format!("{base} < 2")));
        }
        if keep.is_empty() || keep.iter().any(|&k| k >= base) {
            return Err(KpzError::invalid("keep", format!("{keep:?} not a subset of 0..{base}")));
        }
        Ok(Self { base, keep })
    }

    pub fn middle_thirds() -> Self {
        Self {
            base: 3,
            keep: vec![0, 2],
        }
    }

    pub fn keep_all(base: usize) -> Self {
        Self {
            base,
            keep: (0..base).collect(),
        }
    }

    /// Similarity dimension `log m / log b`.
    pub fn dimension(&self) -> f64 {
        (self.keep.len() as f64).ln() / (self.base as f64).ln()
    }
}

/// A subset of lattice cells with a known exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct FractalMask {
    lattice: Lattice,
    cells: Vec<usize>,
    member: Vec<bool>,
    generation: u32,
    /// Lattice cells per side of a finest-level square.
    scale: usize,
    base: usize,
    /// Hausdorff dimension of the limit set.
    dimension: f64,
    x_exact: f64,
}

impl FractalMask {
    fn from_rule(
        lattice: &Lattice,
        base: usize,
        generations: u32,
        scale: usize,
        dimension: f64,
        keep: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        if generations == 0 {
            return Err(KpzError::invalid("generations", "must be >= 1"));
        }
        if scale == 0 {
            return Err(KpzError::invalid("scale", "must be >= 1"));
        }
        let side = (base as u64)
            .checked_pow(generations)
            .and_then(|p| p.checked_mul(scale as u64))
            .filter(|&s| s <= lattice.n() as u64)
            .ok_or_else(|| {
                KpzError::IncompatibleLattice(format!(
                    "{base}^{generations} x {scale} cells do not fit in n = {}",
                    lattice.n()
                ))
            })? as usize;
        let in_set = |x: usize, y: usize| {
            let (mut bx, mut by) = (x / scale, y / scale);
            for _ in 0..generations {
                if !keep(bx % base, by % base) {
                    return false;
                }
                bx /= base;
                by /= base;
            }
            true
        };
        let mut member = vec![false; lattice.cells()];
        let rows = match lattice.geometry() {
            Geometry::Bulk => side,
            Geometry::Boundary => 1,
        };
        for y in 0..rows {
            for x in 0..side {
                if in_set(x, y) {
                    member[lattice.index(x, y)] = true;
                }
            }
        }
        let cells: Vec<usize> = (0..member.len()).filter(|&c| member[c]).collect();
        let x_exact = match lattice.geometry() {
            Geometry::Bulk => 1.0 - dimension / 2.0,
            Geometry::Boundary => 1.0 - dimension,
        };
        Ok(Self {
            lattice: *lattice,
            cells,
            member,
            generation: generations,
            scale,
            base,
            dimension,
            x_exact: x_exact.clamp(0.0, 1.0),
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn geometry(&self) -> Geometry {
        self.lattice.geometry()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn contains(&self, cell: usize) -> bool {
        self.member[cell]
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn base(&self) -> usize {
        self.base
    }

    /// Hausdorff dimension `d_H` (bulk) or `d̃_H` (boundary).
    pub fn dimension(&self) -> f64 {
        self.dimension
    }

    pub fn x_exact(&self) -> f64 {
        self.x_exact
    }

    /// Physical size `ε = scale · a` of a finest-level square.
    pub fn resolution(&self) -> f64 {
        self.scale as f64 * self.lattice.spacing()
    }

    /// Natural measure of one lattice cell in the mask, `cellvol · ε^{d_H - d}`.
    ///
    /// With this weight the total mass is `D^{d_H}` for block side `D`,
    /// whatever the generation.
    pub fn cell_density(&self) -> f64 {
        let d = self.geometry().dimension() as f64;
        self.resolution().powf(self.dimension - d)
    }

    /// Run-length encoded JSON export.
    pub fn to_json(&self) -> String {
        let export = MaskExport {
            kind: self.geometry(),
            n: self.lattice.n(),
            spacing: self.lattice.spacing(),
            generations: self.generation,
            base: self.base,
            scale: self.scale,
            dimension: self.dimension,
            x_exact: self.x_exact,
            cells: run_lengths(&self.cells),
        };
        serde_json::to_string_pretty(&export).expect("mask export serialises")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| KpzError::io(path, e))
    }
}

/// JSON layout of an exported mask; `cells` holds `[start, length]` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskExport {
    pub kind: Geometry,
    pub n: usize,
    pub spacing: f64,
    pub generations: u32,
    pub base: usize,
    pub scale: usize,
    pub dimension: f64,
    pub x_exact: f64,
    pub cells: Vec<[usize; 2]>,
}

impl MaskExport {
    pub fn expand(&self) -> Vec<usize> {
        self.cells
            .iter()
            .flat_map(|&[start, len]| start..start + len)
            .collect()
    }
}

fn run_lengths(sorted: &[usize]) -> Vec<[usize; 2]> {
    let mut runs: Vec<[usize; 2]> = Vec::new();
    for &c in sorted {
        match runs.last_mut() {
            Some(r) if r[0] + r[1] == c => r[1] += 1,
            _ => runs.push([c, 1]),
        }
    }
    runs
}

fn require(lattice: &Lattice, geometry: Geometry) -> Result<()> {
    if lattice.geometry() != geometry {
        return Err(KpzError::IncompatibleLattice(format!(
            "generator needs a {} lattice",
            geometry.as_str()
        )));
    }
    Ok(())
}

/// Largest block scale that fits `base^generations` squares in the lattice.
pub fn default_scale(lattice: &Lattice, base: usize, generations: u32) -> Result<usize> {
    let cells = (base as u64).checked_pow(generations).unwrap_or(u64::MAX);
    let scale = lattice.n() as u64 / cells;
    if scale == 0 {
        return Err(KpzError::IncompatibleLattice(format!(
            "{base}^{generations} exceeds n = {}",
            lattice.n()
        )));
    }
    Ok(scale as usize)
}

/// Product of two identical Cantor sets, filling the lattice as far as possible.
pub fn cantor_dust(lattice: &Lattice, keep: &CantorPattern, generations: u32) -> Result<FractalMask> {
    let scale = default_scale(lattice, keep.base, generations)?;
    cantor_dust_scaled(lattice, keep, generations, scale)
}

pub fn cantor_dust_scaled(
    lattice: &Lattice,
    keep: &CantorPattern,
    generations: u32,
    scale: usize,
) -> Result<FractalMask> {
    require(lattice, Geometry::Bulk)?;
    let mut kept = vec![false; keep.base];
    keep.keep.iter().for_each(|&k| kept[k] = true);
    FractalMask::from_rule(lattice, keep.base, generations, scale, 2.0 * keep.dimension(), |i, j| {
        kept[i] && kept[j]
    })
}

/// Sierpinski carpet: the 3×3 rule with the centre removed.
pub fn sierpinski_carpet(lattice: &Lattice, generations: u32) -> Result<FractalMask> {
    let scale = default_scale(lattice, 3, generations)?;
    sierpinski_carpet_scaled(lattice, generations, scale)
}

pub fn sierpinski_carpet_scaled(lattice: &Lattice, generations: u32, scale: usize) -> Result<FractalMask> {
    require(lattice, Geometry::Bulk)?;
    let dim = 8f64.ln() / 3f64.ln();
    FractalMask::from_rule(lattice, 3, generations, scale, dim, |i, j| !(i == 1 && j == 1))
}

/// 1d Cantor set on the boundary.
pub fn boundary_cantor(lattice: &Lattice, keep: &CantorPattern, generations: u32) -> Result<FractalMask> {
    let scale = default_scale(lattice, keep.base, generations)?;
    boundary_cantor_scaled(lattice, keep, generations, scale)
}

pub fn boundary_cantor_scaled(
    lattice: &Lattice,
    keep: &CantorPattern,
    generations: u32,
    scale: usize,
) -> Result<FractalMask> {
    require(lattice, Geometry::Boundary)?;
    let mut kept = vec![false; keep.base];
    keep.keep.iter().for_each(|&k| kept[k] = true);
    FractalMask::from_rule(lattice, keep.base, generations, scale, keep.dimension(), |i, _| kept[i])
}

/// Every cell of the lattice (`x = 0`).
pub fn full_domain(lattice: &Lattice) -> FractalMask {
    let d = lattice.geometry().dimension() as f64;
    let cells: Vec<usize> = (0..lattice.cells()).collect();
    FractalMask {
        lattice: *lattice,
        member: vec![true; cells.len()],
        cells,
        generation: 1,
        scale: 1,
        base: lattice.n(),
        dimension: d,
        x_exact: 0.0,
    }
}

/// Occupied-box counts `(box side in cells, count)` for dyadic box sides from
/// one cell up to the lattice size.
///
/// Each count is averaged over up to 8 grid offsets per axis, which damps the
/// log-periodic beating between dyadic boxes and triadic fractals.
pub fn dyadic_box_counts(mask: &FractalMask) -> Vec<(usize, f64)> {
    let lat = mask.lattice();
    let n = lat.n();
    let prefix = PrefixSum::new(mask);
    let mut out = Vec::new();
    let mut k = 1;
    while k <= n {
        let stride = (k / 8).max(1);
        let offsets: Vec<usize> = (0..k).step_by(stride).collect();
        let boxes = n / k;
        let (ki, ni) = (k as i64, n as i64);
        let mut total = 0u64;
        let mut trials = 0u64;
        match lat.geometry() {
            Geometry::Boundary => {
                for &o in &offsets {
                    for b in 0..boxes {
                        let lo = (b * k + o) as i64;
                        total += (prefix.periodic_1d(lo, lo + ki - 1, ni) > 0) as u64;
                    }
                    trials += 1;
                }
            }
            Geometry::Bulk => {
                for &oy in &offsets {
                    for &ox in &offsets {
                        for by in 0..boxes {
                            let y0 = (by * k + oy) as i64;
                            for bx in 0..boxes {
                                let x0 = (bx * k + ox) as i64;
                                let c = prefix.periodic_2d(x0, x0 + ki - 1, y0, y0 + ki - 1, ni);
                                total += (c > 0) as u64;
                            }
                        }
                        trials += 1;
                    }
                }
            }
        }
        out.push((k, total as f64 / trials as f64));
        k *= 2;
    }
    out
}

/// Box-counting dimension, fitted over dyadic box sides between four times
/// the finest structure and a quarter of the fractal's extent.
pub fn box_counting_dimension(mask: &FractalMask) -> Result<ScalingEstimate> {
    let extent = (mask.base as u64)
        .saturating_pow(mask.generation)
        .saturating_mul(mask.scale as u64)
        .min(mask.lattice.n() as u64) as usize;
    let counts: Vec<(usize, f64)> = dyadic_box_counts(mask)
        .into_iter()
        .filter(|&(side, _)| side >= 4 * mask.scale && 4 * side <= extent)
        .collect();
    if counts.len() < 3 {
        return Err(KpzError::InsufficientRange(format!(
            "{} usable dyadic scales, need 3",
            counts.len()
        )));
    }
    let xs: Vec<f64> = counts.iter().map(|&(s, _)| (s as f64).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&(_, c)| c.ln()).collect();
    let fit = fit_line(&xs, &ys, None);
    let a = mask.lattice.spacing();
    Ok(ScalingEstimate {
        exponent: -fit.slope,
        stderr: fit.slope_stderr.max(1e-15),
        window: (counts[0].0 as f64 * a, counts[counts.len() - 1].0 as f64 * a),
        r2: fit.r2,
        points: counts.len(),
    })
}

/// Natural measure of the mask within the square (or interval) of half-width
/// `r` cells around each center, averaged over centers: `V_X(r)`.
pub fn neighborhood_volume(mask: &FractalMask, centers: &[usize], radii: &[usize]) -> Vec<f64> {
    let lat = mask.lattice();
    let n = lat.n() as i64;
    let per_cell = lat.cell_volume() * mask.cell_density();
    let prefix = PrefixSum::new(mask);
    radii
        .iter()
        .map(|&r| {
            let r = r as i64;
            let total: f64 = centers
                .iter()
                .map(|&c| {
                    let (x, y) = lat.coords(c);
                    let (x, y) = (x as i64, y as i64);
                    let count = match lat.geometry() {
                        Geometry::Boundary => prefix.periodic_1d(x - r, x + r, n),
                        Geometry::Bulk => prefix.periodic_2d(x - r, x + r, y - r, y + r, n),
                    };
                    count as f64 * per_cell
                })
                .sum();
            total / centers.len() as f64
        })
        .collect()
}

/// Integer prefix sums over the mask, for periodic range counts.
struct PrefixSum {
    n: usize,
    table: Vec<u64>,
}

impl PrefixSum {
    fn new(mask: &FractalMask) -> Self {
        let lat = mask.lattice();
        let n = lat.n();
        match lat.geometry() {
            Geometry::Boundary => {
                let mut table = vec![0u64; n + 1];
                for i in 0..n {
                    table[i + 1] = table[i] + mask.contains(i) as u64;
                }
                Self { n, table }
            }
            Geometry::Bulk => {
                let w = n + 1;
                let mut table = vec![0u64; w * w];
                for y in 0..n {
                    for x in 0..n {
                        table[(y + 1) * w + x + 1] = mask.contains(y * n + x) as u64
                            + table[y * w + x + 1]
                            + table[(y + 1) * w + x]
                            - table[y * w + x];
                    }
                }
                Self { n, table }
            }
        }
    }

    /// Count over the half-open range `[lo, hi)` of an unwrapped axis.
    fn segments(lo: i64, hi: i64, n: i64) -> Vec<(usize, usize)> {
        if hi - lo >= n {
            return vec![(0, n as usize)];
        }
        let a = lo.rem_euclid(n);
        let b = a + (hi - lo);
        if b <= n {
            vec![(a as usize, b as usize)]
        } else {
            vec![(a as usize, n as usize), (0, (b - n) as usize)]
        }
    }

    fn periodic_1d(&self, lo: i64, hi: i64, n: i64) -> u64 {
        Self::segments(lo, hi + 1, n)
            .into_iter()
            .map(|(a, b)| self.table[b] - self.table[a])
            .sum()
    }

    fn periodic_2d(&self, x0: i64, x1: i64, y0: i64, y1: i64, n: i64) -> u64 {
        let w = self.n + 1;
        let mut total = 0;
        for (ya, yb) in Self::segments(y0, y1 + 1, n) {
            for &(xa, xb) in &Self::segments(x0, x1 + 1, n) {
                total += self.table[yb * w + xb] + self.table[ya * w + xa]
                    - self.table[ya * w + xb]
                    - self.table[yb * w + xa];
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const X_CANTOR: f64 = 0.369_070_246_428_542_9;

    #[test]
    fn middle_thirds_exponent() {
        let lat = Lattice::torus(32, 1.0).unwrap();
        let m = cantor_dust(&lat, &CantorPattern::middle_thirds(), 3).unwrap();
        assert!((m.x_exact() - (1.0 - 2f64.ln() / 3f64.ln())).abs() < 1e-15);
        assert!((m.x_exact() - X_CANTOR).abs() < 1e-15);
        assert_eq!(m.len(), 4usize.pow(3));
        assert_eq!(m.scale(), 1);
    }

    #[test]
    fn keep_all_is_full_block() {
        let lat = Lattice::torus(16, 1.0).unwrap();
        let m = cantor_dust_scaled(&lat, &CantorPattern::keep_all(2), 3, 2).unwrap();
        assert_eq!(m.len(), 256);
        assert_eq!(m.x_exact(), 0.0);
        let b = boundary_cantor_scaled(&Lattice::boundary(32, 1.0).unwrap(), &CantorPattern::keep_all(3), 3, 1).unwrap();
        assert_eq!(b.x_exact(), 0.0);
        assert_eq!(b.len(), 27);
    }

    #[test]
    fn carpet_generation_one() {
        let lat = Lattice::torus(16, 1.0).unwrap();
        let m = sierpinski_carpet_scaled(&lat, 1, 3).unwrap();
        assert_eq!(m.len(), 72);
        assert!((m.x_exact() - (1.0 - 8f64.ln() / (2.0 * 3f64.ln()))).abs() < 1e-15);
        assert!((m.x_exact() - 0.05361).abs() < 1e-5);
    }

    #[test]
    fn boundary_counts() {
        let lat = Lattice::boundary(4096, 1.0).unwrap();
        for g in 1..=7 {
            let m = boundary_cantor(&lat, &CantorPattern::middle_thirds(), g).unwrap();
            assert_eq!(m.len(), 2usize.pow(g) * m.scale());
        }
    }

    #[test]
    fn rejects_oversized_and_wrong_geometry() {
        let lat = Lattice::torus(16, 1.0).unwrap();
        assert!(matches!(
            cantor_dust(&lat, &CantorPattern::middle_thirds(), 3),
            Err(KpzError::IncompatibleLattice(_))
        ));
        let b = Lattice::boundary(16, 1.0).unwrap();
        assert!(cantor_dust(&b, &CantorPattern::middle_thirds(), 1).is_err());
        assert!(boundary_cantor(&lat, &CantorPattern::middle_thirds(), 1).is_err());
        assert!(CantorPattern::new(3, vec![3]).is_err());
    }

    #[test]
    fn self_similarity() {
        // Generation g is four translated copies of generation g-1.
        let lat = Lattice::torus(32, 1.0).unwrap();
        let p = CantorPattern::middle_thirds();
        let g2 = cantor_dust_scaled(&lat, &p, 2, 1).unwrap();
        let g3 = cantor_dust_scaled(&lat, &p, 3, 1).unwrap();
        let mut copies: Vec<usize> = g2
            .cells()
            .iter()
            .flat_map(|&c| {
                let (x, y) = lat.coords(c);
                [(0, 0), (18, 0), (0, 18), (18, 18)].map(|(ox, oy)| lat.index(x + ox, y + oy))
            })
            .collect();
        copies.sort_unstable();
        assert_eq!(copies, g3.cells());
    }

    #[test]
    fn json_roundtrip() {
        let lat = Lattice::torus(32, 0.5).unwrap();
        let m = sierpinski_carpet(&lat, 2).unwrap();
        let export: MaskExport = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(export.expand(), m.cells());
        assert_eq!(export.n, 32);
        assert_eq!(export.kind, Geometry::Bulk);
    }

    #[test]
    fn full_domain_dimension() {
        let m = full_domain(&Lattice::torus(256, 1.0).unwrap());
        let est = box_counting_dimension(&m).unwrap();
        assert!((est.exponent - 2.0).abs() < 0.01);
    }

    #[test]
    fn box_counting_dimensions() {
        let lat = Lattice::torus(256, 1.0).unwrap();
        let dust = cantor_dust_scaled(&lat, &CantorPattern::middle_thirds(), 5, 1).unwrap();
        let d = box_counting_dimension(&dust).unwrap().exponent;
        assert!((d - 1.262).abs() < 0.03, "dust {d}");
        let lat = Lattice::torus(512, 1.0).unwrap();
        let carpet = sierpinski_carpet_scaled(&lat, 5, 2).unwrap();
        let d = box_counting_dimension(&carpet).unwrap().exponent;
        assert!((d - 1.89).abs() < 0.03, "carpet {d}");
        let b = Lattice::boundary(4096, 1.0).unwrap();
        let line = boundary_cantor_scaled(&b, &CantorPattern::middle_thirds(), 7, 1).unwrap();
        let d = box_counting_dimension(&line).unwrap().exponent;
        assert!((d - 0.631).abs() < 0.02, "boundary {d}");
    }

    #[test]
    fn neighborhood_volume_of_full_domain() {
        let lat = Lattice::torus(32, 0.5).unwrap();
        let m = full_domain(&lat);
        let v = neighborhood_volume(&m, &[0, 100], &[0, 1, 3]);
        assert!((v[0] - 0.25).abs() < 1e-15);
        assert!((v[1] - 9.0 * 0.25).abs() < 1e-15);
        assert!((v[2] - 49.0 * 0.25).abs() < 1e-15);
    }
}
