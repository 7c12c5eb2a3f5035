//! FFT plumbing for periodic lattices.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::{Geometry, Lattice};

/// Signed integer frequency of FFT bin `j` on an `n`-point periodic axis.
#[inline]
pub(crate) fn frequency(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Unnormalised forward/inverse FFT over all cells of a lattice.
#[derive(Clone)]
pub(crate) struct LatticeFft {
    geometry: Geometry,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl LatticeFft {
    pub fn new(lattice: &Lattice) -> Self {
        let mut planner = FftPlanner::new();
        let n = lattice.n();
        Self {
            geometry: lattice.geometry(),
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(&*self.forward, buf);
    }

    /// Inverse transform without the `1/N` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(&*self.inverse, buf);
    }

    fn run(&self, fft: &dyn Fft<f64>, buf: &mut [Complex64]) {
        match self.geometry {
            Geometry::Boundary => fft.process(buf),
            Geometry::Bulk => {
                fft.process(buf);
                transpose_square(buf, self.n);
                fft.process(buf);
                transpose_square(buf, self.n);
            }
        }
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Calls `f(cell, kx, ky)` with the physical wave vector of every Fourier bin.
pub(crate) fn for_each_mode(lattice: &Lattice, mut f: impl FnMut(usize, f64, f64)) {
    let n = lattice.n();
    let unit = 2.0 * std::f64::consts::PI / lattice.side();
    match lattice.geometry() {
        Geometry::Boundary => {
            for j in 0..n {
                f(j, unit * frequency(j, n) as f64, 0.0);
            }
        }
        Geometry::Bulk => {
            for jy in 0..n {
                let ky = unit * frequency(jy, n) as f64;
                for jx in 0..n {
                    f(jy * n + jx, unit * frequency(jx, n) as f64, ky);
                }
            }
        }
    }
}

/// Eigenvalue of the (positive) nearest-neighbour lattice Laplacian `-Δ_a`
/// at wave vector `k`: `(4/a²) Σ sin²(k_i a / 2)`.
#[inline]
pub(crate) fn lattice_dispersion(kx: f64, ky: f64, spacing: f64) -> f64 {
    let sx = (0.5 * kx * spacing).sin();
    let sy = (0.5 * ky * spacing).sin();
    4.0 * (sx * sx + sy * sy) / (spacing * spacing)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_2d() {
        let lat = Lattice::torus(8, 1.0).unwrap();
        let fft = LatticeFft::new(&lat);
        let orig: Vec<Complex64> = (0..64).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let mut buf = orig.clone();
        fft.forward(&mut buf);
        fft.inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a / 64.0 - b).norm() < 1e-12);
        }
    }

    #[test]
    fn plane_wave_lands_in_one_bin() {
        let lat = Lattice::torus(8, 1.0).unwrap();
        let fft = LatticeFft::new(&lat);
        let mut buf: Vec<Complex64> = (0..64)
            .map(|c| {
                let (x, y) = lat.coords(c);
                let phase = 2.0 * std::f64::consts::PI * (x as f64 + 2.0 * y as f64) / 8.0;
                Complex64::new(phase.cos(), phase.sin())
            })
            .collect();
        fft.forward(&mut buf);
        for (c, v) in buf.iter().enumerate() {
            let expect = if c == lat.index(1, 2) { 64.0 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-9 && v.im.abs() < 1e-9, "bin {c}: {v}");
        }
    }
}
