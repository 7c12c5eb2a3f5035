//! Monte Carlo heat kernel: the continuous-time random walk generated by `L`.
//!
//! The walk holds at `i` for an `Exp(rate_i)` time and then jumps to a
//! neighbour with probability proportional to the bond conductance. Walker
//! `k` draws from its own stream seeded by `derive(seed, k)`, and partial
//! sums are combined in walker order, so results do not depend on the
//! thread count.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::Exp1;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use super::operator::MetricLaplacian;
use crate::error::{KpzError, Result};
use crate::lattice::Geometry;
use crate::seed::derive;

const CHUNK: usize = 512;

/// Occupation estimate of the heat kernel density at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub time: f64,
    /// `count_i / (N W_i)`, an unbiased estimate of `p_t(z0, i)`.
    pub density: Vec<f64>,
    pub stderr: Vec<f64>,
    pub walkers: usize,
}

struct Tables<'a> {
    op: &'a MetricLaplacian,
    mean_hold: Vec<f64>,
    /// Cumulative jump probabilities in bond order; empty when all bonds
    /// out of every cell are equal.
    cumulative: Vec<[f64; 4]>,
    bonds: usize,
}

impl<'a> Tables<'a> {
    fn new(op: &'a MetricLaplacian) -> Self {
        let m = op.lattice().cells();
        let bonds = op.lattice().coordination();
        let mean_hold = (0..m).map(|i| 1.0 / op.rate(i)).collect();
        let uniform = (0..m).all(|i| {
            let mut it = op.bonds(i).map(|(_, c)| c);
            let first = it.next().unwrap_or(0.0);
            it.all(|c| c == first)
        });
        let cumulative = if uniform {
            Vec::new()
        } else {
            (0..m)
                .map(|i| {
                    let deg = op.degree(i);
                    let mut acc = 0.0;
                    let mut row = [1.0; 4];
                    for (k, (_, c)) in op.bonds(i).enumerate() {
                        acc += c / deg;
                        row[k] = acc;
                    }
                    row[bonds - 1] = 1.0;
                    row
                })
                .collect()
        };
        Self {
            op,
            mean_hold,
            cumulative,
            bonds,
        }
    }

    #[inline]
    fn jump(&self, pos: usize, rng: &mut Xoshiro256PlusPlus) -> usize {
        let k = if self.cumulative.is_empty() {
            if self.bonds == 4 {
                (rng.next_u32() & 3) as usize
            } else {
                (rng.next_u32() & 1) as usize
            }
        } else {
            let u: f64 = rng.random();
            let row = &self.cumulative[pos];
            row.iter().position(|&c| u < c).unwrap_or(self.bonds - 1)
        };
        let lat = self.op.lattice();
        match (lat.geometry(), k) {
            (_, 0) => lat.shifted(pos, 1, 0),
            (_, 1) => lat.shifted(pos, -1, 0),
            (Geometry::Bulk, 2) => lat.shifted(pos, 0, 1),
            _ => lat.shifted(pos, 0, -1),
        }
    }

    /// Positions of one walker at each of the increasing `times`.
    fn walk(&self, z0: usize, times: &[f64], rng: &mut Xoshiro256PlusPlus, out: &mut [usize]) {
        let mut pos = z0;
        let mut clock = 0.0;
        let mut k = 0;
        loop {
            let e: f64 = rng.sample(Exp1);
            let next = clock + e * self.mean_hold[pos];
            while k < times.len() && times[k] < next {
                out[k] = pos;
                k += 1;
            }
            if k == times.len() {
                return;
            }
            clock = next;
            pos = self.jump(pos, rng);
        }
    }
}

fn check(op: &MetricLaplacian, z0: usize, times: &[f64], walkers: usize) -> Result<()> {
    let m = op.lattice().cells();
    if z0 >= m {
        return Err(KpzError::invalid("z0", format!("cell {z0} outside {m} cells")));
    }
    if walkers == 0 {
        return Err(KpzError::invalid("walkers", "need at least one walker"));
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(KpzError::invalid("t", format!("times must be positive and finite, got {t}")));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(KpzError::invalid("times", "must be strictly increasing"));
    }
    Ok(())
}

fn chunks(walkers: usize) -> Vec<(usize, usize)> {
    (0..walkers.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(walkers)))
        .collect()
}

/// Occupation-measure estimate of `p_t(z0, ·)` from `walkers` walks.
pub fn evolve_mc(op: &MetricLaplacian, z0: usize, t: f64, walkers: usize, seed: u64) -> Result<McEstimate> {
    check(op, z0, &[t], walkers)?;
    let tables = Tables::new(op);
    let m = op.lattice().cells();
    let partial: Vec<Vec<u64>> = chunks(walkers)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut counts = vec![0u64; m];
            let mut pos = [0usize];
            for w in lo..hi {
                let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive(seed, w as u64));
                tables.walk(z0, &[t], &mut rng, &mut pos);
                counts[pos[0]] += 1;
            }
            counts
        })
        .collect();
    let mut counts = vec![0u64; m];
    for c in &partial {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
    }
    let nw = walkers as f64;
    let w = op.masses();
    let density = counts.iter().zip(w).map(|(&c, w)| c as f64 / (nw * w)).collect();
    let stderr = counts
        .iter()
        .zip(w)
        .map(|(&c, w)| {
            let f = c as f64 / nw;
            (f * (1.0 - f) / nw).sqrt() / w
        })
        .collect();
    Ok(McEstimate {
        time: t,
        density,
        stderr,
        walkers,
    })
}

/// `E[g(Z_t)]` for the walk started at `z0`, at each of the increasing
/// `times`, with the standard error of the mean.
pub fn mc_expectation(
    op: &MetricLaplacian,
    z0: usize,
    times: &[f64],
    observable: &[f64],
    walkers: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    check(op, z0, times, walkers)?;
    if observable.len() != op.lattice().cells() {
        return Err(KpzError::MismatchedLattice(format!(
            "observable has {} values for {} cells",
            observable.len(),
            op.lattice().cells()
        )));
    }
    let tables = Tables::new(op);
    let nt = times.len();
    let partial: Vec<Vec<(f64, f64)>> = chunks(walkers)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut sums = vec![(0.0, 0.0); nt];
            let mut pos = vec![0usize; nt];
            for w in lo..hi {
                let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive(seed, w as u64));
                tables.walk(z0, times, &mut rng, &mut pos);
                for (s, &p) in sums.iter_mut().zip(&pos) {
                    let g = observable[p];
                    s.0 += g;
                    s.1 += g * g;
                }
            }
            sums
        })
        .collect();
    let mut sums = vec![(0.0, 0.0); nt];
    for part in &partial {
        for (s, p) in sums.iter_mut().zip(part) {
            s.0 += p.0;
            s.1 += p.1;
        }
    }
    let nw = walkers as f64;
    Ok(sums
        .into_iter()
        .map(|(s, s2)| {
            let mean = s / nw;
            let var = if walkers > 1 {
                ((s2 - nw * mean * mean) / (nw - 1.0)).max(0.0)
            } else {
                0.0
            };
            (mean, (var / nw).sqrt())
        })
        .collect())
}
