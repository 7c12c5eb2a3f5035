//! Heat kernel of the Liouville Brownian motion on the lattice.

mod exact;
mod operator;
mod resolvent;
mod solvers;
mod walk;

pub use exact::{evolve_exact, evolve_exact_times, propagate, ExactConfig};
pub use operator::{build_operator, build_operator_with, BoundaryConvention, HeatState, MetricLaplacian};
pub use resolvent::resolvent_power;
pub use walk::{evolve_mc, mc_expectation, McEstimate};

/// `Σ_i μ_i p_i`: the fractal measure of a heat-kernel density.
pub fn fractal_average(state: &HeatState, fractal_measure: &[f64]) -> f64 {
    state.density.iter().zip(fractal_measure).map(|(p, m)| p * m).sum()
}
