//! Estimated Fokker-Planck operator assembly and the network-based
//! least-squares solver for its stationary density.

pub mod loss;
pub mod operator;
pub mod sampling;
pub mod solve;

pub use loss::{
    boundary_term, density_mass, empirical_loss, interior_term, normalization_term, split_rows,
    InteriorSampler, LossBreakdown, LossConfig,
};
pub use operator::{
    build_langevin_fp_operator, fp_residual, FpOperator, FpOperatorOps, LangevinFpOperator,
    PdeCoeffs,
};
pub use sampling::{sample_uniform_box, sample_uniform_boundary};
pub use solve::{solve_density, DensityEstimate, SolveDiagnostics, SolveOptConfig};

#[cfg(test)]
mod tests;
