//! Numerical laboratory for flux-across-surfaces in Dirac scattering.
//!
//! Natural units `c = hbar = 1` throughout.

pub mod amplitude;
pub mod bank;
pub mod detector;
pub mod fft3;
pub mod fit;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod lse;
pub mod par;
pub mod propagator;
pub mod quadrature;
pub mod scatter;
pub mod shell;
pub mod special;
pub mod statphase;
pub mod spinor;

pub use amplitude::{class_g_report, gaussian_packet, ClassGReport, MomentumAmplitude};
pub use error::{Error, Result};
pub use geometry::{ConeSpec, Frame};
pub use grid::{GridLayout, MomentumGrid, SphericalLayout};
pub use propagator::{
    continuity_residual, evaluate_wave, flux_at, spacelike_decay_check, ContinuityResidual, DirectSum,
    SpacelikeReport, SpacetimePoint, WaveField,
};
pub use shell::ShellExpansion;
pub use spinor::{dirac_matrices, flux, positive_spinors, DiracMatrixSet, FluxVector, Spinor4, SpinorBasisPair, Vec3};
pub use bank::{default_bank_momenta, lattice_momenta, BankState, EigenBank};
pub use detector::{
    covariant_check, crossing_direct, crossing_substituted, fas_row, fas_sweep, sphere_quadrature, CovariantReport,
    FASReport, FasOptions, FasRow, SurfaceQuadrature,
};
pub use fit::loglog_slope;
pub use lse::{
    born_solve, eigen_residual, green_kernel, holder_check, zeta_decay_certificate, ConvergenceRecord,
    EigenfunctionField, Potential, SpatialGrid,
};
pub use scatter::{outgoing_amplitude, PotentialState, ScatterTable};
pub use statphase::{
    cones_asymptotic, error_scaling, flux_asymptotic, k_stationary, leading_term, oscillatory_bruteforce, PhaseParams,
    ScalingReport, StatPhaseResult,
};
