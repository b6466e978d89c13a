//! Numerical model of a two-pump, six-mode optical parametric oscillator whose
//! four low-frequency outputs approximate a square cluster state.
//!
//! The pipeline is: [`model`] parameters → [`steady_state`] classical solution
//! → [`linearization`] drift/diffusion matrices → [`spectra`] output quadrature
//! spectra → [`cluster`] joint-operator variances and (θ, ω) sweeps. The
//! [`sde`] module integrates the full nonlinear positive-P equations and is
//! used to cross-check the linearized statistics.
//!
//! All amplitudes live in the doubled phase space, ordered as
//! `[α₁, α₁⁺, α₂, α₂⁺, …, α₆, α₆⁺]` (see [`model::index`]).

pub mod cluster;
pub mod error;
pub mod linearization;
pub mod model;
pub mod sde;
pub mod spectra;
pub mod steady_state;

pub use cluster::{
    fixed_frequency_trace, standard_operators, sweep, JointOperator, Minimum, OperatorLabel,
    PhaseTrace, Quadrature, SpectralGrid,
};
pub use error::{Error, Result};
pub use linearization::{lyapunov_covariance, LinearizedModel};
pub use model::{threshold_pump, Coupling, CouplingTable, SystemParams};
pub use sde::{ensemble_covariance, integrate_trajectory, EnsembleMoments, SdeConfig, Trajectory};
pub use spectra::{intracavity_spectrum, output_joint_variance, QuadratureBasis, SpectralMatrix};
pub use steady_state::{solve_steady_state, trivial_steady_state, Branch, SteadyState};

pub use num_complex::Complex64 as C64;

/// Number of cavity modes.
pub const NMODES: usize = 6;
/// Dimension of the doubled phase space.
pub const DIM: usize = 2 * NMODES;

pub type Mat12 = nalgebra::SMatrix<C64, DIM, DIM>;
pub type Vec12 = nalgebra::SVector<C64, DIM>;
