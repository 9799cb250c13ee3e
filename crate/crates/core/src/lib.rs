//! Quantum limits for force sensing with a damped harmonic oscillator.
//!
//! The library computes the quantum Fisher information (QFI) for estimating
//! the amplitude of a classical force acting on a harmonic oscillator that is
//! coupled to a thermal bath with a regularized Ohmic spectral density. Three
//! dynamical branches are supported: the exact non-Markovian evolution (via a
//! numerically solved Green function and noise moments), the Markovian
//! (Lindblad) limit in closed form, and the free oscillator. On top of the
//! single-window QFI sits a sequential protocol that splits a fixed total time
//! into N prepare-evolve-measure windows and optimizes N and the squeezing
//! angle of every window.
//!
//! Units: hbar = k_B = 1 and the oscillator frequency is 1, so times are in
//! units of 1/omega0 and temperatures in units of omega0.

pub mod bath;
pub mod dynamics;
mod error;
pub mod green;
pub mod protocol;
pub mod qfi;
pub mod quad;

pub use bath::{noise_kernel, memory_kernel, nu_moments, tabulate_kernels, BathSpec, KernelTable, NuMoments};
pub use dynamics::{
    accumulate_noise_moments, covariance_markovian, markovian_min_eigenvalue, markovian_response,
    response_vector, thermal_occupancy, Bath, Cov2, CovarianceState, ForceShape, NoiseMoments,
    ShapeTag, SqueezeParams, WindowTables,
};
pub use error::{Error, Result};
pub use green::{series_coefficients, solve_green, GreenTable, SeriesFit};
pub use protocol::{
    asymptotic_qfi, fit_scaling, optimize_protocol, qfi_curve, scaling_report, sequential_qfi,
    sweep_r, total_energy_view, AsymptoticQfi, CurvePoint, FitModel, ProtocolConfig,
    ProtocolResult, ProtocolScan, ScalingFit, ScalingReport, SweepPoint, TotalEnergyView,
    WindowCache,
};
pub use qfi::{
    gaussian_fidelity, homodyne_sensitivity, optimize_theta, qfi, qfi_from_fidelity, QfiResult,
    WindowContext,
};
