//! Exact event-driven simulation and numerical tools for restrained
//! branching random walks (RBRW) on finite graphs.
//!
//! A particle configuration `η: X → ℕ` evolves in continuous time. Each
//! particle dies at rate 1 and attempts to breed at rate `λ = c(0)`; the
//! offspring target `y` is drawn from a nearest-neighbour kernel `p(x, ·)`
//! and the birth is accepted with probability `c(η(y)) / λ`, where `c` is a
//! nonincreasing rate profile. The branching random walk (`c ≡ λ`) and the
//! contact process (`c = λ·𝟙{0}`) are the two extreme profiles.
//!
//! Modules:
//!
//! * [`graph`]: lattices, trees, kernels, restrictions and `α`-weights.
//! * [`spectral`]: the convergence parameter `ρ` and the operator radius `θ`.
//! * [`profiles`]: breeding-rate profiles and truncations.
//! * [`simulate`]: exact thinning simulator for the (immortal-particle)
//!   generator on a finite active region.
//! * [`coupling`]: the nested monotone coupling of several such processes.
//! * [`moments`]: first and second moment systems of the BRW with immortal
//!   particles.
//! * [`invariant_measure`]: truncated-rate stationary measures `μ_n`.
//! * [`experiments`]: phase classification and finite-volume stabilization.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the common double-precision case.

pub mod coupling;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod invariant_measure;
pub mod io;
pub mod linalg;
pub mod moments;
pub mod profiles;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Kernel64 = graph::Kernel<f64>;
pub type AlphaWeights64 = graph::AlphaWeights<f64>;
pub type SparseMatrix64 = linalg::SparseMatrix<f64>;
pub type RateProfile64 = profiles::RateProfile<f64>;
pub type SimParams64 = simulate::SimParams<f64>;
pub type Trajectory64 = simulate::Trajectory<f64>;
pub type SpectralEstimate64 = spectral::SpectralEstimate<f64>;
pub type MomentSystem64 = moments::MomentSystem<f64>;
pub type MuEstimate64 = invariant_measure::MuEstimate<f64>;
pub type RegimeReport64 = experiments::RegimeReport<f64>;
pub type CouplingSpec64 = coupling::CouplingSpec<f64>;

pub type Kernel32 = graph::Kernel<f32>;
pub type RateProfile32 = profiles::RateProfile<f32>;
