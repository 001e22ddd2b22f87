//! Kinetic theory of weakly interacting lattice fermions, with fluctuation
//! diagnostics and an exact small-lattice oracle.
//!
//! The crate provides, in dependency order:
//!
//! - [`grid`], [`band`], [`occupation`], [`equilibrium`]: discretized momentum
//!   torus, band structure, pair potentials, occupation functions,
//!   Fermi–Dirac states, and the scalar functionals (density, energy,
//!   entropy) conserved or monotone under the kinetic flow;
//! - [`collision`]: antisymmetrized two-body matrix elements, Gaussian
//!   energy mollifier, precomputed collision tables with deterministic
//!   parallel construction, and the Pauli-blocking collision operator;
//! - [`kinetics`]: an explicit Runge–Kutta driver with step rejection,
//!   conservation and entropy monitors, and equilibrium-distance tracking;
//! - [`quasifree`]: Wick calculus for gauge-invariant quasifree states —
//!   quadratic observables, translates, free evolution, truncated
//!   correlations, and the covariance/symplectic bilinear forms;
//! - [`fluctuations`]: block fluctuation variances with Fejér weights,
//!   Gaussian characteristic values, finite-size scaling corrections, regime
//!   classification, a first-order vanishing probe, and the interaction
//!   drift of Weyl phases;
//! - [`fock`]: an exact Fock-space representation on small one-dimensional
//!   lattices used as ground truth for the Wick calculus and the drift.
//!
//! All numeric kernels are generic over the floating scalar through
//! [`Real`]; concrete `f64` aliases are exported at the crate root.

pub mod band;
pub mod collision;
pub mod equilibrium;
pub mod error;
pub mod fluctuations;
pub mod fock;
pub mod grid;
pub mod kinetics;
pub mod occupation;
pub mod quasifree;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Real, C};

/// Momentum grid (dimension-agnostic index arithmetic).
pub type Grid = grid::MomentumGrid;

/// Band energies over an `f64` grid.
pub type Dispersion64 = band::Dispersion<f64>;
/// Even pair potential over an `f64` grid.
pub type PairPotential64 = band::PairPotential<f64>;
/// Momentum occupation function over an `f64` grid.
pub type Occupation64 = occupation::Occupation<f64>;
/// Position-space correlation profile (`f64`).
pub type PositionProfile64 = occupation::PositionProfile<f64>;
/// Matched inverse temperature / chemical potential pair (`f64`).
pub type EquilibriumParams64 = equilibrium::EquilibriumParams<f64>;
/// Gauge-invariant quasifree state (`f64`).
pub type QuasifreeState64 = quasifree::QuasifreeState<f64>;
/// Self-adjoint quadratic observable (`f64`).
pub type QuadraticObservable64 = quasifree::QuadraticObservable<f64>;
/// Coupling and scale bundle (`f64`).
pub type ScalingParameters64 = collision::ScalingParameters<f64>;
/// Precomputed collision table (`f64`).
pub type CollisionTable64 = collision::CollisionTable<f64>;
/// Recorded kinetic trajectory (`f64`).
pub type Trajectory64 = kinetics::Trajectory<f64>;
