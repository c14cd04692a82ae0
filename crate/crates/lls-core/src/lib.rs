//! Simulation and pulse-sequence compilation for long-lived singlet-state
//! preparation in a weakly coupled two-spin NMR system.
//!
//! The crate is organized in four layers:
//!
//! - [`linalg`]: dense complex matrices, Hermitian eigendecomposition,
//!   matrix exponential/logarithm, tensor products.
//! - [`model`]: the two-spin Hamiltonians, the drive schedule λ(t), the
//!   auxiliary gauge-potential term and its amplitude, and the N-segment
//!   discretization.
//! - [`dynamics`]: propagation of pure and deviation states under the
//!   discretized drives, eigenvalue/phase tracking, fidelity sweeps.
//! - [`pulse`]: compilation of the drives to primitive NMR events (delays,
//!   hard pulses, spin locks), ideal-event simulation, duration audits.
//!
//! With the default `parallel` feature the sweep grids in [`dynamics`] and
//! [`pulse`] are evaluated on a rayon thread pool; disabling the feature
//! falls back to equivalent sequential loops with identical output.

pub mod dynamics;
pub mod linalg;
pub mod model;
pub mod pulse;

pub use num_complex::Complex64;
