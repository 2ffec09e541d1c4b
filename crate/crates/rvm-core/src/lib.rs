//! Relativistic Vlasov-Maxwell kinetic simulator and asymptotics toolkit.
//!
//! The crate couples a macro-particle Vlasov solver to a staggered-grid
//! Maxwell integrator (`pic`, `maxwell`), integrates characteristic
//! trajectories with scattering diagnostics (`characteristics`,
//! `scattering`), and extracts the large-time self-similar objects of the
//! system — spatial averages, limiting densities, limiting fields on the
//! velocity ball, and the limiting Lorentz force — through `asymptotics` and
//! `limitfields`. An independent integral-representation wave solver
//! (`waveoracle`) cross-validates the grid solver and the self-similar wave
//! identity.
//!
//! All quantities use units with c = 1. Hot kernels are data-parallel via
//! rayon when the `parallel` feature (default) is enabled; a sequential
//! fallback compiles the same code paths without the dependency and produces
//! bit-identical results.

pub mod asymptotics;
pub mod characteristics;
pub mod config;
pub mod error;
pub mod exec;
pub mod grid;
pub mod io;
pub mod kinematics;
pub mod limitfields;
pub mod linal;
pub mod maxwell;
pub mod pic;
pub mod scattering;
pub mod sobol;
pub mod waveoracle;

pub use error::{Error, Result};
