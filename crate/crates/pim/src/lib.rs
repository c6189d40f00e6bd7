//! # pim
//!
//! Laplace-Beltrami spectra from point clouds via the point integral
//! method.
//!
//! Given sample points `P` with volume weights `V` on a compact manifold
//! (possibly with boundary), the discrete operator
//!
//! ```text
//! L u(p_i) = (C_t/t) Σ_j R(|p_i−p_j|²/4t) (u(p_i) − u(p_j)) V_j
//! ```
//!
//! and the generalized eigenproblem pairing it with the kernel mass
//! `Σ_j C_t R̄(|p_i−p_j|²/4t) u(p_j) V_j` approximate the Neumann spectrum
//! of the Laplace-Beltrami operator. This crate assembles the symmetrized
//! sparse pencil, solves it (dense Householder/QL or Lanczos), and runs
//! refinement studies against manifolds with closed-form spectra.
//!
//! ## Pipeline
//!
//! | Stage | Module | Entry point |
//! |-------|--------|-------------|
//! | kernels with exact tail integrals | [`kernels`] | [`kernels::KernelSpec`] |
//! | weighted clouds + analytic spectra | [`cloud`], [`ground_truth`] | [`cloud::Manifold`] |
//! | sparse pencil assembly | [`assembly`] | [`assembly::assemble_pencil`] |
//! | generalized eigensolve | [`eigensolve`] | [`eigensolve::solve_pencil`] |
//! | Poisson solve + off-sample fields | [`operators`] | [`operators::poisson_solve`] |
//! | refinement ladders | [`convergence`] | [`convergence::run_ladder`] |
//! | file formats | [`io`] | — |
//! | subcommand CLI | [`cli`] | [`cli::run`] |
//!
//! ## Quick start
//!
//! ```
//! use pim::cloud::Manifold;
//! use pim::kernels::KernelSpec;
//! use pim::assembly::{assemble_pencil, AssembleOptions};
//! use pim::eigensolve::{solve_pencil, SolveOptions};
//!
//! let cloud = Manifold::Interval { length: std::f64::consts::PI }
//!     .sample(200)
//!     .unwrap();
//! let t = 0.01 * cloud.h_estimate().sqrt();
//! let pencil = assemble_pencil(&cloud, &KernelSpec::wendland(), t,
//!     AssembleOptions::default()).unwrap();
//! let spectrum = solve_pencil(&pencil, 4, &SolveOptions::default()).unwrap();
//! // Neumann spectrum of [0, π] is 0, 1, 4, 9, ...
//! assert!(spectrum.mu[0].abs() < 1e-10);
//! assert!((spectrum.mu[1] - 1.0).abs() < 0.05);
//! ```
//!
//! Runnable studies live in `examples/`; the `pim` binary exposes the same
//! pipeline as subcommands over stable CSV/JSON formats.

pub mod assembly;
pub mod cli;
pub mod cloud;
pub mod convergence;
pub mod eigensolve;
pub mod error;
pub mod ground_truth;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod operators;

pub use error::{Error, Result};
