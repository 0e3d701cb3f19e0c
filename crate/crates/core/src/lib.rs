//! Solver and verification library for zero-sum polymatrix Markov games
//! with switching control.
//!
//! The crate computes ε-approximate Nash equilibria by backward induction
//! over per-state zero-sum polymatrix stage games (solved with no-regret
//! dynamics), realizes the CCE-to-NE equilibrium collapse, certifies
//! equilibria through nonlinear-program residuals, and reproduces two
//! no-collapse counterexamples exactly.
//!
//! ```
//! use pmg_core::generator::{generate, GeneratorConfig};
//! use pmg_core::solver::{collapse_cce, solve_finite_opts, SolveOptions};
//! use pmg_core::HorizonSpec;
//!
//! let mut cfg = GeneratorConfig::new(vec![2, 2, 2], 3, HorizonSpec::Finite(2));
//! cfg.seed = 7;
//! let game = generate(&cfg)?;
//!
//! let opts = SolveOptions { track_cce: true, ..SolveOptions::default() };
//! let report = solve_finite_opts(&game, 1e-2, 7, &opts)?;
//! assert!(report.certified.max_gap <= 1e-2);
//!
//! // The per-stage no-regret CCE collapses to its marginals within n * gap.
//! let outcome = collapse_cce(&game, report.cce.as_ref().unwrap(), 1e-6)?;
//! assert!(outcome.bound.unwrap().holds);
//! # Ok::<(), pmg_core::Error>(())
//! ```

// Index loops over parallel tables (players x timesteps x states) stay as
// explicit indices throughout.
#![allow(clippy::needless_range_loop)]

pub mod best_response;
pub mod certificate;
pub mod counterexamples;
pub mod error;
pub mod game;
pub mod generator;
pub mod io;
pub mod policy;
pub mod solver;
pub mod stage;
pub mod valuation;

pub use error::{Error, Result};
pub use game::{HorizonSpec, MarkovGame};
pub use policy::{CorrelatedPolicy, Policy, PolicyFactor, ProductPolicy};
