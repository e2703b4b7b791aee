//! Rough paths, rough stochastic differential equations, and pathwise
//! stochastic control on uniform grids.
//!
//! The crate is organised around five layers:
//!
//! * [`roughpath`] — level-2 rough paths: canonical lifts of piecewise-linear
//!   paths, Itô/Stratonovich Brownian lifts, Chen composition, Hölder norms
//!   and the inhomogeneous distance ρ_α.
//! * [`integrate`] — compensated-Riemann-sum rough integration of controlled
//!   paths (Z, Z′) and discrete controlled-path seminorms.
//! * [`rsde`] — the Davie one-step scheme for rough SDEs
//!   dY = b dt + σ dB + (f, f′) dX, trajectory batches over seeded noise, and
//!   linear RDE flows.
//! * [`control`] — value functions of controlled rough SDEs by backward
//!   dynamic programming on a state lattice, Monte Carlo policy evaluation,
//!   and stability probes; [`closed_form`] supplies two analytically solvable
//!   problems used as ground truth.
//! * [`randomize`] — Brownian randomization of the rough driver and the
//!   coupled Davie-vs-Euler–Maruyama consistency check.
//!
//! The `roughctl` binary (see [`cli`]) exposes all of it as a small,
//! manifest-writing experiment runner; the `examples/` directory shows one
//! runnable program per capability.

pub mod acceptance;
pub mod cli;
pub mod closed_form;
pub mod control;
pub mod error;
pub mod grid;
pub mod hermite;
pub mod integrate;
pub mod lattice;
pub mod presets;
pub mod randomize;
pub mod rng;
pub mod roughpath;
pub mod rsde;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use roughpath::{rho_alpha, BrownianMode, RoughPath, RoughPathMode};
