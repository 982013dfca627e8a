//! Out-of-time-ordered correlators for a chaotic two-dimensional double well.
//!
//! The crate computes the `x`/`p_x` OTOC three ways: classical Boltzmann
//! trajectories, ring-polymer molecular dynamics (RPMD) following the
//! centroid stability matrix, and the exact Kubo-regularised quantum OTOC
//! on a sine-DVR grid. It also locates ring-polymer instantons, analyses
//! their Hessian, and extracts Lyapunov exponents for comparison with the
//! thermal bound `λ ≤ 2π k_B T / ħ`.
//!
//! Everything here is `no_std` + `alloc`. Trajectory ensembles are expressed
//! through [`ensemble::Ensemble`] so a caller can supply its own (parallel)
//! [`ensemble::Executor`]; the serial one lives in this crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod classical;
pub mod ensemble;
pub mod error;
pub mod instanton;
pub mod integrator;
pub mod linalg;
pub mod otoc;
pub mod potential;
pub mod quantum;
pub mod ring_polymer;
pub mod rng;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};

pub use otoc::{OtocKind, OtocMeta, OtocSeries};
pub use potential::{Model, Position2, PotentialParams};
