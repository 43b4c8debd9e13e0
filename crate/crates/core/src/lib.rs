//! Inertial gradient algorithms with Hessian-driven damping (IGAHD) under
//! inexact and stochastic gradients.
//!
//! The crate is split along the lines of the experiments it supports:
//!
//! * [`problems`]: smooth convex objectives, Gaussian synthetic data and
//!   stochastic gradient oracles.
//! * [`optim`]: parameter schedules and the steppers (I-IGAHD, S-IGAHD,
//!   S-FISTA and the heavy-ball baseline), plus the iteration driver.
//! * [`lyapunov`]: discrete energies, the per-step descent inequality check
//!   and summability monitors.
//! * [`modes`]: eigen-mode analysis of quadratic objectives and the damped
//!   mode ODE.
//! * [`bench`]: experiment configuration, multi-seed orchestration, rate
//!   fitting and CSV/JSON persistence.
//!
//! Points are dense `nalgebra` vectors; matrix-valued parameters (regression
//! weights) are flattened row-major.
//!
//! ```
//! use igahd::bench::{run_experiment, ExperimentConfig};
//!
//! let cfg = ExperimentConfig::from_json(r#"{
//!     "problem": {"kind": "quadratic", "diagonal": [1.0, 100.0]},
//!     "algorithm": "igahd",
//!     "schedule": {"alpha": 3.1, "eta": 0.5},
//!     "max_iter": 2000
//! }"#)?;
//! let out = run_experiment(&cfg, None, None)?;
//! assert!(out.summary.aggregate.final_gap_median.unwrap() < 1e-8);
//! # Ok::<(), igahd::Error>(())
//! ```

pub mod bench;
pub mod error;
pub mod lyapunov;
pub mod modes;
pub mod optim;
pub mod problems;
pub mod rng;

pub use error::{Error, Result};

/// A point in parameter space.
pub type Point = nalgebra::DVector<f64>;
