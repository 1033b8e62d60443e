//! Analytic model and Monte-Carlo simulator for dynamic-TDD small-cell
//! networks with fractional frequency reuse.

pub mod config;
pub mod error;
pub mod kernels;
pub mod quadrature;
pub mod queue;
pub mod scalar;
pub mod solver;
pub mod sim;
pub mod throughput;

pub use config::{Direction, ExperimentFile, OptimizerConfig, RawScenario, ScenarioConfig, SimConfig};
pub use error::{ConfigError, Error, Result};
pub use scalar::Real;
pub use solver::{solve_fixed_point, SolverOptions};

pub type StpSolutionF64 = solver::StpSolution<f64>;
pub type StpSolutionF32 = solver::StpSolution<f32>;
pub type TierActivityF64 = kernels::TierActivity<f64>;
