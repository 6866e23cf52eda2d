//! Online selection and tuning of preconditioned linear solvers.
//!
//! A [`selector::Selector`] picks a configuration from a
//! [`config_space::ConfigSpace`] for each linear system of a sequence.
//! It explores uniformly at first, then trains a boosted classifier and
//! regressor ([`gbm::PipelineModel`]) on the logged attempts and picks the
//! approved configuration with the highest predicted reward `-ln t`.
//!
//! Environments implement [`simenv::Simulation`]. The harness drives a
//! selector through one and writes the reports.
//!
//! ```no_run
//! use solver_select::harness::{run_experiment, ExperimentConfig, Policy};
//!
//! let cfg = ExperimentConfig {
//!     policy: Policy::Selection,
//!     ..Default::default()
//! };
//! let out = run_experiment(&cfg).unwrap();
//! println!("{}", out[0].report.total_cost());
//! ```

pub mod config_space;
pub mod context;
pub mod perfdata;
pub mod gbm;
pub mod sparse;
pub mod simenv;
pub mod selector;
pub mod harness;
