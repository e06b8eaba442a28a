//! Capacity of the amplitude-constrained discrete-time Poisson channel with
//! dark current, together with a certified capacity-achieving input law.
//!
//! The numerical kernels are generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! solver's default tolerances assume.
//!
//! ```
//! use poisson_capacity::{solve, ChannelParams, SolverConfig};
//!
//! let params = ChannelParams::new(2.0, 0.0).unwrap();
//! let result = solve(&params, &SolverConfig::default(), None).unwrap();
//! assert!(result.converged);
//! assert_eq!(result.distribution.points(), &[0.0, 2.0]);
//! ```

pub mod blahut_arimoto;
pub mod channel;
pub mod dist;
pub mod error;
pub mod export;
pub mod gradient_ascent;
pub mod information;
pub mod kkt;
pub mod scalar;
pub mod solver;
pub mod sweep;

pub use blahut_arimoto::{ba_run, ba_step, newton_polish};
pub use channel::{log_pmf, pmf_derivative, truncation_for};
pub use dist::{induced_output, Violation};
pub use error::{Error, Result};
pub use gradient_ascent::{ga_run, ga_step, mi_gradient, Preconditioner};
pub use information::{capacity_sandwich, density_profile, info_density, mutual_information};
pub use kkt::{kkt_update, kkt_validate, UpdateAction};
pub use scalar::Real;
pub use solver::{initial_support, solve, solve_with_observer, support_bounds};

pub type ChannelParams = channel::ChannelParams<f64>;
pub type OutputTruncation = channel::OutputTruncation<f64>;
pub type InputDistribution = dist::InputDistribution<f64>;
pub type OutputDistribution = dist::OutputDistribution<f64>;
pub type InfoDensityProfile = information::InfoDensityProfile<f64>;
pub type ScanConfig = information::ScanConfig<f64>;
pub type LineSearchConfig = gradient_ascent::LineSearchConfig<f64>;
pub type KktReport = kkt::KktReport<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type SolveResult = solver::SolveResult<f64>;
pub type SupportBounds = solver::SupportBounds<f64>;

/// Version string recorded in sweep manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
