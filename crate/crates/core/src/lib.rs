//! Mixed-variable Bayesian optimization with hyper-ellipsoid local regions.
//!
//! The library maintains a CMA-adapted multivariate-normal search
//! distribution over an encoded representation of a mixed
//! (continuous/ordinal/categorical) search space. Confidence ellipsoids of
//! that distribution define local regions inside which a base Bayesian
//! optimizer proposes candidates; an EXP3 bandit adaptively picks the
//! categorical encoder each iteration. Three driver variants wrap standard
//! BO, a trust-region mixed-kernel optimizer, and a subspace-embedding
//! optimizer; plain baselines of each are included for comparison, along
//! with the benchmark suite and a run harness.

pub mod acquisition;
pub mod benchmarks;
pub mod config;
pub mod drivers;
pub mod encode;
pub mod error;
pub mod harness;
pub mod hesp;
pub mod linalg;
pub mod rng;
pub mod space;
pub mod stats;
pub mod surrogate;
pub mod trace;

pub use config::{DriverKind, DriverOverrides, RunConfig};
pub use error::{Error, Result};
pub use space::{Dataset, MixedPoint, MixedSpace, Objective, VarValue, VariableSpec};
pub use trace::{RunTrace, TraceRecord};
