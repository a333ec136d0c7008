//! Run configuration: benchmark, driver variant, budgets, seeds, and the
//! driver-level overrides surfaced through the CLI and config files.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriverKind {
    /// Meta-algorithm over standard BO (Matern GP, Thompson sampling).
    HespBo,
    /// Meta-algorithm over a trust-region mixed-kernel optimizer.
    HespCasmo,
    /// Meta-algorithm over a subspace-embedding optimizer.
    HespBounce,
    /// Plain standard BO baseline (whole-space candidate pool).
    Bo,
    /// Plain trust-region baseline.
    Casmo,
    /// Plain subspace-embedding baseline.
    Bounce,
}

impl DriverKind {
    pub fn name(&self) -> &'static str {
        match self {
            DriverKind::HespBo => "hesp-bo",
            DriverKind::HespCasmo => "hesp-casmo",
            DriverKind::HespBounce => "hesp-bounce",
            DriverKind::Bo => "bo",
            DriverKind::Casmo => "casmo",
            DriverKind::Bounce => "bounce",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "hesp-bo" => DriverKind::HespBo,
            "hesp-casmo" => DriverKind::HespCasmo,
            "hesp-bounce" => DriverKind::HespBounce,
            "bo" => DriverKind::Bo,
            "casmo" => DriverKind::Casmo,
            "bounce" => DriverKind::Bounce,
            other => return Err(Error::invalid(format!("unknown driver {other:?}"))),
        })
    }

    pub fn all() -> [DriverKind; 6] {
        [
            DriverKind::HespBo,
            DriverKind::HespCasmo,
            DriverKind::HespBounce,
            DriverKind::Bo,
            DriverKind::Casmo,
            DriverKind::Bounce,
        ]
    }
}

/// Driver-level knobs; the defaults reproduce the standard settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DriverOverrides {
    /// Confidence level of the hyper-ellipsoid local region.
    pub alpha: f64,
    /// Batch size per iteration; None derives 4 + floor(3 + ln d).
    pub lambda: Option<usize>,
    /// Use 4 + floor(3 ln d) instead of the default population formula.
    pub lambda_canonical: bool,
    /// Candidate pool size; None derives min(100 d, 5000).
    pub pool_size: Option<usize>,
    /// Initial continuous trust-region scale.
    pub tr_init_lx: f64,
    /// Initial Hamming radius; None derives max(ceil(d_h / 5), 2).
    pub tr_init_lh: Option<usize>,
    /// Target-encoder smoothing weight m.
    pub target_m: f64,
    /// Fixed EXP3 exploration rate; None derives the budget formula.
    pub eta: Option<f64>,
    /// Number of encoder arms (1 = ordinal only, 2 = ordinal + target).
    pub encoders: usize,
    /// Initial embedding dimension; None derives 2 (combinatorial) or 4 (mixed).
    pub d_a_init: Option<usize>,
    /// Stop a run early once the best value reaches this threshold.
    pub stop_at: Option<f64>,
}

impl Default for DriverOverrides {
    fn default() -> Self {
        DriverOverrides {
            alpha: 0.05,
            lambda: None,
            lambda_canonical: false,
            pool_size: None,
            tr_init_lx: 0.8,
            tr_init_lh: None,
            target_m: 1.0,
            eta: None,
            encoders: 2,
            d_a_init: None,
            stop_at: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub benchmark: String,
    pub driver: DriverKind,
    /// Evaluation budget N.
    pub budget: usize,
    /// Initial design size.
    pub n0: usize,
    pub repeats: usize,
    /// Base seed; repeat i runs with seed + i.
    pub seed: u64,
    pub overrides: DriverOverrides,
}

impl RunConfig {
    pub fn new(benchmark: impl Into<String>, driver: DriverKind, budget: usize) -> Self {
        RunConfig {
            benchmark: benchmark.into(),
            driver,
            budget,
            n0: 20,
            repeats: 10,
            seed: 0,
            overrides: DriverOverrides::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget < self.n0 {
            return Err(Error::invalid(format!(
                "budget {} must be >= n0 {}",
                self.budget, self.n0
            )));
        }
        if self.n0 < 2 {
            return Err(Error::invalid("n0 must be at least 2"));
        }
        if self.repeats < 1 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if !(self.overrides.alpha > 0.0 && self.overrides.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in (0, 1)"));
        }
        if !(1..=2).contains(&self.overrides.encoders) {
            return Err(Error::invalid("encoders must be 1 or 2"));
        }
        if let Some(l) = self.overrides.lambda {
            if l < 2 {
                return Err(Error::invalid("lambda must be at least 2"));
            }
        }
        Ok(())
    }
}
