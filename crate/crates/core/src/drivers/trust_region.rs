//! Trust-region size state shared by the CASMOPOLITAN-style and Bounce-style
//! drivers: a continuous scale L_x and a Hamming radius L_h, adapted on
//! success/failure either after consecutive streaks or instantly.

use serde::{Deserialize, Serialize};

pub const LX_MIN: f64 = 0.0078125; // 2^-7
pub const LX_MAX: f64 = 1.6;
pub const TAU_SUCC: usize = 3;
pub const TAU_FAIL: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrustRegionMode {
    /// Resize after `TAU_SUCC` consecutive successes or `TAU_FAIL`
    /// consecutive failures.
    Counted,
    /// Resize every iteration by smooth factors 2^(1/3) and 2^(-1/20).
    Instant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrustRegionState {
    pub l_x: f64,
    pub l_h: usize,
    lh_float: f64,
    pub success_count: usize,
    pub failure_count: usize,
    pub l_h_max: usize,
    pub mode: TrustRegionMode,
}

impl TrustRegionState {
    pub fn new(l_x: f64, l_h: usize, l_h_max: usize, mode: TrustRegionMode) -> Self {
        let l_x = l_x.clamp(LX_MIN, LX_MAX);
        let l_h = l_h.clamp(1, l_h_max.max(1));
        TrustRegionState {
            l_x,
            l_h,
            lh_float: l_h as f64,
            success_count: 0,
            failure_count: 0,
            l_h_max: l_h_max.max(1),
            mode,
        }
    }

    /// Default initial sizes: L_x mid-range, L_h = max(ceil(d_h / 5), 2)
    /// clamped into [1, l_h_max].
    pub fn with_defaults(d_h: usize, mode: TrustRegionMode) -> Self {
        let l_h_max = d_h.max(1);
        let l_h = (d_h.div_ceil(5)).max(2);
        Self::new(0.8, l_h, l_h_max, mode)
    }

    pub fn update(&mut self, improved: bool) {
        match self.mode {
            TrustRegionMode::Counted => self.update_counted(improved),
            TrustRegionMode::Instant => self.update_instant(improved),
        }
    }

    fn update_counted(&mut self, improved: bool) {
        if improved {
            self.success_count += 1;
            self.failure_count = 0;
            if self.success_count >= TAU_SUCC {
                self.l_x = (self.l_x * 2.0).min(LX_MAX);
                self.l_h = (self.l_h + 1).min(self.l_h_max);
                self.lh_float = self.l_h as f64;
                self.success_count = 0;
                self.failure_count = 0;
            }
        } else {
            self.failure_count += 1;
            self.success_count = 0;
            if self.failure_count >= TAU_FAIL {
                self.l_x = (self.l_x / 2.0).max(LX_MIN);
                self.l_h = self.l_h.saturating_sub(1).max(1);
                self.lh_float = self.l_h as f64;
                self.success_count = 0;
                self.failure_count = 0;
            }
        }
    }

    fn update_instant(&mut self, improved: bool) {
        let factor = if improved {
            2.0_f64.powf(1.0 / 3.0)
        } else {
            2.0_f64.powf(-1.0 / 20.0)
        };
        self.l_x = (self.l_x * factor).clamp(LX_MIN, LX_MAX);
        self.lh_float = (self.lh_float * factor).clamp(1.0, self.l_h_max as f64);
        self.l_h = self.lh_float.round().clamp(1.0, self.l_h_max as f64) as usize;
        if improved {
            self.success_count += 1;
            self.failure_count = 0;
        } else {
            self.failure_count += 1;
            self.success_count = 0;
        }
    }
}
