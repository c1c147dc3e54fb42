//! Counters for every positivity guard that fires during estimation.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Thread-safe clip counters. Totals are order-independent, so the snapshot is
/// identical regardless of how work was scheduled.
#[derive(Debug, Default)]
pub struct ClipCounter {
    density: AtomicU64,
    survival: AtomicU64,
    censoring: AtomicU64,
    at_risk: AtomicU64,
    hazard: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clip {
    /// `g_n(a|w)` raised to the density floor.
    Density,
    /// A survival probability in a denominator raised to the floor.
    Survival,
    /// A censoring survival probability raised to the floor.
    Censoring,
    /// `R_n(y|a,w)` raised to the floor.
    AtRisk,
    /// A hazard increment above 1 clamped.
    Hazard,
}

impl ClipCounter {
    pub fn record(&self, clip: Clip) {
        self.add(clip, 1);
    }

    pub fn add(&self, clip: Clip, count: u64) {
        if count == 0 {
            return;
        }
        let slot = match clip {
            Clip::Density => &self.density,
            Clip::Survival => &self.survival,
            Clip::Censoring => &self.censoring,
            Clip::AtRisk => &self.at_risk,
            Clip::Hazard => &self.hazard,
        };
        slot.fetch_add(count, Ordering::Relaxed);
    }

    /// Returns `max(value, floor)` and counts the clip when it happens.
    pub fn floor(&self, value: f64, floor: f64, clip: Clip) -> f64 {
        if value < floor {
            self.record(clip);
            floor
        } else {
            value
        }
    }

    pub fn snapshot(&self) -> ClipCounts {
        ClipCounts {
            density: self.density.load(Ordering::Relaxed),
            survival: self.survival.load(Ordering::Relaxed),
            censoring: self.censoring.load(Ordering::Relaxed),
            at_risk: self.at_risk.load(Ordering::Relaxed),
            hazard: self.hazard.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipCounts {
    pub density: u64,
    pub survival: u64,
    pub censoring: u64,
    pub at_risk: u64,
    pub hazard: u64,
}

impl ClipCounts {
    pub fn total(&self) -> u64 {
        self.density + self.survival + self.censoring + self.at_risk + self.hazard
    }
}
