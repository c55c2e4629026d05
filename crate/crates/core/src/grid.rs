//! Uniform time grids and the composite Simpson rule shared by every quadrature
//! in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[0, T]` with an even number of subintervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    #[serde(rename = "T")]
    horizon: f64,
    #[serde(rename = "N")]
    intervals: usize,
}

impl Grid {
    pub const DEFAULT_INTERVALS: usize = 1000;

    pub fn new(horizon: f64, intervals: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Spec(format!("grid horizon must be positive, got {horizon}")));
        }
        if intervals < 2 || !intervals.is_multiple_of(2) {
            return Err(Error::Spec(format!(
                "grid needs an even number of subintervals >= 2, got {intervals}"
            )));
        }
        Ok(Self { horizon, intervals })
    }

    pub fn with_default_intervals(horizon: f64) -> Result<Self> {
        Self::new(horizon, Self::DEFAULT_INTERVALS)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of nodes, `N + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    /// Node time `t_i = i h`; the last node is exactly `T`.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.horizon
        } else {
            i as f64 * self.step()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.time(i))
    }

    /// Composite Simpson weight of node `i`.
    pub fn simpson_weight(&self, i: usize) -> f64 {
        let h3 = self.step() / 3.0;
        if i == 0 || i == self.intervals {
            h3
        } else if i % 2 == 1 {
            4.0 * h3
        } else {
            2.0 * h3
        }
    }

    pub fn simpson_weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.simpson_weight(i)).collect()
    }

    /// Simpson quadrature of nodal values.
    pub fn integrate(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| self.simpson_weight(i) * v)
            .sum()
    }

    /// Whether `t` lies in `[0, T]` up to rounding.
    pub fn covers(&self, t: f64) -> bool {
        let slack = 1e-12 * self.horizon;
        t >= -slack && t <= self.horizon + slack
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.intervals == other.intervals
            && (self.horizon - other.horizon).abs() <= 1e-12 * self.horizon.max(other.horizon)
    }
}
