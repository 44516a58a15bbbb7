//! Mass partitions, dislocation measures and the spine Laplace exponent.

mod measure;
mod slowly_varying;

use alloc::vec::Vec;

pub use measure::{DislocationMeasure, MeasureKind, Split};
pub use slowly_varying::{SlowlyVarying, SlowlyVaryingHandle};

use crate::{Error, Result};

/// Absolute tolerance on `Σ masses = 1`.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A conservative mass partition: strictly positive, nonincreasing masses summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MassPartition {
    masses: Vec<f64>,
}

impl MassPartition {
    /// Sorts (stable, descending) and validates `masses`.
    ///
    /// A defect `|Σ - 1| ≤ 1e-12` is removed by renormalising; anything
    /// larger is rejected.
    pub fn new(mut masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::invalid("masses", "partition must have at least one entry"));
        }
        if masses.iter().any(|&m| !(m > 0.0 && m <= 1.0)) {
            return Err(Error::invalid("masses", "entries must lie in (0, 1]"));
        }
        masses.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid(
                "masses",
                alloc::format!("masses sum to {total}, not 1"),
            ));
        }
        if total != 1.0 {
            for m in &mut masses {
                *m /= total;
            }
        }
        Ok(Self { masses })
    }

    /// The `k`-fold equal split `(1/k, …, 1/k)`.
    pub fn equal_split(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("k", "an equal split needs at least two pieces"));
        }
        Ok(Self {
            masses: alloc::vec![1.0 / k as f64; k],
        })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn largest(&self) -> f64 {
        self.masses[0]
    }

    /// Whether this is the trivial partition `(1, 0, …)`.
    pub fn is_trivial(&self) -> bool {
        self.masses.len() == 1
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }
}
