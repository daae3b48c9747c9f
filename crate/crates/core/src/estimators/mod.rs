//! Monte Carlo estimators for one-dimensional Brownian barrier events and
//! for the first and second moment identities of BBM.

mod ballot;
mod identities;

pub use ballot::{
    ballot_oracle, ballot_prob, bent_ballot_prob, excursion_oracle_flat, excursion_prob, BallotEstimate,
    BarrierEstimator, DEFAULT_TILT,
};
pub use identities::{
    many_to_one_check, many_to_two_check, EndNormAtLeast, EndProjectionAtLeast, FnFunctional, PathFunctional,
    SplitPath, Unit, Zero, SPLIT_STRATA,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernel::RngStream;
use crate::stats::MeanVar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Plain,
    GirsanovTilted,
}

/// A sample mean with its standard error. The error is absent when it
/// cannot be estimated (fewer than two replicates).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub point: f64,
    pub std_error: Option<f64>,
    pub n: usize,
    pub method: Method,
}

impl EstimateWithCI {
    pub fn from_samples(samples: &[f64], method: Method) -> Self {
        Self::from_mean_var(&MeanVar::from_iter(samples.iter().copied()), method)
    }

    pub fn from_mean_var(mv: &MeanVar, method: Method) -> Self {
        EstimateWithCI { point: mv.mean(), std_error: mv.std_error(), n: mv.count(), method }
    }

    /// Multiplies point and error by a constant factor.
    pub fn scaled(self, factor: f64) -> Self {
        EstimateWithCI {
            point: self.point * factor,
            std_error: self.std_error.map(|se| se * factor.abs()),
            ..self
        }
    }

    /// Sum of two independent estimates.
    pub fn plus(self, other: &EstimateWithCI) -> Self {
        EstimateWithCI {
            point: self.point + other.point,
            std_error: combined(self.std_error, other.std_error),
            n: self.n.min(other.n),
            method: self.method,
        }
    }

    /// Standard error of the difference of two independent estimates.
    pub fn combined_se(&self, other: &EstimateWithCI) -> Option<f64> {
        combined(self.std_error, other.std_error)
    }

    /// Distance to `other` in units of the combined standard error.
    pub fn z_distance(&self, other: &EstimateWithCI) -> Option<f64> {
        let se = self.combined_se(other)?;
        let diff = (self.point - other.point).abs();
        Some(if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY })
    }

    /// Distance to a known value in units of this estimate's standard error.
    pub fn z_to(&self, value: f64) -> Option<f64> {
        let se = self.std_error?;
        let diff = (self.point - value).abs();
        Some(if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY })
    }

    /// Normal interval `point +- z * se`.
    pub fn interval(&self, z: f64) -> Option<(f64, f64)> {
        self.std_error.map(|se| (self.point - z * se, self.point + z * se))
    }
}

fn combined(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? * a? + b? * b?).sqrt())
}

/// Evaluates `f` on replicas `0..n`, replica `i` drawing from `base.split(i)`.
/// Results come back in index order whatever the scheduling.
pub(crate) fn replicate<F>(n: usize, base: &RngStream, f: F) -> Vec<f64>
where
    F: Fn(&mut RngStream) -> f64 + Sync,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| f(&mut base.split(i)))
        .collect()
}
