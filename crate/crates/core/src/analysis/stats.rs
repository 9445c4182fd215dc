use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use super::observables::{ObservableSeries, Probe};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("model fingerprint mismatch: {0} vs {1}")]
    Fingerprint(String, String),
    #[error("probe sets differ")]
    ProbeSet,
}

/// Count, mean, centred second moment and range of a scalar sample,
/// mergeable in any order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for Moments {
    fn default() -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl Moments {
    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::default();
        xs.iter().for_each(|&x| m.push(x));
        m
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        Moments {
            count: self.count + other.count,
            mean: (na * self.mean + nb * other.mean) / n,
            m2: self.m2 + other.m2 + d * d * na * nb / n,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Per-probe [`Moments`] tagged with the model they came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    /// `None` only for the empty accumulator.
    pub fingerprint: Option<String>,
    pub probes: BTreeMap<Probe, Moments>,
}

impl EnsembleStats {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(fingerprint: impl Into<String>, probes: &[Probe]) -> Self {
        Self {
            fingerprint: Some(fingerprint.into()),
            probes: probes.iter().map(|&p| (p, Moments::default())).collect(),
        }
    }

    pub fn push(&mut self, probe: Probe, x: f64) {
        self.probes.entry(probe).or_default().push(x);
    }

    /// Adds the time average of each series as one ensemble sample.
    pub fn push_time_averages(&mut self, series: &[ObservableSeries]) -> Result<(), StatsError> {
        for s in series {
            if let Some(f) = &self.fingerprint {
                if f != &s.fingerprint {
                    return Err(StatsError::Fingerprint(f.clone(), s.fingerprint.clone()));
                }
            } else {
                self.fingerprint = Some(s.fingerprint.clone());
            }
            if let Some(a) = s.time_average() {
                self.push(s.probe, a);
            }
        }
        Ok(())
    }

    pub fn get(&self, probe: Probe) -> Option<&Moments> {
        self.probes.get(&probe)
    }

    pub fn is_empty(&self) -> bool {
        self.probes.values().all(|m| m.count == 0)
    }
}

/// Exact pooled statistics of two ensembles of the same model.
pub fn merge(a: &EnsembleStats, b: &EnsembleStats) -> Result<EnsembleStats, StatsError> {
    if a.fingerprint.is_none() && a.is_empty() {
        return Ok(b.clone());
    }
    if b.fingerprint.is_none() && b.is_empty() {
        return Ok(a.clone());
    }
    if let (Some(fa), Some(fb)) = (&a.fingerprint, &b.fingerprint) {
        if fa != fb {
            return Err(StatsError::Fingerprint(fa.clone(), fb.clone()));
        }
    }
    if !a.probes.keys().eq(b.probes.keys()) {
        return Err(StatsError::ProbeSet);
    }
    Ok(EnsembleStats {
        fingerprint: a.fingerprint.clone().or_else(|| b.fingerprint.clone()),
        probes: a
            .probes
            .iter()
            .map(|(p, m)| (*p, m.merge(&b.probes[p])))
            .collect(),
    })
}
