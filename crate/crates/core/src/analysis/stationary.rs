//! Ergodic estimates of the stationary log-moments across truncations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::observables::Probe;
use super::stats::{EnsembleStats, Moments};
use crate::integrator::{run_trajectory, IntegratorError, SimParams};
use crate::noise::split_seed;
use crate::spectral::SpectralField;

/// Mean and standard error of a per-trajectory time average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl From<&Moments> for Estimate {
    fn from(m: &Moments) -> Self {
        Self {
            mean: m.mean,
            se: m.std_error(),
        }
    }
}

impl Estimate {
    /// `|a - b| ≤ k sqrt(se_a² + se_b²)`
    pub fn agrees(&self, other: &Estimate, k: f64) -> bool {
        (self.mean - other.mean).abs() <= k * self.se.hypot(other.se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMomentEntry {
    pub modes: usize,
    pub trajectories: usize,
    /// `log(1 + ‖u‖²)`
    pub log_l2: Option<Estimate>,
    /// `log(1 + ‖u‖²_{C¹})`
    pub log_c1: Option<Estimate>,
    /// Set when a trajectory diverged and the entry was abandoned.
    pub divergence: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMomentReport {
    pub entries: Vec<LogMomentEntry>,
    /// All pairs of completed entries agree within 3 SE on both probes.
    pub agree: bool,
    /// Some probe increases with `N` at every step, by more than 3 SE overall.
    pub monotone_growth: bool,
}

impl LogMomentReport {
    pub fn pass(&self) -> bool {
        self.agree
            && !self.monotone_growth
            && self.entries.iter().all(|e| {
                e.divergence.is_none()
                    && [e.log_l2, e.log_c1]
                        .iter()
                        .all(|x| x.is_some_and(|x| x.mean.is_finite() && x.se.is_finite()))
            })
    }
}

/// Time-averaged log-moments over `ensemble` trajectories started from zero,
/// for each truncation in `modes`. Trajectory `i` uses `split_seed(seed, i)`
/// at every `N`, so the truncations share noise on their common modes.
pub fn stationary_scan(
    modes: &[usize],
    params: &SimParams,
    ensemble: usize,
    seed: u64,
) -> Result<LogMomentReport, IntegratorError> {
    if !(params.burn_in > 0.0) {
        return Err(IntegratorError::Params(vec![
            "stationary scan needs a positive burn_in".into(),
        ]));
    }
    let probes = [Probe::LogL2, Probe::LogC1];
    let mut entries = Vec::with_capacity(modes.len());
    for &n in modes {
        let mut p = params.clone().without_diagnostics();
        p.model = params.model.with_modes(n)?;
        if let Some(s) = &params.stabilizer {
            p.stabilizer = Some(s.with_modes(n).map_err(|e| {
                IntegratorError::Params(vec![format!("stabilizer: {e}")])
            })?);
        }
        let runs: Vec<_> = (0..ensemble)
            .into_par_iter()
            .map(|i| {
                run_trajectory(
                    SpectralField::zeros(p.model.basis),
                    &p,
                    split_seed(seed, i as u64),
                    &probes,
                )
                .map(|o| o.series)
            })
            .collect();
        let mut stats = EnsembleStats::new(p.model.fingerprint(), &probes);
        let mut divergence = None;
        for r in runs {
            match r {
                Ok(series) => stats
                    .push_time_averages(&series)
                    .expect("series share the model"),
                Err(e @ IntegratorError::Divergence { .. }) => {
                    divergence = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let entry = if divergence.is_some() {
            LogMomentEntry {
                modes: n,
                trajectories: ensemble,
                log_l2: None,
                log_c1: None,
                divergence,
            }
        } else {
            let est = |probe| stats.get(probe).filter(|m| m.count > 0).map(Estimate::from);
            LogMomentEntry {
                modes: n,
                trajectories: ensemble,
                log_l2: est(Probe::LogL2),
                log_c1: est(Probe::LogC1),
                divergence: None,
            }
        };
        log::info!("stationary scan N = {n}: {entry:?}");
        entries.push(entry);
    }
    let done: Vec<&LogMomentEntry> = entries.iter().filter(|e| e.divergence.is_none()).collect();
    let pick = |e: &LogMomentEntry, i: usize| if i == 0 { e.log_l2 } else { e.log_c1 };
    let mut agree = true;
    let mut monotone_growth = false;
    for probe in 0..2 {
        let ests: Vec<Estimate> = done.iter().filter_map(|e| pick(e, probe)).collect();
        for (i, a) in ests.iter().enumerate() {
            for b in &ests[i + 1..] {
                agree &= a.agrees(b, 3.0);
            }
        }
        if ests.len() >= 2 {
            let increasing = ests.windows(2).all(|w| w[1].mean > w[0].mean);
            let (first, last) = (ests[0], ests[ests.len() - 1]);
            if increasing && !first.agrees(&last, 3.0) {
                monotone_growth = true;
            }
        }
    }
    Ok(LogMomentReport {
        entries,
        agree,
        monotone_growth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::ModelSpec;
    use crate::spectral::BasisSpec;
    use std::f64::consts::PI;

    #[test]
    fn zero_noise_gives_zero_moments() {
        let m = ModelSpec::white(BasisSpec::periodic(2.0 * PI, 8).unwrap(), 1.0).without_noise();
        let p = SimParams::new(m, 1e-2, 2.0).with_burn_in(1.0).with_stride(10);
        let r = stationary_scan(&[8, 16], &p, 3, 1).unwrap();
        for e in &r.entries {
            assert_eq!(e.log_l2.unwrap().mean, 0.0);
            assert_eq!(e.log_c1.unwrap().mean, 0.0);
        }
        assert!(r.pass());
    }

    #[test]
    fn burn_in_required() {
        let m = ModelSpec::white(BasisSpec::periodic(2.0 * PI, 8).unwrap(), 1.0);
        let p = SimParams::new(m, 1e-2, 2.0);
        assert!(stationary_scan(&[8], &p, 2, 1).is_err());
    }

    #[test]
    fn standard_error_scales_with_ensemble() {
        let m = ModelSpec::white(BasisSpec::periodic(2.0 * PI, 8).unwrap(), 1.0);
        let p = SimParams::new(m, 1e-3, 1.5).with_burn_in(0.5).with_stride(20);
        let small = stationary_scan(&[8], &p, 100, 7).unwrap();
        let large = stationary_scan(&[8], &p, 400, 7).unwrap();
        let (a, b) = (
            small.entries[0].log_l2.unwrap().se,
            large.entries[0].log_l2.unwrap().se,
        );
        let ratio = a / b;
        assert!((ratio / 2.0 - 1.0).abs() < 0.2, "{ratio}");
    }
}
