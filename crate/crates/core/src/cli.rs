//! Command dispatch: runs one experiment from a [`RunConfig`] and writes its
//! artifacts into an output directory.
//!
//! Every run leaves `manifest.json` behind, even on divergence. Exit codes:
//! 0 all in-run checks pass, 1 a property check failed (or the run hit an
//! internal error), 2 a trajectory diverged, 3 the configuration is invalid.

use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::analysis::{
    lemma61_experiment, lemma62_check, lemma62_constant, stationary_scan, EnsembleStats,
    GaussianPair, LemmaError, Probe,
};
use crate::config::{ConfigError, Experiment, RunConfig, StabilizerConfig};
use crate::integrator::{
    apriori_check, deterministic_order_check, galerkin_refinement, run_trajectory,
    IntegratorError, SimParams,
};
use crate::io::{self, IoError, OutputDir, RunManifest, Snapshot};
use crate::noise::split_seed;
use crate::spectral::{BasisSpec, Boundary, SpectralField};
use crate::stabilizer::{
    build_phi, gamma_sum, hphi_report, select_n_star, tilde_a_form_check, SelectOptions,
    StabilizerError, StabilizerProfile,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitStatus {
    Pass,
    PropertyFailure,
    Divergence,
    ConfigError,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Pass => 0,
            ExitStatus::PropertyFailure => 1,
            ExitStatus::Divergence => 2,
            ExitStatus::ConfigError => 3,
        }
    }

    fn from_pass(pass: bool) -> Self {
        if pass {
            ExitStatus::Pass
        } else {
            ExitStatus::PropertyFailure
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stabilizer(#[from] StabilizerError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Lemma(#[from] LemmaError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Config(_) => ExitStatus::ConfigError,
            CliError::Stabilizer(
                StabilizerError::NotNeeded { .. }
                | StabilizerError::NotNeumann
                | StabilizerError::InvalidNStar
                | StabilizerError::InvalidTarget(_)
                | StabilizerError::GridTooSmall(_),
            ) => ExitStatus::ConfigError,
            CliError::Integrator(IntegratorError::Params(_))
            | CliError::Lemma(
                LemmaError::TimeGrid { .. }
                | LemmaError::Unstable { .. }
                | LemmaError::XGrid
                | LemmaError::Epsilon { .. }
                | LemmaError::Moment { .. },
            ) => ExitStatus::ConfigError,
            e if e.is_divergence() => ExitStatus::Divergence,
            _ => ExitStatus::PropertyFailure,
        }
    }

    fn is_divergence(&self) -> bool {
        matches!(
            self,
            CliError::Integrator(
                IntegratorError::Divergence { .. } | IntegratorError::ReferenceDiverged(_)
            ) | CliError::Stabilizer(StabilizerError::Integrator(
                IntegratorError::Divergence { .. }
            ))
        )
    }
}

/// What a finished dispatch produced.
#[derive(Debug)]
pub struct Outcome {
    pub status: ExitStatus,
    pub manifest: RunManifest,
    /// One-line summary for the terminal.
    pub summary: String,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    experiment: Experiment,
    status: ExitStatus,
    error: String,
    /// Last recorded probe values before a divergence.
    #[serde(skip_serializing_if = "Option::is_none")]
    last_values: Option<&'a [(String, f64)]>,
}

/// Resolved output directory: `--out`, then `output` in the config, then
/// `out/<experiment>`.
pub fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()))
}

/// Runs the configured experiment and writes its artifacts under `out`.
///
/// Errors are returned only when nothing could be written; any failure
/// after the directory exists is reported through the manifest and status.
pub fn dispatch(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let started = io::unix_now();
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations).into());
    }
    let mut dir = OutputDir::create(out)?;
    let (status, summary) = match run(cfg, &mut dir) {
        Ok(r) => r,
        Err(e) => {
            let status = e.status();
            let last_values = match &e {
                CliError::Integrator(IntegratorError::Divergence { last, .. }) => {
                    Some(last.as_slice())
                }
                _ => None,
            };
            dir.write_json(
                "error.json",
                &ErrorReport {
                    experiment: cfg.experiment,
                    status,
                    error: e.to_string(),
                    last_values,
                },
            )?;
            (status, e.to_string())
        }
    };
    let label = serde_json::to_value(status)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    let manifest = dir.finish(cfg.experiment.name(), cfg, started, &label)?;
    Ok(Outcome {
        status,
        manifest,
        summary,
    })
}

fn run(cfg: &RunConfig, dir: &mut OutputDir) -> Result<(ExitStatus, String), CliError> {
    match cfg.experiment {
        Experiment::Simulate => simulate(cfg, dir),
        Experiment::StationaryScan => {
            let p = sim_params(cfg)?;
            let r = stationary_scan(&cfg.params.modes_list, &p, cfg.sim.ensemble, cfg.sim.seed)?;
            dir.write_json("report.json", &Report::new(cfg, r.pass(), &r))?;
            let status = if r.entries.iter().any(|e| e.divergence.is_some()) {
                ExitStatus::Divergence
            } else {
                ExitStatus::from_pass(r.pass())
            };
            Ok((status, format!("agree {} monotone growth {}", r.agree, r.monotone_growth)))
        }
        Experiment::VerifyPhi => verify_phi(cfg, dir),
        Experiment::Lemma61 => {
            let r = lemma61_experiment(
                &cfg.params.times,
                cfg.params.samples,
                &cfg.model_spec(),
                &cfg.params.modes_list,
                cfg.sim.seed,
            )?;
            dir.write_json("report.json", &Report::new(cfg, r.pass, &r))?;
            Ok((ExitStatus::from_pass(r.pass), format!("C variation {:.4}", r.c_variation)))
        }
        Experiment::Lemma62 => {
            let p = &cfg.params;
            let r = lemma62_check(
                &p.xs,
                GaussianPair::with_moment(p.k),
                p.k,
                p.eps,
                p.samples,
                cfg.sim.seed,
            )?;
            let spot = lemma62_check(&[1.0], GaussianPair::zero(), p.k, p.eps, 2, cfg.sim.seed)?;
            let constant = lemma62_constant(p.k, p.eps)?;
            let pass = r.pass && spot.pass;
            #[derive(Serialize)]
            struct L62<'a> {
                monte_carlo: &'a crate::analysis::Lemma62Report,
                deterministic_spot_check: &'a crate::analysis::Lemma62Report,
            }
            dir.write_json(
                "report.json",
                &Report::new(
                    cfg,
                    pass,
                    &L62 {
                        monte_carlo: &r,
                        deterministic_spot_check: &spot,
                    },
                ),
            )?;
            Ok((
                ExitStatus::from_pass(pass),
                format!("C = {:.6}, min margin {:.6}", constant.c, r.min_margin),
            ))
        }
        Experiment::OrderCheck => {
            let p = sim_params(cfg)?;
            let init = smooth_initial(p.model.basis);
            let r = deterministic_order_check(&p, &init, cfg.sim.h)?;
            // Exact integration of a linear problem leaves nothing to fit.
            let pass = r.slope.is_none_or(|s| (0.8..=1.2).contains(&s));
            dir.write_json("report.json", &Report::new(cfg, pass, &r))?;
            Ok((ExitStatus::from_pass(pass), format!("slope {:?}", r.slope)))
        }
        Experiment::RefineCheck => {
            let p = sim_params(cfg)?;
            let r = galerkin_refinement(&p, &cfg.params.modes_list, cfg.sim.seed, None)?;
            dir.write_json("report.json", &Report::new(cfg, r.strictly_decreasing, &r))?;
            Ok((
                ExitStatus::from_pass(r.strictly_decreasing),
                format!("sup errors {:?}", r.sup_errors),
            ))
        }
    }
}

/// Common envelope of every JSON report.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    experiment: Experiment,
    seed: u64,
    model_fingerprint: String,
    pass: bool,
    result: &'a T,
}

impl<'a, T: Serialize> Report<'a, T> {
    fn new(cfg: &RunConfig, pass: bool, result: &'a T) -> Self {
        Self {
            experiment: cfg.experiment,
            seed: cfg.sim.seed,
            model_fingerprint: cfg.model_spec().fingerprint(),
            pass,
            result,
        }
    }
}

/// `Σ_j e^{1-j}(cos/2 + sin/4)`: analytic and of unit size.
pub fn smooth_initial(basis: BasisSpec) -> SpectralField {
    let c = (0..basis.dim())
        .map(|slot| {
            let j = basis.mode_of_slot(slot) as f64;
            let w = if slot < basis.modes() { 0.5 } else { 0.25 };
            w * (1.0 - j).exp()
        })
        .collect();
    SpectralField::from_coeffs(basis, c).expect("sized")
}

fn sim_params(cfg: &RunConfig) -> Result<SimParams, CliError> {
    let mut p = cfg.sim_params();
    if let Some(st) = &cfg.stabilizer {
        p = p.with_stabilizer(stabilizer_profile(cfg, st)?.0);
    }
    p.validate()?;
    if p.h > p.step_cap() {
        log::warn!(
            "h = {} exceeds the recommended cap {:.3e}; results may be inaccurate",
            p.h,
            p.step_cap()
        );
    }
    Ok(p)
}

fn neumann_critical(length: f64) -> f64 {
    -(std::f64::consts::PI / length).powi(2)
}

/// Builds or selects the stabilizer described by `st`, with the minimum
/// eigenvalue found during selection when there was one.
fn stabilizer_profile(
    cfg: &RunConfig,
    st: &StabilizerConfig,
) -> Result<(StabilizerProfile, Option<f64>), CliError> {
    let m = &cfg.model;
    let critical = neumann_critical(m.length);
    if m.nu > critical {
        return Err(StabilizerError::NotNeeded { nu: m.nu, critical }.into());
    }
    if m.boundary != Boundary::Neumann {
        return Err(StabilizerError::NotNeumann.into());
    }
    match st.n_star {
        Some(n) => Ok((build_phi(n, m.nu, m.length, m.modes)?, None)),
        None => {
            let opts = SelectOptions {
                grid: st.grid,
                margin: st.margin,
                ..SelectOptions::default()
            };
            let target = st.c_target.unwrap_or(m.nu.abs());
            let s = select_n_star(m.nu, m.length, m.modes, target, &opts)?;
            Ok((s.profile, Some(s.min_eigenvalue)))
        }
    }
}

#[derive(Serialize)]
struct SimulateReport {
    trajectories: usize,
    records: usize,
    /// Ensemble statistics of the per-trajectory time averages.
    time_averages: EnsembleStats,
    max_abs_mass: Option<f64>,
    /// `max |⟨u, B(u)⟩| / max(1, ‖u‖³_{H¹})`
    max_orthogonality: Option<f64>,
    apriori: Option<crate::integrator::AprioriReport>,
}

fn simulate(cfg: &RunConfig, dir: &mut OutputDir) -> Result<(ExitStatus, String), CliError> {
    let p = sim_params(cfg)?;
    let probes = cfg.probes();
    let runs: Vec<_> = (0..cfg.sim.ensemble)
        .into_par_iter()
        .map(|i| {
            run_trajectory(
                SpectralField::zeros(p.model.basis),
                &p,
                split_seed(cfg.sim.seed, i as u64),
                &probes,
            )
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let width = runs.len().to_string().len().max(4);
    let mut stats = EnsembleStats::new(p.model.fingerprint(), &probes);
    let mut records = 0;
    for (i, r) in runs.iter().enumerate() {
        dir.write_snapshot(
            &format!("final_{i:0width$}.tfsn"),
            &Snapshot {
                basis: p.model.basis,
                nu: p.model.nu,
                records: vec![(r.final_state.t, r.final_state.u.clone())],
            },
        )?;
        if r.series.first().is_some_and(|s| !s.is_empty()) {
            dir.write_series(&format!("series_{i:0width$}.csv"), &r.series)?;
            records += r.series[0].len();
        }
        stats
            .push_time_averages(&r.series)
            .expect("series share the model");
    }
    if records == 0 {
        // Nothing was recorded after burn-in: the final snapshots are the output.
        return Ok((ExitStatus::Pass, "no records after burn-in".into()));
    }
    let column = |r: &crate::integrator::RunOutput, probe| {
        r.series.iter().find(|s| s.probe == probe).map(|s| s.values.clone())
    };
    let max_abs_mass = probes.contains(&Probe::Mass).then(|| {
        runs.iter()
            .filter_map(|r| column(r, Probe::Mass))
            .flatten()
            .fold(0.0_f64, |a, v| a.max(v.abs()))
    });
    let max_orthogonality = [Probe::Orthogonality, Probe::L2Sq, Probe::GradSq]
        .iter()
        .all(|p| probes.contains(p))
        .then(|| {
            let mut worst: f64 = 0.0;
            for r in &runs {
                let (o, l, g) = (
                    column(r, Probe::Orthogonality).unwrap(),
                    column(r, Probe::L2Sq).unwrap(),
                    column(r, Probe::GradSq).unwrap(),
                );
                for k in 0..o.len() {
                    let h1 = (l[k] + g[k]).sqrt();
                    worst = worst.max(o[k].abs() / h1.powi(3).max(1.0));
                }
            }
            worst
        });
    let apriori = if p.diagnostics {
        let traces: Vec<_> = runs.iter().map(|r| r.diagnostics.clone()).collect();
        let alpha = p.model.spectrum().slowest_rate().unwrap_or(0.0);
        apriori_check(&traces, alpha, &cfg.params.thresholds).ok()
    } else {
        None
    };
    let pass = max_abs_mass.is_none_or(|m| m <= 1e-10) && max_orthogonality.is_none_or(|o| o <= 1e-10);
    let report = SimulateReport {
        trajectories: runs.len(),
        records,
        time_averages: stats,
        max_abs_mass,
        max_orthogonality,
        apriori,
    };
    dir.write_json("report.json", &Report::new(cfg, pass, &report))?;
    Ok((
        ExitStatus::from_pass(pass),
        format!("{} trajectories, {records} records", runs.len()),
    ))
}

#[derive(Serialize)]
struct VerifyPhiReport {
    n_star: usize,
    nu: f64,
    length: f64,
    c_target: f64,
    gamma: crate::stabilizer::GammaCertificate,
    /// `4π²/(3α²n*)`
    analytic_bound: f64,
    hphi: crate::stabilizer::HphiReport,
    form: crate::stabilizer::FormCheckReport,
    checks: VerifyPhiChecks,
}

#[derive(Serialize)]
struct VerifyPhiChecks {
    gamma_below_bound: bool,
    eigenvalue_above_target: bool,
    richardson_drift_below_1e_6: bool,
    form_negative: bool,
}

fn verify_phi(cfg: &RunConfig, dir: &mut OutputDir) -> Result<(ExitStatus, String), CliError> {
    let st = cfg.stabilizer.clone().unwrap_or_default();
    let (profile, _) = stabilizer_profile(cfg, &st)?;
    let c_target = st.c_target.unwrap_or(cfg.model.nu.abs());
    let gamma = gamma_sum(profile.n_star, profile.length(), 8 * profile.n_star)?;
    let hphi = hphi_report(&profile, st.grid.max(16 * profile.n_star))?;
    let form = tilde_a_form_check(&profile, st.form_samples, cfg.sim.seed)?;
    let checks = VerifyPhiChecks {
        gamma_below_bound: gamma.holds(),
        eigenvalue_above_target: hphi.min_eigenvalue >= c_target,
        richardson_drift_below_1e_6: hphi.relative_drift < 1e-6,
        form_negative: form.pass,
    };
    let pass = checks.gamma_below_bound
        && checks.eigenvalue_above_target
        && checks.richardson_drift_below_1e_6
        && checks.form_negative;
    let summary = format!(
        "n* = {}, min eigenvalue {:.6}, form minimum {:.4}",
        profile.n_star, hphi.min_eigenvalue, form.c_estimate
    );
    let report = VerifyPhiReport {
        n_star: profile.n_star,
        nu: profile.nu,
        length: profile.length(),
        c_target,
        analytic_bound: gamma.analytic_bound,
        gamma,
        hphi,
        form,
        checks,
    };
    dir.write_json("report.json", &Report::new(cfg, pass, &report))?;
    Ok((ExitStatus::from_pass(pass), summary))
}
