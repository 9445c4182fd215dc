//! Exponential Euler stepping of the Galerkin system and the a-priori
//! diagnostics of the decomposition `v = u - W_A (- Φ_N)`.
//!
//! One step of size `h` is
//!
//! ```text
//! u' = e^{λh} u + h φ₁(λh) B(u) + η
//! W' = e^{λh} W + η
//! ```
//!
//! per coefficient, where `η` is the exact-in-law stochastic integral over the
//! step. Both updates consume the same `η`, so with `B ≡ 0` and `u(0) = 0`
//! the solution coincides with the stochastic convolution.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::observables::{evaluate, ObservableSeries, Probe};
use crate::noise::{ConvolutionState, NoiseError, NoiseSpectrum, OuPropagator, WienerState};
use crate::spectral::{
    l4_pow4, sup_norm, BasisSpec, Dealiaser, LinearSpectrum, SpectralError, SpectralField,
};
use crate::stabilizer::StabilizerProfile;

/// A trajectory whose `‖u‖_{L²}` exceeds this aborts.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("trajectory diverged at t = {t}: |u| = {norm:e}")]
    Divergence {
        t: f64,
        norm: f64,
        /// Probe values of the last record before the blow-up.
        last: Vec<(String, f64)>,
    },
    #[error("invalid simulation parameters: {}", .0.join("; "))]
    Params(Vec<String>),
    #[error("interval [{s}, {t}] not covered by recorded range [{lo}, {hi}]")]
    Interval { s: f64, t: f64, lo: f64, hi: f64 },
    #[error("insufficient recorded data: {0}")]
    InsufficientData(String),
    #[error("reference run diverged: {0}")]
    ReferenceDiverged(Box<IntegratorError>),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// `φ₁(z) = (e^z - 1)/z`, with `φ₁(0) = 1`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    }
}

/// Domain, viscosity and forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub basis: BasisSpec,
    pub nu: f64,
    pub noise: NoiseSpectrum,
}

impl ModelSpec {
    pub fn new(basis: BasisSpec, nu: f64, noise: NoiseSpectrum) -> Result<Self, IntegratorError> {
        if !nu.is_finite() {
            return Err(IntegratorError::Params(vec![format!("nu must be finite, got {nu}")]));
        }
        if noise.len() < basis.modes() {
            return Err(NoiseError::Length {
                expected: basis.modes(),
                found: noise.len(),
            }
            .into());
        }
        Ok(Self { basis, nu, noise })
    }

    /// White noise on the given basis.
    pub fn white(basis: BasisSpec, nu: f64) -> Self {
        Self {
            noise: NoiseSpectrum::white(basis.modes()),
            basis,
            nu,
        }
    }

    pub fn spectrum(&self) -> LinearSpectrum {
        LinearSpectrum::new(&self.basis, self.nu)
    }

    /// Same model on another truncation; the noise keeps its first `modes`
    /// amplitudes, or extends a constant spectrum.
    pub fn with_modes(&self, modes: usize) -> Result<Self, IntegratorError> {
        let basis = self.basis.with_modes(modes)?;
        let noise = if self.noise.len() >= modes {
            NoiseSpectrum::from_values(self.noise.alphas()[..modes].to_vec())?
        } else if let Some(&a) = self
            .noise
            .alphas()
            .first()
            .filter(|&&a| self.noise.alphas().iter().all(|&b| b == a))
        {
            NoiseSpectrum::from_values(vec![a; modes])?
        } else {
            return Err(NoiseError::Length {
                expected: modes,
                found: self.noise.len(),
            }
            .into());
        };
        Ok(Self {
            basis,
            nu: self.nu,
            noise,
        })
    }

    pub fn without_noise(&self) -> Self {
        Self {
            noise: NoiseSpectrum::zero(self.basis.modes()),
            ..self.clone()
        }
    }

    /// Short content hash identifying the model.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("model serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Burn-in of ten slowest linear relaxation times.
pub fn default_burn_in(model: &ModelSpec) -> f64 {
    model
        .spectrum()
        .slowest_rate()
        .map(|r| 10.0 / r)
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub h: f64,
    /// Final time `T`.
    pub t_end: f64,
    pub burn_in: f64,
    pub model: ModelSpec,
    pub stabilizer: Option<StabilizerProfile>,
    /// Steps between records.
    pub record_stride: usize,
    /// When false the quadratic term is dropped (linear dynamics).
    pub nonlinear: bool,
    /// When false no [`DiagnosticTrace`] is recorded.
    pub diagnostics: bool,
}

impl SimParams {
    pub fn new(model: ModelSpec, h: f64, t_end: f64) -> Self {
        Self {
            h,
            t_end,
            burn_in: 0.0,
            model,
            stabilizer: None,
            record_stride: 1,
            nonlinear: true,
            diagnostics: true,
        }
    }

    pub fn with_burn_in(mut self, burn_in: f64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_stabilizer(mut self, profile: StabilizerProfile) -> Self {
        self.stabilizer = Some(profile);
        self
    }

    pub fn without_diagnostics(mut self) -> Self {
        self.diagnostics = false;
        self
    }

    pub fn linear(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    /// All violated constraints, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.h.is_finite() && self.h > 0.0) {
            v.push(format!("h must be positive, got {}", self.h));
        }
        if !(self.burn_in.is_finite() && self.burn_in >= 0.0) {
            v.push(format!("burn_in must be nonnegative, got {}", self.burn_in));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.burn_in) {
            v.push(format!(
                "t_end must be at least burn_in ({}), got {}",
                self.burn_in, self.t_end
            ));
        }
        if self.record_stride == 0 {
            v.push("record_stride must be at least 1".into());
        }
        if let Some(p) = &self.stabilizer {
            if p.basis() != &self.model.basis {
                v.push("stabilizer basis differs from model basis".into());
            }
        }
        v
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(IntegratorError::Params(v))
        }
    }

    /// Number of steps to reach `t_end`.
    pub fn steps(&self) -> u64 {
        (self.t_end / self.h).round() as u64
    }

    /// Recommended cap `0.5/|λ_N|` on the step.
    pub fn step_cap(&self) -> f64 {
        0.5 / self.model.spectrum().stiffest_rate()
    }
}

/// Running time integrals and suprema, updated at every record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulators {
    /// `∫ 8‖∂x W_A‖_∞⁴ dt`
    pub w_integral: f64,
    /// `∫ ‖∂x² v‖² dt`
    pub h2_integral: f64,
    pub sup_v_l2_sq: f64,
    pub sup_dxwa_inf4: f64,
    last: Option<(f64, f64, f64)>,
}

impl Accumulators {
    /// Trapezoid update with integrands sampled at `t`.
    pub fn record(&mut self, t: f64, dxwa_inf: f64, v_h2_sq: f64, v_l2_sq: f64) {
        let w = 8.0 * dxwa_inf.powi(4);
        if let Some((t0, w0, h0)) = self.last {
            let dt = t - t0;
            self.w_integral += 0.5 * dt * (w + w0);
            self.h2_integral += 0.5 * dt * (v_h2_sq + h0);
        }
        self.last = Some((t, w, v_h2_sq));
        self.sup_v_l2_sq = self.sup_v_l2_sq.max(v_l2_sq);
        self.sup_dxwa_inf4 = self.sup_dxwa_inf4.max(dxwa_inf.powi(4));
    }
}

/// Full resumable simulation state.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub t: f64,
    pub step: u64,
    pub u: SpectralField,
    pub w_a: ConvolutionState,
    pub rng: WienerState,
    pub acc: Accumulators,
}

impl TrajectoryState {
    /// State at the time origin with `W_A(0) = 0`.
    pub fn new(u: SpectralField, seed: u64) -> Self {
        let basis = *u.basis();
        Self {
            t: 0.0,
            step: 0,
            w_a: ConvolutionState::origin(basis),
            rng: WienerState::new(seed, &basis),
            u,
            acc: Accumulators::default(),
        }
    }
}

/// `v = u - W_A`, minus `Φ_N` when a stabilizer is supplied.
pub fn v_field(state: &TrajectoryState, stabilizer: Option<&StabilizerProfile>) -> SpectralField {
    let v = &state.u - &state.w_a.field;
    match stabilizer {
        Some(p) => &v - p.phi_n(),
        None => v,
    }
}

/// Precomputed exponential Euler propagator with its transform workspace.
pub struct Stepper {
    h: f64,
    decay: Vec<f64>,
    phi1h: Vec<f64>,
    noise: OuPropagator,
    dealiaser: Dealiaser,
    nonlinear: bool,
    eta: Vec<f64>,
    nl: Vec<f64>,
}

impl Stepper {
    pub fn new(params: &SimParams) -> Result<Self, IntegratorError> {
        params.validate()?;
        let basis = params.model.basis;
        let spectrum = params.model.spectrum();
        let h = params.h;
        if h > params.step_cap() {
            log::debug!(
                "step {h} exceeds the recommended cap {:.3e}",
                params.step_cap()
            );
        }
        let (decay, phi1h) = (0..basis.dim())
            .map(|slot| {
                let l = spectrum.get(basis.mode_of_slot(slot));
                ((l * h).exp(), h * phi1(l * h))
            })
            .unzip();
        Ok(Self {
            h,
            decay,
            phi1h,
            noise: OuPropagator::new(&basis, &spectrum, &params.model.noise, h)?,
            dealiaser: Dealiaser::new(basis),
            nonlinear: params.nonlinear,
            eta: vec![0.0; basis.dim()],
            nl: vec![0.0; basis.dim()],
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Advances `state` by one step in place.
    pub fn step(&mut self, state: &mut TrajectoryState) -> Result<(), IntegratorError> {
        if self.nonlinear {
            self.dealiaser.apply(&state.u, &mut self.nl);
        }
        self.noise.increments(&mut state.rng, &mut self.eta);
        let u = state.u.coeffs_mut();
        let w = state.w_a.field.coeffs_mut();
        let mut sq = 0.0;
        for i in 0..u.len() {
            let d = self.decay[i];
            let mut next = d * u[i] + self.eta[i];
            if self.nonlinear {
                next += self.phi1h[i] * self.nl[i];
            }
            u[i] = next;
            sq += next * next;
            w[i] = d * w[i] + self.eta[i];
        }
        state.step += 1;
        state.t = state.step as f64 * self.h;
        state.w_a.t = state.t;
        state.rng.t = state.t;
        let norm = (sq * state.u.basis().mode_norm_sq()).sqrt();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(IntegratorError::Divergence {
                t: state.t,
                norm,
                last: Vec::new(),
            });
        }
        Ok(())
    }
}

/// One exponential Euler step.
pub fn etd_step(
    state: &TrajectoryState,
    params: &SimParams,
) -> Result<TrajectoryState, IntegratorError> {
    let mut next = state.clone();
    Stepper::new(params)?.step(&mut next)?;
    Ok(next)
}

/// Integrands of the a-priori estimates, sampled at every record from `t = 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticTrace {
    pub times: Vec<f64>,
    pub v_l2_sq: Vec<f64>,
    pub v_h2_sq: Vec<f64>,
    pub dxwa_inf: Vec<f64>,
    pub dxwa_l4_4: Vec<f64>,
}

impl DiagnosticTrace {
    fn sample(&mut self, state: &TrajectoryState, stabilizer: Option<&StabilizerProfile>) -> f64 {
        let v = v_field(state, stabilizer);
        let m = state.u.basis().oversampled_samples();
        let dxw = state.w_a.field.as_series().derivative(1);
        let inf = sup_norm(&dxw, m);
        self.times.push(state.t);
        self.v_l2_sq.push(v.l2_sq());
        self.v_h2_sq.push(v.derivative_sq(2));
        self.dxwa_inf.push(inf);
        self.dxwa_l4_4.push(l4_pow4(&dxw, state.u.basis().length(), m));
        inf
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Result of [`run_trajectory`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// One series per requested probe, recorded strictly after burn-in.
    pub series: Vec<ObservableSeries>,
    pub diagnostics: DiagnosticTrace,
    pub final_state: TrajectoryState,
}

/// Integrates from `init` at `t = 0` with `W_A(0) = 0`.
pub fn run_trajectory(
    init: SpectralField,
    params: &SimParams,
    seed: u64,
    probes: &[Probe],
) -> Result<RunOutput, IntegratorError> {
    if init.basis() != &params.model.basis {
        return Err(IntegratorError::Params(vec![
            "initial field basis differs from model basis".into(),
        ]));
    }
    run_from(TrajectoryState::new(init, seed), params, probes)
}

/// Continues an existing state up to `params.t_end`.
pub fn run_from(
    mut state: TrajectoryState,
    params: &SimParams,
    probes: &[Probe],
) -> Result<RunOutput, IntegratorError> {
    let mut stepper = Stepper::new(params)?;
    let stab = params.stabilizer.as_ref();
    let fingerprint = params.model.fingerprint();
    let seed = state.rng.seed();
    let mut series: Vec<ObservableSeries> = probes
        .iter()
        .map(|&p| ObservableSeries::new(p, seed, fingerprint.clone()))
        .collect();
    let mut diagnostics = DiagnosticTrace::default();
    let stride = params.record_stride as u64;
    let total = params.steps();
    let record = |state: &mut TrajectoryState,
                  diagnostics: &mut DiagnosticTrace,
                  series: &mut [ObservableSeries]| {
        if params.diagnostics {
            let inf = diagnostics.sample(state, stab);
            let k = diagnostics.len() - 1;
            let (h2, l2) = (diagnostics.v_h2_sq[k], diagnostics.v_l2_sq[k]);
            state.acc.record(state.t, inf, h2, l2);
        }
        if state.t > params.burn_in && !series.is_empty() {
            let vals = evaluate(probes, state, stab);
            for (s, v) in series.iter_mut().zip(vals) {
                s.push(state.t, v);
            }
        }
    };
    if state.step % stride == 0 {
        record(&mut state, &mut diagnostics, &mut series);
    }
    while state.step < total {
        if let Err(e) = stepper.step(&mut state) {
            return Err(match e {
                IntegratorError::Divergence { t, norm, .. } => IntegratorError::Divergence {
                    t,
                    norm,
                    last: series
                        .iter()
                        .filter_map(|s| s.values.last().map(|v| (s.probe.to_string(), *v)))
                        .collect(),
                },
                other => other,
            });
        }
        if state.step % stride == 0 {
            record(&mut state, &mut diagnostics, &mut series);
        }
    }
    Ok(RunOutput {
        series,
        diagnostics,
        final_state: state,
    })
}

/// `W_{[s,t]} = ∫_s^t 8‖∂x W_A(r)‖_∞⁴ dr` from samples of `‖∂x W_A‖_∞`.
///
/// The integrand is interpolated linearly between samples, which makes the
/// functional exactly additive over adjacent intervals.
pub fn w_functional(times: &[f64], dxwa_inf: &[f64], s: f64, t: f64) -> Result<f64, IntegratorError> {
    if times.len() != dxwa_inf.len() || times.len() < 2 {
        return Err(IntegratorError::InsufficientData(
            "need at least two samples of |dx W_A|_inf".into(),
        ));
    }
    let (lo, hi) = (times[0], times[times.len() - 1]);
    let slack = 1e-12 * (hi - lo).abs().max(1.0);
    if !(s < t) || s < lo - slack || t > hi + slack {
        return Err(IntegratorError::Interval { s, t, lo, hi });
    }
    let (s, t) = (s.max(lo), t.min(hi));
    let g: Vec<f64> = dxwa_inf.iter().map(|c| 8.0 * c.powi(4)).collect();
    let interp = |i: usize, x: f64| {
        let (t0, t1) = (times[i], times[i + 1]);
        g[i] + (g[i + 1] - g[i]) * (x - t0) / (t1 - t0)
    };
    let mut total = 0.0;
    for i in 0..times.len() - 1 {
        let a = times[i].max(s);
        let b = times[i + 1].min(t);
        if b > a {
            total += 0.5 * (b - a) * (interp(i, a) + interp(i, b));
        }
    }
    Ok(total)
}

/// Pathwise a-priori fit of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriPath {
    /// Smallest `C` with
    /// `‖v(t)‖² ≤ e^{-αt + W_{[0,t]}}‖v(0)‖² + C e^{W_{[0,t]}}(W_{[0,t]} + t)` on the record.
    pub c: f64,
    /// `‖v‖_{C(0,T,L²)} + ‖v‖_{L²(0,T,H²)}`
    pub tightness: f64,
    pub w_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub alpha: f64,
    pub paths: Vec<AprioriPath>,
    pub c_max: f64,
    pub c_median: f64,
    /// `(threshold, fraction of paths whose tightness norm exceeds it)`
    pub tail: Vec<(f64, f64)>,
}

pub fn apriori_path(trace: &DiagnosticTrace, alpha: f64) -> Result<AprioriPath, IntegratorError> {
    let n = trace.len();
    if n < 2 {
        return Err(IntegratorError::InsufficientData(format!(
            "{n} diagnostic samples, need at least 2"
        )));
    }
    let t0 = trace.times[0];
    let v0 = trace.v_l2_sq[0];
    let mut w = 0.0;
    let mut c: f64 = 0.0;
    let mut h2 = 0.0;
    for i in 1..n {
        let dt = trace.times[i] - trace.times[i - 1];
        w += 0.5 * dt * 8.0 * (trace.dxwa_inf[i].powi(4) + trace.dxwa_inf[i - 1].powi(4));
        h2 += 0.5 * dt * (trace.v_h2_sq[i] + trace.v_h2_sq[i - 1]);
        let t = trace.times[i] - t0;
        let base = (-alpha * t + w).exp() * v0;
        let excess = trace.v_l2_sq[i] - base;
        if excess > 0.0 {
            c = c.max(excess / (w.exp() * (w + t)));
        }
    }
    let sup = trace.v_l2_sq.iter().fold(0.0_f64, |a, &v| a.max(v)).sqrt();
    Ok(AprioriPath {
        c,
        tightness: sup + h2.sqrt(),
        w_total: w,
    })
}

/// Fits the a-priori constant on every path and tabulates the tightness tail.
pub fn apriori_check(
    traces: &[DiagnosticTrace],
    alpha: f64,
    thresholds: &[f64],
) -> Result<AprioriReport, IntegratorError> {
    if traces.is_empty() {
        return Err(IntegratorError::InsufficientData("no trajectories".into()));
    }
    let paths = traces
        .iter()
        .map(|t| apriori_path(t, alpha))
        .collect::<Result<Vec<_>, _>>()?;
    let mut cs: Vec<f64> = paths.iter().map(|p| p.c).collect();
    cs.sort_by(f64::total_cmp);
    let c_max = *cs.last().unwrap();
    let c_median = if cs.len() % 2 == 1 {
        cs[cs.len() / 2]
    } else {
        0.5 * (cs[cs.len() / 2 - 1] + cs[cs.len() / 2])
    };
    let tail = thresholds
        .iter()
        .map(|&r| {
            let k = paths.iter().filter(|p| p.tightness > r).count();
            (r, k as f64 / paths.len() as f64)
        })
        .collect();
    Ok(AprioriReport {
        alpha,
        paths,
        c_max,
        c_median,
        tail,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    pub reference_step: f64,
    /// Least-squares slope of `log error` against `log h`; `None` when all
    /// errors are at round-off.
    pub slope: Option<f64>,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn final_state(
    init: &SpectralField,
    params: &SimParams,
    h: f64,
) -> Result<SpectralField, IntegratorError> {
    let mut p = params.clone();
    p.h = h;
    p.record_stride = usize::MAX;
    p.burn_in = 0.0;
    let mut stepper = Stepper::new(&p)?;
    let mut state = TrajectoryState::new(init.clone(), 0);
    for _ in 0..p.steps() {
        stepper.step(&mut state)?;
    }
    Ok(state.u)
}

/// Noise-free convergence study at `h0, h0/2, h0/4, h0/8` against `h0/64`.
pub fn deterministic_order_check(
    params: &SimParams,
    init: &SpectralField,
    h0: f64,
) -> Result<OrderReport, IntegratorError> {
    let mut p = params.clone();
    p.model = p.model.without_noise();
    let href = h0 / 64.0;
    let n_ref = p.t_end / href;
    if (n_ref - n_ref.round()).abs() > 1e-6 {
        return Err(IntegratorError::Params(vec![format!(
            "t_end {} is not a multiple of the reference step {href}",
            p.t_end
        )]));
    }
    let reference = final_state(init, &p, href)
        .map_err(|e| IntegratorError::ReferenceDiverged(Box::new(e)))?;
    let scale = reference.l2_sq().sqrt().max(init.l2_sq().sqrt());
    let steps: Vec<f64> = (0..4).map(|k| h0 / f64::powi(2.0, k)).collect();
    let errors = steps
        .iter()
        .map(|&h| final_state(init, &p, h).map(|u| (&u - &reference).l2_sq().sqrt()))
        .collect::<Result<Vec<_>, _>>()?;
    let roundoff = errors.iter().all(|&e| e <= 1e-12 * scale.max(1e-300));
    let slope = if roundoff {
        None
    } else {
        let lx: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
        let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        Some(fit_slope(&lx, &ly))
    };
    Ok(OrderReport {
        steps,
        errors,
        reference_step: href,
        slope,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub modes: Vec<usize>,
    /// `sup_t ‖u_N - Π_N u_{2N}‖` for each entry of `modes`.
    pub sup_errors: Vec<f64>,
    pub strictly_decreasing: bool,
}

/// Couples the `N`- and `2N`-mode runs through one noise path and measures
/// their sup-in-time `L²` distance on the first `N` modes.
pub fn galerkin_refinement(
    params: &SimParams,
    modes: &[usize],
    seed: u64,
    init: Option<&SpectralField>,
) -> Result<RefinementReport, IntegratorError> {
    let mut sup_errors = Vec::with_capacity(modes.len());
    for &n in modes {
        let mut coarse_p = params.clone();
        coarse_p.model = params.model.with_modes(n)?;
        coarse_p.stabilizer = None;
        let mut fine_p = params.clone();
        fine_p.model = params.model.with_modes(2 * n)?;
        fine_p.stabilizer = None;
        let (u_c, u_f) = match init {
            Some(f) => (f.resize(n)?, f.resize(2 * n)?),
            None => (
                SpectralField::zeros(coarse_p.model.basis),
                SpectralField::zeros(fine_p.model.basis),
            ),
        };
        let mut coarse = TrajectoryState::new(u_c, seed);
        let mut fine = TrajectoryState::new(u_f, seed);
        let mut sc = Stepper::new(&coarse_p)?;
        let mut sf = Stepper::new(&fine_p)?;
        let mut sup: f64 = 0.0;
        for _ in 0..params.steps() {
            sc.step(&mut coarse)?;
            sf.step(&mut fine)?;
            let proj = fine.u.resize(n)?;
            sup = sup.max((&coarse.u - &proj).l2_sq().sqrt());
        }
        sup_errors.push(sup);
    }
    let strictly_decreasing = sup_errors.windows(2).all(|w| w[1] < w[0]);
    Ok(RefinementReport {
        modes: modes.to_vec(),
        sup_errors,
        strictly_decreasing,
    })
}
