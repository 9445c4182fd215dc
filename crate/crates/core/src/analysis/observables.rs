use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::integrator::{v_field, TrajectoryState};
use crate::spectral::{l4_pow4, nonlinearity, sup_norm, SpectralField, TrigSeries};
use crate::stabilizer::StabilizerProfile;

/// Scalar diagnostics evaluated on a trajectory state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    /// `M(u)`, from quadrature of the physical samples.
    Mass,
    /// `‖u‖²`
    L2Sq,
    /// `‖∂x u‖²`
    GradSq,
    /// `‖v‖²`
    VL2Sq,
    /// `‖∂x² v‖²`
    VH2Sq,
    /// `‖u‖_∞ + ‖∂x u‖_∞`
    C1,
    /// `log(1 + ‖u‖²)`
    LogL2,
    /// `log(1 + ‖u‖²_{C¹})`
    LogC1,
    /// `‖∂x W_A‖_∞`
    DxWaInf,
    /// `‖∂x W_A‖_∞⁴`
    DxWaInf4,
    /// `‖∂x W_A‖_4⁴`
    DxWaL44,
    /// `⟨u, B(u)⟩`
    Orthogonality,
}

impl Probe {
    pub const ALL: [Probe; 12] = [
        Probe::Mass,
        Probe::L2Sq,
        Probe::GradSq,
        Probe::VL2Sq,
        Probe::VH2Sq,
        Probe::C1,
        Probe::LogL2,
        Probe::LogC1,
        Probe::DxWaInf,
        Probe::DxWaInf4,
        Probe::DxWaL44,
        Probe::Orthogonality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Probe::Mass => "mass",
            Probe::L2Sq => "l2_sq",
            Probe::GradSq => "grad_sq",
            Probe::VL2Sq => "v_l2_sq",
            Probe::VH2Sq => "v_h2_sq",
            Probe::C1 => "c1",
            Probe::LogL2 => "log_l2",
            Probe::LogC1 => "log_c1",
            Probe::DxWaInf => "dxwa_inf",
            Probe::DxWaInf4 => "dxwa_inf4",
            Probe::DxWaL44 => "dxwa_l4_4",
            Probe::Orthogonality => "orthogonality",
        }
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Probe {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Probe::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown probe '{s}'"))
    }
}

/// Lazily shared intermediate quantities for one state.
struct Frame<'a> {
    u: &'a SpectralField,
    w: &'a SpectralField,
    stabilizer: Option<&'a StabilizerProfile>,
    state: &'a TrajectoryState,
    m: usize,
    c1: Option<f64>,
    dxw: Option<TrigSeries>,
    dxw_inf: Option<f64>,
    v: Option<SpectralField>,
}

impl Frame<'_> {
    fn c1(&mut self) -> f64 {
        *self.c1.get_or_insert_with(|| {
            let s = self.u.as_series();
            sup_norm(&s, self.m) + sup_norm(&s.derivative(1), self.m)
        })
    }

    fn dxw(&mut self) -> &TrigSeries {
        self.dxw.get_or_insert_with(|| self.w.as_series().derivative(1))
    }

    fn dxw_inf(&mut self) -> f64 {
        if let Some(v) = self.dxw_inf {
            return v;
        }
        let m = self.m;
        let v = sup_norm(self.dxw(), m);
        self.dxw_inf = Some(v);
        v
    }

    fn v(&mut self) -> &SpectralField {
        if self.v.is_none() {
            self.v = Some(v_field(self.state, self.stabilizer));
        }
        self.v.as_ref().unwrap()
    }

    fn eval(&mut self, p: Probe) -> f64 {
        match p {
            Probe::Mass => {
                let g = self
                    .u
                    .as_series()
                    .to_grid(self.m)
                    .expect("oversampled grid resolves the field");
                let full: f64 = g.iter().sum::<f64>() * self.u.basis().period() / self.m as f64;
                full * self.u.basis().length() / self.u.basis().period()
            }
            Probe::L2Sq => self.u.l2_sq(),
            Probe::GradSq => self.u.derivative_sq(1),
            Probe::VL2Sq => self.v().l2_sq(),
            Probe::VH2Sq => self.v().derivative_sq(2),
            Probe::C1 => self.c1(),
            Probe::LogL2 => self.u.l2_sq().ln_1p(),
            Probe::LogC1 => self.c1().powi(2).ln_1p(),
            Probe::DxWaInf => self.dxw_inf(),
            Probe::DxWaInf4 => self.dxw_inf().powi(4),
            Probe::DxWaL44 => {
                let (l, m) = (self.w.basis().length(), self.m);
                l4_pow4(self.dxw(), l, m)
            }
            Probe::Orthogonality => self.u.inner(&nonlinearity(self.u)),
        }
    }
}

/// Values of the requested probes, in request order.
pub fn evaluate(
    probes: &[Probe],
    state: &TrajectoryState,
    stabilizer: Option<&StabilizerProfile>,
) -> Vec<f64> {
    let mut frame = Frame {
        u: &state.u,
        w: &state.w_a.field,
        stabilizer,
        state,
        m: state.u.basis().oversampled_samples(),
        c1: None,
        dxw: None,
        dxw_inf: None,
        v: None,
    };
    probes.iter().map(|&p| frame.eval(p)).collect()
}

/// The full probe set as a map.
pub fn probes(
    state: &TrajectoryState,
    stabilizer: Option<&StabilizerProfile>,
) -> BTreeMap<Probe, f64> {
    Probe::ALL
        .iter()
        .copied()
        .zip(evaluate(&Probe::ALL, state, stabilizer))
        .collect()
}

/// Time-indexed values of one probe along one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub probe: Probe,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub seed: u64,
    pub fingerprint: String,
}

impl ObservableSeries {
    pub fn new(probe: Probe, seed: u64, fingerprint: String) -> Self {
        Self {
            probe,
            times: Vec::new(),
            values: Vec::new(),
            seed,
            fingerprint,
        }
    }

    pub fn push(&mut self, t: f64, v: f64) {
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.values.push(v);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean over the uniformly spaced records.
    pub fn time_average(&self) -> Option<f64> {
        if self.values.is_empty() {
            None
        } else {
            Some(self.values.iter().sum::<f64>() / self.values.len() as f64)
        }
    }
}
